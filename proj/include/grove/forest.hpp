#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "grove/config.hpp"
#include "grove/dataset.hpp"
#include "grove/random.hpp"
#include "grove/tree.hpp"

namespace grove {

struct Forest {
    std::vector<Tree> trees;
    ForestConfig config;
    int n_train = 0;
};

namespace detail {

constexpr int kDegenerateRetryBudget = 100;

inline SubsampleRecord draw_record(const Dataset& data, const ForestConfig& cfg,
                                   int tree_index, RandomStream& stream) {
    SubsampleRecord record;
    record.tree_index = tree_index;
    record.indices = draw_subsample(stream, data.n(), cfg.subsample_size);
    if (is_double_sample(cfg.mode)) {
        auto halves = split_halves(stream, record.indices);
        record.i_half = std::move(halves.first);
        record.j_half = std::move(halves.second);
    }
    return record;
}

}  // namespace detail

// Builds tree `tree_index` exactly as train() would: the per-tree stream is
// derived from (cfg.seed, tree_index), the subsample (and halves) are drawn
// from it, and degenerate subsamples are redrawn from the same stream within
// a bounded retry budget.
inline Tree grow_tree_at(const Dataset& data, const ForestConfig& cfg, int tree_index) {
    RandomStream stream = derive_stream(cfg.seed, static_cast<std::uint64_t>(tree_index));
    for (int attempt = 0; attempt < detail::kDegenerateRetryBudget; ++attempt) {
        SubsampleRecord record = detail::draw_record(data, cfg, tree_index, stream);
        try {
            return grow_tree(data, record, cfg, stream);
        } catch (const DegenerateSubsampleError&) {
            continue;
        }
    }
    throw std::runtime_error("degenerate subsample retry budget exhausted for tree " +
                             std::to_string(tree_index));
}

// Trains B trees over seed-derived subsamples. Trees are distributed across
// workers but stored by index, so the result is bit-identical for any thread
// count.
inline Forest train(const Dataset& data, const ForestConfig& cfg, int num_threads = 1) {
    validate_config(cfg, data);
    Forest forest;
    forest.config = cfg;
    forest.n_train = data.n();
    forest.trees.resize(cfg.num_trees);

    const int workers = std::max(1, std::min(num_threads, cfg.num_trees));
    if (workers == 1) {
        for (int b = 0; b < cfg.num_trees; ++b) forest.trees[b] = grow_tree_at(data, cfg, b);
        return forest;
    }

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&]() {
        while (true) {
            const int b = next.fetch_add(1);
            if (b >= cfg.num_trees) return;
            try {
                forest.trees[b] = grow_tree_at(data, cfg, b);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return forest;
}

// Arithmetic mean of tree predictions, summed in tree-index order so parallel
// schedules cannot perturb the floating-point result.
inline double predict(const Forest& forest, const std::vector<double>& x) {
    double sum = 0.0;
    for (const Tree& tree : forest.trees) sum += predict_tree(tree, x);
    return sum / static_cast<double>(forest.trees.size());
}

inline std::vector<double> predict_batch(const Forest& forest,
                                         const std::vector<std::vector<double>>& xs) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(predict(forest, x));
    return out;
}

}  // namespace grove
