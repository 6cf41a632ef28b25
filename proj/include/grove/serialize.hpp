#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "grove/config.hpp"
#include "grove/dataset.hpp"
#include "grove/forest.hpp"

namespace grove {

inline nlohmann::json config_to_json(const ForestConfig& cfg) {
    return nlohmann::json{
        {"num_trees", cfg.num_trees},   {"subsample_size", cfg.subsample_size},
        {"min_leaf", cfg.min_leaf},     {"alpha", cfg.alpha},
        {"pi", cfg.pi},                 {"mode", mode_name(cfg.mode)},
        {"seed", cfg.seed},
    };
}

inline ForestConfig config_from_json(const nlohmann::json& j) {
    ForestConfig cfg;
    cfg.num_trees = j.at("num_trees").get<int>();
    cfg.subsample_size = j.at("subsample_size").get<int>();
    cfg.min_leaf = j.at("min_leaf").get<int>();
    cfg.alpha = j.at("alpha").get<double>();
    cfg.pi = j.at("pi").get<double>();
    cfg.mode = mode_from_name(j.at("mode").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, int idx) {
    const TreeNode& node = tree.nodes[idx];
    if (node.is_leaf()) {
        return nlohmann::json{
            {"n_treated", node.stats.n_treated},
            {"n_control", node.stats.n_control},
            {"sum_y_treated", node.stats.sum_y_treated},
            {"sum_y_control", node.stats.sum_y_control},
            {"n_total", node.stats.n_total},
            {"sum_y", node.stats.sum_y},
        };
    }
    return nlohmann::json{
        {"feature", node.feature},
        {"threshold", node.threshold},
        {"left", node_to_json(tree, node.left)},
        {"right", node_to_json(tree, node.right)},
    };
}

inline int node_from_json(const nlohmann::json& j, Tree& tree) {
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("feature")) {
        tree.nodes[idx].feature = j.at("feature").get<int>();
        tree.nodes[idx].threshold = j.at("threshold").get<double>();
        const int left = node_from_json(j.at("left"), tree);
        const int right = node_from_json(j.at("right"), tree);
        tree.nodes[idx].left = left;
        tree.nodes[idx].right = right;
    } else {
        LeafStats& s = tree.nodes[idx].stats;
        s.n_treated = j.at("n_treated").get<int>();
        s.n_control = j.at("n_control").get<int>();
        s.sum_y_treated = j.at("sum_y_treated").get<double>();
        s.sum_y_control = j.at("sum_y_control").get<double>();
        s.n_total = j.at("n_total").get<int>();
        s.sum_y = j.at("sum_y").get<double>();
    }
    return idx;
}

}  // namespace detail

inline nlohmann::json tree_to_json(const Tree& tree) {
    return nlohmann::json{
        {"record",
         {
             {"tree_index", tree.record.tree_index},
             {"indices", tree.record.indices},
             {"i_half", tree.record.i_half},
             {"j_half", tree.record.j_half},
         }},
        {"root", detail::node_to_json(tree, 0)},
    };
}

inline Tree tree_from_json(const nlohmann::json& j, Mode mode) {
    Tree tree;
    tree.mode = mode;
    const auto& rec = j.at("record");
    tree.record.tree_index = rec.at("tree_index").get<int>();
    tree.record.indices = rec.at("indices").get<std::vector<int>>();
    tree.record.i_half = rec.at("i_half").get<std::vector<int>>();
    tree.record.j_half = rec.at("j_half").get<std::vector<int>>();
    detail::node_from_json(j.at("root"), tree);
    return tree;
}

// Forest envelope: {format_version, config, n_train, trees}. Doubles are
// emitted with shortest round-trip formatting, so serialize-parse-serialize is
// bit-stable.
inline nlohmann::json forest_to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& tree : forest.trees) trees.push_back(tree_to_json(tree));
    return nlohmann::json{
        {"format_version", 1},
        {"config", config_to_json(forest.config)},
        {"n_train", forest.n_train},
        {"trees", std::move(trees)},
    };
}

inline Forest forest_from_json(const nlohmann::json& j) {
    const int version = j.at("format_version").get<int>();
    if (version != 1) {
        throw std::runtime_error("unsupported forest format version " + std::to_string(version));
    }
    Forest forest;
    forest.config = config_from_json(j.at("config"));
    forest.n_train = j.at("n_train").get<int>();
    for (const auto& tj : j.at("trees")) {
        forest.trees.push_back(tree_from_json(tj, forest.config.mode));
    }
    if (static_cast<int>(forest.trees.size()) != forest.config.num_trees) {
        throw std::runtime_error("forest file corrupt: tree count does not match config");
    }
    return forest;
}

inline void save_forest(const std::string& path, const Forest& forest) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << forest_to_json(forest).dump();
    out << "\n";
}

inline Forest load_forest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open forest file: " + path);
    nlohmann::json j;
    in >> j;
    return forest_from_json(j);
}

// Feature-only CSV (header x1,...,xd) used for prediction queries.
inline std::vector<std::vector<double>> load_points(const std::string& path, int expected_d = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open points file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty points file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    int d = 0;
    while (d < static_cast<int>(header.size()) && header[d] == "x" + std::to_string(d + 1)) ++d;
    if (d == 0 || d != static_cast<int>(header.size())) {
        throw std::runtime_error("malformed points header: expected x1,...,xd");
    }
    if (expected_d > 0 && d != expected_d) {
        throw std::runtime_error("points dimension " + std::to_string(d) +
                                 " does not match model dimension " + std::to_string(expected_d));
    }
    std::vector<std::vector<double>> points;
    int row_number = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_number;
        const auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != d) {
            throw std::runtime_error("malformed row, row " + std::to_string(row_number));
        }
        std::vector<double> p(d);
        for (int j = 0; j < d; ++j) {
            if (!detail::parse_double(fields[j], p[j])) {
                throw std::runtime_error("malformed row, row " + std::to_string(row_number));
            }
        }
        points.push_back(std::move(p));
    }
    return points;
}

// Prediction CSV: x1..xd,estimate,variance,ci_low,ci_high with an optional
// trailing method column (used by the k-NN baseline output).
inline void save_predictions(const std::string& path,
                             const std::vector<std::vector<double>>& points,
                             const std::vector<PredictionResult>& results,
                             const std::string& method = "") {
    if (points.size() != results.size()) {
        throw std::invalid_argument("save_predictions: size mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    const int d = points.empty() ? 0 : static_cast<int>(points.front().size());
    for (int j = 0; j < d; ++j) out << "x" << (j + 1) << ",";
    out << "estimate,variance,ci_low,ci_high";
    if (!method.empty()) out << ",method";
    out << "\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (double v : points[i]) out << detail::format_double(v) << ",";
        const auto& r = results[i];
        out << detail::format_double(r.estimate) << "," << detail::format_double(r.variance)
            << "," << detail::format_double(r.ci_low) << "," << detail::format_double(r.ci_high);
        if (!method.empty()) out << "," << method;
        out << "\n";
    }
}

}  // namespace grove
