#pragma once

// Reference Random Forest: CART trees on Gini impurity, bootstrap bagging,
// sqrt(d) feature subsampling. Deterministic given the seed; per-tree seeds
// derive from the master seed by tree index so parallel and serial training
// build identical forests.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "cepred/dataset.hpp"
#include "cepred/error.hpp"
#include "cepred/features.hpp"
#include "cepred/rng.hpp"

namespace cepred {

struct ForestParams {
    std::uint32_t n_trees = 100;
    std::int32_t max_depth = -1;           // -1: unbounded
    std::uint32_t min_samples_split = 2;
    std::int32_t features_per_split = -1;  // -1: floor(sqrt(d))
    std::uint64_t seed = 0;

    void validate() const {
        if (n_trees == 0) throw UsageError("forest: n_trees must be >= 1");
        if (min_samples_split < 2) throw UsageError("forest: min_samples_split must be >= 2");
    }
};

struct TreeNode {
    std::int32_t feature = -1;  // -1: leaf
    double threshold = 0.0;     // goes left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t count0 = 0;  // training class counts (leaves only)
    std::uint32_t count1 = 0;

    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
};

struct TrainedForest {
    std::vector<DecisionTree> trees;
    std::size_t n_features = 0;
    ForestParams params;
    std::string catalog_ver;
};

inline double gini_impurity(std::uint64_t c0, std::uint64_t c1) {
    std::uint64_t n = c0 + c1;
    if (n == 0) return 0.0;
    double p0 = static_cast<double>(c0) / static_cast<double>(n);
    double p1 = static_cast<double>(c1) / static_cast<double>(n);
    return 1.0 - p0 * p0 - p1 * p1;
}

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const FeatureMatrix& m, const ForestParams& hp, std::uint32_t mtry)
        : m_(m), hp_(hp), mtry_(mtry) {}

    DecisionTree build(const std::vector<std::uint32_t>& base_rows, std::uint64_t tree_seed) {
        Rng rng(tree_seed);
        const std::size_t n = base_rows.size();
        idx_.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            idx_[i] = base_rows[static_cast<std::size_t>(rng.next_below(n))];

        DecisionTree tree;
        feat_pool_.resize(m_.n_features());
        for (std::size_t f = 0; f < feat_pool_.size(); ++f)
            feat_pool_[f] = static_cast<std::uint32_t>(f);

        // Explicit depth-first stack, left child first, so the rng draw order
        // matches a plain recursive build without risking stack exhaustion.
        struct Work {
            std::size_t lo, hi;
            std::uint32_t depth;
            std::int32_t parent;  // -1 for the root
            bool is_left;
        };
        std::vector<Work> stack;
        stack.push_back({0, n, 0, -1, false});
        while (!stack.empty()) {
            Work w = stack.back();
            stack.pop_back();
            std::int32_t node_id = static_cast<std::int32_t>(tree.nodes.size());
            tree.nodes.push_back({});
            if (w.parent >= 0) {
                if (w.is_left) tree.nodes[w.parent].left = node_id;
                else tree.nodes[w.parent].right = node_id;
            }

            std::uint64_t c0 = 0, c1 = 0;
            for (std::size_t i = w.lo; i < w.hi; ++i) {
                if (m_.row_label(idx_[i])) ++c1;
                else ++c0;
            }
            const bool stop =
                c0 == 0 || c1 == 0 || (w.hi - w.lo) < hp_.min_samples_split ||
                (hp_.max_depth >= 0 && w.depth >= static_cast<std::uint32_t>(hp_.max_depth));

            Split best;
            if (!stop) best = find_split(w.lo, w.hi, c0, c1, rng);
            if (stop || best.feature < 0) {
                tree.nodes[node_id].count0 = static_cast<std::uint32_t>(c0);
                tree.nodes[node_id].count1 = static_cast<std::uint32_t>(c1);
                continue;
            }

            auto mid_it =
                std::partition(idx_.begin() + w.lo, idx_.begin() + w.hi, [&](std::uint32_t r) {
                    return m_.value(r, static_cast<std::size_t>(best.feature)) <= best.threshold;
                });
            std::size_t mid = static_cast<std::size_t>(mid_it - idx_.begin());
            if (mid == w.lo || mid == w.hi)
                throw InternalError("forest: degenerate split");

            tree.nodes[node_id].feature = best.feature;
            tree.nodes[node_id].threshold = best.threshold;
            stack.push_back({mid, w.hi, w.depth + 1, node_id, false});
            stack.push_back({w.lo, mid, w.depth + 1, node_id, true});
        }
        return tree;
    }

private:
    struct Split {
        double gain = 0.0;
        std::int32_t feature = -1;
        double threshold = 0.0;
    };

    Split find_split(std::size_t lo, std::size_t hi, std::uint64_t c0, std::uint64_t c1, Rng& rng) {
        const std::size_t n = hi - lo;
        const double parent = gini_impurity(c0, c1);
        Split best;

        // Draw candidate features without replacement (lazy Fisher-Yates).
        // Features constant within the node do not count against mtry, so
        // constant-heavy matrices still get mtry useful candidates per split.
        scratch_.resize(n);
        std::uint32_t evaluated = 0;
        for (std::size_t fi = 0; fi < feat_pool_.size() && evaluated < mtry_; ++fi) {
            std::size_t j = fi + static_cast<std::size_t>(rng.next_below(feat_pool_.size() - fi));
            std::swap(feat_pool_[fi], feat_pool_[j]);
            const std::size_t f = feat_pool_[fi];
            for (std::size_t i = 0; i < n; ++i) {
                scratch_[i].value = m_.value(idx_[lo + i], f);
                scratch_[i].label = m_.row_label(idx_[lo + i]);
            }
            std::sort(scratch_.begin(), scratch_.end(),
                      [](const ValueLabel& a, const ValueLabel& b) { return a.value < b.value; });
            if (scratch_.front().value == scratch_.back().value) continue;
            ++evaluated;

            // scan split positions between distinct values
            std::uint64_t l0 = 0, l1 = 0;
            for (std::size_t p = 1; p < n; ++p) {
                if (scratch_[p - 1].label) ++l1;
                else ++l0;
                if (scratch_[p - 1].value == scratch_[p].value) continue;
                const double wl = static_cast<double>(p) / static_cast<double>(n);
                const double wr = 1.0 - wl;
                const double g =
                    parent - wl * gini_impurity(l0, l1) - wr * gini_impurity(c0 - l0, c1 - l1);
                if (g > best.gain) {
                    best.gain = g;
                    best.feature = static_cast<std::int32_t>(f);
                    best.threshold =
                        scratch_[p - 1].value + (scratch_[p].value - scratch_[p - 1].value) / 2.0;
                    // guard against midpoint rounding onto the upper value
                    if (best.threshold >= scratch_[p].value) best.threshold = scratch_[p - 1].value;
                }
            }
        }
        return best;
    }

    struct ValueLabel {
        double value;
        std::uint8_t label;
    };

    const FeatureMatrix& m_;
    const ForestParams& hp_;
    std::uint32_t mtry_;
    std::vector<std::uint32_t> idx_;
    std::vector<std::uint32_t> feat_pool_;
    std::vector<ValueLabel> scratch_;
};

template <class Fn>
void parallel_for_tasks(std::size_t n_tasks, unsigned jobs, Fn&& fn) {
    if (jobs <= 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    unsigned n_threads = std::min<std::size_t>(jobs, n_tasks);
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n_tasks; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

// Trains on the given rows of the matrix. Requires both classes present and
// finite feature values. Identical (rows, params) give identical forests for
// any jobs count.
inline TrainedForest train_forest(const FeatureMatrix& m, const std::vector<std::uint32_t>& rows,
                                  const ForestParams& hp, unsigned jobs = 1) {
    hp.validate();
    if (rows.empty()) throw DataError("forest: empty training set");
    std::uint64_t c0 = 0, c1 = 0;
    for (std::uint32_t r : rows) {
        if (m.row_label(r)) ++c1;
        else ++c0;
        auto vals = m.row(r);
        for (std::size_t f = 0; f < vals.size(); ++f) {
            if (!std::isfinite(vals[f]))
                throw DataError("forest: non-finite value for DIMM '" + m.dimm_of_row(r) +
                                "' ts=" + std::to_string(m.row_ts(r)) + " feature '" +
                                catalog()[f].name + "'");
        }
    }
    if (c0 == 0 || c1 == 0)
        throw DataError("forest: training set contains a single class (0s: " +
                        std::to_string(c0) + ", 1s: " + std::to_string(c1) + ")");

    const std::uint32_t mtry =
        hp.features_per_split > 0
            ? std::min<std::uint32_t>(hp.features_per_split, m.n_features())
            : std::max<std::uint32_t>(1, static_cast<std::uint32_t>(
                                             std::floor(std::sqrt(double(m.n_features())))));

    TrainedForest forest;
    forest.n_features = m.n_features();
    forest.params = hp;
    forest.catalog_ver = catalog_version();
    forest.trees.resize(hp.n_trees);

    detail::parallel_for_tasks(hp.n_trees, jobs, [&](std::size_t t) {
        detail::TreeBuilder builder(m, hp, mtry);
        forest.trees[t] = builder.build(rows, derive_seed(hp.seed, 0xf02e57ULL, t));
    });
    return forest;
}

inline double predict_tree(const DecisionTree& tree, std::span<const double> x) {
    std::int32_t node = 0;
    while (!tree.nodes[node].is_leaf()) {
        const TreeNode& nd = tree.nodes[node];
        node = x[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    const TreeNode& leaf = tree.nodes[node];
    return static_cast<double>(leaf.count1) / static_cast<double>(leaf.count0 + leaf.count1);
}

inline double predict_proba(const TrainedForest& forest, std::span<const double> x) {
    if (x.size() != forest.n_features)
        throw DataError("forest: feature vector length " + std::to_string(x.size()) +
                        " does not match model's " + std::to_string(forest.n_features));
    double sum = 0.0;
    for (const auto& tree : forest.trees) sum += predict_tree(tree, x);
    return sum / static_cast<double>(forest.trees.size());
}

struct DimmVerdict {
    bool fail = false;
    std::int64_t first_alarm_ts = -1;
    double max_proba = 0.0;
};

// Chronological scan of one DIMM's vectors; alarms at the first probability
// >= threshold. An empty sequence cannot alarm.
inline DimmVerdict predict_dimm(const TrainedForest& forest, const FeatureMatrix& m,
                                std::span<const std::uint32_t> rows_chrono,
                                double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw UsageError("forest: decision threshold must lie in (0,1)");
    DimmVerdict v;
    for (std::uint32_t r : rows_chrono) {
        double p = predict_proba(forest, m.row(r));
        if (p > v.max_proba) v.max_proba = p;
        if (!v.fail && p >= threshold) {
            v.fail = true;
            v.first_alarm_ts = m.row_ts(r);
        }
    }
    return v;
}

// Mean decrease in Gini impurity, normalized to sum 1. A forest with no
// splits reports the uniform vector.
inline std::vector<double> feature_importance(const TrainedForest& forest) {
    std::vector<double> imp(forest.n_features, 0.0);
    for (const auto& tree : forest.trees) {
        if (tree.nodes.empty()) continue;
        // recover per-node sample counts from the leaves upward
        std::vector<std::uint64_t> n0(tree.nodes.size(), 0), n1(tree.nodes.size(), 0);
        for (std::size_t i = tree.nodes.size(); i-- > 0;) {
            const TreeNode& nd = tree.nodes[i];
            if (nd.is_leaf()) {
                n0[i] = nd.count0;
                n1[i] = nd.count1;
            } else {
                n0[i] = n0[nd.left] + n0[nd.right];
                n1[i] = n1[nd.left] + n1[nd.right];
            }
        }
        const double n_root = static_cast<double>(n0[0] + n1[0]);
        if (n_root == 0) continue;
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            const TreeNode& nd = tree.nodes[i];
            if (nd.is_leaf()) continue;
            const double n = static_cast<double>(n0[i] + n1[i]);
            const double nl = static_cast<double>(n0[nd.left] + n1[nd.left]);
            const double nr = static_cast<double>(n0[nd.right] + n1[nd.right]);
            const double decrease = gini_impurity(n0[i], n1[i]) -
                                    (nl / n) * gini_impurity(n0[nd.left], n1[nd.left]) -
                                    (nr / n) * gini_impurity(n0[nd.right], n1[nd.right]);
            imp[static_cast<std::size_t>(nd.feature)] += (n / n_root) * decrease;
        }
    }
    double total = 0.0;
    for (double v : imp) total += v;
    if (total <= 0.0) {
        std::fill(imp.begin(), imp.end(), 1.0 / static_cast<double>(imp.size()));
        return imp;
    }
    for (double& v : imp) v /= total;
    return imp;
}

// ---------------------------------------------------------------------------
// Model file (versioned, self-describing JSON)
// ---------------------------------------------------------------------------

inline nlohmann::json forest_to_json(const TrainedForest& forest) {
    nlohmann::json j;
    j["format"] = "cepred-forest-1";
    j["catalog_version"] = forest.catalog_ver;
    j["n_features"] = forest.n_features;
    j["params"] = {{"n_trees", forest.params.n_trees},
                   {"max_depth", forest.params.max_depth},
                   {"min_samples_split", forest.params.min_samples_split},
                   {"features_per_split", forest.params.features_per_split},
                   {"seed", forest.params.seed}};
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : forest.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nd : tree.nodes) {
            if (nd.is_leaf())
                nodes.push_back({nd.count0, nd.count1});
            else
                nodes.push_back({nd.feature, nd.threshold, nd.left, nd.right});
        }
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline TrainedForest forest_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != std::string("cepred-forest-1"))
        throw DataError("model file: unrecognized format");
    TrainedForest forest;
    forest.catalog_ver = j.at("catalog_version").get<std::string>();
    if (forest.catalog_ver != catalog_version())
        throw DataError("model catalog version '" + forest.catalog_ver +
                        "' does not match this build's '" + catalog_version() + "'");
    forest.n_features = j.at("n_features").get<std::size_t>();
    const auto& p = j.at("params");
    forest.params.n_trees = p.at("n_trees").get<std::uint32_t>();
    forest.params.max_depth = p.at("max_depth").get<std::int32_t>();
    forest.params.min_samples_split = p.at("min_samples_split").get<std::uint32_t>();
    forest.params.features_per_split = p.at("features_per_split").get<std::int32_t>();
    forest.params.seed = p.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        DecisionTree tree;
        for (const auto& nj : tj) {
            TreeNode nd;
            if (nj.size() == 2) {
                nd.count0 = nj[0].get<std::uint32_t>();
                nd.count1 = nj[1].get<std::uint32_t>();
                if (nd.count0 + nd.count1 == 0)
                    throw DataError("model file: empty leaf");
            } else if (nj.size() == 4) {
                nd.feature = nj[0].get<std::int32_t>();
                nd.threshold = nj[1].get<double>();
                nd.left = nj[2].get<std::int32_t>();
                nd.right = nj[3].get<std::int32_t>();
                if (nd.feature < 0 || static_cast<std::size_t>(nd.feature) >= forest.n_features)
                    throw DataError("model file: feature index out of range");
            } else {
                throw DataError("model file: malformed node");
            }
            tree.nodes.push_back(nd);
        }
        for (const auto& nd : tree.nodes) {
            if (nd.is_leaf()) continue;
            auto n = static_cast<std::int64_t>(tree.nodes.size());
            if (nd.left < 0 || nd.right < 0 || nd.left >= n || nd.right >= n)
                throw DataError("model file: child index out of range");
        }
        forest.trees.push_back(std::move(tree));
    }
    return forest;
}

}  // namespace cepred
