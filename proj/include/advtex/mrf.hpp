#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "advtex/error.hpp"

namespace advtex {

inline constexpr int kNoLabel = -1;

/// Maximization problem over discrete labels:
///   sum_i unary(i, l_i) + weight * sum_{(i,j) in edges} [l_i == l_j]
/// Labels a node is not allowed to take are never chosen; a node with no
/// allowed label keeps kNoLabel and earns nothing.
struct PottsProblem {
    int nodes = 0;
    int labels = 0;
    std::vector<double> unary;          ///< nodes x labels, row-major
    std::vector<std::uint8_t> allowed;  ///< nodes x labels; empty = all allowed
    std::vector<std::pair<int, int>> edges;
    double weight = 0.0;

    [[nodiscard]] double u(int node, int label) const { return unary[std::size_t(node) * labels + label]; }
    [[nodiscard]] bool ok(int node, int label) const {
        return allowed.empty() || allowed[std::size_t(node) * labels + label] != 0;
    }

    [[nodiscard]] std::vector<std::vector<int>> neighbors() const {
        std::vector<std::vector<int>> nb(nodes);
        for (auto [a, b] : edges) {
            nb[a].push_back(b);
            nb[b].push_back(a);
        }
        return nb;
    }

    [[nodiscard]] double objective(const std::vector<int>& l) const {
        double total = 0.0;
        for (int i = 0; i < nodes; ++i)
            if (l[i] != kNoLabel) total += u(i, l[i]);
        for (auto [a, b] : edges)
            if (l[a] != kNoLabel && l[a] == l[b]) total += weight;
        return total;
    }
};

/// Per-node argmax of the unary term; ties go to the lowest label.
inline std::vector<int> unary_argmax(const PottsProblem& p) {
    std::vector<int> out(p.nodes, kNoLabel);
    for (int i = 0; i < p.nodes; ++i) {
        double best = 0.0;
        for (int l = 0; l < p.labels; ++l) {
            if (!p.ok(i, l)) continue;
            if (out[i] == kNoLabel || p.u(i, l) > best) {
                best = p.u(i, l);
                out[i] = l;
            }
        }
    }
    return out;
}

struct IcmResult {
    std::vector<int> labels;
    int sweeps = 0;
    std::vector<double> objective_trace; ///< objective after init and after every sweep
};

/// Iterated conditional modes in node order. A node only moves to a
/// strictly better label (lowest index among equals), so the objective is
/// monotone and the sweep loop terminates.
inline IcmResult icm(const PottsProblem& p, std::vector<int> init, int max_sweeps = 100) {
    if (int(init.size()) != p.nodes) throw ArgumentError("icm: init size does not match node count");
    const auto nb = p.neighbors();
    IcmResult res;
    res.labels = std::move(init);
    res.objective_trace.push_back(p.objective(res.labels));
    std::vector<double> score(p.labels);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool changed = false;
        for (int i = 0; i < p.nodes; ++i) {
            if (res.labels[i] == kNoLabel) continue;
            for (int l = 0; l < p.labels; ++l) score[l] = p.u(i, l);
            for (int j : nb[i])
                if (res.labels[j] != kNoLabel) score[res.labels[j]] += p.weight;
            int best = res.labels[i];
            for (int l = 0; l < p.labels; ++l)
                if (p.ok(i, l) && score[l] > score[best]) best = l;
            if (best != res.labels[i]) {
                res.labels[i] = best;
                changed = true;
            }
        }
        res.sweeps = sweep + 1;
        res.objective_trace.push_back(p.objective(res.labels));
        if (!changed) break;
    }
    return res;
}

} // namespace advtex
