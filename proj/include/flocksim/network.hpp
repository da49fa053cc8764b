#pragma once

// Proximity network over bird positions: vertices are birds, an edge joins two
// birds iff their Euclidean distance is at most 1 (ties included), or the edge
// existed before and its length changed by less than the hysteresis margin.
// All geometry predicates run on squared distances so the Exact scalar never
// needs a square root.

#include <cstddef>
#include <type_traits>
#include <vector>

#include "flocksim/matrix.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

template <class S>
struct HysteresisRule {
    S eps_h = rat<S>(1, 1099511627776);  // 2^-40
    bool enabled = true;
};

template <class S>
class FlockNetwork {
  public:
    size_t n = 0;
    Mat<S> dist2;                          // squared pairwise distances
    std::vector<std::vector<bool>> adj;    // symmetric, no self loops
    std::vector<size_t> degree;
    std::vector<size_t> flock_id;          // component index, ordered by min member
    std::vector<std::vector<size_t>> flocks;

    FlockNetwork() = default;
    explicit FlockNetwork(size_t birds)
        : n(birds), dist2(birds, birds), adj(birds, std::vector<bool>(birds, false)) {}

    bool has_edge(size_t i, size_t j) const {
        if (i >= n || j >= n) throw DimError("edge query out of range");
        return adj[i][j];
    }

    void finalize() {
        degree.assign(n, 0);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                if (adj[i][j]) ++degree[i];
        flock_id.assign(n, n);
        flocks.clear();
        for (size_t i = 0; i < n; ++i) {
            if (flock_id[i] != n) continue;
            std::vector<size_t> comp{i};
            flock_id[i] = flocks.size();
            for (size_t head = 0; head < comp.size(); ++head)
                for (size_t j = 0; j < n; ++j)
                    if (adj[comp[head]][j] && flock_id[j] == n) {
                        flock_id[j] = flocks.size();
                        comp.push_back(j);
                    }
            flocks.push_back(std::move(comp));
        }
    }
};

template <class S>
S squared_distance(const Mat<S>& x, size_t i, size_t j) {
    S s(0);
    for (size_t k = 0; k < x.cols(); ++k) {
        S d = x(i, k) - x(j, k);
        s += d * d;
    }
    return s;
}

// Builds the network at one time step. `prev` carries the previous step's
// network for the hysteresis clause; pass nullptr at the first step.
template <class S>
FlockNetwork<S> build_network(const Mat<S>& x, std::type_identity_t<const FlockNetwork<S>*> prev,
                              const HysteresisRule<S>& rule) {
    FlockNetwork<S> g;
    g.n = x.rows();
    if (prev && prev->n != g.n) throw DimError("previous network has wrong size");
    g.dist2 = Mat<S>(g.n, g.n);
    g.adj.assign(g.n, std::vector<bool>(g.n, false));
    for (size_t i = 0; i < g.n; ++i)
        for (size_t j = i + 1; j < g.n; ++j) {
            S d2 = squared_distance(x, i, j);
            g.dist2(i, j) = d2;
            g.dist2(j, i) = d2;
            bool edge = d2 <= S(1);
            if (!edge && rule.enabled && prev && prev->adj[i][j])
                edge = abs_sqrt_diff_lt(d2, prev->dist2(i, j), rule.eps_h);
            g.adj[i][j] = edge;
            g.adj[j][i] = edge;
        }
    g.finalize();
    return g;
}

template <class S>
Mat<S> laplacian(const FlockNetwork<S>& g) {
    Mat<S> l(g.n, g.n);
    for (size_t i = 0; i < g.n; ++i) {
        l(i, i) = S(static_cast<long>(g.degree[i]));
        for (size_t j = 0; j < g.n; ++j)
            if (g.adj[i][j]) l(i, j) = S(-1);
    }
    return l;
}

}  // namespace flocksim
