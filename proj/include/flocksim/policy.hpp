#pragma once

// Confidence policies: how strongly a bird weighs its neighborhood average.
// The transition row of bird i is (1 - c_i d_i) on itself and c_i on each
// neighbor, so validity needs 0 < c_i d_i < 1 whenever d_i > 0.

#include <cstddef>
#include <vector>

#include "flocksim/network.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

enum class PolicyKind { Vicsek, LazyWalk, Custom };

template <class S>
struct ConfidencePolicy {
    PolicyKind kind = PolicyKind::LazyWalk;
    std::vector<S> custom;  // per-vertex c_i, only read for Custom

    // Per-vertex confidences for one network snapshot.
    std::vector<S> confidence(const FlockNetwork<S>& g) const {
        std::vector<S> c(g.n);
        for (size_t i = 0; i < g.n; ++i) {
            size_t d = g.degree[i];
            switch (kind) {
                case PolicyKind::Vicsek:
                    c[i] = rat<S>(1, static_cast<long>(d) + 1);
                    break;
                case PolicyKind::LazyWalk:
                    c[i] = rat<S>(2, 3 * static_cast<long>(d ? d : 1));
                    break;
                case PolicyKind::Custom:
                    if (custom.size() != g.n)
                        throw DimError("custom confidence table has wrong size");
                    c[i] = custom[i];
                    break;
            }
            if (d > 0) {
                S load = c[i] * S(static_cast<long>(d));
                if (!(load > S(0)) || !(load < S(1)))
                    throw DomainError("confidence violates 0 < c_i * deg_i < 1");
            }
        }
        return c;
    }
};

template <class S>
ConfidencePolicy<S> vicsek_policy() {
    return ConfidencePolicy<S>{PolicyKind::Vicsek, {}};
}

template <class S>
ConfidencePolicy<S> lazy_walk_policy() {
    return ConfidencePolicy<S>{PolicyKind::LazyWalk, {}};
}

}  // namespace flocksim
