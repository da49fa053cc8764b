#pragma once

// Diagnostics over recorded traces: where the network switched, how flocks
// merged or split (genealogy), whose initial velocity can influence whom
// (boolean footprints and their stabilizer chains), per-flock stationary
// velocities, and the lifted-angle observables of escaping birds.

#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flocksim/dynamics.hpp"
#include "flocksim/matrix.hpp"
#include "flocksim/spectral.hpp"

namespace flocksim {

struct SwitchEntry {
    long t = 0;
    std::vector<std::pair<size_t, size_t>> gained;
    std::vector<std::pair<size_t, size_t>> lost;
};

struct SwitchLog {
    std::vector<SwitchEntry> entries;
    size_t count() const { return entries.size(); }
    std::vector<long> ticks() const {
        std::vector<long> out;
        for (auto& e : entries) out.push_back(e.t);
        return out;
    }
};

template <class S>
SwitchLog detect_switches(const Trace<S>& trace) {
    SwitchLog log;
    for (size_t k = 1; k < trace.rec.size(); ++k) {
        const auto& prev = trace.rec[k - 1].g;
        const auto& cur = trace.rec[k].g;
        SwitchEntry e;
        e.t = trace.rec[k].t;
        for (size_t i = 0; i < cur.n; ++i)
            for (size_t j = i + 1; j < cur.n; ++j) {
                if (cur.adj[i][j] && !prev.adj[i][j]) e.gained.push_back({i, j});
                if (!cur.adj[i][j] && prev.adj[i][j]) e.lost.push_back({i, j});
            }
        if (!e.gained.empty() || !e.lost.empty()) log.entries.push_back(std::move(e));
    }
    return log;
}

// Flock genealogy. Leaves are the flocks of the first recorded tick (height
// 1); a merge makes a node of height 1 + max over children. A flock that
// breaks apart is recorded as a split event and its fragments restart as
// fresh leaves, so the genealogy stays a forest and merge-only traces give
// the clean fusion forest.
struct FusionNode {
    size_t id = 0;
    std::vector<size_t> members;
    long tick = 0;  // formation tick
    int height = 1;
    std::vector<size_t> children;
    long parent = -1;
};

struct SplitEvent {
    long t = 0;
    std::vector<size_t> source;                 // members of the flock that broke
    std::vector<std::vector<size_t>> fragments;
};

struct FusionResult {
    std::vector<FusionNode> nodes;
    std::vector<SplitEvent> splits;
    std::vector<size_t> roots;  // live nodes at the end of the trace
    long fragmentation_breakpoint = -1;  // last split tick, -1 when merge-only

    bool merge_only() const { return splits.empty(); }

    std::map<int, std::set<long>> ticks_by_height() const {
        std::map<int, std::set<long>> out;
        for (auto& n : nodes) out[n.height].insert(n.tick);
        return out;
    }

    std::string to_text() const {
        std::ostringstream os;
        for (size_t r : roots) print_node(os, r, 0);
        return os.str();
    }

    std::string to_edge_list() const {
        std::ostringstream os;
        for (auto& n : nodes)
            if (n.parent >= 0)
                os << n.id << " -> " << n.parent << " [t=" << nodes[size_t(n.parent)].tick << "]\n";
        return os.str();
    }

  private:
    void print_node(std::ostringstream& os, size_t id, int depth) const {
        const FusionNode& n = nodes[id];
        for (int k = 0; k < depth; ++k) os << "  ";
        os << "{";
        for (size_t k = 0; k < n.members.size(); ++k) os << (k ? "," : "") << n.members[k];
        os << "} t=" << n.tick << " h=" << n.height << "\n";
        for (size_t c : n.children) print_node(os, c, depth + 1);
    }
};

namespace detail {

inline std::vector<std::vector<size_t>> sorted_partition(const std::vector<std::vector<size_t>>& p) {
    std::vector<std::vector<size_t>> out = p;
    for (auto& f : out) std::sort(f.begin(), f.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Core genealogy builder over a sequence of (tick, partition) snapshots.
inline FusionResult fuse_partitions(const std::vector<std::pair<long, std::vector<std::vector<size_t>>>>& seq) {
    FusionResult res;
    if (seq.empty()) return res;
    std::map<std::vector<size_t>, size_t> live;  // member set -> node id
    auto new_node = [&](std::vector<size_t> members, long tick, int height,
                        std::vector<size_t> children) {
        FusionNode n;
        n.id = res.nodes.size();
        n.members = std::move(members);
        n.tick = tick;
        n.height = height;
        n.children = std::move(children);
        for (size_t c : n.children) res.nodes[c].parent = static_cast<long>(n.id);
        live[n.members] = n.id;
        res.nodes.push_back(n);
        return n.id;
    };
    for (auto& f : detail::sorted_partition(seq.front().second))
        new_node(f, seq.front().first, 1, {});
    for (size_t k = 1; k < seq.size(); ++k) {
        long t = seq[k].first;
        auto parts = detail::sorted_partition(seq[k].second);
        std::map<std::vector<size_t>, size_t> prev = live;

        // Any previous flock not wholly inside one new flock has split.
        for (auto& [members, id] : prev) {
            std::map<size_t, std::vector<size_t>> pieces;  // new-flock index -> overlap
            for (size_t m : members)
                for (size_t pi = 0; pi < parts.size(); ++pi)
                    if (std::binary_search(parts[pi].begin(), parts[pi].end(), m))
                        pieces[pi].push_back(m);
            if (pieces.size() <= 1) continue;
            SplitEvent ev;
            ev.t = t;
            ev.source = members;
            for (auto& kv : pieces) ev.fragments.push_back(kv.second);
            res.splits.push_back(ev);
            res.fragmentation_breakpoint = t;
            live.erase(members);
            for (auto& kv : pieces) new_node(kv.second, t, 1, {});
        }
        // A new flock covering several live nodes is a merge.
        for (auto& f : parts) {
            if (live.count(f)) continue;
            std::vector<size_t> children;
            int h = 0;
            for (auto& [members, id] : live) {
                if (!std::binary_search(f.begin(), f.end(), members.front())) continue;
                children.push_back(id);
                h = std::max(h, res.nodes[id].height);
            }
            std::vector<size_t> covered;
            for (size_t c : children)
                covered.insert(covered.end(), res.nodes[c].members.begin(), res.nodes[c].members.end());
            std::sort(covered.begin(), covered.end());
            if (covered != f) throw NumericError("partition sequence is inconsistent");
            for (size_t c : children) live.erase(res.nodes[c].members);
            new_node(f, t, h + 1, children);
        }
    }
    for (auto& [members, id] : live) res.roots.push_back(id);
    std::sort(res.roots.begin(), res.roots.end());
    return res;
}

template <class S>
FusionResult fusion_tree(const Trace<S>& trace) {
    std::vector<std::pair<long, std::vector<std::vector<size_t>>>> seq;
    for (auto& r : trace.rec) {
        if (!seq.empty() && detail::sorted_partition(seq.back().second) ==
                                detail::sorted_partition(r.g.flocks))
            continue;
        seq.push_back({r.t, r.g.flocks});
    }
    return fuse_partitions(seq);
}

// Boolean influence footprint of the matrix product acting between tick s and
// the end of the trace. Entry (i, j) is true when bird j's velocity at tick s
// can influence bird i later. The tick-0 record feeds tick 1 unchanged, so
// only matrices from tick max(s,1) onward enter the product.
struct InfluenceState {
    long s = 0;
    std::vector<std::vector<bool>> footprint;  // diagonal always true
    long gains = 0;                            // entries turned on after start
    std::vector<long> gain_ticks;              // one entry per tick that gained
};

template <class S>
std::vector<std::vector<bool>> transition_footprint(const FlockNetwork<S>& g) {
    std::vector<std::vector<bool>> f(g.n, std::vector<bool>(g.n, false));
    for (size_t i = 0; i < g.n; ++i) {
        f[i][i] = true;
        for (size_t j = 0; j < g.n; ++j)
            if (g.adj[i][j]) f[i][j] = true;
    }
    return f;
}

template <class S>
InfluenceState influence(const Trace<S>& trace, long s) {
    if (trace.rec.empty()) throw DomainError("empty trace");
    long t0 = trace.rec.front().t;
    long t_end = trace.rec.back().t;
    if (s < t0 || s > t_end) throw DomainError("reference tick outside trace");
    size_t n = trace.rec.front().g.n;
    InfluenceState st;
    st.s = s;
    st.footprint.assign(n, std::vector<bool>(n, false));
    for (size_t i = 0; i < n; ++i) st.footprint[i][i] = true;
    for (long t = std::max(s, 1L); t < t_end; ++t) {
        auto f = transition_footprint(trace.rec[size_t(t - t0)].g);
        std::vector<std::vector<bool>> next(n, std::vector<bool>(n, false));
        long gained = 0;
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < n; ++k) {
                if (!f[i][k]) continue;
                for (size_t j = 0; j < n; ++j)
                    if (st.footprint[k][j]) next[i][j] = true;
            }
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                if (next[i][j] && !st.footprint[i][j]) ++gained;
        if (gained) {
            st.gains += gained;
            st.gain_ticks.push_back(t + 1);
        }
        st.footprint = std::move(next);
    }
    return st;
}

// Exact product bookkeeping alongside the footprint: the smallest positive
// entry can only grow while the footprint is static.
template <class S>
struct InfluenceDetail {
    std::vector<long> ticks;
    std::vector<S> min_positive;
    std::vector<bool> footprint_changed;
};

template <class S>
InfluenceDetail<S> influence_detail(const Trace<S>& trace, long s) {
    if (trace.rec.empty()) throw DomainError("empty trace");
    long t0 = trace.rec.front().t;
    long t_end = trace.rec.back().t;
    if (s < t0 || s > t_end) throw DomainError("reference tick outside trace");
    size_t n = trace.rec.front().g.n;
    Mat<S> prod = Mat<S>::identity(n);
    auto min_pos = [&](const Mat<S>& m) {
        S best(0);
        bool first = true;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j)
                if (m(i, j) > S(0) && (first || m(i, j) < best)) best = m(i, j), first = false;
        return best;
    };
    auto fp = [&](const Mat<S>& m) {
        std::vector<std::vector<bool>> f(n, std::vector<bool>(n));
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) f[i][j] = m(i, j) != S(0);
        return f;
    };
    InfluenceDetail<S> det;
    auto record = [&](long t, bool changed) {
        det.ticks.push_back(t);
        det.min_positive.push_back(min_pos(prod));
        det.footprint_changed.push_back(changed);
    };
    record(s, false);
    for (long t = std::max(s, 1L); t < t_end; ++t) {
        TransitionMatrix<S> tm = transition(trace.rec[size_t(t - t0)].g, trace.policy);
        auto before = fp(prod);
        prod = tm.p * prod;
        record(t + 1, fp(prod) != before);
    }
    return det;
}

struct StabilizerChain {
    std::vector<std::set<size_t>> v;  // nested influence sets, one per reboot
    std::vector<long> t;              // last change tick per reboot
    bool reached_fixpoint = false;
};

// Iterated stabilizers of one bird: grow the influence set of bird i from a
// start tick until it stops changing, note the last change tick, reboot the
// product just after it, and repeat until two consecutive sets agree.
template <class S>
StabilizerChain stabilizers(const Trace<S>& trace, long s, size_t bird) {
    if (trace.rec.empty()) throw DomainError("empty trace");
    size_t n = trace.rec.front().g.n;
    if (bird >= n) throw DimError("bird index out of range");
    long t0 = trace.rec.front().t;
    long t_end = trace.rec.back().t;
    StabilizerChain chain;
    long start = s;
    while (start <= t_end) {
        std::vector<bool> col(n, false);
        col[bird] = true;
        long last_change = start;
        for (long t = std::max(start, 1L); t < t_end; ++t) {
            auto f = transition_footprint(trace.rec[size_t(t - t0)].g);
            std::vector<bool> next(n, false);
            for (size_t i = 0; i < n; ++i)
                for (size_t k = 0; k < n; ++k)
                    if (f[i][k] && col[k]) next[i] = true;
            if (next != col) last_change = t + 1;
            col = std::move(next);
        }
        std::set<size_t> v;
        for (size_t i = 0; i < n; ++i)
            if (col[i]) v.insert(i);
        chain.v.push_back(v);
        chain.t.push_back(last_change);
        if (chain.v.size() >= 2 && v == chain.v[chain.v.size() - 2]) {
            chain.reached_fixpoint = true;
            break;
        }
        start = last_change + 1;
    }
    return chain;
}

// Per-flock stationary velocity at one tick: the pi-weighted mean velocity,
// with pi proportional to 1/c_i inside each flock.
template <class S>
std::vector<Vec<S>> stationary_velocities(const Trace<S>& trace, long tick) {
    if (trace.rec.empty()) throw DomainError("empty trace");
    long t0 = trace.rec.front().t;
    if (tick < t0 || tick > trace.rec.back().t) throw DomainError("tick outside trace");
    const StepRecord<S>& r = trace.rec[size_t(tick - t0)];
    std::vector<S> c = trace.policy.confidence(r.g);
    std::vector<Vec<S>> out;
    for (auto& flock : r.g.flocks) {
        S tr(0);
        for (size_t i : flock) tr += S(1) / c[i];
        Vec<S> m(r.v.cols());
        for (size_t i : flock)
            for (size_t k = 0; k < r.v.cols(); ++k) m[k] += (S(1) / c[i]) / tr * r.v(i, k);
        out.push_back(std::move(m));
    }
    return out;
}

struct EscapeObservables {
    double omega = 0;            // angle between lifted position and velocity
    double velocity_offset = 0;  // || v - x/t ||_2
    Vec<double> w;               // x / t
};

template <class S>
EscapeObservables escape_observables(const Trace<S>& trace, long tick, size_t bird) {
    if (trace.rec.empty()) throw DomainError("empty trace");
    long t0 = trace.rec.front().t;
    if (tick < std::max(t0, 1L) || tick > trace.rec.back().t)
        throw DomainError("tick outside trace or before 1");
    const StepRecord<S>& r = trace.rec[size_t(tick - t0)];
    if (bird >= r.g.n) throw DimError("bird index out of range");
    size_t d = r.x.cols();
    std::vector<double> lx(d + 1), lv(d + 1);
    for (size_t k = 0; k < d; ++k) {
        lx[k] = to_double(r.x(bird, k));
        lv[k] = to_double(r.v(bird, k));
    }
    lx[d] = static_cast<double>(tick);
    lv[d] = 1.0;
    double xx = 0, vv = 0, xv = 0;
    for (size_t k = 0; k <= d; ++k) {
        xx += lx[k] * lx[k];
        vv += lv[k] * lv[k];
        xv += lx[k] * lv[k];
    }
    if (xx == 0 || vv == 0) throw DomainError("angle undefined for zero vector");
    double rej2 = std::max(0.0, xx * vv - xv * xv);
    EscapeObservables out;
    out.omega = std::atan2(std::sqrt(rej2), xv);
    out.w = Vec<double>(d);
    double off2 = 0;
    for (size_t k = 0; k < d; ++k) {
        out.w[k] = lx[k] / static_cast<double>(tick);
        double diff = lv[k] - out.w[k];
        off2 += diff * diff;
    }
    out.velocity_offset = std::sqrt(off2);
    return out;
}

}  // namespace flocksim
