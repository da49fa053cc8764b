#pragma once

// The flocking state machine. One step: build the network from current
// positions (with hysteresis against the previous network), form the
// row-stochastic averaging matrix P = I - C L, then
//
//   v(t+1) = (P(t) x I_d) v(t),   x(t+1) = x(t) + v(t+1).
//
// A recorded tick t carries x(t) and v(t), the motion that ended at t. The
// t = 0 record holds the initial position and the upcoming v(1); the move
// from x(0) to x(1) is a pure translation by v(1) and no matrix is applied.
// Perturbation events at tick t rescale v(t) coordinatewise on whole flocks
// after the record is taken and before P(t) acts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "flocksim/matrix.hpp"
#include "flocksim/network.hpp"
#include "flocksim/policy.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

template <class S>
struct Configuration {
    long t = 0;
    Mat<S> x;  // n x d positions
    Mat<S> v;  // n x d velocities, v(t)

    size_t birds() const { return x.rows(); }
    size_t dims() const { return x.cols(); }
    void check() const {
        if (x.rows() < 1 || x.cols() < 1) throw DimError("need n >= 1 birds in d >= 1 dims");
        if (v.rows() != x.rows() || v.cols() != x.cols())
            throw DimError("positions and velocities must share dimensions");
        if (t < 0) throw DomainError("tick must be nonnegative");
    }
};

template <class S>
struct TransitionMatrix {
    Mat<S> p;
    std::vector<S> c;
};

// P = I - diag(c) L. Validates row-stochasticity, a strictly positive
// diagonal, and that the footprint is the adjacency plus all self loops.
template <class S>
TransitionMatrix<S> transition(const FlockNetwork<S>& g, const ConfidencePolicy<S>& policy) {
    TransitionMatrix<S> tm;
    tm.c = policy.confidence(g);
    Mat<S> l = laplacian(g);
    tm.p = Mat<S>(g.n, g.n);
    for (size_t i = 0; i < g.n; ++i)
        for (size_t j = 0; j < g.n; ++j)
            tm.p(i, j) = (i == j ? S(1) : S(0)) - tm.c[i] * l(i, j);
    for (size_t i = 0; i < g.n; ++i) {
        if (!(tm.p(i, i) > S(0))) throw NumericError("transition diagonal not positive");
        if constexpr (field_traits<S>::exact) {
            if (tm.p.row_sum(i) != S(1)) throw NumericError("transition row sum not 1");
        }
        for (size_t j = 0; j < g.n; ++j) {
            bool expect = (i == j) || g.adj[i][j];
            if (expect != (tm.p(i, j) != S(0)))
                throw NumericError("transition footprint mismatch");
        }
    }
    return tm;
}

template <class S>
Configuration<S> step(const Configuration<S>& cfg, const FlockNetwork<S>& g,
                      const ConfidencePolicy<S>& policy) {
    cfg.check();
    if (g.n != cfg.birds()) throw DimError("network size mismatch");
    TransitionMatrix<S> tm = transition(g, policy);
    Configuration<S> next;
    next.t = cfg.t + 1;
    next.v = tm.p * cfg.v;
    next.x = cfg.x + next.v;
    return next;
}

template <class S>
struct PerturbationEvent {
    long t = 0;
    std::vector<size_t> members;  // bird indices, whole flocks only
    std::vector<S> alpha;         // one scale per coordinate, |alpha_k| <= 1
};

template <class S>
void check_event_shape(const Configuration<S>& cfg, const PerturbationEvent<S>& ev) {
    if (ev.alpha.size() != cfg.dims()) throw EventError("alpha must have one entry per coordinate");
    for (auto& a : ev.alpha)
        if (abs_val(a) > S(1)) throw EventError("alpha entry exceeds 1 in magnitude");
    if (ev.members.empty()) throw EventError("event names no birds");
    std::set<size_t> seen;
    for (size_t m : ev.members) {
        if (m >= cfg.birds()) throw EventError("event member out of range");
        if (!seen.insert(m).second) throw EventError("duplicate event member");
    }
}

template <class S>
Configuration<S> apply_perturbation(const Configuration<S>& cfg, const PerturbationEvent<S>& ev,
                                    const FlockNetwork<S>& g) {
    check_event_shape(cfg, ev);
    std::set<size_t> named(ev.members.begin(), ev.members.end());
    std::set<size_t> touched;
    for (size_t m : ev.members) touched.insert(g.flock_id[m]);
    for (size_t f : touched)
        for (size_t m : g.flocks[f])
            if (!named.count(m)) throw EventError("event member set splits a flock");
    Configuration<S> out = cfg;
    for (size_t m : ev.members)
        for (size_t k = 0; k < cfg.dims(); ++k) out.v(m, k) *= ev.alpha[k];
    return out;
}

// Convenience overload; rebuilds the network from positions alone, so callers
// that rely on hysteresis-retained edges must pass the live network instead.
template <class S>
Configuration<S> apply_perturbation(const Configuration<S>& cfg, const PerturbationEvent<S>& ev) {
    return apply_perturbation(cfg, ev, build_network(cfg.x, nullptr, HysteresisRule<S>{S(0), false}));
}

struct NoiseBudget {
    long kappa = 0;              // max event count
    double delta_constant = 1;   // per-event bound delta(t) = c * ln(t) / t
    long window = 0;             // max ticks after a network switch

    double delta(long t) const {
        if (t < 1) return 0;
        return delta_constant * std::log(static_cast<double>(t)) / static_cast<double>(t);
    }
};

template <class S>
struct EventRecord {
    PerturbationEvent<S> ev;
    S dv_l2_sq = S(0);  // squared l2 norm of the velocity change
};

struct NoiseCheck {
    long t = 0;
    bool alpha_ok = true;
    bool magnitude_ok = true;
    bool window_ok = true;
    double measured = 0;
    double bound = 0;
};

struct NoiseReport {
    std::vector<NoiseCheck> events;
    bool count_ok = true;
    bool pass = true;
};

/// Report-only audit of a run's perturbations against a budget: per-event
// magnitude vs delta(t), per-event distance to the nearest preceding switch
// vs the window (inclusive at both ends), and total count vs kappa.
template <class S>
NoiseReport validate_noise(const std::vector<EventRecord<S>>& events, const NoiseBudget& budget,
                           const std::vector<long>& switch_ticks) {
    NoiseReport rep;
    rep.count_ok = static_cast<long>(events.size()) <= budget.kappa;
    rep.pass = rep.count_ok;
    for (auto& er : events) {
        NoiseCheck chk;
        chk.t = er.ev.t;
        for (auto& a : er.ev.alpha)
            if (abs_val(a) > S(1)) chk.alpha_ok = false;
        chk.measured = std::sqrt(to_double(er.dv_l2_sq));
        chk.bound = budget.delta(er.ev.t);
        chk.magnitude_ok = chk.measured <= chk.bound;
        chk.window_ok = false;
        for (long s : switch_ticks)
            if (s <= er.ev.t && er.ev.t - s <= budget.window) chk.window_ok = true;
        rep.pass = rep.pass && chk.alpha_ok && chk.magnitude_ok && chk.window_ok;
        rep.events.push_back(chk);
    }
    return rep;
}

template <class S>
struct StepRecord {
    long t = 0;
    Mat<S> x;
    Mat<S> v;
    FlockNetwork<S> g;
    bool switched = false;  // network differs from the previous tick
};

template <class S>
struct Trace {
    std::vector<StepRecord<S>> rec;  // all ticks, or just the last when not kept
    std::vector<EventRecord<S>> events;
    std::vector<std::string> warnings;
    ConfidencePolicy<S> policy;
    HysteresisRule<S> rule;
    long horizon = 0;
};

template <class S>
struct RunOptions {
    bool keep_full_state = true;   // false: retain only the newest record
    bool check_invariants = true;  // sup-norm, displacement, edge-length audits
    std::function<void(const StepRecord<S>&)> observer;
};

namespace detail {

template <class S>
S sup_norm(const Mat<S>& v) {
    return v.max_abs();
}

template <class S>
void audit_step(const StepRecord<S>& prev, const StepRecord<S>& cur, const S& sup_before,
                const HysteresisRule<S>& rule, std::vector<std::string>& warnings) {
    S sup_after = sup_norm(cur.v);
    bool grew;
    if constexpr (field_traits<S>::exact)
        grew = sup_after > sup_before;
    else
        grew = sup_after > sup_before + abs_val(sup_before) * S(1e-15L);
    if (grew)
        warnings.push_back("sup-norm of velocities grew at tick " + std::to_string(cur.t));
    size_t n = cur.g.n;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            S dv2(0);
            for (size_t k = 0; k < cur.v.cols(); ++k) {
                S d = cur.v(i, k) - cur.v(j, k);
                dv2 += d * d;
            }
            if (!abs_sqrt_diff_leq_sqrt(cur.g.dist2(i, j), prev.g.dist2(i, j), dv2))
                warnings.push_back("displacement bound violated at tick " + std::to_string(cur.t) +
                                   " pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
            if (rule.enabled && cur.g.adj[i][j] && sqrt_gt_one_plus_sqrt(cur.g.dist2(i, j), rule.eps_h))
                warnings.push_back("edge longer than 1+sqrt(eps_h) at tick " + std::to_string(cur.t) +
                                   " pair (" + std::to_string(i) + "," + std::to_string(j) + ")");
        }
}

}  // namespace detail

template <class S>
Trace<S> run(const Configuration<S>& initial, long horizon, std::vector<PerturbationEvent<S>> events,
             const ConfidencePolicy<S>& policy, const HysteresisRule<S>& rule,
             const RunOptions<S>& opts = {}) {
    initial.check();
    if (initial.t != 0) throw DomainError("run starts at tick 0");
    if (horizon < 0) throw DomainError("horizon must be nonnegative");
    std::stable_sort(events.begin(), events.end(),
                     [](const PerturbationEvent<S>& a, const PerturbationEvent<S>& b) { return a.t < b.t; });

    Trace<S> trace;
    trace.policy = policy;
    trace.rule = rule;
    trace.horizon = horizon;

    StepRecord<S> cur;
    cur.t = 0;
    cur.x = initial.x;
    cur.v = initial.v;  // v(1): the motion that will end at tick 1
    cur.g = build_network(initial.x, nullptr, rule);
    cur.switched = false;

    size_t next_event = 0;
    auto emit = [&](const StepRecord<S>& r) {
        if (opts.observer) opts.observer(r);
        if (!opts.keep_full_state) trace.rec.clear();
        trace.rec.push_back(r);
    };
    // Events at the record's own tick rescale its velocity in place.
    auto drain_events = [&](StepRecord<S>& r) {
        while (next_event < events.size() && events[next_event].t == r.t) {
            const auto& ev = events[next_event];
            Configuration<S> tmp{r.t, r.x, r.v};
            Configuration<S> scaled = apply_perturbation(tmp, ev, r.g);
            EventRecord<S> er;
            er.ev = ev;
            for (size_t m : ev.members)
                for (size_t k = 0; k < r.v.cols(); ++k) {
                    S d = scaled.v(m, k) - r.v(m, k);
                    er.dv_l2_sq += d * d;
                }
            r.v = scaled.v;
            trace.events.push_back(std::move(er));
            ++next_event;
        }
    };
    while (next_event < events.size() && events[next_event].t < 0) ++next_event;

    emit(cur);
    if (horizon == 0) return trace;

    drain_events(cur);

    // Tick 0 -> 1 is a pure translation by v(1); no averaging happens yet.
    StepRecord<S> nxt;
    nxt.t = 1;
    nxt.v = cur.v;
    nxt.x = cur.x + nxt.v;
    nxt.g = build_network(nxt.x, &cur.g, rule);
    nxt.switched = nxt.g.adj != cur.g.adj;
    if (opts.check_invariants) detail::audit_step(cur, nxt, detail::sup_norm(cur.v), rule, trace.warnings);
    std::swap(cur, nxt);
    emit(cur);

    for (long t = 1; t < horizon; ++t) {
        drain_events(cur);
        TransitionMatrix<S> tm = transition(cur.g, policy);
        S sup_before = detail::sup_norm(cur.v);
        nxt.t = t + 1;
        nxt.v = tm.p * cur.v;
        nxt.x = cur.x + nxt.v;
        nxt.g = build_network(nxt.x, &cur.g, rule);
        nxt.switched = nxt.g.adj != cur.g.adj;
        if (opts.check_invariants) detail::audit_step(cur, nxt, sup_before, rule, trace.warnings);
        std::swap(cur, nxt);
        emit(cur);
    }
    drain_events(cur);
    if (next_event < events.size())
        trace.warnings.push_back("events past the horizon never fired");
    return trace;
}

}  // namespace flocksim
