#pragma once

// Tower-of-twos slowdown instance: 2^k birds on a line, paired at spacing
// 2/3, pairs 4/3 apart, tiny alternating velocities +-q. Flocks merge level
// by level under the lazy walk; a scheduled velocity flip after each merge
// steers sibling flocks back onto collision courses, and each inter-merge
// time grows exponentially in the previous one.
//
// The driver simulates exactly over rationals held as integers above one
// common denominator (which gains a factor 3 per averaging step, so no gcd
// work is ever needed). Once the network has been static long enough and
// every flock is a path of at most 4 birds, the velocity decomposes into
// rational eigenmodes (1, 2/3, 0, -1/3), every inter-flock gap obeys
//   gap(s) = a0 + s*dm + c*(1-(2/3)^s) + c'*(1-(-1/3)^s)
// exactly, and the first tick with gap <= 1 is solved in closed form; the
// state is then rebuilt at that tick and per-tick simulation resumes. The
// skipped stretch is certified, not assumed: every other gap is bounded
// through the whole window by exact inequalities before the jump is taken.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/dynamics.hpp"
#include "flocksim/matrix.hpp"
#include "flocksim/policy.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

template <class S>
struct LBParams {
    long n = 8;              // power of two >= 4
    S q = rat<S>(1, 32);     // micro-speed; 1/q must be an integer = 2 mod 6
    long lag = 6;            // flip delay after a merge
    bool two_d = false;      // lift to 2-D with unit upward velocity
    long budget = 10000000;  // max simulated ticks
    long exact_ticks = 100000;  // per-tick exact simulation up to here
    long settle = 8;            // quiet ticks before phase analysis
};

template <class S>
void validate_lb_params(const LBParams<S>& p) {
    if (p.n < 4 || (p.n & (p.n - 1)) != 0) throw DomainError("n must be a power of two >= 4");
    if (!(p.q > S(0))) throw DomainError("q must be positive");
    if constexpr (field_traits<S>::exact) {
        if (p.q.get_num() != 1) throw DomainError("1/q must be an integer");
        if (p.q.get_den() % 6 != 2)
            throw DomainError("1/q must be 2 mod 6 so the first merge tick is an odd integer");
    }
    if (p.lag < 1) throw DomainError("lag must be at least 1");
    if (p.budget < 1) throw DomainError("budget must be positive");
    if (p.settle < 2) throw DomainError("settle must be at least 2");
}

// x(0) = (0, 2/3, 2, 8/3, ...), v(1) = (q, 0, -q, 0, q, 0, -q, 0, ...): one
// moving bird per pair, the drive sign alternating pair by pair. 2-D mode
// adds a Y column with zero offsets and unit velocity shared by every bird,
// so the Y terms cancel from every distance and the run projects onto 1-D.
template <class S>
Configuration<S> initial_conditions(const LBParams<S>& p) {
    validate_lb_params(p);
    size_t n = static_cast<size_t>(p.n);
    size_t d = p.two_d ? 2 : 1;
    Configuration<S> cfg;
    cfg.t = 0;
    cfg.x = Mat<S>(n, d);
    cfg.v = Mat<S>(n, d);
    for (size_t i = 0; i < n; ++i) {
        long pair = static_cast<long>(i / 2);
        cfg.x(i, 0) = (i % 2 == 0) ? S(2 * pair) : S(2 * pair) + rat<S>(2, 3);
        if (i % 2 == 0) cfg.v(i, 0) = (pair % 2 == 0) ? p.q : -p.q;
        if (p.two_d) cfg.v(i, 1) = S(1);
    }
    return cfg;
}

template <class S>
ConfidencePolicy<S> lazy_policy() {
    return lazy_walk_policy<S>();
}

// Closed forms for the height-1 phase (valid while the pairs are separate,
// 0 <= t <= theta1): the leftmost two birds, their mirror images around the
// first two pair centers, and the three gaps of the leading quadruple.
template <class S>
struct Height1Prediction {
    long theta1 = 0;
    S m1;
    S q;

    S x1(long t) const { return q / S(2) * (S(t) + rat<S>(3, 4) + rat<S>(1, 4) * pow_int(S(-3), 1 - t)); }
    S x2(long t) const {
        return rat<S>(2, 3) + q / S(2) * (S(t) - rat<S>(3, 4) - rat<S>(1, 4) * pow_int(S(-3), 1 - t));
    }
    S x3(long t) const { return S(2) - x1(t); }
    S x4(long t) const { return rat<S>(10, 3) - x2(t); }
    S inter_gap(long t) const { return rat<S>(4, 3) - S(t) * q; }
    S pair_gap_left(long t) const {
        return rat<S>(2, 3) - S(3) * q / S(4) * (S(1) - pow_int(rat<S>(-1, 3), t));
    }
    S pair_gap_right(long t) const {
        return rat<S>(2, 3) + S(3) * q / S(4) * (S(1) - pow_int(rat<S>(-1, 3), t));
    }
    S merge_gap() const { return S(1) - q / S(3); }
};

template <class S>
Height1Prediction<S> predict_height1(const S& q) {
    LBParams<S> p;
    p.q = q;
    validate_lb_params(p);
    Height1Prediction<S> h;
    h.q = q;
    h.m1 = q / S(2);
    if constexpr (field_traits<S>::exact) {
        mpz_class t3 = (p.q.get_den() + 1) / 3;
        h.theta1 = t3.get_si();
    } else {
        h.theta1 = std::lround((1.0L / static_cast<long double>(to_double(q)) + 1) / 3);
    }
    return h;
}

template <class S>
S predict_m2(const S& q, long theta1) {
    if (theta1 < 1 || theta1 % 2 == 0) throw DomainError("theta1 must be a positive odd integer");
    return q / S(2) * pow_int(S(-3), -theta1);
}

template <class S>
S predict_m3(const S& q, long theta2) {
    if (theta2 < 1) throw DomainError("theta2 must be positive");
    return q / S(42) * (S(4) * pow_int(rat<S>(2, 3), theta2) - pow_int(S(-3), -theta2));
}

template <class S>
struct ThetaWindow {
    S lo;
    S hi;
    bool contains(long theta) const { return lo <= S(theta) && S(theta) <= hi; }
};

// theta_j = lag + Theta(1/|6 m_j|); the window takes the constant literally
// and widens it by the slack factor on both sides.
template <class S>
ThetaWindow<S> predict_theta(const S& m, long lag, const S& slack = rat<S>(1, 4)) {
    if (m == S(0)) throw DegenerateError("stationary velocity vanished; no merge time predicted");
    S inv = S(1) / (S(6) * abs_val(m));
    return {S(lag) + (S(1) - slack) * inv, S(lag) + (S(1) + slack) * inv};
}

enum class FlipMode { RightOnly, TrueRule };

// Formation-time sign of the tracked flock's stationary velocity. Under the
// hypothetical right-children-only schedule the sign cycles with period 4;
// under the real rule every tracked flock drifts forward once its lag flip
// (if any) has been applied.
inline int sign_pattern(int j, FlipMode mode) {
    if (j < 1) throw DomainError("height must be >= 1");
    if (mode == FlipMode::TrueRule) return 1;
    return (j % 4 == 0 || j % 4 == 1) ? 1 : -1;
}

struct IntegrityReport {
    bool ok = true;
    long first_violation_tick = -1;
    std::string message;
    long ticks_checked = 0;

    void fail(long t, const std::string& msg) {
        if (!ok) return;
        ok = false;
        first_violation_tick = t;
        message = msg;
    }
};

// Line-formation integrity: birds keep their initial left-to-right order,
// every flock's network is a simple path, and every flock edge has length
// in [0.58, 1].
template <class S>
IntegrityReport integrity_check(const Trace<S>& trace) {
    IntegrityReport rep;
    if (trace.rec.empty()) return rep;
    size_t n = trace.rec.front().g.n;
    auto order_of = [&](const Mat<S>& x) {
        std::vector<size_t> ord(n);
        for (size_t i = 0; i < n; ++i) ord[i] = i;
        std::stable_sort(ord.begin(), ord.end(),
                         [&](size_t a, size_t b) { return x(a, 0) < x(b, 0); });
        return ord;
    };
    std::vector<size_t> initial = order_of(trace.rec.front().x);
    const S lo2 = rat<S>(841, 2500);  // 0.58^2
    for (auto& r : trace.rec) {
        ++rep.ticks_checked;
        if (order_of(r.x) != initial) {
            rep.fail(r.t, "bird order changed");
            return rep;
        }
        for (auto& flock : r.g.flocks) {
            size_t edge_ends = 0;
            for (size_t i : flock) {
                size_t deg = 0;
                for (size_t j : flock)
                    if (r.g.adj[i][j]) ++deg;
                if (deg > 2) {
                    rep.fail(r.t, "flock vertex of degree > 2");
                    return rep;
                }
                edge_ends += deg;
            }
            if (edge_ends != 2 * (flock.size() - 1)) {
                rep.fail(r.t, "flock network is not a simple path");
                return rep;
            }
            for (size_t i : flock)
                for (size_t j : flock) {
                    if (j <= i || !r.g.adj[i][j]) continue;
                    if (r.g.dist2(i, j) > S(1) || r.g.dist2(i, j) < lo2) {
                        rep.fail(r.t, "flock edge length left [0.58, 1]");
                        return rep;
                    }
                }
        }
    }
    return rep;
}

struct LowerBoundMerge {
    long t = 0;
    int height = 1;
    std::vector<size_t> members;
    Exact m;          // stationary velocity at formation
    Exact merge_gap;  // connecting gap at the merge tick (0 for leaves)
};

struct LowerBoundReport {
    LBParams<Exact> params;
    std::vector<LowerBoundMerge> merges;
    std::vector<EventRecord<Exact>> flips;
    std::vector<long> switch_ticks;

    long t2 = -1, t3 = -1;
    long theta1 = -1, theta2 = -1;
    Exact merge_gap;
    Exact m1, m2_measured, m2_predicted, m3_measured, m3_predicted;
    bool m2_match = false, m3_match = false;
    ThetaWindow<Exact> theta1_window{0, 0}, theta2_window{0, 0};
    bool theta1_in_window = false, theta2_in_window = false;
    double theta_ratio = 0;

    bool complete = false;         // fully merged and quiet
    bool refused = false;          // next merge provably out of reach
    bool budget_exceeded = false;  // ran out of ticks without a verdict
    std::string refusal_note;

    IntegrityReport integrity;
    bool composition_ok = true;  // merge-time velocity equals +-P^delta * formation velocity
    long float_merge_tick = -1;
    struct CrossCheck {
        long t = 0;
        double max_diff = 0;
        bool pass = false;
    };
    std::vector<CrossCheck> cross_checks;
    NoiseReport noise;
    std::vector<std::string> notes;

    Configuration<Exact> final_state;

    std::string to_text() const;
};

namespace lb_detail {

// Integer state: positions and velocities times den, where den gains a
// factor 3 every averaging step.
struct CDState {
    long t = 0;
    mpz_class den = 1;
    std::vector<mpz_class> x, v;
};

inline Exact as_q(const mpz_class& num, const mpz_class& den) {
    Exact r(num, den);
    r.canonicalize();
    return r;
}

// pi weights of the lazy walk on a contiguous path segment are proportional
// to the degrees (1, 2, ..., 2, 1).
inline Exact segment_m(const CDState& st, size_t lo, size_t hi) {
    size_t len = hi - lo + 1;
    if (len == 1) return as_q(st.v[lo], st.den);
    mpz_class acc = st.v[lo] + st.v[hi];
    for (size_t i = lo + 1; i < hi; ++i) acc += 2 * st.v[i];
    return as_q(acc, st.den * (2 * static_cast<long>(len) - 2));
}

// Rational eigenmode split of a velocity block on a path of 1, 2 or 4
// birds: v_i(s) = m + (2/3)^s b23_i + (-1/3)^s b13_i for s >= 1 steps past
// the snapshot. Longer paths have irrational eigenvalues and are never
// fast-forwarded.
inline void mode_split(const std::vector<Exact>& w, Exact& m, std::vector<Exact>& b23,
                       std::vector<Exact>& b13) {
    size_t len = w.size();
    b23.assign(len, Exact(0));
    b13.assign(len, Exact(0));
    if (len == 1) {
        m = w[0];
    } else if (len == 2) {
        m = (w[0] + w[1]) / 2;
        Exact h = (w[0] - w[1]) / 2;
        b13 = {h, -h};
    } else {
        // u2 = (1, 1/2, -1/2, -1), u4 = (1, -1, 1, -1), z = (1, 0, 0, -1):
        // P^s = 1 pi^T + (2/3)^s (2/3) u2 (u2 - z/2)^T + (-1/3)^s (1/3) u4 (u4 - z/2)^T
        m = (w[0] + 2 * w[1] + 2 * w[2] + w[3]) / 6;
        Exact i2 = (w[0] + w[1] - w[2] - w[3]) / 2;
        Exact i4 = w[0] / 2 - w[1] + w[2] - w[3] / 2;
        Exact s2 = Exact(2) / 3 * i2, s4 = Exact(1) / 3 * i4;
        b23 = {s2, s2 / 2, -s2 / 2, -s2};
        b13 = {s4, -s4, s4, -s4};
    }
}

struct SegmentModes {
    size_t lo = 0, hi = 0;
    Exact m;
    std::vector<Exact> b23, b13;
    bool jumpable = false;
};

inline SegmentModes segment_modes(const CDState& st, size_t lo, size_t hi) {
    SegmentModes sm;
    sm.lo = lo;
    sm.hi = hi;
    size_t len = hi - lo + 1;
    sm.m = segment_m(st, lo, hi);
    sm.b23.assign(len, Exact(0));
    sm.b13.assign(len, Exact(0));
    if (len == 1 || len == 2 || len == 4) {
        std::vector<Exact> w(len);
        for (size_t i = 0; i < len; ++i) w[i] = as_q(st.v[lo + i], st.den);
        mode_split(w, sm.m, sm.b23, sm.b13);
        sm.jumpable = true;
    }
    return sm;
}

struct PowPair {
    Exact p23;  // (2/3)^s
    Exact p13;  // (-1/3)^s
};

inline PowPair powers_at(long s) {
    mpz_class p2, p3;
    mpz_ui_pow_ui(p2.get_mpz_t(), 2, static_cast<unsigned long>(s));
    mpz_ui_pow_ui(p3.get_mpz_t(), 3, static_cast<unsigned long>(s));
    PowPair pw;
    pw.p23 = as_q(p2, p3);
    pw.p13 = as_q(s % 2 ? mpz_class(-1) : mpz_class(1), p3);
    return pw;
}

// One consecutive gap x_{b+1} - x_b over a static phase:
// gap(s) = a0 + s dm + c23 (1 - (2/3)^s) + c13 (1 - (-1/3)^s).
struct GapForm {
    size_t left_bird = 0;
    bool intra = false;
    Exact a0, dm, c23, c13;

    Exact eval(long s, const PowPair& pw) const {
        return a0 + Exact(s) * dm + c23 * (Exact(1) - pw.p23) + c13 * (Exact(1) - pw.p13);
    }
    Exact limit_center() const { return a0 + c23 + c13; }
    // |transient| <= (|c23| + |c13|) (2/3)^s for every s >= 1
    Exact wobble() const { return (abs_val(c23) + abs_val(c13)) * Exact(2) / 3; }
};

// Smallest integer >= num/den; requires den > 0.
inline mpz_class ceil_div(const mpz_class& num, const mpz_class& den) {
    mpz_class r;
    mpz_cdiv_q(r.get_mpz_t(), num.get_mpz_t(), den.get_mpz_t());
    return r;
}

inline mpz_class ceil_q(const Exact& x) { return ceil_div(x.get_num(), x.get_den()); }

}  // namespace lb_detail

class LowerBoundDriver {
  public:
    explicit LowerBoundDriver(const LBParams<Exact>& params) : p_(params) {
        validate_lb_params(p_);
    }

    LowerBoundReport run() {
        init();
        while (true) {
            process_tick();
            if (done_) break;
            if (st_.t >= p_.budget) {
                rep_.budget_exceeded = true;
                note("tick budget reached at t=" + std::to_string(st_.t));
                break;
            }
            if (maybe_fast_forward()) continue;  // landed on a merge tick; inspect it first
            if (done_) break;
            step();
        }
        finish();
        return rep_;
    }

  private:
    using mz = mpz_class;

    LBParams<Exact> p_;
    LowerBoundReport rep_;
    lb_detail::CDState st_;
    size_t n_ = 0;
    std::vector<bool> edges_;                        // edges_[i]: birds i, i+1 joined
    std::vector<std::pair<size_t, size_t>> flocks_;  // contiguous [lo, hi]
    struct LiveFlock {
        long formed = 0;
        int height = 1;
        int flips = 0;
        std::vector<mz> v_num;  // velocity block at formation, over v_den
        mz v_den = 1;
    };
    std::map<std::pair<size_t, size_t>, LiveFlock> live_;
    struct PendingFlip {
        long t = 0;
        std::pair<size_t, size_t> seg;
    };
    std::vector<PendingFlip> pending_;
    long last_disturbance_ = 0;
    bool done_ = false;

    void note(const std::string& s) { rep_.notes.push_back(s); }

    void init() {
        rep_.params = p_;
        n_ = static_cast<size_t>(p_.n);
        LBParams<Exact> one_d = p_;
        one_d.two_d = false;
        Configuration<Exact> cfg = initial_conditions(one_d);
        mz den = 3 * p_.q.get_den();
        st_.t = 0;
        st_.den = den;
        st_.x.resize(n_);
        st_.v.resize(n_);
        for (size_t i = 0; i < n_; ++i) {
            Exact sx = cfg.x(i, 0) * Exact(den);
            Exact sv = cfg.v(i, 0) * Exact(den);
            if (sx.get_den() != 1 || sv.get_den() != 1)
                throw NumericError("initial state does not fit the common denominator");
            st_.x[i] = sx.get_num();
            st_.v[i] = sv.get_num();
        }
        edges_.assign(n_ - 1, false);
    }

    // Network, integrity, merge bookkeeping, flips; sets done_ on terminal
    // states.
    void process_tick() {
        std::vector<bool> new_edges(n_ - 1, false);
        for (size_t i = 0; i + 1 < n_; ++i) {
            mz gap = st_.x[i + 1] - st_.x[i];
            if (gap <= 0) return abort_run("bird order violated at t=" + std::to_string(st_.t));
            new_edges[i] = gap <= st_.den;
            if (new_edges[i] && 50 * gap < 29 * st_.den)
                return abort_run("flock edge shorter than 0.58 at t=" + std::to_string(st_.t));
        }
        // Birds two apart span two gaps, so this keeps every non-path pair
        // out of unit range.
        for (size_t i = 0; i + 2 < n_; ++i)
            if (st_.x[i + 2] - st_.x[i] <= st_.den)
                return abort_run("non-adjacent birds within unit range at t=" + std::to_string(st_.t));
        rep_.integrity.ticks_checked++;

        bool switched = st_.t > 0 && new_edges != edges_;
        std::vector<std::pair<size_t, size_t>> new_flocks;
        for (size_t i = 0; i < n_;) {
            size_t j = i;
            while (j + 1 < n_ && new_edges[j]) ++j;
            new_flocks.push_back({i, j});
            i = j + 1;
        }
        if (st_.t == 0) {
            for (auto& f : new_flocks) register_flock(f, {}, 1);
        } else if (switched) {
            rep_.switch_ticks.push_back(st_.t);
            for (auto& f : new_flocks) {
                if (live_.count(f)) continue;
                std::vector<std::pair<size_t, size_t>> children;
                for (auto& [seg, lf] : live_)
                    if (seg.first >= f.first && seg.second <= f.second) children.push_back(seg);
                size_t covered = 0;
                int h = 0;
                for (auto& c : children) {
                    covered += c.second - c.first + 1;
                    h = std::max(h, live_[c].height);
                }
                if (covered != f.second - f.first + 1)
                    return abort_run("flock lost members at t=" + std::to_string(st_.t));
                register_flock(f, children, h + 1);
            }
            for (auto it = live_.begin(); it != live_.end();) {
                bool still =
                    std::find(new_flocks.begin(), new_flocks.end(), it->first) != new_flocks.end();
                it = still ? std::next(it) : live_.erase(it);
            }
            last_disturbance_ = st_.t;
        }
        edges_ = std::move(new_edges);
        flocks_ = std::move(new_flocks);

        for (auto it = pending_.begin(); it != pending_.end();) {
            if (it->t != st_.t) {
                ++it;
                continue;
            }
            if (!live_.count(it->seg))
                return abort_run("scheduled flip target no longer a flock at t=" + std::to_string(st_.t));
            EventRecord<Exact> er;
            er.ev.t = st_.t;
            er.ev.alpha = {Exact(-1)};
            if (p_.two_d) er.ev.alpha.push_back(Exact(1));  // the upward drift is never touched
            for (size_t i = it->seg.first; i <= it->seg.second; ++i) {
                er.ev.members.push_back(i);
                Exact vi = lb_detail::as_q(st_.v[i], st_.den);
                er.dv_l2_sq += 4 * vi * vi;
                st_.v[i] = -st_.v[i];
            }
            live_[it->seg].flips += 1;
            rep_.flips.push_back(std::move(er));
            last_disturbance_ = st_.t;
            it = pending_.erase(it);
        }

        if (flocks_.size() == 1 && pending_.empty() && st_.t - last_disturbance_ >= p_.settle) {
            rep_.complete = true;
            done_ = true;
        }
    }

    void register_flock(std::pair<size_t, size_t> seg,
                        const std::vector<std::pair<size_t, size_t>>& children, int height) {
        LiveFlock lf;
        lf.formed = st_.t;
        lf.height = height;
        lf.v_den = st_.den;
        for (size_t i = seg.first; i <= seg.second; ++i) lf.v_num.push_back(st_.v[i]);

        LowerBoundMerge mg;
        mg.t = st_.t;
        mg.height = height;
        for (size_t i = seg.first; i <= seg.second; ++i) mg.members.push_back(i);
        mg.m = lb_detail::segment_m(st_, seg.first, seg.second);
        if (mg.m == 0) note("stationary velocity vanished at a merge (t=" + std::to_string(st_.t) + ")");
        if (!children.empty()) {
            size_t cut = children.front().second;
            for (auto& c : children) cut = std::min(cut, c.second);
            mg.merge_gap = lb_detail::as_q(st_.x[cut + 1] - st_.x[cut], st_.den);
            check_composition(children);
        }
        rep_.merges.push_back(mg);
        live_[seg] = std::move(lf);

        if (seg.second - seg.first + 1 < n_ && should_flip(seg, height))
            pending_.push_back({st_.t + p_.lag, seg});
    }

    // Left children of even height >= 2 flip; right children of odd height
    // >= 3 flip; the root never does.
    bool should_flip(std::pair<size_t, size_t> seg, int height) const {
        size_t size = seg.second - seg.first + 1;
        if (seg.first % size != 0) return false;
        bool left = (seg.first / size) % 2 == 0;
        return left ? (height >= 2 && height % 2 == 0) : (height >= 3 && height % 2 == 1);
    }

    // At a merge, each child block of the new velocity must equal
    // +-P^delta times the child's formation velocity, delta counted from
    // tick 1 for blocks formed at tick 0 (their stored velocity is v(1)).
    void check_composition(const std::vector<std::pair<size_t, size_t>>& children) {
        for (auto& c : children) {
            const LiveFlock& lf = live_.at(c);
            size_t len = c.second - c.first + 1;
            if (len != 2 && len != 4) {
                note("composition check skipped for a block of " + std::to_string(len) + " birds");
                continue;
            }
            long delta = st_.t - std::max(lf.formed, 1L);
            Exact sign = lf.flips % 2 ? Exact(-1) : Exact(1);
            std::vector<Exact> w(len);
            for (size_t i = 0; i < len; ++i) w[i] = lb_detail::as_q(lf.v_num[i], lf.v_den);
            Exact m;
            std::vector<Exact> b23, b13;
            lb_detail::mode_split(w, m, b23, b13);
            lb_detail::PowPair pw = lb_detail::powers_at(delta);
            for (size_t i = 0; i < len; ++i) {
                Exact expect = delta == 0 ? w[i] : m + pw.p23 * b23[i] + pw.p13 * b13[i];
                Exact got = lb_detail::as_q(st_.v[c.first + i], st_.den);
                if (got != sign * expect) {
                    rep_.composition_ok = false;
                    note("composition identity failed at t=" + std::to_string(st_.t));
                    return;
                }
            }
        }
    }

    void abort_run(const std::string& msg) {
        rep_.integrity.fail(st_.t, msg);
        done_ = true;
    }

    // One averaging step: v <- (3P) v, x <- 3x + v, den <- 3 den; tick 0 to
    // tick 1 is the plain translation by v(1).
    void step() {
        if (st_.t == 0) {
            for (size_t i = 0; i < n_; ++i) st_.x[i] += st_.v[i];
            st_.t = 1;
            return;
        }
        std::vector<mz> nv(n_);
        for (size_t i = 0; i < n_; ++i) {
            bool l = i > 0 && edges_[i - 1], r = i + 1 < n_ && edges_[i];
            if (l && r)
                nv[i] = st_.v[i - 1] + st_.v[i] + st_.v[i + 1];
            else if (l)
                nv[i] = st_.v[i] + 2 * st_.v[i - 1];
            else if (r)
                nv[i] = st_.v[i] + 2 * st_.v[i + 1];
            else
                nv[i] = 3 * st_.v[i];
        }
        st_.v = std::move(nv);
        for (size_t i = 0; i < n_; ++i) st_.x[i] = 3 * st_.x[i] + st_.v[i];
        st_.den *= 3;
        st_.t += 1;
    }

    // When the phase is quiet, bound the time to the next merge; then
    // refuse, keep stepping, or solve for the merge tick and jump there.
    // Returns true when the state was fast-forwarded.
    bool maybe_fast_forward() {
        if (!pending_.empty() || flocks_.size() <= 1) return false;
        if (st_.t - last_disturbance_ < p_.settle) return false;
        bool scheduled = st_.t == last_disturbance_ + p_.settle || st_.t == p_.exact_ticks ||
                         (st_.t > p_.exact_ticks && (st_.t - p_.exact_ticks) % 16384 == 0);
        if (!scheduled) return false;

        // Rigorous coarse bound, any flock size: velocities stay inside
        // their flock's current range under averaging, so the gap between
        // flocks k and k+1 shrinks at most by max(v_k) - min(v_{k+1}) per
        // tick. If even that cannot reach unit range in the budget, refuse.
        mz remaining = p_.budget - st_.t;
        bool any_can_close = false;
        mz soonest = -1;
        for (size_t k = 0; k + 1 < flocks_.size(); ++k) {
            size_t b = flocks_[k].second;
            mz vmax = st_.v[flocks_[k].first];
            for (size_t i = flocks_[k].first; i <= flocks_[k].second; ++i)
                vmax = std::max(vmax, st_.v[i]);
            mz vmin = st_.v[flocks_[k + 1].first];
            for (size_t i = flocks_[k + 1].first; i <= flocks_[k + 1].second; ++i)
                vmin = std::min(vmin, st_.v[i]);
            mz shrink = vmax - vmin;
            if (shrink <= 0) continue;
            any_can_close = true;
            mz need = lb_detail::ceil_div(st_.x[b + 1] - st_.x[b] - st_.den, shrink);
            if (soonest < 0 || need < soonest) soonest = need;
        }
        if (!any_can_close) {
            rep_.refused = true;
            rep_.refusal_note = "every inter-flock gap is non-shrinking; no further merge can occur";
            done_ = true;
            return false;
        }
        if (soonest > remaining) {
            size_t digits = mpz_sizeinbase(soonest.get_mpz_t(), 10);
            std::string amount =
                digits > 20 ? "about 10^" + std::to_string(digits - 1) : soonest.get_str();
            rep_.refused = true;
            rep_.refusal_note =
                "next merge needs at least " + amount + " more ticks, beyond the budget";
            done_ = true;
            return false;
        }

        std::vector<lb_detail::SegmentModes> modes;
        for (auto& f : flocks_) {
            modes.push_back(lb_detail::segment_modes(st_, f.first, f.second));
            if (!modes.back().jumpable) return false;  // keep exact stepping; the budget caps it
        }
        std::vector<lb_detail::GapForm> gaps;
        for (size_t i = 0; i + 1 < n_; ++i) {
            lb_detail::GapForm gf;
            gf.left_bird = i;
            gf.intra = edges_[i];
            gf.a0 = lb_detail::as_q(st_.x[i + 1] - st_.x[i], st_.den);
            size_t fl = flock_of(i), fr = flock_of(i + 1);
            const auto& ml = modes[fl];
            const auto& mr = modes[fr];
            gf.dm = mr.m - ml.m;
            gf.c23 = 2 * (mr.b23[i + 1 - mr.lo] - ml.b23[i - ml.lo]);
            gf.c13 = rat<Exact>(-1, 4) * (mr.b13[i + 1 - mr.lo] - ml.b13[i - ml.lo]);
            gaps.push_back(gf);
        }

        // Certify intra gaps within [0.58, 1] and non-closing inter gaps
        // above 1 for every s >= 1; fall back to per-tick stepping while
        // the transient is too large for the crude wobble bound.
        const Exact lo58 = rat<Exact>(29, 50);
        std::vector<size_t> closing;
        for (auto& g : gaps) {
            Exact center = g.limit_center(), wob = g.wobble();
            if (g.intra) {
                if (g.dm != 0 || center - wob < lo58 || center + wob > Exact(1)) return false;
            } else if (g.dm >= 0) {
                if (center + g.dm - wob <= Exact(1)) return false;
            } else {
                closing.push_back(g.left_bird);
            }
        }
        if (closing.empty()) return false;  // shrinking only by transients; let the engine run

        // First crossing over the closing gaps, certified by bracketing:
        // below lo the gap provably exceeds 1, past hi it provably does not.
        long best_cross = -1;
        for (size_t gi : closing) {
            const auto& g = gaps[gi];
            Exact wob = g.wobble();
            mz lo_z = lb_detail::ceil_q((g.limit_center() - wob - 1) / (-g.dm));
            mz hi_z = lb_detail::ceil_q((g.limit_center() + wob - 1) / (-g.dm)) + 1;
            if (hi_z - lo_z > 4096) return false;  // wobble still dominates; keep stepping
            if (st_.t < p_.exact_ticks && lo_z > 4096) return false;  // too far to act on yet
            if (lo_z > remaining) continue;  // cannot cross within the budget
            long lo = std::max(1L, lo_z.fits_slong_p() ? lo_z.get_si() : 1L);
            long hi = hi_z.get_si();
            long cross = -1;
            for (long s = lo; s <= hi; ++s) {
                lb_detail::PowPair pw = lb_detail::powers_at(s);
                if (g.eval(s, pw) <= Exact(1)) {
                    cross = s;
                    break;
                }
            }
            if (cross < 0) return false;
            if (best_cross < 0 || cross < best_cross) best_cross = cross;
        }
        if (best_cross < 0) {
            rep_.refused = true;
            rep_.refusal_note = "every closing gap crosses unit range beyond the budget";
            done_ = true;
            return false;
        }
        if (best_cross <= 4096) return false;      // close enough to just simulate
        if (st_.t < p_.exact_ticks) return false;  // stay per-tick through the exact range
        if (st_.t + best_cross > p_.budget) {
            rep_.refused = true;
            rep_.refusal_note =
                "next merge at t=" + std::to_string(st_.t + best_cross) + " exceeds the budget";
            done_ = true;
            return false;
        }

        float_scan(modes, best_cross);
        long target = st_.t + best_cross;
        jump_to(modes, best_cross);
        note("fast-forwarded " + std::to_string(best_cross) + " ticks to t=" +
             std::to_string(target) + " across a certified static stretch");
        return true;
    }

    size_t flock_of(size_t bird) const {
        for (size_t k = 0; k < flocks_.size(); ++k)
            if (bird >= flocks_[k].first && bird <= flocks_[k].second) return k;
        throw NumericError("bird outside every flock");
    }

    Exact exact_x_at(const lb_detail::SegmentModes& sm, size_t bird, long s,
                     const lb_detail::PowPair& pw) const {
        Exact x0 = lb_detail::as_q(st_.x[bird], st_.den);
        return x0 + Exact(s) * sm.m + 2 * (Exact(1) - pw.p23) * sm.b23[bird - sm.lo] +
               rat<Exact>(-1, 4) * (Exact(1) - pw.p13) * sm.b13[bird - sm.lo];
    }

    // Long-double replay of the skipped stretch, with exact spot checks
    // along the way and an independent read of the merge tick.
    void float_scan(const std::vector<lb_detail::SegmentModes>& modes, long s_cross) {
        std::vector<long double> x(n_), v(n_);
        for (size_t i = 0; i < n_; ++i) {
            x[i] = rational_to_long_double(lb_detail::as_q(st_.x[i], st_.den));
            v[i] = rational_to_long_double(lb_detail::as_q(st_.v[i], st_.den));
        }
        std::vector<bool> e(edges_);
        std::set<long> samples;
        for (long s : {s_cross / 32, s_cross / 4, s_cross / 2, (3 * s_cross) / 4, s_cross - 1})
            if (s >= 1 && s < s_cross) samples.insert(s);
        std::vector<long double> nv(n_);
        for (long s = 1; s <= s_cross + 1; ++s) {
            for (size_t i = 0; i < n_; ++i) {
                bool l = i > 0 && e[i - 1], r = i + 1 < n_ && e[i];
                if (l && r)
                    nv[i] = (v[i - 1] + v[i] + v[i + 1]) / 3.0L;
                else if (l)
                    nv[i] = (v[i] + 2.0L * v[i - 1]) / 3.0L;
                else if (r)
                    nv[i] = (v[i] + 2.0L * v[i + 1]) / 3.0L;
                else
                    nv[i] = v[i];
            }
            std::swap(v, nv);
            for (size_t i = 0; i < n_; ++i) x[i] += v[i];
            bool merged = false;
            for (size_t i = 0; i + 1 < n_; ++i)
                if (!e[i] && x[i + 1] - x[i] <= 1.0L) merged = true;
            if (merged) {
                rep_.float_merge_tick = st_.t + s;
                break;
            }
            if (samples.count(s)) {
                lb_detail::PowPair pw = lb_detail::powers_at(s);
                double worst = 0;
                for (const auto& sm : modes)
                    for (size_t i = sm.lo; i <= sm.hi; ++i) {
                        Exact ev = sm.m + pw.p23 * sm.b23[i - sm.lo] + pw.p13 * sm.b13[i - sm.lo];
                        Exact ex = exact_x_at(sm, i, s, pw);
                        double dv = std::fabs(static_cast<double>(v[i] - rational_to_long_double(ev)));
                        double dx = std::fabs(static_cast<double>(x[i] - rational_to_long_double(ex)));
                        worst = std::max(worst, std::max(dv, dx));
                    }
                rep_.cross_checks.push_back({st_.t + s, worst, worst <= 1e-9});
            }
        }
    }

    void jump_to(const std::vector<lb_detail::SegmentModes>& modes, long s) {
        lb_detail::PowPair pw = lb_detail::powers_at(s);
        mz p3;
        mpz_ui_pow_ui(p3.get_mpz_t(), 3, static_cast<unsigned long>(s));
        mz new_den = st_.den * p3;
        std::vector<mz> nx(n_), nv(n_);
        for (const auto& sm : modes)
            for (size_t i = sm.lo; i <= sm.hi; ++i) {
                Exact ev = sm.m + pw.p23 * sm.b23[i - sm.lo] + pw.p13 * sm.b13[i - sm.lo];
                Exact ex = exact_x_at(sm, i, s, pw);
                Exact sv = ev * Exact(new_den);
                Exact sx = ex * Exact(new_den);
                if (sv.get_den() != 1 || sx.get_den() != 1)
                    throw NumericError("fast-forwarded state does not fit the common denominator");
                nv[i] = sv.get_num();
                nx[i] = sx.get_num();
            }
        st_.x = std::move(nx);
        st_.v = std::move(nv);
        st_.den = std::move(new_den);
        st_.t += s;
    }

    void finish() {
        // headline numbers along the lineage of bird 0
        std::map<int, const LowerBoundMerge*> lineage;
        for (auto& m : rep_.merges)
            if (!m.members.empty() && m.members.front() == 0) lineage[m.height] = &m;
        if (lineage.count(1)) rep_.m1 = lineage[1]->m;
        if (lineage.count(2)) {
            rep_.t2 = lineage[2]->t;
            rep_.theta1 = rep_.t2;
            rep_.merge_gap = lineage[2]->merge_gap;
            rep_.m2_measured = lineage[2]->m;
            rep_.m2_predicted = predict_m2(p_.q, rep_.theta1);
            rep_.m2_match = rep_.m2_measured == rep_.m2_predicted;
            rep_.theta1_window = predict_theta(rep_.m1, p_.lag);
            rep_.theta1_in_window = rep_.theta1_window.contains(rep_.theta1);
        }
        if (lineage.count(2) && lineage.count(3)) {
            rep_.t3 = lineage[3]->t;
            rep_.theta2 = rep_.t3 - rep_.t2;
            rep_.m3_measured = lineage[3]->m;
            rep_.m3_predicted = predict_m3(p_.q, rep_.theta2);
            rep_.m3_match = rep_.m3_measured == rep_.m3_predicted;
            rep_.theta2_window = predict_theta(rep_.m2_measured, p_.lag);
            rep_.theta2_in_window = rep_.theta2_window.contains(rep_.theta2);
            rep_.theta_ratio = static_cast<double>(rep_.theta2) / static_cast<double>(rep_.theta1);
        }

        NoiseBudget budget;
        budget.kappa = std::max<long>(1, static_cast<long>(rep_.flips.size()));
        long min_flip_size = 0;
        for (auto& f : rep_.flips) {
            long sz = static_cast<long>(f.ev.members.size());
            if (min_flip_size == 0 || sz < min_flip_size) min_flip_size = sz;
        }
        budget.delta_constant = 4.0 * static_cast<double>(min_flip_size ? min_flip_size : 1);
        budget.window = p_.lag;
        rep_.noise = validate_noise(rep_.flips, budget, rep_.switch_ticks);

        size_t d = p_.two_d ? 2 : 1;
        rep_.final_state.t = st_.t;
        rep_.final_state.x = Mat<Exact>(n_, d);
        rep_.final_state.v = Mat<Exact>(n_, d);
        for (size_t i = 0; i < n_; ++i) {
            rep_.final_state.x(i, 0) = lb_detail::as_q(st_.x[i], st_.den);
            rep_.final_state.v(i, 0) = lb_detail::as_q(st_.v[i], st_.den);
            if (p_.two_d) {
                rep_.final_state.x(i, 1) = Exact(st_.t);
                rep_.final_state.v(i, 1) = Exact(1);
            }
        }
    }
};

inline LowerBoundReport run_lower_bound(const LBParams<Exact>& params) {
    return LowerBoundDriver(params).run();
}

inline std::string LowerBoundReport::to_text() const {
    // Stationary velocities at deep merges have million-digit numerators;
    // print those as a magnitude instead of verbatim.
    auto compact = [](const Exact& x) -> std::string {
        if (x == 0) return "0";
        if (bit_size(x.get_num()) + bit_size(x.get_den()) <= 256) return format_rational(x);
        long mag = long(mpz_sizeinbase(x.get_num().get_mpz_t(), 10)) -
                   long(mpz_sizeinbase(x.get_den().get_mpz_t(), 10));
        return std::string(x < 0 ? "-" : "") + "~10^" + std::to_string(mag);
    };
    std::ostringstream os;
    os << "lower-bound run: n=" << params.n << " q=" << format_rational(params.q)
       << " lag=" << params.lag << "\n";
    for (auto& m : merges)
        os << "  flock h=" << m.height << " t=" << m.t << " [" << m.members.front() << ".."
           << m.members.back() << "] m=" << compact(m.m) << "\n";
    for (auto& f : flips)
        os << "  flip at t=" << f.ev.t << " on " << f.ev.members.size() << " birds\n";
    if (t2 >= 0)
        os << "  theta1=" << theta1 << " merge gap " << format_rational(merge_gap)
           << " m2 match=" << (m2_match ? "yes" : "no") << "\n";
    if (t3 >= 0)
        os << "  theta2=" << theta2 << " (window " << (theta2_in_window ? "hit" : "missed")
           << ") m3 match=" << (m3_match ? "yes" : "no") << " ratio=" << theta_ratio << "\n";
    os << "  integrity " << (integrity.ok ? "ok" : ("VIOLATION: " + integrity.message))
       << ", composition " << (composition_ok ? "ok" : "FAILED") << ", noise "
       << (noise.pass ? "ok" : "FAILED") << "\n";
    if (refused) os << "  stopped: " << refusal_note << "\n";
    if (budget_exceeded) os << "  stopped: tick budget exhausted\n";
    if (complete) os << "  complete at t=" << final_state.t << "\n";
    return os.str();
}

}  // namespace flocksim
