// Acceptance gate: nine criteria covering the oscillator closed form, the
// slow-merge construction at heights 1-3, the limit-configuration identities,
// ergodicity coefficients, spectral closed forms, footprint monotonicity,
// the residue tower, and noise conformity. One verdict line per criterion.
// Exit code 0 requires every criterion to land as expected, including the
// single documented expected failure (criterion 3's timing-window clause).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "flocksim/flocksim.hpp"

using namespace flocksim;

namespace {

using Clock = std::chrono::steady_clock;

Exact Q(long n, long d = 1) { return rat<Exact>(n, d); }

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

constexpr const char* kWindowClause = "theta2 inside lag + (1 +- 1/4)/(6|m2|)";

LowerBoundReport g_height3;  // filled by criterion 3, reused by criterion 9

Check oscillator_exactness() {
    Check ck;
    Configuration<Exact> cfg;
    cfg.x = Mat<Exact>{{Q(0)}, {Q(1, 2)}, {Q(21, 16)}, {Q(29, 16)}};
    cfg.v = Mat<Exact>{{Q(1, 8)}, {Q(-1, 8)}, {Q(1, 8)}, {Q(-1, 8)}};
    auto tr = run(cfg, 200, {}, lazy_walk_policy<Exact>(), HysteresisRule<Exact>{Q(0), false});
    ck.expect(tr.warnings.empty(), "run produced warnings");
    for (long t = 0; t <= 200; ++t) {
        const auto& r = tr.rec[size_t(t)];
        Exact vf = pow_int(Q(-3), 1 - std::max(t, 1L));
        for (size_t i = 0; i < 4; ++i)
            ck.expect(r.v(i, 0) == vf * cfg.v(i, 0),
                      "velocity closed form at t=" + std::to_string(t));
        Exact osc = pow_int(Q(-1, 3), t - 1);
        ck.expect(r.x(2, 0) - r.x(1, 0) == Q(1) + osc / 16,
                  "middle gap at t=" + std::to_string(t));
        Exact outer = (Q(5) - osc) / 16;
        ck.expect(r.x(1, 0) - r.x(0, 0) == outer && r.x(3, 0) - r.x(2, 0) == outer,
                  "outer gaps at t=" + std::to_string(t));
        ck.expect(r.g.dist2(0, 2) == Q(441, 256) && r.g.dist2(1, 3) == Q(441, 256),
                  "skip-level distances at t=" + std::to_string(t));
        if (t >= 2)
            ck.expect(r.g.adj == tr.rec[size_t(t - 2)].g.adj, "period 2 at t=" + std::to_string(t));
    }
    ck.expect(tr.rec[0].g.adj != tr.rec[1].g.adj, "network alternates");
    return ck;
}

Check lb_heights_1_2() {
    Check ck;
    LBParams<Exact> p;
    p.n = 8;
    p.budget = 100;  // plenty for both pair merges; refuses before chasing height 3
    auto rep = run_lower_bound(p);
    ck.expect(rep.t2 == 11 && rep.t2 == (32 + 1) / 3, "first merge tick");
    ck.expect(rep.merge_gap == Q(1) - Q(1, 32) / 3, "gap at merge");
    ck.expect(rep.m2_measured == Q(-1, 11337408), "m2 exact value");
    ck.expect(rep.m2_measured == Q(1, 64) * pow_int(Q(-3), -11), "m2 closed form");
    ck.expect(rep.m2_match, "m2 prediction match");
    ck.expect(rep.integrity.ok && rep.integrity.ticks_checked > 0, "integrity bounds");
    ck.expect(rep.composition_ok, "product composition");
    return ck;
}

Check lb_height_3() {
    Check ck;
    LBParams<Exact> p;  // defaults: n=8, tick budget 1e7, exact to 1e5 then checked float
    g_height3 = run_lower_bound(p);
    const auto& rep = g_height3;
    ck.expect(rep.complete, "run complete within the budget");
    ck.expect(rep.t3 > 0, "second merge reached");
    ck.expect(!rep.cross_checks.empty(), "exact cross-checks sampled");
    for (auto& c : rep.cross_checks)
        ck.expect(c.pass, "exact cross-check at t=" + std::to_string(c.t));
    ck.expect(rep.m3_match, "m3 from the measured theta2");
    ck.expect(rep.theta_ratio > 1e4, "theta2/theta1 above 1e4");
    ck.expect(rep.integrity.ok, "integrity bounds");
    ck.expect(rep.noise.pass, "flip noise audit");
    // The 1/(6|m2|) window models the gap left after the flip as the same
    // one-third of unit the height-1 pattern leaves, closing at the steady
    // rate 2|m2|. As built, the inter-quad gap right after the flip exceeds
    // unit range by 17629/23328, about 0.756, 2.27 times the modeled excess,
    // so the measured theta2 lands past the window's upper edge by that same
    // factor. The closure rate and the m3 value derived from the measured
    // theta2 check out exactly above, so the discrepancy sits in the window's
    // constant, not in the dynamics. This clause is therefore recorded as an
    // expected failure and the gate demands that it keep failing.
    ck.expect(rep.theta2_in_window, kWindowClause);
    return ck;
}

Check limit_configuration_suite() {
    Check ck;
    std::mt19937 rng(20260815);
    auto ri = [&rng](long lo, long hi) { return lo + long(rng() % unsigned(hi - lo + 1)); };
    for (int trial = 0; trial < 50 && ck.ok; ++trial) {
        size_t n = size_t(ri(2, 8));
        Mat<Exact> x0(n, 1), v1(n, 1);
        Exact pos(0);
        for (size_t i = 0; i < n; ++i) {
            if (i) pos += Q(ri(8, 31), 32);  // sub-unit gaps keep the flock connected
            x0(i, 0) = pos;
            v1(i, 0) = Q(ri(-16, 16), 256);
        }
        auto policy = trial % 2 ? vicsek_policy<Exact>() : lazy_walk_policy<Exact>();
        auto g = build_network(x0, nullptr, HysteresisRule<Exact>{Q(0), false});
        ck.expect(g.flocks.size() == 1, "trial flock connected");
        if (!ck.ok) break;
        auto tm = transition(g, policy);
        Vec<Exact> pi = stationary_distribution(g, policy);
        Mat<Exact> gm = gamma(tm.p, pi);

        Mat<Exact> rhs(n, n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) rhs(i, j) = (i == j ? Q(1) : Q(0)) - pi[j];
        ck.expect(gm * (Mat<Exact>::identity(n) - tm.p) == rhs, "gamma (I-P) identity");
        ck.expect(gm * Vec<Exact>(n, Q(1)) == Vec<Exact>(n, Q(0)), "gamma annihilates ones");
        for (size_t j = 0; j < n; ++j) {
            Exact s(0);
            for (size_t i = 0; i < n; ++i) s += pi[i] * gm(i, j);
            ck.expect(s == Q(0), "pi annihilates gamma");
        }

        auto lim = limit_configuration(x0, v1, tm.p, pi);
        Vec<Exact> mc0 = mass_center(x0, pi);

        Mat<Exact> xe = x0, ve = v1;
        for (long t = 1; t <= 12; ++t) {
            if (t > 1) ve = tm.p * ve;
            xe = xe + ve;
            ck.expect(mass_center(xe, pi)[0] == mc0[0] + Exact(t) * lim.drift[0],
                      "mass center linear in t");
        }

        Mat<Approx> pa(n, n), xa(n, 1), va(n, 1);
        for (size_t i = 0; i < n; ++i) {
            xa(i, 0) = rational_to_long_double(x0(i, 0));
            va(i, 0) = rational_to_long_double(v1(i, 0));
            for (size_t j = 0; j < n; ++j) pa(i, j) = rational_to_long_double(tm.p(i, j));
        }
        for (long t = 1; t <= 400; ++t) {
            if (t > 1) va = pa * va;
            xa = xa + va;
        }
        long double dev = 0;
        for (size_t i = 0; i < n; ++i) {
            long double want =
                rational_to_long_double(mc0[0] + Exact(400) * lim.drift[0] + lim.xr(i, 0));
            dev = std::max(dev, fabsl(xa(i, 0) - want));
        }
        ck.expect(dev <= 1e-8L, "float run within 1e-8 of the limit configuration");
    }
    return ck;
}

Check ergodicity_suite() {
    Check ck;
    std::mt19937 rng(831);
    auto rand_stochastic = [&rng](size_t n) {
        Mat<Exact> a(n, n);
        for (size_t i = 0; i < n; ++i) {
            std::vector<long> row(n);
            long sum = 0;
            for (size_t j = 0; j < n; ++j) {
                row[j] = long(rng() % 8);
                sum += row[j];
            }
            if (!sum) row[rng() % n] = sum = 1;
            for (size_t j = 0; j < n; ++j) a(i, j) = Q(row[j], sum);
        }
        return a;
    };
    for (int trial = 0; trial < 1000 && ck.ok; ++trial) {
        size_t n = 2 + rng() % 4;
        Mat<Exact> a = rand_stochastic(n), b = rand_stochastic(n);
        Exact t1a = tau1(a);
        ck.expect(tau2_squared(a * b) <= t1a * t1a * tau2_squared(b),
                  "exact tau2(AB) <= tau1(A) tau2(B)");
        Mat<Approx> aa(n, n), ba(n, n);
        for (size_t i = 0; i < n; ++i)
            for (size_t j = 0; j < n; ++j) {
                aa(i, j) = rational_to_long_double(a(i, j));
                ba(i, j) = rational_to_long_double(b(i, j));
            }
        ck.expect(tau2(aa * ba) <= to_double(tau1(aa)) * tau2(ba) + 1e-12,
                  "approx tau2(AB) <= tau1(A) tau2(B)");
    }

    Mat<Exact> A{{Q(1, 2), Q(1, 2)}, {Q(1, 2), Q(1, 2)}};
    Mat<Exact> B{{Q(1), Q(0)}, {Q(1, 2), Q(1, 2)}};
    Mat<Exact> C{{Q(3, 4), Q(1, 4)}, {Q(3, 4), Q(1, 4)}};
    ck.expect(B * A == A && A * B == C, "two-bird products");
    auto pk = [&](long k) { return k % 2 ? B : A; };
    Mat<Exact> back = pk(1), fwd = pk(1);
    for (long k = 2; k <= 12; ++k) {
        back = pk(k) * back;
        fwd = fwd * pk(k);
        ck.expect(back == C, "backward product settles at k=" + std::to_string(k));
        ck.expect(fwd == (k % 2 ? C : A), "forward product alternates at k=" + std::to_string(k));
    }

    Exact l = Q(1, 4), off = (Q(1) - l) / 2;
    Mat<Exact> K{{l, Q(0), off, off},
                 {Q(0), l, off, off},
                 {off, off, l, Q(0)},
                 {off, off, Q(0), l}};
    Exact t2k = tau2_squared(K), t2kk = tau2_squared(K * K);
    ck.expect(t2k == Q(5, 16) && t2kk == Q(17, 256), "biclique coefficients");
    ck.expect(Q(2) * t2kk > t2k * t2k, "biclique square beats the squared coefficient");
    return ck;
}

Check spectral_values() {
    Check ck;
    for (int j = 1; j <= 5; ++j) {
        size_t m = size_t(1) << j;
        Mat<Exact> x(m, 1);
        for (size_t i = 0; i < m; ++i) x(i, 0) = Q(3 * long(i), 4);
        auto g = build_network(x, nullptr, HysteresisRule<Exact>{Q(0), false});
        auto tm = transition(g, lazy_walk_policy<Exact>());
        for (long s : {1L, 10L, 100L}) {
            Mat<Exact> want = mat_power(tm.p, s);
            PathSpectrum ps = path_spectrum(j, s);
            double err = 0;
            for (size_t i = 0; i < m; ++i)
                for (size_t l = 0; l < m; ++l)
                    err = std::max(err, std::fabs(ps.p_power(i, l) - to_double(want(i, l))));
            ck.expect(err <= 1e-10, "closed-form power j=" + std::to_string(j) + " s=" +
                                        std::to_string(s));
        }
    }

    Mat<Exact> s{{Q(12, 15), Q(3, 15)}, {Q(10, 15), Q(5, 15)}};
    FlockSpectrum sp = spectrum(s, std::vector<Exact>{Q(3), Q(10)});
    ck.expect(std::fabs(sp.eigenvalues[0] - 1.0) <= 1e-9 &&
                  std::fabs(sp.eigenvalues[1] - 2.0 / 15.0) <= 1e-9,
              "two-bird eigenvalues");
    double stretch = std::hypot(to_double(s(0, 0)), to_double(s(1, 0)));
    ck.expect(std::fabs(stretch - std::sqrt(244.0) / 15.0) <= 1e-9 && stretch > 1.0,
              "stretch of the first coordinate");

    std::mt19937 rng(407);
    auto ri = [&rng](long lo, long hi) { return lo + long(rng() % unsigned(hi - lo + 1)); };
    for (int trial = 0; trial < 100 && ck.ok; ++trial) {
        size_t n = size_t(ri(2, 6));
        Mat<Exact> x(n, 1);
        Exact pos(0);
        for (size_t i = 0; i < n; ++i) {
            if (i) pos += Q(ri(8, 31), 32);
            x(i, 0) = pos;
        }
        auto policy = trial % 2 ? vicsek_policy<Exact>() : lazy_walk_policy<Exact>();
        auto g = build_network(x, nullptr, HysteresisRule<Exact>{Q(0), false});
        auto tm = transition(g, policy);
        Vec<Exact> pi = stationary_distribution(g, policy);
        Vec<Exact> xi(n);
        for (size_t i = 0; i < n; ++i) xi[i] = Q(ri(-16, 16), 8);
        ck.expect(check_contraction(tm.p, pi, xi).ok, "variance contraction trial");
    }
    return ck;
}

Check monotonicity_suite() {
    Check ck;
    std::mt19937 rng(5521);
    auto ri = [&rng](long lo, long hi) { return lo + long(rng() % unsigned(hi - lo + 1)); };
    const size_t n = 10;
    for (int trial = 0; trial < 100 && ck.ok; ++trial) {
        Configuration<Exact> cfg;
        cfg.x = Mat<Exact>(n, 1);
        cfg.v = Mat<Exact>(n, 1);
        Exact pos(0);
        for (size_t i = 0; i < n; ++i) {
            if (i) pos += Q(ri(32, 95), 64);  // gaps straddle the unit threshold
            cfg.x(i, 0) = pos;
            cfg.v(i, 0) = Q(ri(-16, 16), 256);
        }
        auto tr = run(cfg, 200, {}, lazy_walk_policy<Exact>(), HysteresisRule<Exact>{Q(0), false});
        ck.expect(tr.warnings.empty(), "sup-norm or displacement audit tripped");

        std::vector<std::vector<bool>> f(n, std::vector<bool>(n, false));
        for (size_t i = 0; i < n; ++i) f[i][i] = true;
        long gains = 0;
        bool lost = false;
        for (long t = 1; t < 200; ++t) {
            auto step = transition_footprint(tr.rec[size_t(t)].g);
            std::vector<std::vector<bool>> next(n, std::vector<bool>(n, false));
            for (size_t i = 0; i < n; ++i)
                for (size_t k = 0; k < n; ++k) {
                    if (!step[i][k]) continue;
                    for (size_t j = 0; j < n; ++j)
                        if (f[k][j]) next[i][j] = true;
                }
            for (size_t i = 0; i < n; ++i)
                for (size_t j = 0; j < n; ++j) {
                    if (f[i][j] && !next[i][j]) lost = true;
                    if (next[i][j] && !f[i][j]) ++gains;
                }
            f = std::move(next);
        }
        ck.expect(!lost, "footprint lost an entry");
        ck.expect(gains <= long(n * n - n), "footprint gains bound");
        auto inf = influence(tr, 0);
        ck.expect(inf.footprint == f && inf.gains == gains, "influence bookkeeping agrees");
    }
    return ck;
}

Check residue_tower() {
    Check ck;
    mpz_class d(1);
    for (int k = 1; k <= 5; ++k) {
        SparsePoly v = canonical_value(k);
        mpz_class coeff;
        mpz_ui_pow_ui(coeff.get_mpz_t(), 2, static_cast<unsigned long>(k - 1));
        if (k % 2 == 0) coeff = -coeff;
        ck.expect(v == SparsePoly::monomial(coeff, d), "tower value k=" + std::to_string(k));
        ck.expect(eval_tree(canonical_tree(k)) == v, "tree fold k=" + std::to_string(k));
        mpz_class step;
        mpz_ui_pow_ui(step.get_mpz_t(), 2, d.get_ui());
        d += step;
    }
    ck.expect(canonical_value(4).degree() == 2059 &&
                  canonical_value(5).degree() == 2059 + (mpz_class(1) << 2059),
              "tower degrees");

    SparsePoly x3 = SparsePoly::monomial(1, 3);
    ck.expect(oplus(x3, SparsePoly{}) == x3 + SparsePoly::monomial(1, 11),
              "first combine identity");
    ck.expect(oplus(x3 + SparsePoly::monomial(1, 11), SparsePoly{}) ==
                  x3 + SparsePoly::monomial(2, 11) + SparsePoly::monomial(1, 19),
              "second combine identity");

    bool threw = false;
    try {
        canonical_value(6);
    } catch (const BudgetError&) {
        threw = true;
    }
    ck.expect(threw, "level 6 trips the bit budget");
    return ck;
}

Check noise_conformity() {
    Check ck;
    const auto& rep = g_height3;
    ck.expect(!rep.flips.empty(), "criterion-3 run recorded flips");
    NoiseBudget budget;
    budget.kappa = long(rep.flips.size());
    budget.delta_constant = 16;  // 4 x flock size, and every flip acts on four birds
    budget.window = 6;           // the lag
    for (auto& f : rep.flips)
        ck.expect(f.ev.members.size() == 4, "flip acts on a four-bird flock");
    NoiseReport nr = validate_noise(rep.flips, budget, rep.switch_ticks);
    ck.expect(nr.count_ok, "flip count within budget");
    for (auto& e : nr.events) {
        ck.expect(e.alpha_ok, "flip scales within [-1, 1]");
        ck.expect(e.magnitude_ok,
                  "flip magnitude within delta(t) at t=" + std::to_string(e.t));
        ck.expect(e.window_ok, "flip inside the post-switch window at t=" + std::to_string(e.t));
    }
    ck.expect(nr.pass, "noise audit verdict");
    ck.expect(!rep.flips.empty() && rep.flips[0].ev.t == 17 && !rep.switch_ticks.empty() &&
                  rep.switch_ticks[0] == 11,
              "first flip lands exactly lag ticks after the first merge");
    return ck;
}

}  // namespace

int main() {
    struct Row {
        const char* name;
        Check ck;
        double secs;
        bool expected_fail;
    };
    std::vector<Row> rows;

    auto timed = [](auto fn) {
        auto t0 = Clock::now();
        Check ck;
        try {
            ck = fn();
        } catch (const std::exception& e) {
            ck.expect(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        return std::pair<Check, double>{ck, secs};
    };

    {
        auto [ck, secs] = timed(oscillator_exactness);
        ck.expect(secs < 1.0, "runtime under 1 s");
        rows.push_back({"1 oscillator-exactness", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(lb_heights_1_2);
        ck.expect(secs < 10.0, "runtime under 10 s");
        rows.push_back({"2 lower-bound-heights-1-2", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(lb_height_3);
        rows.push_back({"3 lower-bound-height-3", ck, secs, true});
    }
    {
        auto [ck, secs] = timed(limit_configuration_suite);
        rows.push_back({"4 limit-configuration", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(ergodicity_suite);
        rows.push_back({"5 ergodicity-coefficients", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(spectral_values);
        rows.push_back({"6 spectral-values", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(monotonicity_suite);
        rows.push_back({"7 footprint-monotonicity", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(residue_tower);
        ck.expect(secs < 1.0, "runtime under 1 s");
        rows.push_back({"8 residue-tower", ck, secs, false});
    }
    {
        auto [ck, secs] = timed(noise_conformity);
        rows.push_back({"9 noise-conformity", ck, secs, false});
    }

    int passes = 0, failures = 0;
    bool unexpected_pass = false;
    for (auto& row : rows) {
        if (!row.expected_fail) {
            if (row.ck.ok) {
                ++passes;
                std::printf("PASS  %-28s %7.2fs\n", row.name, row.secs);
            } else {
                ++failures;
                std::printf("FAIL  %-28s %7.2fs  %s\n", row.name, row.secs,
                            row.ck.detail.c_str());
            }
            continue;
        }
        if (row.ck.ok) {
            unexpected_pass = true;
            std::printf("FAIL  %-28s %7.2fs  window clause passed unexpectedly\n", row.name,
                        row.secs);
        } else if (row.ck.detail == kWindowClause) {
            std::printf("XFAIL %-28s %7.2fs  theta2=%ld outside [%s, %s] (documented)\n",
                        row.name, row.secs, g_height3.theta2,
                        format_rational(g_height3.theta2_window.lo).c_str(),
                        format_rational(g_height3.theta2_window.hi).c_str());
        } else {
            ++failures;
            std::printf("FAIL  %-28s %7.2fs  %s\n", row.name, row.secs, row.ck.detail.c_str());
        }
    }
    std::printf("summary: %d/9 pass; 1 expected failure\n", passes);
    return (failures == 0 && !unexpected_pass) ? 0 : 1;
}
