#include <catch2/catch_amalgamated.hpp>

#include "flocksim/flocksim.hpp"

using namespace flocksim;

namespace {

Exact Q(long n, long d = 1) { return rat<Exact>(n, d); }

LBParams<Exact> params8(long budget = 100) {
    LBParams<Exact> p;
    p.n = 8;
    p.budget = budget;
    return p;
}

}  // namespace

TEST_CASE("parameter validation", "[lowerbound]") {
    LBParams<Exact> p;
    REQUIRE_NOTHROW(validate_lb_params(p));

    auto bad = p;
    bad.n = 6;
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
    bad = p;
    bad.q = Q(2, 5);
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
    bad = p;
    bad.q = Q(1, 34);  // 34 = 4 mod 6
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
    bad = p;
    bad.lag = 0;
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
    bad = p;
    bad.settle = 1;
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
    bad = p;
    bad.budget = 0;
    REQUIRE_THROWS_AS(validate_lb_params(bad), DomainError);
}

TEST_CASE("initial conditions", "[lowerbound]") {
    auto cfg = initial_conditions(params8());
    REQUIRE(cfg.birds() == 8);
    REQUIRE(cfg.dims() == 1);
    std::vector<Exact> x{Q(0), Q(2, 3), Q(2), Q(8, 3), Q(4), Q(14, 3), Q(6), Q(20, 3)};
    std::vector<Exact> v{Q(1, 32), Q(0), Q(-1, 32), Q(0), Q(1, 32), Q(0), Q(-1, 32), Q(0)};
    for (size_t i = 0; i < 8; ++i) {
        REQUIRE(cfg.x(i, 0) == x[i]);
        REQUIRE(cfg.v(i, 0) == v[i]);
    }

    auto p2 = params8();
    p2.two_d = true;
    auto cfg2 = initial_conditions(p2);
    REQUIRE(cfg2.dims() == 2);
    for (size_t i = 0; i < 8; ++i) {
        REQUIRE(cfg2.x(i, 1) == Q(0));
        REQUIRE(cfg2.v(i, 1) == Q(1));
        REQUIRE(cfg2.x(i, 0) == x[i]);
    }
}

TEST_CASE("height-1 closed forms match the simulation", "[lowerbound]") {
    Exact q = Q(1, 32);
    auto h = predict_height1(q);
    REQUIRE(h.theta1 == 11);
    REQUIRE(h.m1 == Q(1, 64));
    REQUIRE(h.merge_gap() == Q(95, 96));

    auto tr = run(initial_conditions(params8()), 11, {}, lazy_walk_policy<Exact>(),
                  HysteresisRule<Exact>{Q(0), false});
    for (long t = 0; t <= 11; ++t) {
        const auto& r = tr.rec[size_t(t)];
        REQUIRE(r.x(0, 0) == h.x1(t));
        REQUIRE(r.x(1, 0) == h.x2(t));
        REQUIRE(r.x(2, 0) == h.x3(t));
        REQUIRE(r.x(3, 0) == h.x4(t));
        REQUIRE(r.x(1, 0) - r.x(0, 0) == h.pair_gap_left(t));
        REQUIRE(r.x(3, 0) - r.x(2, 0) == h.pair_gap_right(t));
        REQUIRE(r.x(2, 0) - r.x(1, 0) == h.inter_gap(t));
    }

    // The pairs connect exactly when the inter-pair gap first drops to 1.
    REQUIRE(h.inter_gap(10) > Q(1));
    REQUIRE(h.inter_gap(11) == h.merge_gap());
    REQUIRE_FALSE(tr.rec[10].g.has_edge(1, 2));
    REQUIRE(tr.rec[11].g.has_edge(1, 2));
    REQUIRE(tr.warnings.empty());
}

TEST_CASE("stationary velocity predictions", "[lowerbound]") {
    Exact q = Q(1, 32);
    REQUIRE(predict_m2(q, 11) == Q(-1, 11337408));
    REQUIRE_THROWS_AS(predict_m2(q, 10), DomainError);
    REQUIRE_THROWS_AS(predict_m2(q, -1), DomainError);

    REQUIRE(predict_m3(q, 2) == Q(5, 1) * q / 126);
    REQUIRE_THROWS_AS(predict_m3(q, 0), DomainError);

    auto w1 = predict_theta(Q(1, 64), 6);
    REQUIRE(w1.lo == Q(14));
    REQUIRE(w1.hi == Q(58, 3));
    REQUIRE(w1.contains(14));
    REQUIRE_FALSE(w1.contains(11));

    auto w2 = predict_theta(Q(-1, 11337408), 6);
    REQUIRE(w2.lo == Q(1417182));
    REQUIRE(w2.hi == Q(2361966));
    REQUIRE(w2.contains(1417182));
    REQUIRE(w2.contains(2361966));
    REQUIRE_FALSE(w2.contains(1417181));
    REQUIRE_FALSE(w2.contains(4283853));

    REQUIRE_THROWS_AS(predict_theta(Q(0), 6), DegenerateError);
}

TEST_CASE("sign schedule of tracked flocks", "[lowerbound]") {
    std::vector<int> right_only;
    for (int j = 1; j <= 8; ++j) right_only.push_back(sign_pattern(j, FlipMode::RightOnly));
    REQUIRE(right_only == std::vector<int>{1, -1, -1, 1, 1, -1, -1, 1});
    for (int j = 1; j <= 8; ++j) REQUIRE(sign_pattern(j, FlipMode::TrueRule) == 1);
    REQUIRE_THROWS_AS(sign_pattern(0, FlipMode::TrueRule), DomainError);
}

TEST_CASE("four birds merge once and settle", "[lowerbound]") {
    LBParams<Exact> p;
    p.n = 4;
    p.budget = 1000;
    auto rep = run_lower_bound(p);

    REQUIRE(rep.complete);
    REQUIRE_FALSE(rep.refused);
    REQUIRE_FALSE(rep.budget_exceeded);
    REQUIRE(rep.final_state.t == 19);  // merge at 11 plus the settle window
    REQUIRE(rep.flips.empty());
    REQUIRE(rep.t2 == 11);
    REQUIRE(rep.merge_gap == Q(95, 96));
    REQUIRE(rep.m1 == Q(1, 64));

    REQUIRE(rep.m2_measured == Q(-1, 11337408));
    REQUIRE(rep.m2_match);
    REQUIRE(rep.t3 == -1);
    REQUIRE(rep.theta_ratio == 0.0);

    std::vector<size_t> sizes;
    for (auto& m : rep.merges) sizes.push_back(m.members.size());
    std::sort(sizes.begin(), sizes.end());
    REQUIRE(sizes == std::vector<size_t>{2, 2, 4});
    REQUIRE(rep.integrity.ok);
    REQUIRE(rep.composition_ok);
    REQUIRE(rep.noise.pass);
}

TEST_CASE("eight birds: first two heights and an honest refusal", "[lowerbound]") {
    auto rep = run_lower_bound(params8(100));

    REQUIRE(rep.refused);
    REQUIRE_FALSE(rep.complete);
    REQUIRE_FALSE(rep.budget_exceeded);
    REQUIRE(rep.refusal_note.find("beyond the budget") != std::string::npos);
    REQUIRE(rep.final_state.t == 25);  // flip tick plus the settle window

    REQUIRE(rep.t2 == 11);
    REQUIRE(rep.theta1 == 11);
    REQUIRE(rep.merge_gap == Q(95, 96));
    REQUIRE(rep.m1 == Q(1, 64));
    REQUIRE(rep.m2_measured == Q(-1, 11337408));
    REQUIRE(rep.m2_predicted == rep.m2_measured);
    REQUIRE(rep.m2_match);
    REQUIRE(rep.theta1_window.lo == Q(14));
    REQUIRE_FALSE(rep.theta1_in_window);  // no flip precedes the first merge
    REQUIRE(rep.t3 == -1);

    size_t h1 = 0, h2 = 0;
    for (auto& m : rep.merges) {
        if (m.height == 1) ++h1;
        if (m.height == 2) {
            ++h2;
            REQUIRE(m.t == 11);
            REQUIRE(m.merge_gap == Q(95, 96));
            REQUIRE(abs_val(m.m) == Q(1, 11337408));
        }
    }
    REQUIRE(h1 == 4);
    REQUIRE(h2 == 2);

    REQUIRE(rep.flips.size() == 1);
    REQUIRE(rep.flips[0].ev.t == 17);
    REQUIRE(rep.flips[0].ev.members == std::vector<size_t>{0, 1, 2, 3});
    REQUIRE(rep.flips[0].ev.alpha == std::vector<Exact>{Q(-1)});
    REQUIRE(std::sqrt(to_double(rep.flips[0].dv_l2_sq)) ==
            Catch::Approx(0.005774799091384309).epsilon(1e-12));

    REQUIRE(rep.switch_ticks == std::vector<long>{11});
    REQUIRE(rep.noise.pass);
    REQUIRE(rep.noise.events.size() == 1);
    REQUIRE(rep.noise.events[0].window_ok);  // 17 - 11 equals the lag exactly
    REQUIRE(rep.integrity.ok);
    REQUIRE(rep.composition_ok);

    auto text = rep.to_text();
    REQUIRE(text.find("lower-bound run: n=8 q=1/32 lag=6") != std::string::npos);
    REQUIRE(text.find("flip at t=17 on 4 birds") != std::string::npos);
    REQUIRE(text.find("theta1=11 merge gap 95/96 m2 match=yes") != std::string::npos);
    REQUIRE(text.find("stopped: ") != std::string::npos);
}

TEST_CASE("driver agrees with the generic engine bit for bit", "[lowerbound]") {
    auto rep = run_lower_bound(params8(100));
    long t_stop = rep.final_state.t;

    PerturbationEvent<Exact> flip;
    flip.t = 17;
    flip.members = {0, 1, 2, 3};
    flip.alpha = {Q(-1)};
    auto tr = run(initial_conditions(params8()), t_stop, {flip}, lazy_walk_policy<Exact>(),
                  HysteresisRule<Exact>{Q(0), false});

    REQUIRE(tr.rec.back().x == rep.final_state.x);
    REQUIRE(tr.rec.back().v == rep.final_state.v);
    REQUIRE(tr.warnings.empty());
}

TEST_CASE("budget exhaustion reports the exact state", "[lowerbound]") {
    auto p = params8(100);
    p.settle = 200;  // no quiet window fits, so the driver just ticks
    auto rep = run_lower_bound(p);

    REQUIRE(rep.budget_exceeded);
    REQUIRE_FALSE(rep.refused);
    REQUIRE(rep.final_state.t == 100);

    const char* x100[] = {
        "10205890709549102263990849447056190822858667/46549139029801132938087453223875879146887728",
        "13075753784459404142497915518040391752623769/15516379676600377646029151074625293048962576",
        "27937802249346149041698287477552160085560671/15516379676600377646029151074625293048962576",
        "57508390300645968295282109291595748529323241/23274569514900566469043726611937939573443864",
        "49185620773430436130054555130746529335612027/11637284757450283234521863305968969786721932",
        "75197748465399782104793402782154602940859845/15516379676600377646029151074625293048962576",
        "44973195302959185184713648203248903499814437/7758189838300188823014575537312646524481288",
        "150435968664828546102205168043220572422984939/23274569514900566469043726611937939573443864"};
    const char* v100[] = {
        "8211601633717682393353940475388252903/93098278059602265876174906447751758293775456",
        "456200090773555874068602065992857793/5172126558866792548676383691541764349654192",
        "912400181592961379221847845870868335/10344253117733585097352767383083528699308384",
        "4105800817271487876438763662660501193/46549139029801132938087453223875879146887728",
        "-8211601633717682393353940475388252903/93098278059602265876174906447751758293775456",
        "-456200090773555874068602065992857793/5172126558866792548676383691541764349654192",
        "-912400181592961379221847845870868335/10344253117733585097352767383083528699308384",
        "-4105800817271487876438763662660501193/46549139029801132938087453223875879146887728"};
    for (size_t i = 0; i < 8; ++i) {
        REQUIRE(rep.final_state.x(i, 0) == parse_exact_rational(x100[i]));
        REQUIRE(rep.final_state.v(i, 0) == parse_exact_rational(v100[i]));
    }
}

TEST_CASE("planar lift projects onto the line", "[lowerbound]") {
    LBParams<Exact> flat;
    flat.n = 4;
    flat.budget = 1000;
    auto line = run_lower_bound(flat);

    auto lifted = flat;
    lifted.two_d = true;
    auto plane = run_lower_bound(lifted);

    REQUIRE(plane.complete);
    REQUIRE(plane.final_state.t == line.final_state.t);
    REQUIRE(plane.final_state.x.cols() == 2);
    for (size_t i = 0; i < 4; ++i) {
        REQUIRE(plane.final_state.x(i, 0) == line.final_state.x(i, 0));
        REQUIRE(plane.final_state.v(i, 0) == line.final_state.v(i, 0));
        REQUIRE(plane.final_state.x(i, 1) == Exact(plane.final_state.t));
        REQUIRE(plane.final_state.v(i, 1) == Q(1));
    }
}

TEST_CASE("line-formation integrity checker", "[lowerbound]") {
    auto good = run(initial_conditions(params8()), 10, {}, lazy_walk_policy<Exact>(),
                    HysteresisRule<Exact>{Q(0), false});
    auto rep = integrity_check(good);
    REQUIRE(rep.ok);
    REQUIRE(rep.ticks_checked == 11);
    REQUIRE(rep.first_violation_tick == -1);

    Configuration<Exact> crossing;
    crossing.x = Mat<Exact>(2, 1);
    crossing.v = Mat<Exact>(2, 1);
    crossing.x(1, 0) = Q(3, 4);
    crossing.v(0, 0) = Q(1, 2);
    crossing.v(1, 0) = Q(-1, 2);
    auto crossed = run(crossing, 1, {}, lazy_walk_policy<Exact>(),
                       HysteresisRule<Exact>{Q(0), false});
    auto bad = integrity_check(crossed);
    REQUIRE_FALSE(bad.ok);
    REQUIRE(bad.first_violation_tick == 1);
    REQUIRE(bad.message == "bird order changed");

    Configuration<Exact> triangle;
    triangle.x = Mat<Exact>(3, 1);
    triangle.v = Mat<Exact>(3, 1);
    triangle.x(1, 0) = Q(1, 2);
    triangle.x(2, 0) = Q(1);
    auto tri = run(triangle, 0, {}, lazy_walk_policy<Exact>(), HysteresisRule<Exact>{Q(0), false});
    auto trirep = integrity_check(tri);
    REQUIRE_FALSE(trirep.ok);
    REQUIRE(trirep.message == "flock network is not a simple path");

    Configuration<Exact> near;
    near.x = Mat<Exact>(2, 1);
    near.v = Mat<Exact>(2, 1);
    near.x(1, 0) = Q(1, 2);
    auto nr = run(near, 0, {}, lazy_walk_policy<Exact>(), HysteresisRule<Exact>{Q(0), false});
    auto nrrep = integrity_check(nr);
    REQUIRE_FALSE(nrrep.ok);
    REQUIRE(nrrep.message == "flock edge length left [0.58, 1]");
}
