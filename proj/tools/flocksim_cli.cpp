// Command line front end.
//
//   flocksim simulate    run a config (or a seeded random one) and emit a JSONL trace
//   flocksim analyze     run a config and report switch count and network period
//   flocksim lowerbound  run the slow-merge construction and print its report
//   flocksim spectrum    eigenvalues of a path walk or of a config's flocks
//   flocksim residue     canonical residue value at a given level
//
// Exit codes: 0 success, 2 bad input (flags or config), 4 budget exhausted,
// 3 any other runtime failure.

#include "CLI11.hpp"

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flocksim/flocksim.hpp"

namespace {

using flocksim::Approx;
using flocksim::Exact;
using json = flocksim::json;

json read_config_file(const std::string& path) {
    json j;
    if (path == "-") {
        try {
            std::cin >> j;
        } catch (const json::exception& e) {
            throw flocksim::ParseError(std::string("bad config JSON on stdin: ") + e.what());
        }
        return j;
    }
    std::ifstream in(path);
    if (!in) throw flocksim::ParseError("cannot open config file " + path);
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw flocksim::ParseError("bad config JSON in " + path + ": " + e.what());
    }
    return j;
}

std::ostream& open_out(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw flocksim::ParseError("cannot open output file " + path);
    return file;
}

template <class S>
std::vector<std::string> sim_to_stream(const json& j, long horizon_override, bool sparse,
                                       std::ostream& out) {
    flocksim::SimConfig<S> cfg = flocksim::load_sim_config<S>(j);
    long horizon = horizon_override >= 0 ? horizon_override : cfg.horizon;
    flocksim::Trace<S> trace =
        flocksim::run(cfg.initial, horizon, cfg.events, cfg.policy, cfg.rule);
    flocksim::write_trace_jsonl(trace, out, sparse);
    return trace.warnings;
}

std::vector<std::string> sim_dispatch(const json& j, const std::string& mode_flag,
                                      long horizon_override, bool sparse, std::ostream& out) {
    std::string mode = mode_flag.empty() ? flocksim::config_mode(j) : mode_flag;
    if (mode == "exact") return sim_to_stream<Exact>(j, horizon_override, sparse, out);
    return sim_to_stream<Approx>(j, horizon_override, sparse, out);
}

// Reproducible fuzz config: a line of birds with mixed sub- and super-unit
// gaps and small rational velocities.
json random_config(std::uint64_t seed, long n) {
    if (n < 2) throw flocksim::ParseError("--seed-birds must be at least 2");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> jitter(0, 31), vel(-16, 16);
    json x0 = json::array(), v1 = json::array();
    long pos = 0;
    for (long i = 0; i < n; ++i) {
        pos += 48 + jitter(rng);
        x0.push_back(json::array({std::to_string(pos) + "/64"}));
        v1.push_back(json::array({std::to_string(vel(rng)) + "/256"}));
    }
    json j;
    j["n"] = n;
    j["d"] = 1;
    j["mode"] = "exact";
    j["policy"] = "lazy_walk";
    j["horizon"] = 32;
    j["x0"] = std::move(x0);
    j["v1"] = std::move(v1);
    return j;
}

struct SimulateOpts {
    std::vector<std::string> configs;
    std::string out;
    std::string mode;
    long horizon = -1;
    bool sparse = false;
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seeded = false;
    long seed_birds = 6;
};

int classify(const std::exception& e) {
    if (dynamic_cast<const flocksim::ParseError*>(&e)) return 2;
    if (dynamic_cast<const flocksim::BudgetError*>(&e)) return 4;
    return 3;
}

int cmd_simulate(const SimulateOpts& o) {
    if (o.configs.empty() && !o.seeded)
        throw flocksim::ParseError("simulate needs --config or --seed");

    if (o.configs.size() <= 1) {
        json j = o.configs.empty() ? random_config(o.seed, o.seed_birds)
                                   : read_config_file(o.configs.front());
        std::ofstream file;
        std::ostream& out = open_out(o.out, file);
        auto warnings = sim_dispatch(j, o.mode, o.horizon, o.sparse, out);
        for (auto& w : warnings) std::cerr << "warning: " << w << "\n";
        return 0;
    }

    if (o.out.empty())
        throw flocksim::ParseError("multiple configs need --out pointing at a directory");
    std::filesystem::create_directories(o.out);
    std::vector<std::filesystem::path> targets;
    std::vector<std::string> used;
    for (auto& c : o.configs) {
        std::string stem = std::filesystem::path(c).stem().string();
        std::string name = stem;
        for (int k = 2; std::find(used.begin(), used.end(), name) != used.end(); ++k)
            name = stem + "-" + std::to_string(k);
        used.push_back(name);
        targets.push_back(std::filesystem::path(o.out) / (name + ".trace.jsonl"));
    }

    size_t m = o.configs.size();
    std::vector<int> codes(m, 0);
    std::vector<std::string> errors(m);
    std::vector<std::vector<std::string>> warnings(m);
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i; (i = next.fetch_add(1)) < m;) {
            try {
                json j = read_config_file(o.configs[i]);
                std::ofstream f(targets[i]);
                if (!f)
                    throw flocksim::ParseError("cannot open output file " + targets[i].string());
                warnings[i] = sim_dispatch(j, o.mode, o.horizon, o.sparse, f);
            } catch (const std::exception& e) {
                codes[i] = classify(e);
                errors[i] = e.what();
            }
        }
    };
    size_t jobs = std::min<size_t>(std::max(o.jobs, 1), m);
    std::vector<std::thread> pool;
    for (size_t k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    int rc = 0;
    for (size_t i = 0; i < m; ++i) {
        for (auto& w : warnings[i]) std::cerr << "warning: " << o.configs[i] << ": " << w << "\n";
        if (codes[i] && !rc) rc = codes[i];
        if (codes[i]) std::cerr << "error: " << o.configs[i] << ": " << errors[i] << "\n";
        else std::cout << o.configs[i] << " -> " << targets[i].string() << "\n";
    }
    return rc;
}

// Smallest p <= 8 such that the adjacency sequence repeats with period p over
// the back half of the trace; 0 when none does.
template <class S>
long adjacency_period(const flocksim::Trace<S>& trace) {
    const auto& rec = trace.rec;
    if (rec.size() < 2) return 1;
    for (long p = 1; p <= 8; ++p) {
        if (size_t(p) >= rec.size()) break;
        bool ok = true;
        for (size_t k = std::max(rec.size() / 2, size_t(p)); k < rec.size(); ++k)
            if (rec[k].g.adj != rec[k - p].g.adj) {
                ok = false;
                break;
            }
        if (ok) return p;
    }
    return 0;
}

template <class S>
std::pair<size_t, long> analyze_counts(const json& j, long horizon_override) {
    flocksim::SimConfig<S> cfg = flocksim::load_sim_config<S>(j);
    long horizon = horizon_override >= 0 ? horizon_override : cfg.horizon;
    flocksim::Trace<S> trace =
        flocksim::run(cfg.initial, horizon, cfg.events, cfg.policy, cfg.rule);
    for (auto& w : trace.warnings) std::cerr << "warning: " << w << "\n";
    return {flocksim::detect_switches(trace).count(), adjacency_period(trace)};
}

int cmd_analyze(const std::string& config, const std::string& mode_flag, long horizon) {
    json j = read_config_file(config);
    std::string mode = mode_flag.empty() ? flocksim::config_mode(j) : mode_flag;
    auto [switches, period] = mode == "exact" ? analyze_counts<Exact>(j, horizon)
                                              : analyze_counts<Approx>(j, horizon);
    std::cout << "switches: " << switches << ", period: ";
    if (period > 0)
        std::cout << period << "\n";
    else
        std::cout << "none\n";
    return 0;
}

double log10_of(const Exact& x) {
    if (x == 0) return -std::numeric_limits<double>::infinity();
    signed long ne = 0, de = 0;
    double nm = mpz_get_d_2exp(&ne, x.get_num().get_mpz_t());
    double dm = mpz_get_d_2exp(&de, x.get_den().get_mpz_t());
    double log2_10 = std::log10(2.0);
    return std::log10(std::fabs(nm)) + double(ne) * log2_10 -
           (std::log10(std::fabs(dm)) + double(de) * log2_10);
}

std::string compact_rational(const Exact& x) {
    if (x == 0) return "0";
    if (flocksim::bit_size(x.get_num()) + flocksim::bit_size(x.get_den()) <= 512)
        return flocksim::format_rational(x);
    char buf[48];
    std::snprintf(buf, sizeof buf, "~10^%.1f", log10_of(x));
    return std::string(x < 0 ? "-" : "") + buf;
}

json lowerbound_json(const flocksim::LowerBoundReport& rep) {
    json j;
    j["n"] = rep.params.n;
    j["q"] = flocksim::format_rational(rep.params.q);
    j["lag"] = rep.params.lag;
    j["budget"] = rep.params.budget;
    j["two_d"] = rep.params.two_d;
    j["complete"] = rep.complete;
    j["refused"] = rep.refused;
    j["budget_exceeded"] = rep.budget_exceeded;
    if (!rep.refusal_note.empty()) j["refusal_note"] = rep.refusal_note;
    j["t2"] = rep.t2;
    j["theta1"] = rep.theta1;
    j["t3"] = rep.t3;
    j["theta2"] = rep.theta2;
    j["theta_ratio"] = rep.theta_ratio;
    j["merge_gap"] = flocksim::format_rational(rep.merge_gap);
    j["m1"] = compact_rational(rep.m1);
    j["m2_measured"] = compact_rational(rep.m2_measured);
    j["m2_predicted"] = compact_rational(rep.m2_predicted);
    j["m2_match"] = rep.m2_match;
    if (rep.m3_measured != 0) j["m3_log10"] = log10_of(rep.m3_measured);
    j["m3_match"] = rep.m3_match;
    j["theta1_window"] = {flocksim::format_rational(rep.theta1_window.lo),
                          flocksim::format_rational(rep.theta1_window.hi)};
    j["theta1_in_window"] = rep.theta1_in_window;
    j["theta2_window"] = {flocksim::format_rational(rep.theta2_window.lo),
                          flocksim::format_rational(rep.theta2_window.hi)};
    j["theta2_in_window"] = rep.theta2_in_window;
    json merges = json::array();
    for (auto& mg : rep.merges)
        merges.push_back({{"t", mg.t},
                          {"height", mg.height},
                          {"lo", mg.members.front()},
                          {"hi", mg.members.back()},
                          {"m", compact_rational(mg.m)}});
    j["merges"] = std::move(merges);
    json flips = json::array();
    for (auto& f : rep.flips) flips.push_back({{"t", f.ev.t}, {"birds", f.ev.members.size()}});
    j["flips"] = std::move(flips);
    j["switch_count"] = rep.switch_ticks.size();
    j["integrity_ok"] = rep.integrity.ok;
    if (!rep.integrity.ok) j["integrity_message"] = rep.integrity.message;
    j["composition_ok"] = rep.composition_ok;
    j["float_merge_tick"] = rep.float_merge_tick;
    json checks = json::array();
    for (auto& c : rep.cross_checks)
        checks.push_back({{"t", c.t}, {"max_diff", c.max_diff}, {"pass", c.pass}});
    j["cross_checks"] = std::move(checks);
    j["noise_pass"] = rep.noise.pass;
    j["notes"] = rep.notes;
    return j;
}

struct LowerBoundOpts {
    long n = 8;
    std::string q = "1/32";
    long lag = 6;
    long budget = 10000000;
    long exact_ticks = 100000;
    long settle = 8;
    bool two_d = false;
    std::string out;
};

int cmd_lowerbound(const LowerBoundOpts& o) {
    flocksim::LBParams<Exact> p;
    p.n = o.n;
    p.q = flocksim::parse_exact_rational(o.q);
    p.lag = o.lag;
    p.budget = o.budget;
    p.exact_ticks = o.exact_ticks;
    p.settle = o.settle;
    p.two_d = o.two_d;
    flocksim::LowerBoundReport rep = flocksim::run_lower_bound(p);
    std::cout << rep.to_text();
    if (!o.out.empty()) {
        std::ofstream f(o.out);
        if (!f) throw flocksim::ParseError("cannot open output file " + o.out);
        f << lowerbound_json(rep).dump(2) << "\n";
    }
    return 0;
}

// Eigenvalues that are exact thirds print as fractions, everything else as a
// plain decimal.
std::string eigenvalue_csv(const std::vector<double>& lambda) {
    std::ostringstream os;
    for (size_t k = 0; k < lambda.size(); ++k) {
        if (k) os << ", ";
        double r = lambda[k] * 3.0;
        long nearest = std::lround(r);
        if (std::fabs(r - double(nearest)) < 1e-9) {
            if (nearest % 3 == 0)
                os << nearest / 3;
            else
                os << nearest << "/3";
        } else {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.12g", lambda[k]);
            os << buf;
        }
    }
    return os.str();
}

template <class S>
void config_spectra(const json& j) {
    flocksim::SimConfig<S> cfg = flocksim::load_sim_config<S>(j);
    flocksim::FlockNetwork<S> g = flocksim::build_network(cfg.initial.x, nullptr, cfg.rule);
    flocksim::TransitionMatrix<S> tm = flocksim::transition(g, cfg.policy);
    for (auto& flock : g.flocks) {
        flocksim::Mat<S> sub(flock.size(), flock.size());
        std::vector<S> c(flock.size());
        for (size_t a = 0; a < flock.size(); ++a) {
            c[a] = tm.c[flock[a]];
            for (size_t b = 0; b < flock.size(); ++b) sub(a, b) = tm.p(flock[a], flock[b]);
        }
        flocksim::FlockSpectrum sp = flocksim::spectrum(sub, c);
        std::cout << "flock " << flock.front() << ".." << flock.back() << ": "
                  << eigenvalue_csv(sp.eigenvalues) << "\n";
    }
}

int cmd_spectrum(int path_j, const std::string& config, const std::string& mode_flag) {
    if ((path_j > 0) == !config.empty())
        throw flocksim::ParseError("spectrum needs exactly one of --path or --config");
    if (path_j > 0) {
        flocksim::PathSpectrum ps = flocksim::path_spectrum(path_j, 1);
        std::cout << eigenvalue_csv(ps.lambda) << "\n";
        return 0;
    }
    json j = read_config_file(config);
    std::string mode = mode_flag.empty() ? flocksim::config_mode(j) : mode_flag;
    if (mode == "exact")
        config_spectra<Exact>(j);
    else
        config_spectra<Approx>(j);
    return 0;
}

int cmd_residue(int level, long budget_bits) {
    flocksim::SparsePoly val = flocksim::canonical_value(level, budget_bits);
    std::cout << "degree: " << val.degree().get_str()
              << ", coeff: " << val.leading_coeff().get_str() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flocking dynamics simulator and analysis toolkit"};
    app.require_subcommand(1);

    SimulateOpts sim;
    CLI::App* simulate = app.add_subcommand("simulate", "run configs and emit JSONL traces");
    simulate->add_option("--config", sim.configs, "config file(s), '-' for stdin");
    simulate->add_option("--out", sim.out, "output file, or directory for several configs");
    simulate->add_option("--mode", sim.mode, "arithmetic override")
        ->check(CLI::IsMember({"exact", "approx"}));
    simulate->add_option("--horizon", sim.horizon, "tick horizon override");
    simulate->add_flag("--sparse", sim.sparse, "omit positions and velocities in the trace");
    simulate->add_option("--jobs", sim.jobs, "worker threads for several configs")
        ->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "generate a random config from this seed");
    simulate->add_option("--seed-birds", sim.seed_birds, "bird count for seeded configs");

    std::string an_config, an_mode;
    long an_horizon = -1;
    CLI::App* analyze = app.add_subcommand("analyze", "switch count and network period");
    analyze->add_option("--config", an_config, "config file, '-' for stdin")->required();
    analyze->add_option("--mode", an_mode, "arithmetic override")
        ->check(CLI::IsMember({"exact", "approx"}));
    analyze->add_option("--horizon", an_horizon, "tick horizon override");

    LowerBoundOpts lb;
    CLI::App* lowerbound = app.add_subcommand("lowerbound", "slow-merge construction report");
    lowerbound->add_option("--n", lb.n, "bird count (power of two, at least 4)");
    lowerbound->add_option("--q", lb.q, "initial speed, a unit fraction like 1/32");
    lowerbound->add_option("--lag", lb.lag, "ticks between a merge and its flip");
    lowerbound->add_option("--budget", lb.budget, "tick budget")->check(CLI::PositiveNumber);
    lowerbound->add_option("--exact-ticks", lb.exact_ticks, "per-tick simulation up to here");
    lowerbound->add_option("--settle", lb.settle, "quiet ticks before phase analysis");
    lowerbound->add_flag("--two-d", lb.two_d, "lift to 2-D with unit upward velocity");
    lowerbound->add_option("--out", lb.out, "also write a JSON report here");

    int sp_path = 0;
    std::string sp_config, sp_mode;
    CLI::App* spectrum = app.add_subcommand("spectrum", "transition matrix eigenvalues");
    spectrum->add_option("--path", sp_path, "closed form for the path of 2^j birds")
        ->check(CLI::Range(1, 15));
    spectrum->add_option("--config", sp_config, "per-flock spectra of a config's network");
    spectrum->add_option("--mode", sp_mode, "arithmetic override")
        ->check(CLI::IsMember({"exact", "approx"}));

    int rs_level = 0;
    long rs_budget = flocksim::kResidueBudgetBits;
    CLI::App* residue = app.add_subcommand("residue", "canonical residue value at a level");
    residue->add_option("--level", rs_level, "tower level")->required()->check(CLI::PositiveNumber);
    residue->add_option("--budget", rs_budget, "exponent bit budget")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    sim.seeded = simulate->count("--seed") > 0;

    try {
        if (app.got_subcommand(simulate)) return cmd_simulate(sim);
        if (app.got_subcommand(analyze)) return cmd_analyze(an_config, an_mode, an_horizon);
        if (app.got_subcommand(lowerbound)) return cmd_lowerbound(lb);
        if (app.got_subcommand(spectrum)) return cmd_spectrum(sp_path, sp_config, sp_mode);
        if (app.got_subcommand(residue)) return cmd_residue(rs_level, rs_budget);
    } catch (const flocksim::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const flocksim::BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
