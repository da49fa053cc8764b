#pragma once

// Config files and trace serialization. Configs are single JSON objects;
// traces are JSONL, one record per tick, rationals as "p/q" strings so an
// exact run survives the round trip bit for bit.

#if __has_include(<nlohmann/json.hpp>)
#include <nlohmann/json.hpp>
#else
#include "json.hpp"
#endif

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "flocksim/dynamics.hpp"
#include "flocksim/matrix.hpp"
#include "flocksim/network.hpp"
#include "flocksim/policy.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

using json = nlohmann::json;

template <class S>
struct SimConfig {
    Configuration<S> initial;
    ConfidencePolicy<S> policy = lazy_walk_policy<S>();
    HysteresisRule<S> rule;
    long horizon = 0;
    std::vector<PerturbationEvent<S>> events;
};

inline std::string config_mode(const json& j) {
    std::string mode = j.value("mode", "exact");
    if (mode != "exact" && mode != "approx") throw ParseError("mode must be 'exact' or 'approx'");
    return mode;
}

namespace io_detail {

template <class S>
Mat<S> parse_matrix(const json& rows, size_t n, size_t d, const std::string& what) {
    if (!rows.is_array() || rows.size() != n)
        throw ParseError(what + " must be an array of " + std::to_string(n) + " rows");
    Mat<S> m(n, d);
    for (size_t i = 0; i < n; ++i) {
        const json& row = rows[i];
        if (!row.is_array() || row.size() != d)
            throw ParseError(what + " row " + std::to_string(i) + " must have " +
                             std::to_string(d) + " entries");
        for (size_t k = 0; k < d; ++k) m(i, k) = parse_rational<S>(row[k].get<std::string>());
    }
    return m;
}

template <class S>
json matrix_rows(const Mat<S>& m) {
    json rows = json::array();
    for (size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (size_t k = 0; k < m.cols(); ++k) row.push_back(format_rational(m(i, k)));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace io_detail

template <class S>
SimConfig<S> load_sim_config(const json& j) {
    if (!j.is_object()) throw ParseError("config must be a JSON object");
    if (!j.contains("n") || !j.contains("x0") || !j.contains("v1"))
        throw ParseError("config needs n, x0 and v1");
    size_t n = j.at("n").get<size_t>();
    size_t d = j.value("d", size_t{1});
    if (n < 1 || d < 1) throw ParseError("n and d must be positive");

    SimConfig<S> cfg;
    cfg.initial.t = 0;
    cfg.initial.x = io_detail::parse_matrix<S>(j.at("x0"), n, d, "x0");
    cfg.initial.v = io_detail::parse_matrix<S>(j.at("v1"), n, d, "v1");
    cfg.horizon = j.value("horizon", 0L);

    if (j.contains("policy")) {
        const json& pj = j.at("policy");
        if (pj.is_string()) {
            std::string name = pj.get<std::string>();
            if (name == "lazy_walk")
                cfg.policy = lazy_walk_policy<S>();
            else if (name == "vicsek")
                cfg.policy = vicsek_policy<S>();
            else
                throw ParseError("unknown policy '" + name + "'");
        } else if (pj.is_array()) {
            ConfidencePolicy<S> p;
            p.kind = PolicyKind::Custom;
            for (auto& entry : pj) p.custom.push_back(parse_rational<S>(entry.get<std::string>()));
            if (p.custom.size() != n) throw ParseError("custom policy needs one entry per bird");
            cfg.policy = p;
        } else {
            throw ParseError("policy must be a name or an array of confidences");
        }
    }

    if (j.contains("epsilon_h")) {
        S eps = parse_rational<S>(j.at("epsilon_h").get<std::string>());
        if (eps < S(0)) throw ParseError("epsilon_h must be nonnegative");
        cfg.rule.enabled = eps > S(0);
        if (cfg.rule.enabled) cfg.rule.eps_h = eps;
    }

    if (j.contains("events")) {
        for (auto& ej : j.at("events")) {
            PerturbationEvent<S> ev;
            ev.t = ej.at("t").get<long>();
            for (auto& m : ej.at("members")) ev.members.push_back(m.get<size_t>());
            for (auto& a : ej.at("alpha")) ev.alpha.push_back(parse_rational<S>(a.get<std::string>()));
            cfg.events.push_back(std::move(ev));
        }
    }
    return cfg;
}

template <class S>
SimConfig<S> load_sim_config(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad config JSON: ") + e.what());
    }
    return load_sim_config<S>(j);
}

// One JSONL line per tick: t, edges, flocks, switched, and unless sparse
// the exact state as "p/q" strings.
template <class S>
void write_trace_jsonl(const Trace<S>& trace, std::ostream& out, bool sparse = false) {
    for (auto& r : trace.rec) {
        json line;
        line["t"] = r.t;
        line["switched"] = r.switched;
        json edges = json::array();
        for (size_t i = 0; i < r.g.n; ++i)
            for (size_t k = i + 1; k < r.g.n; ++k)
                if (r.g.adj[i][k]) edges.push_back(json::array({i, k}));
        line["edges"] = std::move(edges);
        json flocks = json::array();
        for (auto& f : r.g.flocks) flocks.push_back(f);
        line["flocks"] = std::move(flocks);
        if (!sparse) {
            line["x"] = io_detail::matrix_rows(r.x);
            line["v"] = io_detail::matrix_rows(r.v);
        }
        out << line.dump() << "\n";
    }
}

// Rebuild records from JSONL. The bird count comes from the flock
// partition; positions and velocities are restored when present, and the
// network's distance table is recomputed from them.
template <class S>
Trace<S> read_trace_jsonl(std::istream& in) {
    Trace<S> trace;
    std::string buf;
    size_t lineno = 0;
    while (std::getline(in, buf)) {
        ++lineno;
        if (buf.empty()) continue;
        json j;
        try {
            j = json::parse(buf);
        } catch (const json::exception& e) {
            throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what());
        }
        StepRecord<S> r;
        r.t = j.at("t").get<long>();
        r.switched = j.value("switched", false);
        size_t n = 0;
        for (auto& f : j.at("flocks")) n += f.size();
        if (n == 0) throw ParseError("trace line " + std::to_string(lineno) + ": empty partition");
        r.g = FlockNetwork<S>(n);
        for (auto& e : j.at("edges")) {
            size_t a = e.at(0).get<size_t>(), b = e.at(1).get<size_t>();
            if (a >= n || b >= n)
                throw ParseError("trace line " + std::to_string(lineno) + ": edge out of range");
            r.g.adj[a][b] = r.g.adj[b][a] = true;
        }
        if (j.contains("x")) {
            size_t d = j.at("x").front().size();
            r.x = io_detail::parse_matrix<S>(j.at("x"), n, d, "x");
            r.v = io_detail::parse_matrix<S>(j.at("v"), n, d, "v");
            for (size_t a = 0; a < n; ++a)
                for (size_t b = 0; b < n; ++b) r.g.dist2(a, b) = squared_distance(r.x, a, b);
        }
        r.g.finalize();
        std::vector<std::vector<size_t>> stored;
        for (auto& f : j.at("flocks")) stored.push_back(f.get<std::vector<size_t>>());
        if (stored != r.g.flocks)
            throw ParseError("trace line " + std::to_string(lineno) +
                             ": stored flocks disagree with the edge set");
        trace.rec.push_back(std::move(r));
    }
    trace.horizon = trace.rec.empty() ? 0 : trace.rec.back().t;
    return trace;
}

}  // namespace flocksim
