#pragma once

// Time-invariant flock analysis. For P = I - C L with symmetric adjacency the
// walk is reversible: pi_i is proportional to 1/c_i, and M = C^{-1/2} P C^{1/2}
// is symmetric, so the whole spectrum is real and an orthonormal eigenbasis
// exists. Eigendecomposition runs in floating point only; pi, the fundamental
// matrix Gamma, and limit configurations stay exact over rationals.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "flocksim/dynamics.hpp"
#include "flocksim/matrix.hpp"
#include "flocksim/network.hpp"
#include "flocksim/policy.hpp"
#include "flocksim/scalar.hpp"

namespace flocksim {

template <class S>
Vec<S> stationary_distribution(const FlockNetwork<S>& g, const ConfidencePolicy<S>& policy) {
    if (g.flocks.size() != 1) throw DomainError("stationary distribution needs a connected flock");
    std::vector<S> c = policy.confidence(g);
    Vec<S> pi(g.n);
    S tr(0);
    for (size_t i = 0; i < g.n; ++i) {
        if (!(c[i] > S(0))) throw DomainError("confidence must be positive");
        pi[i] = S(1) / c[i];
        tr += pi[i];
    }
    for (size_t i = 0; i < g.n; ++i) pi[i] /= tr;
    return pi;
}

namespace detail {

template <class S>
bool footprint_connected(const Mat<S>& p) {
    size_t n = p.rows();
    std::vector<bool> seen(n, false);
    std::vector<size_t> stack{0};
    seen[0] = true;
    size_t count = 1;
    while (!stack.empty()) {
        size_t i = stack.back();
        stack.pop_back();
        for (size_t j = 0; j < n; ++j)
            if (!seen[j] && (p(i, j) != S(0) || p(j, i) != S(0))) {
                seen[j] = true;
                ++count;
                stack.push_back(j);
            }
    }
    return count == n;
}

}  // namespace detail

template <class S>
Mat<double> symmetrize(const Mat<S>& p, const std::vector<S>& c) {
    size_t n = p.rows();
    if (p.cols() != n || c.size() != n) throw DimError("symmetrize shape mismatch");
    for (auto& ci : c)
        if (!(ci > S(0))) throw DomainError("confidence must be positive");
    if constexpr (field_traits<S>::exact) {
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j)
                if (p(i, j) * c[j] != p(j, i) * c[i])
                    throw NumericError("walk is not reversible; cannot symmetrize");
    }
    Mat<double> m(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double ratio;
            if constexpr (field_traits<S>::exact)
                ratio = to_double(S(c[j] / c[i]));
            else
                ratio = to_double(c[j]) / to_double(c[i]);
            m(i, j) = to_double(p(i, j)) * std::sqrt(ratio);
        }
    return m;
}

struct FlockSpectrum {
    size_t m = 0;
    std::vector<double> pi;
    std::vector<double> eigenvalues;  // descending; first is 1
    Mat<double> u;                    // column k: orthonormal eigenvector of M
    Mat<double> right;                // column k: right eigenvector of P
    Mat<double> left;                 // column k: left eigenvector of P
    double mu = 0;                    // max |lambda_k| over k >= 2
    double max_residual = 0;
};

template <class S>
FlockSpectrum spectrum(const Mat<S>& p, const std::vector<S>& c) {
    size_t n = p.rows();
    if (!detail::footprint_connected(p)) throw DomainError("spectrum needs a connected flock");
    Mat<double> m = symmetrize(p, c);
    Eigen::MatrixXd em(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) em(i, j) = 0.5 * (m(i, j) + m(j, i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(em);
    if (solver.info() != Eigen::Success) throw NumericError("eigensolver failed to converge");

    FlockSpectrum sp;
    sp.m = n;
    sp.eigenvalues.resize(n);
    sp.u = Mat<double>(n, n);
    sp.right = Mat<double>(n, n);
    sp.left = Mat<double>(n, n);
    std::vector<double> sqrt_c(n);
    for (size_t i = 0; i < n; ++i) sqrt_c[i] = std::sqrt(to_double(c[i]));
    for (size_t k = 0; k < n; ++k) {
        size_t src = n - 1 - k;  // Eigen sorts ascending
        sp.eigenvalues[k] = solver.eigenvalues()(src);
        for (size_t i = 0; i < n; ++i) {
            double ui = solver.eigenvectors()(i, src);
            sp.u(i, k) = ui;
            sp.right(i, k) = sqrt_c[i] * ui;
            sp.left(i, k) = ui / sqrt_c[i];
        }
    }
    for (size_t k = 0; k < n; ++k) {
        for (size_t i = 0; i < n; ++i) {
            double r = -sp.eigenvalues[k] * sp.u(i, k);
            for (size_t j = 0; j < n; ++j) r += em(i, j) * sp.u(j, k);
            sp.max_residual = std::max(sp.max_residual, std::abs(r));
        }
    }
    if (sp.max_residual > 1e-10) throw NumericError("eigensolver residual above 1e-10");
    for (size_t k = 1; k < n; ++k) sp.mu = std::max(sp.mu, std::abs(sp.eigenvalues[k]));
    double tr = 0;
    for (size_t i = 0; i < n; ++i) tr += 1.0 / to_double(c[i]);
    sp.pi.resize(n);
    for (size_t i = 0; i < n; ++i) sp.pi[i] = 1.0 / (to_double(c[i]) * tr);
    return sp;
}

template <class S>
FlockSpectrum spectrum(const FlockNetwork<S>& g, const ConfidencePolicy<S>& policy) {
    TransitionMatrix<S> tm = transition(g, policy);
    return spectrum(tm.p, tm.c);
}

// Eigenvalues of a general (non-reversible) square matrix, largest modulus
// first.
inline std::vector<std::complex<double>> general_eigenvalues(const Mat<double>& a) {
    size_t n = a.rows();
    if (a.cols() != n) throw DimError("eigenvalues need a square matrix");
    Eigen::MatrixXd em(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) em(i, j) = a(i, j);
    Eigen::EigenSolver<Eigen::MatrixXd> solver(em);
    if (solver.info() != Eigen::Success) throw NumericError("eigensolver failed to converge");
    std::vector<std::complex<double>> out(n);
    for (size_t k = 0; k < n; ++k) out[k] = solver.eigenvalues()(k);
    std::sort(out.begin(), out.end(),
              [](auto a, auto b) { return std::abs(a) > std::abs(b); });
    return out;
}

// Ergodicity coefficients: tau_p is the l_p diameter of the convex hull of
// the rows (halved for p = 1). For row-stochastic input tau1 reduces to the
// classic 1 - min-overlap form.
template <class S>
S tau1(const Mat<S>& a) {
    size_t rows = a.rows(), cols = a.cols();
    bool stochastic = true;
    for (size_t i = 0; i < rows && stochastic; ++i) {
        for (size_t j = 0; j < cols; ++j)
            if (a(i, j) < S(0)) stochastic = false;
        if constexpr (field_traits<S>::exact) {
            if (a.row_sum(i) != S(1)) stochastic = false;
        } else {
            if (abs_val(a.row_sum(i) - S(1)) > S(1e-12L)) stochastic = false;
        }
    }
    S worst(0);
    bool first = true;
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = i + 1; j < rows; ++j) {
            if (stochastic) {
                S overlap(0);
                for (size_t k = 0; k < cols; ++k)
                    overlap += std::min(a(i, k), a(j, k));
                S v = S(1) - overlap;
                if (first || v > worst) worst = v, first = false;
            } else {
                S l1(0);
                for (size_t k = 0; k < cols; ++k) l1 += abs_val(a(i, k) - a(j, k));
                S v = l1 / S(2);
                if (first || v > worst) worst = v, first = false;
            }
        }
    return worst;
}

template <class S>
S tau2_squared(const Mat<S>& a) {
    S worst(0);
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t j = i + 1; j < a.rows(); ++j) {
            S d2(0);
            for (size_t k = 0; k < a.cols(); ++k) {
                S d = a(i, k) - a(j, k);
                d2 += d * d;
            }
            if (d2 > worst) worst = d2;
        }
    return worst;
}

template <class S>
double tau2(const Mat<S>& a) {
    return std::sqrt(to_double(tau2_squared(a)));
}

template <class S>
struct ErgodicityCoeffs {
    S tau1;
    S tau2_sq;
    double tau2;
};

template <class S>
ErgodicityCoeffs<S> ergodicity(const Mat<S>& a) {
    return {tau1(a), tau2_squared(a), tau2(a)};
}

// Fundamental matrix Gamma: the unique solution of
//   Gamma (I - P) = I - 1 pi^T,  Gamma 1 = 0,
// computed by replacing the last column of (I - P) with the all-ones vector
// and the last column of (I - 1 pi^T) with zero, then inverting.
template <class S>
Mat<S> gamma(const Mat<S>& p, const Vec<S>& pi) {
    size_t n = p.rows();
    if (p.cols() != n || pi.size() != n) throw DimError("gamma shape mismatch");
    Mat<S> k(n, n), r(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            k(i, j) = (j + 1 == n) ? S(1) : (i == j ? S(1) : S(0)) - p(i, j);
            r(i, j) = (j + 1 == n) ? S(0) : (i == j ? S(1) : S(0)) - pi[j];
        }
    return solve_linear(k.transpose(), r.transpose()).transpose();
}

// Mass center of positions or velocities: one weighted column average per
// space dimension.
template <class S>
Vec<S> mass_center(const Mat<S>& a, const Vec<S>& pi) {
    if (a.rows() != pi.size()) throw DimError("mass_center length mismatch");
    Vec<S> m(a.cols());
    for (size_t i = 0; i < a.rows(); ++i)
        for (size_t k = 0; k < a.cols(); ++k) m[k] += pi[i] * a(i, k);
    return m;
}

template <class S>
struct LimitConfiguration {
    Mat<S> xr;     // n x d relative limit positions
    Vec<S> drift;  // d-vector, velocity of the mass center
};

template <class S>
LimitConfiguration<S> limit_configuration(const Mat<S>& x0, const Mat<S>& v1, const Mat<S>& p,
                                          const Vec<S>& pi) {
    if (x0.rows() != p.rows() || v1.rows() != p.rows() || x0.cols() != v1.cols())
        throw DimError("limit_configuration shape mismatch");
    Mat<S> g = gamma(p, pi);
    Vec<S> mx = mass_center(x0, pi);
    LimitConfiguration<S> out;
    out.xr = g * v1;
    for (size_t i = 0; i < x0.rows(); ++i)
        for (size_t k = 0; k < x0.cols(); ++k) out.xr(i, k) += x0(i, k) - mx[k];
    out.drift = mass_center(v1, pi);
    return out;
}

template <class S>
S lyapunov_variance(const Vec<S>& xi, const Vec<S>& pi) {
    if (xi.size() != pi.size()) throw DimError("variance length mismatch");
    S mean(0);
    for (size_t i = 0; i < xi.size(); ++i) mean += pi[i] * xi[i];
    S var(0);
    for (size_t i = 0; i < xi.size(); ++i) {
        S d = xi[i] - mean;
        var += pi[i] * d * d;
    }
    return var;
}

struct ContractionReport {
    double var_before = 0;
    double var_after = 0;
    double mu = 0;
    bool ok = false;
};

// var(P xi) <= mu^2 var(xi), checked with a small additive tolerance to
// absorb the floating-point mu.
template <class S>
ContractionReport check_contraction(const Mat<S>& p, const Vec<S>& pi, const Vec<S>& xi,
                                    double tol = 1e-12) {
    std::vector<S> c(pi.size());
    for (size_t i = 0; i < pi.size(); ++i) {
        if (!(pi[i] > S(0))) throw DomainError("pi must be positive");
        c[i] = S(1) / pi[i];
    }
    FlockSpectrum sp = spectrum(p, c);
    ContractionReport rep;
    rep.mu = sp.mu;
    rep.var_before = to_double(lyapunov_variance(xi, pi));
    rep.var_after = to_double(lyapunov_variance(p * xi, pi));
    rep.ok = rep.var_after <= rep.mu * rep.mu * rep.var_before + tol;
    return rep;
}

// Closed-form spectrum of the lazy walk on a path of 2^j birds (the walk
// keeps 1/3 and splits 2/3 among neighbors; endpoints send the whole 2/3
// inward). Obtained by folding the cycle of length 2(2^j - 1):
//   lambda_k = 1/3 + (2/3) cos(pi (k-1) / N),  N = 2^j - 1,
//   u_k[i]   = cos(pi (k-1) i / N),            i = 0..2^j-1,
// and P^s = 1 pi^T + sum_{k>=2} (eps_k / N) lambda_k^s u_k (u_k - z_k/2)^T
// with eps_k = 2 except eps_{2^j} = 1 and z_k = (1, 0, ..., 0, (-1)^{k-1}).
struct PathSpectrum {
    size_t m = 0;
    std::vector<double> lambda;
    Mat<double> u;   // row k-1: u_k
    Vec<double> pi;
    Mat<double> p_power;  // P_j^theta reconstructed from the closed form
};

inline PathSpectrum path_spectrum(int j, long theta) {
    if (j < 1 || j > 15) throw DomainError("path height out of range");
    if (theta < 0) throw DomainError("exponent must be nonnegative");
    size_t m = size_t(1) << j;
    double nn = static_cast<double>(m - 1);
    PathSpectrum ps;
    ps.m = m;
    ps.lambda.resize(m);
    ps.u = Mat<double>(m, m);
    ps.pi = Vec<double>(m);
    for (size_t i = 0; i < m; ++i) ps.pi[i] = (i == 0 || i + 1 == m) ? 0.5 / nn : 1.0 / nn;
    for (size_t k = 0; k < m; ++k) {
        double phase = std::numbers::pi * static_cast<double>(k) / nn;
        ps.lambda[k] = 1.0 / 3.0 + (2.0 / 3.0) * std::cos(phase);
        for (size_t i = 0; i < m; ++i) ps.u(k, i) = std::cos(phase * static_cast<double>(i));
    }
    ps.p_power = Mat<double>(m, m);
    for (size_t i = 0; i < m; ++i)
        for (size_t l = 0; l < m; ++l) ps.p_power(i, l) = ps.pi[l];
    for (size_t k = 1; k < m; ++k) {
        double eps = (k + 1 < m) ? 2.0 : 1.0;
        double scale = eps / nn * std::pow(ps.lambda[k], static_cast<double>(theta));
        double zsign = (k % 2 == 0) ? 1.0 : -1.0;  // last entry of z_k is (-1)^k
        for (size_t i = 0; i < m; ++i)
            for (size_t l = 0; l < m; ++l) {
                double w = ps.u(k, l);
                if (l == 0) w -= 0.5;
                if (l + 1 == m) w -= 0.5 * zsign;
                ps.p_power(i, l) += scale * ps.u(k, i) * w;
            }
    }
    return ps;
}

}  // namespace flocksim
