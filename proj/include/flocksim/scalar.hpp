#pragma once

// Number-field layer. Two scalar modes are supported:
//   Exact  = mpq_class (arbitrary-precision rationals, always in lowest terms)
//   Approx = long double (64-bit mantissa on x86)
// Everything downstream is templated over the scalar, so a simulation can be
// replayed bit-exactly in Exact mode or cheaply in Approx mode.

#include <gmpxx.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace flocksim {

using Exact = mpq_class;
using Approx = long double;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DimError : Error {
    using Error::Error;
};
struct ModeError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct EventError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct BudgetError : Error {
    using Error::Error;
};
struct DegenerateError : Error {
    using Error::Error;
};

template <class S>
struct field_traits;

template <>
struct field_traits<mpq_class> {
    static constexpr bool exact = true;
    static mpq_class from_fraction(long num, long den) {
        if (den == 0) throw DomainError("zero denominator");
        mpq_class r(num, den);
        r.canonicalize();
        return r;
    }
    static double to_double(const mpq_class& v) { return v.get_d(); }
};

template <>
struct field_traits<long double> {
    static constexpr bool exact = false;
    static long double from_fraction(long num, long den) {
        if (den == 0) throw DomainError("zero denominator");
        return static_cast<long double>(num) / static_cast<long double>(den);
    }
    static double to_double(long double v) { return static_cast<double>(v); }
};

template <class S>
S rat(long num, long den = 1) {
    return field_traits<S>::from_fraction(num, den);
}

inline double to_double(const mpq_class& v) { return v.get_d(); }
inline double to_double(long double v) { return static_cast<double>(v); }
inline double to_double(double v) { return v; }

inline mpq_class abs_val(const mpq_class& v) { return v < 0 ? mpq_class(-v) : v; }
inline long double abs_val(long double v) { return fabsl(v); }

// "p/q" literals: optional sign, decimal integers, "/q" part optional.
inline mpq_class parse_exact_rational(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!isspace(static_cast<unsigned char>(c))) s += c;
    if (s.empty()) throw ParseError("empty rational literal");
    auto slash = s.find('/');
    std::string num = slash == std::string::npos ? s : s.substr(0, slash);
    std::string den = slash == std::string::npos ? "1" : s.substr(slash + 1);
    auto check = [&](const std::string& part, bool sign_ok) {
        if (part.empty()) throw ParseError("malformed rational '" + text + "'");
        size_t i = (sign_ok && (part[0] == '-' || part[0] == '+')) ? 1 : 0;
        if (i == part.size()) throw ParseError("malformed rational '" + text + "'");
        for (; i < part.size(); ++i)
            if (!isdigit(static_cast<unsigned char>(part[i])))
                throw ParseError("malformed rational '" + text + "'");
    };
    check(num, true);
    check(den, true);
    if (num[0] == '+') num.erase(0, 1);
    if (den[0] == '+') den.erase(0, 1);
    mpq_class r;
    if (mpq_set_str(r.get_mpq_t(), (num + "/" + den).c_str(), 10) != 0)
        throw ParseError("malformed rational '" + text + "'");
    if (r.get_den() == 0) throw ParseError("zero denominator in '" + text + "'");
    r.canonicalize();
    return r;
}

// Rational to long double without losing the 64-bit mantissa: split the value
// into a double head plus a double correction.
inline long double rational_to_long_double(const mpq_class& q) {
    mpf_class f(q, 160);
    double hi = f.get_d();
    mpf_class rem = f - hi;
    return static_cast<long double>(hi) + static_cast<long double>(rem.get_d());
}

// Exact mode insists on integer or p/q forms; Approx additionally reads the
// decimal and scientific forms its own trace writer emits.
template <class S>
S parse_rational(const std::string& text) {
    if constexpr (field_traits<S>::exact) {
        return parse_exact_rational(text);
    } else {
        std::string s;
        for (char ch : text)
            if (!isspace(static_cast<unsigned char>(ch))) s += ch;
        if (s.find_first_of(".eE") == std::string::npos)
            return static_cast<S>(rational_to_long_double(parse_exact_rational(s)));
        char* end = nullptr;
        long double v = strtold(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size())
            throw ParseError("malformed number '" + text + "'");
        return v;
    }
}

inline std::string format_rational(const mpq_class& v) { return v.get_str(); }
inline std::string format_rational(long double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.21Lg", v);
    return buf;
}

// Bit length of |z|; 0 maps to 0 (mpz_sizeinbase would report 1).
inline size_t bit_size(const mpz_class& z) {
    if (z == 0) return 0;
    return mpz_sizeinbase(z.get_mpz_t(), 2);
}

template <class S>
S pow_int(const S& base, long e) {
    if constexpr (field_traits<S>::exact) {
        if (e == 0) return S(1);
        bool neg = e < 0;
        unsigned long k = neg ? static_cast<unsigned long>(-e) : static_cast<unsigned long>(e);
        mpz_class num, den;
        mpz_pow_ui(num.get_mpz_t(), base.get_num().get_mpz_t(), k);
        mpz_pow_ui(den.get_mpz_t(), base.get_den().get_mpz_t(), k);
        if (neg) {
            if (num == 0) throw DomainError("zero base with negative exponent");
            std::swap(num, den);
        }
        mpq_class r(num, den);
        r.canonicalize();
        return r;
    } else {
        return powl(base, static_cast<long double>(e));
    }
}

// Threshold predicates on square roots of nonnegative rationals. In Exact mode
// these decide the comparisons with rational arithmetic only; in Approx mode
// they evaluate the square roots directly.

// |sqrt(a) - sqrt(b)| < eps, for a, b >= 0 and eps > 0.
template <class S>
bool abs_sqrt_diff_lt(const S& a, const S& b, const S& eps) {
    if constexpr (field_traits<S>::exact) {
        S t = a + b - eps * eps;
        if (t < 0) return true;
        return t * t < 4 * a * b;
    } else {
        return fabsl(sqrtl(a) - sqrtl(b)) < eps;
    }
}

// |sqrt(a) - sqrt(b)| <= sqrt(c), for a, b, c >= 0. Collinear motion makes
// this an equality, so the Approx branch needs slack for accumulated
// roundoff; anything below that scale says nothing about the trajectory.
template <class S>
bool abs_sqrt_diff_leq_sqrt(const S& a, const S& b, const S& c) {
    if constexpr (field_traits<S>::exact) {
        S t = a + b - c;
        if (t <= 0) return true;
        return t * t <= 4 * a * b;
    } else {
        long double slack = 4e-13L * (1.0L + sqrtl(a) + sqrtl(b));
        return fabsl(sqrtl(a) - sqrtl(b)) <= sqrtl(c) + slack;
    }
}

// sqrt(a) > 1 + sqrt(eps), for a >= 0, eps > 0 (the snap-distance test).
template <class S>
bool sqrt_gt_one_plus_sqrt(const S& a, const S& eps) {
    if constexpr (field_traits<S>::exact) {
        S t = a - 1 - eps;
        if (t <= 0) return false;
        return t * t > 4 * eps;
    } else {
        return sqrtl(a) > 1 + sqrtl(eps);
    }
}

}  // namespace flocksim
