#pragma once

// Dense row-major vectors and matrices over a pluggable scalar, plus the
// bit-size bookkeeping for vectors of rationals written over one common
// denominator. Access is always bounds-checked; a bad index throws instead of
// reading garbage.

#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include "flocksim/scalar.hpp"

namespace flocksim {

template <class S>
class Vec {
  public:
    Vec() = default;
    explicit Vec(size_t n, const S& fill = S(0)) : a_(n, fill) {}
    Vec(std::initializer_list<S> xs) : a_(xs) {}

    size_t size() const { return a_.size(); }
    S& operator[](size_t i) {
        if (i >= a_.size()) throw DimError("vector index out of range");
        return a_[i];
    }
    const S& operator[](size_t i) const {
        if (i >= a_.size()) throw DimError("vector index out of range");
        return a_[i];
    }
    void push_back(S v) { a_.push_back(std::move(v)); }
    auto begin() { return a_.begin(); }
    auto end() { return a_.end(); }
    auto begin() const { return a_.begin(); }
    auto end() const { return a_.end(); }
    bool operator==(const Vec&) const = default;

  private:
    std::vector<S> a_;
};

template <class S>
class Mat {
  public:
    Mat() : rows_(0), cols_(0) {}
    Mat(size_t rows, size_t cols, const S& fill = S(0))
        : rows_(rows), cols_(cols), a_(rows * cols, fill) {}
    Mat(std::initializer_list<std::initializer_list<S>> rows) {
        rows_ = rows.size();
        cols_ = rows_ ? rows.begin()->size() : 0;
        for (auto& r : rows) {
            if (r.size() != cols_) throw DimError("ragged matrix literal");
            for (auto& v : r) a_.push_back(v);
        }
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }

    S& operator()(size_t i, size_t j) {
        if (i >= rows_ || j >= cols_) throw DimError("matrix index out of range");
        return a_[i * cols_ + j];
    }
    const S& operator()(size_t i, size_t j) const {
        if (i >= rows_ || j >= cols_) throw DimError("matrix index out of range");
        return a_[i * cols_ + j];
    }

    static Mat identity(size_t n) {
        Mat m(n, n);
        for (size_t i = 0; i < n; ++i) m(i, i) = S(1);
        return m;
    }

    Mat operator*(const Mat& o) const {
        if (cols_ != o.rows_) throw DimError("matrix product shape mismatch");
        Mat r(rows_, o.cols_);
        for (size_t i = 0; i < rows_; ++i)
            for (size_t k = 0; k < cols_; ++k) {
                const S& v = a_[i * cols_ + k];
                if (v == S(0)) continue;
                for (size_t j = 0; j < o.cols_; ++j) r(i, j) += v * o(k, j);
            }
        return r;
    }
    Vec<S> operator*(const Vec<S>& x) const {
        if (cols_ != x.size()) throw DimError("matrix-vector shape mismatch");
        Vec<S> r(rows_);
        for (size_t i = 0; i < rows_; ++i)
            for (size_t j = 0; j < cols_; ++j) r[i] += a_[i * cols_ + j] * x[j];
        return r;
    }
    Mat operator+(const Mat& o) const {
        check_same_shape(o);
        Mat r = *this;
        for (size_t i = 0; i < a_.size(); ++i) r.a_[i] += o.a_[i];
        return r;
    }
    Mat operator-(const Mat& o) const {
        check_same_shape(o);
        Mat r = *this;
        for (size_t i = 0; i < a_.size(); ++i) r.a_[i] -= o.a_[i];
        return r;
    }
    Mat scaled(const S& v) const {
        Mat r = *this;
        for (auto& e : r.a_) e *= v;
        return r;
    }
    Mat transpose() const {
        Mat r(cols_, rows_);
        for (size_t i = 0; i < rows_; ++i)
            for (size_t j = 0; j < cols_; ++j) r(j, i) = a_[i * cols_ + j];
        return r;
    }
    S row_sum(size_t i) const {
        S s(0);
        for (size_t j = 0; j < cols_; ++j) s += (*this)(i, j);
        return s;
    }
    S max_abs() const {
        S m(0);
        for (auto& v : a_)
            if (abs_val(v) > m) m = abs_val(v);
        return m;
    }
    bool operator==(const Mat&) const = default;

  private:
    void check_same_shape(const Mat& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) throw DimError("matrix shape mismatch");
    }
    size_t rows_, cols_;
    std::vector<S> a_;
};

template <class S>
Mat<S> mat_power(const Mat<S>& a, long s) {
    if (a.rows() != a.cols()) throw DimError("mat_power needs a square matrix");
    if (s < 0) throw DomainError("mat_power needs a nonnegative exponent");
    Mat<S> result = Mat<S>::identity(a.rows());
    Mat<S> base = a;
    while (s > 0) {
        if (s & 1) result = result * base;
        s >>= 1;
        if (s) base = base * base;
    }
    return result;
}

// Bit-size statistics of a rational vector rewritten over the least common
// denominator of its entries.
struct CDRationalStats {
    size_t denominator_bits = 0;
    size_t max_numerator_bits = 0;
    size_t entries = 0;
};

inline CDRationalStats cd_stats(const Vec<mpq_class>& v) {
    mpz_class den = 1;
    for (auto& e : v) mpz_lcm(den.get_mpz_t(), den.get_mpz_t(), e.get_den().get_mpz_t());
    CDRationalStats st;
    st.entries = v.size();
    st.denominator_bits = bit_size(den);
    for (auto& e : v) {
        mpz_class scale = den / e.get_den();
        mpz_class num = e.get_num() * scale;
        st.max_numerator_bits = std::max(st.max_numerator_bits, bit_size(abs(num)));
    }
    return st;
}

inline CDRationalStats cd_stats(const Vec<long double>&) {
    throw ModeError("cd_stats needs Exact entries");
}

template <class S>
CDRationalStats cd_stats(const Mat<S>& m) {
    Vec<S> flat;
    for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    return cd_stats(flat);
}

// Gaussian elimination for A X = B. Exact mode picks the pivot with the
// smallest combined numerator/denominator bit size (keeps intermediates
// balanced); Approx mode picks the largest magnitude.
template <class S>
Mat<S> solve_linear(Mat<S> a, Mat<S> b) {
    if (a.rows() != a.cols()) throw DimError("solve_linear needs a square matrix");
    if (a.rows() != b.rows()) throw DimError("solve_linear shape mismatch");
    size_t n = a.rows(), w = b.cols();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = n;
        if constexpr (field_traits<S>::exact) {
            size_t best_bits = 0;
            for (size_t r = col; r < n; ++r) {
                if (a(r, col) == 0) continue;
                size_t bits = bit_size(a(r, col).get_num()) + bit_size(a(r, col).get_den());
                if (pivot == n || bits < best_bits) pivot = r, best_bits = bits;
            }
        } else {
            S best(0);
            for (size_t r = col; r < n; ++r)
                if (abs_val(a(r, col)) > best) pivot = r, best = abs_val(a(r, col));
        }
        if (pivot == n) throw NumericError("singular matrix in solve_linear");
        if (pivot != col) {
            for (size_t j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
            for (size_t j = 0; j < w; ++j) std::swap(b(col, j), b(pivot, j));
        }
        S inv = S(1) / a(col, col);
        for (size_t j = col; j < n; ++j) a(col, j) *= inv;
        for (size_t j = 0; j < w; ++j) b(col, j) *= inv;
        for (size_t r = 0; r < n; ++r) {
            if (r == col || a(r, col) == 0) continue;
            S f = a(r, col);
            for (size_t j = col; j < n; ++j) a(r, j) -= f * a(col, j);
            for (size_t j = 0; j < w; ++j) b(r, j) -= f * b(col, j);
        }
    }
    return b;
}

}  // namespace flocksim
