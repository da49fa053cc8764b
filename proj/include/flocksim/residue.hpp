#pragma once

// Residue-clearing toy: integer polynomials under the combine
//   p (+) q  =  p + q + (p - q) * x^(2^h),   h = lowest degree of p - q,
// which mimics how merging two flocks parks their disagreement in a mode
// that takes exponentially long to surface. Iterating the combine over a
// balanced tree of +-x leaves produces a single term whose degree towers:
// 1, 3, 11, 2059, 2059 + 2^2059, ... Degrees are kept as big integers and a
// bit budget rejects shifts that would not fit in memory, before any
// attempt to build them.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "flocksim/scalar.hpp"

namespace flocksim {

inline constexpr long kResidueBudgetBits = 65536;

struct SparsePoly {
    std::map<mpz_class, mpz_class> terms;  // degree -> nonzero coefficient

    static SparsePoly monomial(const mpz_class& coeff, const mpz_class& degree) {
        if (degree < 0) throw DomainError("negative degree");
        SparsePoly p;
        if (coeff != 0) p.terms[degree] = coeff;
        return p;
    }

    bool is_zero() const { return terms.empty(); }

    const mpz_class& degree() const {
        if (is_zero()) throw DomainError("zero polynomial has no degree");
        return terms.rbegin()->first;
    }

    mpz_class coeff(const mpz_class& deg) const {
        auto it = terms.find(deg);
        return it == terms.end() ? mpz_class(0) : it->second;
    }

    mpz_class leading_coeff() const { return coeff(degree()); }

    size_t term_count() const { return terms.size(); }

    SparsePoly operator+(const SparsePoly& o) const {
        SparsePoly r = *this;
        for (auto& [d, c] : o.terms) {
            mpz_class& slot = r.terms[d];
            slot += c;
            if (slot == 0) r.terms.erase(d);
        }
        return r;
    }

    SparsePoly operator-() const {
        SparsePoly r = *this;
        for (auto& [d, c] : r.terms) c = -c;
        return r;
    }

    SparsePoly operator-(const SparsePoly& o) const { return *this + (-o); }

    // multiply by x^e
    SparsePoly shifted(const mpz_class& e) const {
        SparsePoly r;
        for (auto& [d, c] : terms) r.terms[d + e] = c;
        return r;
    }

    bool operator==(const SparsePoly& o) const { return terms == o.terms; }

    // Terms in ascending degree: "x^3 + 2*x^11 - 8*x^2059"; exponent 0 and 1
    // print as plain constants and "x".
    std::string to_text() const {
        if (is_zero()) return "0";
        std::ostringstream os;
        bool first = true;
        for (auto& [d, c] : terms) {
            mpz_class a = abs(c);
            if (first)
                os << (c < 0 ? "-" : "");
            else
                os << (c < 0 ? " - " : " + ");
            first = false;
            if (d == 0) {
                os << a.get_str();
                continue;
            }
            if (a != 1) os << a.get_str() << "*";
            os << "x";
            if (d != 1) os << "^" << d.get_str();
        }
        return os.str();
    }
};

// Lowest degree carrying a nonzero coefficient.
inline const mpz_class& low_degree(const SparsePoly& p) {
    if (p.is_zero()) throw DomainError("zero polynomial has no low degree");
    return p.terms.begin()->first;
}

// The combine. Equal arguments have no disagreement, so the shift term
// vanishes and the result is plain 2p. The shift exponent 2^h occupies h+1
// bits; the budget is checked before that integer is ever built.
inline SparsePoly oplus(const SparsePoly& p, const SparsePoly& q,
                        long budget_bits = kResidueBudgetBits) {
    SparsePoly sum = p + q;
    SparsePoly diff = p - q;
    if (diff.is_zero()) return sum;
    const mpz_class& h = low_degree(diff);
    if (h + 1 > budget_bits)
        throw BudgetError("combine shift needs " + mpz_class(h + 1).get_str() +
                          " bits, over the budget of " + std::to_string(budget_bits));
    mpz_class shift;
    mpz_ui_pow_ui(shift.get_mpz_t(), 2, h.get_ui());
    return sum + diff.shifted(shift);
}

// Closed form of the balanced +-x tree of 2^(k-1) leaves: a single term
// (-1)^(k-1) 2^(k-1) x^(d_k) with d_1 = 1 and d_{j+1} = d_j + 2^(d_j).
inline SparsePoly canonical_value(int k, long budget_bits = kResidueBudgetBits) {
    if (k < 1) throw DomainError("level must be >= 1");
    mpz_class d = 1;
    for (int j = 2; j <= k; ++j) {
        if (d + 1 > budget_bits)
            throw BudgetError("level " + std::to_string(k) + " degree needs " +
                              mpz_class(d + 1).get_str() + " bits, over the budget of " +
                              std::to_string(budget_bits));
        mpz_class step;
        mpz_ui_pow_ui(step.get_mpz_t(), 2, d.get_ui());
        d += step;
    }
    mpz_class coeff;
    mpz_ui_pow_ui(coeff.get_mpz_t(), 2, static_cast<unsigned long>(k - 1));
    if (k % 2 == 0) coeff = -coeff;
    return SparsePoly::monomial(coeff, d);
}

struct CombineTree {
    struct Node {
        int left = -1;
        int right = -1;
        int sign = 1;  // leaves only
        bool leaf() const { return left < 0; }
    };
    std::vector<Node> nodes;
    int root = -1;

    size_t leaf_count() const {
        size_t c = 0;
        for (auto& nd : nodes)
            if (nd.leaf()) ++c;
        return c;
    }

    std::string to_text() const { return root < 0 ? "" : text_of(root); }

  private:
    std::string text_of(int i) const {
        const Node& nd = nodes[static_cast<size_t>(i)];
        if (nd.leaf()) return nd.sign < 0 ? "-x" : "x";
        return "(" + text_of(nd.left) + " (+) " + text_of(nd.right) + ")";
    }
};

// Perfect tree of depth k-1 whose leaf under a given path carries sign
// (-1)^(number of left turns); combining it yields canonical_value(k).
inline CombineTree canonical_tree(int k) {
    if (k < 1) throw DomainError("level must be >= 1");
    CombineTree t;
    auto build = [&](auto&& self, int depth, int sign) -> int {
        CombineTree::Node nd;
        if (depth == 0) {
            nd.sign = sign;
            t.nodes.push_back(nd);
            return static_cast<int>(t.nodes.size()) - 1;
        }
        nd.left = self(self, depth - 1, -sign);
        nd.right = self(self, depth - 1, sign);
        t.nodes.push_back(nd);
        return static_cast<int>(t.nodes.size()) - 1;
    };
    t.root = build(build, k - 1, 1);
    return t;
}

// Post-order fold of the tree under the combine.
inline SparsePoly eval_tree(const CombineTree& t, long budget_bits = kResidueBudgetBits) {
    if (t.root < 0) throw DomainError("empty combine tree");
    auto eval = [&](auto&& self, int i) -> SparsePoly {
        const CombineTree::Node& nd = t.nodes[static_cast<size_t>(i)];
        if (nd.leaf()) return SparsePoly::monomial(nd.sign, 1);
        return oplus(self(self, nd.left), self(self, nd.right), budget_bits);
    };
    return eval(eval, t.root);
}

}  // namespace flocksim
