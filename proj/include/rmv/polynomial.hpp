#pragma once

// Multivariate polynomials in (t, x1, ..., xd) and a small expression parser.
//
// Grammar (whitespace ignored):
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*        division only by constants
//   unary  := ('-' | '+') unary | power
//   power  := atom ('^' nonneg-integer)?
//   atom   := number | 't' | 'x' | 'x'<k> | '(' expr ')'
// 'x' is an alias for x1. Variable index 0 is t, index k is x_k.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "vecmath.hpp"

namespace rmv {

class Polynomial {
public:
    using Exponents = std::vector<std::uint8_t>; // size nvars = dim + 1

    Polynomial() = default;
    explicit Polynomial(std::size_t dim) : dim_(dim) {}

    static Polynomial constant(std::size_t dim, double c) {
        Polynomial p(dim);
        if (c != 0.0) p.terms_[Exponents(dim + 1, 0)] = c;
        return p;
    }

    // var 0 is t, var k >= 1 is x_k.
    static Polynomial variable(std::size_t dim, std::size_t var) {
        if (var > dim) throw ConfigError("variable index out of range");
        Polynomial p(dim);
        Exponents e(dim + 1, 0);
        e[var] = 1;
        p.terms_[e] = 1.0;
        return p;
    }

    std::size_t dim() const { return dim_; }
    bool is_zero() const { return terms_.empty(); }
    const std::map<Exponents, double>& terms() const { return terms_; }

    int degree() const {
        int deg = 0;
        for (const auto& [e, c] : terms_) {
            int s = 0;
            for (std::size_t k = 1; k < e.size(); ++k) s += e[k];
            deg = std::max(deg, s);
        }
        return deg;
    }

    int degree_in_t() const {
        int deg = 0;
        for (const auto& [e, c] : terms_) deg = std::max(deg, static_cast<int>(e[0]));
        return deg;
    }

    bool depends_on_x() const {
        for (const auto& [e, c] : terms_)
            for (std::size_t k = 1; k < e.size(); ++k)
                if (e[k] != 0) return true;
        return false;
    }

    Polynomial& operator+=(const Polynomial& o) {
        check(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }
    Polynomial& operator-=(const Polynomial& o) {
        check(o);
        for (const auto& [e, c] : o.terms_) add_term(e, -c);
        return *this;
    }
    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        a.check(b);
        Polynomial r(a.dim_);
        for (const auto& [ea, ca] : a.terms_)
            for (const auto& [eb, cb] : b.terms_) {
                Exponents e(ea.size());
                for (std::size_t k = 0; k < e.size(); ++k) {
                    const int s = ea[k] + eb[k];
                    if (s > 255) throw ConfigError("polynomial exponent overflow");
                    e[k] = static_cast<std::uint8_t>(s);
                }
                r.add_term(e, ca * cb);
            }
        return r;
    }
    friend Polynomial operator*(double s, Polynomial p) {
        for (auto& [e, c] : p.terms_) c *= s;
        p.prune();
        return p;
    }

    Polynomial pow(unsigned n) const {
        Polynomial r = constant(dim_, 1.0);
        for (unsigned i = 0; i < n; ++i) r = r * *this;
        return r;
    }

    Polynomial derivative(std::size_t var) const {
        Polynomial r(dim_);
        for (const auto& [e, c] : terms_) {
            if (e[var] == 0) continue;
            Exponents ne = e;
            ne[var] -= 1;
            r.add_term(ne, c * e[var]);
        }
        return r;
    }

    double operator()(double t, std::span<const double> x) const {
        double s = 0.0;
        for (const auto& [e, c] : terms_) {
            double m = c * ipow(t, e[0]);
            for (std::size_t k = 1; k < e.size(); ++k) m *= ipow(x[k - 1], e[k]);
            s += m;
        }
        return s;
    }

    std::string to_string() const {
        if (terms_.empty()) return "0";
        std::ostringstream os;
        os.precision(17);
        bool first = true;
        for (const auto& [e, c] : terms_) {
            if (!first) os << " + ";
            first = false;
            os << "(" << c << ")";
            if (e[0]) os << "*t^" << int(e[0]);
            for (std::size_t k = 1; k < e.size(); ++k)
                if (e[k]) os << "*x" << k << "^" << int(e[k]);
        }
        return os.str();
    }

    static double ipow(double b, unsigned n) {
        double r = 1.0;
        while (n) {
            if (n & 1u) r *= b;
            b *= b;
            n >>= 1u;
        }
        return r;
    }

private:
    void check(const Polynomial& o) const {
        if (o.dim_ != dim_) throw DimensionError("polynomial dimension mismatch");
    }
    void add_term(const Exponents& e, double c) {
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) it->second += c;
        if (it->second == 0.0) terms_.erase(it);
    }
    void prune() {
        std::erase_if(terms_, [](const auto& kv) { return kv.second == 0.0; });
    }

    std::size_t dim_ = 0;
    std::map<Exponents, double> terms_;
};

// Flattened form for fast repeated evaluation.
class CompiledPolynomial {
public:
    CompiledPolynomial() = default;
    explicit CompiledPolynomial(const Polynomial& p) : nvars_(p.dim() + 1) {
        for (const auto& [e, c] : p.terms()) {
            coeffs_.push_back(c);
            exps_.insert(exps_.end(), e.begin(), e.end());
        }
    }
    double operator()(double t, std::span<const double> x) const {
        double s = 0.0;
        for (std::size_t i = 0; i < coeffs_.size(); ++i) {
            const std::uint8_t* e = &exps_[i * nvars_];
            double m = coeffs_[i];
            if (e[0]) m *= Polynomial::ipow(t, e[0]);
            for (std::size_t k = 1; k < nvars_; ++k)
                if (e[k]) m *= Polynomial::ipow(x[k - 1], e[k]);
            s += m;
        }
        return s;
    }

private:
    std::size_t nvars_ = 1;
    std::vector<double> coeffs_;
    std::vector<std::uint8_t> exps_;
};

namespace detail {

class PolyParser {
public:
    PolyParser(std::string_view src, std::size_t dim) : src_(src), dim_(dim) {}

    Polynomial parse() {
        Polynomial p = expr();
        skip();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("expression '" + std::string(src_) + "' at offset " + std::to_string(pos_) + ": " + msg);
    }
    void skip() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    Polynomial expr() {
        Polynomial p = term();
        for (;;) {
            if (accept('+')) p += term();
            else if (accept('-')) p -= term();
            else return p;
        }
    }
    Polynomial term() {
        Polynomial p = unary();
        for (;;) {
            if (accept('*')) {
                p = p * unary();
            } else if (accept('/')) {
                const Polynomial q = unary();
                if (q.is_zero()) fail("division by zero");
                if (q.degree() != 0 || q.degree_in_t() != 0) fail("division only by constants");
                p = (1.0 / q.terms().begin()->second) * p;
            } else {
                return p;
            }
        }
    }
    Polynomial unary() {
        if (accept('-')) return -1.0 * unary();
        if (accept('+')) return unary();
        return power();
    }
    Polynomial power() {
        Polynomial base = atom();
        if (accept('^')) {
            skip();
            const std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (start == pos_) fail("exponent must be a nonnegative integer");
            const int n = std::stoi(std::string(src_.substr(start, pos_ - start)));
            if (n > 32) fail("exponent too large");
            return base.pow(static_cast<unsigned>(n));
        }
        return base;
    }
    Polynomial atom() {
        skip();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Polynomial p = expr();
            if (!accept(')')) fail("expected ')'");
            return p;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = src_.data() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            return Polynomial::constant(dim_, v);
        }
        if (c == 't') {
            ++pos_;
            return Polynomial::variable(dim_, 0);
        }
        if (c == 'x') {
            ++pos_;
            std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            std::size_t k = 1;
            if (pos_ > start) k = std::stoul(std::string(src_.substr(start, pos_ - start)));
            if (k < 1 || k > dim_) fail("variable x" + std::to_string(k) + " outside dimension " + std::to_string(dim_));
            return Polynomial::variable(dim_, k);
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view src_;
    std::size_t dim_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Polynomial parse_polynomial(std::string_view src, std::size_t dim) {
    return detail::PolyParser(src, dim).parse();
}

} // namespace rmv
