#pragma once

// Empirical convolution (f * mu^N)(x_i) = (1/N) sum_j f(x_i - x_j).
//
// Two exact routes:
//  * pairwise: O(N^2) direct sum over block pairs (I <= J). Each f(x_i - x_j)
//    is evaluated once and scattered with opposite signs to rows i and j
//    (f is odd). Per-block partial sums are reduced over J in a fixed tree
//    order, so the result is bitwise independent of the worker count.
//  * moments: for polynomial kernels, f(y - z) expands into monomials of y
//    whose coefficients are central moments of the cloud. O(N * terms).

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "polynomial.hpp"
#include "vecmath.hpp"

namespace rmv {

// Single-particle direct sum in index order; the reference implementation.
inline Vector interaction_force(std::span<const double> positions, std::size_t n, std::size_t d,
                                const KernelField& f, std::size_t i) {
    if (i >= n) throw Error("interaction_force: particle index out of range");
    Vector acc(d, 0.0), u(d), fu(d);
    std::vector<double> terms(n);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t c = 0; c < d; ++c) u[c] = positions[i * d + c] - positions[j * d + c];
            f(u, fu);
            terms[j] = fu[k];
        }
        acc[k] = pairwise_sum(terms) / static_cast<double>(n);
    }
    return acc;
}

class PairwiseInteraction {
public:
    explicit PairwiseInteraction(std::size_t block = 64) : block_(block) {}

    void compute(const KernelField& f, std::span<const double> pos, std::size_t n, std::size_t d,
                 std::span<double> out, int workers) {
        const std::size_t bs = std::max(block_, (n + 63) / 64);
        const std::size_t nb = (n + bs - 1) / bs;
        partial_.assign(nb * n * d, 0.0);

        // Enumerate block pairs I <= J in a fixed order.
        std::vector<std::pair<std::size_t, std::size_t>> tasks;
        for (std::size_t I = 0; I < nb; ++I)
            for (std::size_t J = I; J < nb; ++J) tasks.emplace_back(I, J);

        Vector f0(d), zero(d, 0.0);
        f(zero, f0);

        parallel_for(tasks.size(), workers, [&](std::size_t t) {
            const auto [I, J] = tasks[t];
            Vector u(d), fu(d);
            const std::size_t i0 = I * bs, i1 = std::min(n, i0 + bs);
            const std::size_t j0 = J * bs, j1 = std::min(n, j0 + bs);
            double* rowI = &partial_[(J * n) * d]; // contributions of block J to rows in I
            double* rowJ = &partial_[(I * n) * d]; // contributions of block I to rows in J
            for (std::size_t i = i0; i < i1; ++i) {
                const std::size_t jstart = (I == J) ? i + 1 : j0;
                for (std::size_t j = jstart; j < j1; ++j) {
                    for (std::size_t c = 0; c < d; ++c) u[c] = pos[i * d + c] - pos[j * d + c];
                    f(u, fu);
                    for (std::size_t c = 0; c < d; ++c) {
                        rowI[i * d + c] += fu[c];
                        rowJ[j * d + c] -= fu[c];
                    }
                }
                if (I == J)
                    for (std::size_t c = 0; c < d; ++c) rowI[i * d + c] += f0[c];
            }
        });

        const double inv = 1.0 / static_cast<double>(n);
        parallel_for(n, workers, [&](std::size_t i) {
            std::vector<double> col(nb);
            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t J = 0; J < nb; ++J) col[J] = partial_[(J * n + i) * d + c];
                out[i * d + c] = pairwise_sum(col) * inv;
            }
        });
    }

private:
    std::size_t block_;
    std::vector<double> partial_;
};

// Moment expansion of a polynomial kernel around the cloud mean m:
//   (1/N) sum_j f(y - z_j),  y = x - m,  z_j = x_j - m
// = sum_beta c_beta y^beta,  c_beta = sum_{alpha >= beta} a_alpha
//   prod_k binom(alpha_k, beta_k) (-1)^{|alpha - beta|} M_{alpha - beta}.
class MomentExpansion {
public:
    MomentExpansion() = default;

    // kernel: one polynomial per output component, in x only.
    explicit MomentExpansion(const std::vector<Polynomial>& kernel) : dim_(kernel.empty() ? 0 : kernel[0].dim()) {
        for (const auto& p : kernel) {
            if (p.degree_in_t() != 0) throw ConfigError("moment expansion needs a time-independent kernel");
            Component comp;
            for (const auto& [e, c] : p.terms()) comp.terms.push_back({Multi(e.begin() + 1, e.end()), c});
            components_.push_back(std::move(comp));
        }
        for (std::size_t c = 0; c < components_.size(); ++c)
            for (const auto& t : components_[c].terms) enumerate_sub(c, t, 0, Multi(dim_, 0));
    }

    std::size_t dim() const { return dim_; }

    // Fit to a cloud of n points (row-major n x d).
    void fit(std::span<const double> pos, std::size_t n) {
        const std::size_t d = dim_;
        mean_.assign(d, 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            std::vector<double> col(n);
            for (std::size_t j = 0; j < n; ++j) col[j] = pos[j * d + k];
            mean_[k] = pairwise_sum(col) / static_cast<double>(n);
        }
        // Raw moments of centred points for every gamma needed.
        moments_.assign(gammas_.size(), 0.0);
        std::vector<double> vals(n);
        for (std::size_t g = 0; g < gammas_.size(); ++g) {
            for (std::size_t j = 0; j < n; ++j) {
                double m = 1.0;
                for (std::size_t k = 0; k < d; ++k)
                    if (gammas_[g][k]) m *= Polynomial::ipow(pos[j * d + k] - mean_[k], gammas_[g][k]);
                vals[j] = m;
            }
            moments_[g] = pairwise_sum(vals) / static_cast<double>(n);
        }
        for (auto& comp : components_) {
            comp.coeff.assign(comp.betas.size(), 0.0);
            for (const auto& c : comp.contribs) comp.coeff[c.beta] += c.weight * moments_[c.gamma];
        }
    }

    // Evaluate the fitted convolution at x.
    void evaluate(std::span<const double> x, std::span<double> out) const {
        const std::size_t d = dim_;
        double y[16];
        for (std::size_t k = 0; k < d; ++k) y[k] = x[k] - mean_[k];
        for (std::size_t c = 0; c < components_.size(); ++c) {
            const auto& comp = components_[c];
            double s = 0.0;
            for (std::size_t b = 0; b < comp.betas.size(); ++b) {
                double m = comp.coeff[b];
                for (std::size_t k = 0; k < d; ++k)
                    if (comp.betas[b][k]) m *= Polynomial::ipow(y[k], comp.betas[b][k]);
                s += m;
            }
            out[c] = s;
        }
    }

    const Vector& mean() const { return mean_; }

private:
    using Multi = std::vector<std::uint8_t>;
    struct Term {
        Multi alpha;
        double coeff;
    };
    struct Contribution {
        std::size_t beta, gamma;
        double weight;
    };
    struct Component {
        std::vector<Term> terms;
        std::vector<Multi> betas;
        std::vector<Contribution> contribs;
        std::vector<double> coeff;
    };

    static double binom(unsigned n, unsigned k) {
        double r = 1.0;
        for (unsigned i = 1; i <= k; ++i) r = r * (n - k + i) / i;
        return r;
    }

    std::size_t index_of(std::vector<Multi>& list, const Multi& m) {
        auto it = std::find(list.begin(), list.end(), m);
        if (it != list.end()) return static_cast<std::size_t>(it - list.begin());
        list.push_back(m);
        return list.size() - 1;
    }

    // Enumerate beta <= alpha for one term of component c.
    void enumerate_sub(std::size_t c, const Term& term, std::size_t k, Multi beta) {
        if (k == dim_) {
            Multi gamma(dim_);
            double w = term.coeff;
            int parity = 0;
            for (std::size_t i = 0; i < dim_; ++i) {
                gamma[i] = static_cast<std::uint8_t>(term.alpha[i] - beta[i]);
                w *= binom(term.alpha[i], beta[i]);
                parity += gamma[i];
            }
            if (parity % 2) w = -w;
            auto& comp = components_[c];
            const std::size_t bi = index_of(comp.betas, beta);
            const std::size_t gi = index_of(gammas_, gamma);
            comp.contribs.push_back({bi, gi, w});
            return;
        }
        for (unsigned b = 0; b <= term.alpha[k]; ++b) {
            beta[k] = static_cast<std::uint8_t>(b);
            enumerate_sub(c, term, k + 1, beta);
        }
    }

    std::size_t dim_ = 0;
    std::vector<Component> components_;
    std::vector<Multi> gammas_;
    std::vector<double> moments_;
    Vector mean_;
};

enum class InteractionMethod { automatic, pairwise, moments };

inline const char* to_string(InteractionMethod m) {
    switch (m) {
    case InteractionMethod::automatic: return "automatic";
    case InteractionMethod::pairwise: return "pairwise";
    case InteractionMethod::moments: return "moments";
    }
    return "?";
}

// Evaluates (f * mu^N) at every particle with the selected route.
class InteractionEvaluator {
public:
    InteractionEvaluator(const ModelCoefficients& m, InteractionMethod method) : kernel_(m.kernel), dim_(m.dim) {
        use_moments_ = false;
        if (method != InteractionMethod::pairwise && m.polynomial) {
            expansion_ = MomentExpansion(m.polynomial->kernel);
            use_moments_ = true;
        } else if (method == InteractionMethod::moments) {
            throw ConfigError("moment interaction requires a polynomial kernel");
        }
        if (m.dim > 16) use_moments_ = false;
    }

    bool uses_moments() const { return use_moments_; }

    void compute(std::span<const double> pos, std::size_t n, std::span<double> out, int workers) {
        if (use_moments_) {
            expansion_.fit(pos, n);
            const std::size_t d = dim_;
            parallel_for(n, workers, [&](std::size_t i) {
                expansion_.evaluate(pos.subspan(i * d, d), out.subspan(i * d, d));
            });
        } else {
            pairwise_.compute(kernel_, pos, n, dim_, out, workers);
        }
    }

private:
    KernelField kernel_;
    std::size_t dim_;
    bool use_moments_ = false;
    MomentExpansion expansion_;
    PairwiseInteraction pairwise_;
};

} // namespace rmv
