#include "sfnn/elastic_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sfnn {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double dot_pair(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double dot_self(const double* a, std::size_t n) { return dot_pair(a, a, n); }

void validate_inputs(const Tensor& x, const Tensor& P, const ElasticNetParams& params) {
    if (P.rank() != 2) throw DimensionError("elastic_net: dictionary must be a matrix, got " + shape_to_string(P.dims()));
    if (x.size() != P.rows()) {
        throw DimensionError("elastic_net: input length " + std::to_string(x.size()) +
                             " does not match dictionary rows " + std::to_string(P.rows()));
    }
    if (!(params.lambda2 > 0.0)) throw NumericalError("elastic_net: lambda2 must be positive");
    if (params.lambda1 < 0.0) throw NumericalError("elastic_net: lambda1 must be nonnegative");
    check_finite(x, "elastic_net input");
}

SparseCode finalize(Tensor alpha, const Tensor& x, const Tensor& Pt) {
    SparseCode code;
    const std::size_t K = alpha.size();
    Tensor r = x;
    for (std::size_t j = 0; j < K; ++j) {
        const double aj = alpha[j];
        if (aj == 0.0) continue;
        const double* atom = Pt.data() + j * Pt.cols();
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= aj * atom[i];
        code.support.push_back(j);
    }
    code.alpha = std::move(alpha);
    code.residual = std::move(r);
    return code;
}

/// Incrementally grown Cholesky factor of P_A^T P_A + lambda2 I in active
/// insertion order. Rows are appended as atoms activate; a drop refactors.
class ActiveCholesky {
public:
    explicit ActiveCholesky(double lambda2) : lambda2_(lambda2) {}

    std::size_t size() const { return n_; }

    // gram_row holds P_a^T P_j for the existing active atoms a, diag = P_j^T P_j.
    void append(const std::vector<double>& gram_row, double diag) {
        row_.assign(n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = gram_row[i];
            for (std::size_t p = 0; p < i; ++p) s -= at(i, p) * row_[p];
            row_[i] = s / at(i, i);
        }
        double d = diag + lambda2_;
        for (std::size_t p = 0; p < n_; ++p) d -= row_[p] * row_[p];
        if (!(d > 0.0)) {
            throw NumericalError("elastic_net: active-set Gram lost positive definiteness (pivot " +
                                 std::to_string(d) + ")");
        }
        grow();
        for (std::size_t p = 0; p < n_ - 1; ++p) at(n_ - 1, p) = row_[p];
        at(n_ - 1, n_ - 1) = std::sqrt(d);
    }

    std::vector<double> solve(const std::vector<double>& b) const {
        std::vector<double> y(n_), z(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double s = b[i];
            for (std::size_t p = 0; p < i; ++p) s -= at(i, p) * y[p];
            y[i] = s / at(i, i);
        }
        for (std::size_t ii = n_; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t p = ii + 1; p < n_; ++p) s -= at(p, ii) * z[p];
            z[ii] = s / at(ii, ii);
        }
        return z;
    }

    void reset() {
        n_ = 0;
        L_.clear();
        cap_ = 0;
    }

private:
    double at(std::size_t r, std::size_t c) const { return L_[r * cap_ + c]; }
    double& at(std::size_t r, std::size_t c) { return L_[r * cap_ + c]; }

    void grow() {
        if (n_ + 1 > cap_) {
            std::size_t new_cap = std::max<std::size_t>(8, cap_ * 2);
            std::vector<double> next(new_cap * new_cap, 0.0);
            for (std::size_t r = 0; r < n_; ++r)
                for (std::size_t c = 0; c <= r; ++c) next[r * new_cap + c] = L_[r * cap_ + c];
            L_ = std::move(next);
            cap_ = new_cap;
        }
        ++n_;
    }

    double lambda2_;
    std::size_t n_ = 0;
    std::size_t cap_ = 0;
    std::vector<double> L_; // row-major lower triangle, cap_ x cap_
    std::vector<double> row_;
};

} // namespace

double objective(const Tensor& alpha, const Tensor& x, const Tensor& P, const ElasticNetParams& params) {
    Tensor r = x;
    axpy(-1.0, matvec(P, alpha), r);
    return 0.5 * dot(r, r) + params.lambda1 * norm1(alpha) + 0.5 * params.lambda2 * dot(alpha, alpha);
}

double kkt_residual(const SparseCode& code, const Tensor& x, const Tensor& P,
                    const ElasticNetParams& params) {
    if (code.alpha.size() != P.cols()) {
        throw DimensionError("kkt_residual: code length " + std::to_string(code.alpha.size()) +
                             " does not match dictionary atoms " + std::to_string(P.cols()));
    }
    Tensor r = x;
    axpy(-1.0, matvec(P, code.alpha), r);
    Tensor c = matvec_t(P, r);
    double worst = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        const double aj = code.alpha[j];
        double v;
        if (aj != 0.0) {
            const double sign = aj > 0.0 ? 1.0 : -1.0;
            v = std::abs(c[j] - params.lambda1 * sign - params.lambda2 * aj);
        } else {
            v = std::max(0.0, std::abs(c[j]) - params.lambda1);
        }
        worst = std::max(worst, v);
    }
    return worst;
}

SparseCode solve(const Tensor& x, const Tensor& P, const ElasticNetParams& params) {
    return solve(x, P, transpose(P), params);
}

SparseCode solve(const Tensor& x, const Tensor& P, const Tensor& Pt, const ElasticNetParams& params) {
    validate_inputs(x, P, params);
    if (Pt.rank() != 2 || Pt.rows() != P.cols() || Pt.cols() != P.rows()) {
        throw DimensionError("elastic_net: transpose shape " + shape_to_string(Pt.dims()) +
                             " does not match dictionary " + shape_to_string(P.dims()));
    }

    const std::size_t m = P.rows();
    const std::size_t K = P.cols();
    const std::size_t cap = params.active_cap(K);
    const double lambda1 = params.lambda1;
    const double lambda2 = params.lambda2;
    const std::size_t max_events =
        params.max_iterations ? params.max_iterations : 16 * K + 64;

    const auto atom = [&](std::size_t j) { return Pt.data() + j * m; };

    Tensor alpha({K});
    std::vector<std::size_t> active;       // insertion order
    std::vector<char> is_active(K, 0);
    ActiveCholesky chol(lambda2);

    std::vector<double> r(m), c(K), d, w(K), gram_row;

    // An atom whose coefficient just crossed zero sits exactly at the path
    // level, but its correlation falls strictly faster than the level from
    // then on; banning it from re-entry until the next positive step is all
    // the anti-cycling the path needs.
    std::size_t banned = K;

    enum class Event { target, add, drop };

    for (std::size_t event_count = 0;; ++event_count) {
        if (event_count > max_events) {
            SparseCode best = finalize(alpha, x, Pt);
            const double kkt = kkt_residual(best, x, P, params);
            throw SolverError("elastic_net: active-set iteration cap (" + std::to_string(max_events) +
                                  ") exceeded, best KKT residual " + std::to_string(kkt),
                              std::move(best), kkt);
        }

        // Fresh residual and correlations each event to keep the path drift-free.
        for (std::size_t i = 0; i < m; ++i) r[i] = x[i];
        for (std::size_t j : active) {
            const double aj = alpha[j];
            if (aj == 0.0) continue;
            const double* pj = atom(j);
            for (std::size_t i = 0; i < m; ++i) r[i] -= aj * pj[i];
        }
        for (std::size_t j = 0; j < K; ++j) {
            const double* pj = atom(j);
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += pj[i] * r[i];
            c[j] = s;
        }
        for (std::size_t j : active) c[j] -= lambda2 * alpha[j];

        double lam = 0.0;
        for (std::size_t j : active) lam = std::max(lam, std::abs(c[j]));

        if (active.empty()) {
            // Bootstrap (or restart after the last atom dropped).
            double cmax = 0.0;
            std::size_t jmax = K;
            for (std::size_t j = 0; j < K; ++j) {
                if (std::abs(c[j]) > cmax) {
                    cmax = std::abs(c[j]);
                    jmax = j;
                }
            }
            if (jmax == K || lambda1 >= cmax) break; // zero solution
            active.push_back(jmax);
            is_active[jmax] = 1;
            chol.append({}, dot_self(atom(jmax), m));
            continue;
        }

        // Any inactive correlation sitting at the path level (exact ties from
        // duplicate atoms, or fp drift past it) joins before the next step so
        // the whole equicorrelated set moves together.
        const double slack = 1e-10 * (1.0 + lam);
        if (active.size() < cap) {
            std::size_t jtie = K;
            double best = lam - slack;
            for (std::size_t j = 0; j < K; ++j) {
                if (!is_active[j] && j != banned && std::abs(c[j]) > best) {
                    best = std::abs(c[j]);
                    jtie = j;
                }
            }
            if (jtie != K) {
                gram_row.assign(active.size(), 0.0);
                for (std::size_t i = 0; i < active.size(); ++i)
                    gram_row[i] = dot_pair(atom(active[i]), atom(jtie), m);
                chol.append(gram_row, dot_self(atom(jtie), m));
                active.push_back(jtie);
                is_active[jtie] = 1;
                continue;
            }
        }

        if (lam <= lambda1) break; // reached the target penalty

        // Equiangular direction on the active set.
        const std::size_t na = active.size();
        std::vector<double> s(na);
        for (std::size_t i = 0; i < na; ++i) s[i] = c[active[i]] >= 0.0 ? 1.0 : -1.0;
        d = chol.solve(s);

        // u = P_A d, w = P^T u (+ lambda2 d on the active set, where it equals s).
        std::vector<double> u(m, 0.0);
        for (std::size_t i = 0; i < na; ++i) {
            const double* pj = atom(active[i]);
            const double di = d[i];
            for (std::size_t k = 0; k < m; ++k) u[k] += di * pj[k];
        }
        for (std::size_t j = 0; j < K; ++j) {
            const double* pj = atom(j);
            double sdot = 0.0;
            for (std::size_t k = 0; k < m; ++k) sdot += pj[k] * u[k];
            w[j] = sdot;
        }
        for (std::size_t i = 0; i < na; ++i) w[active[i]] = s[i];

        double gamma = lam - lambda1;
        Event event = Event::target;
        std::size_t event_j = K;

        // Sign crossings on the active set drop an atom.
        for (std::size_t i = 0; i < na; ++i) {
            const double di = d[i];
            if (di == 0.0) continue;
            const double g = -alpha[active[i]] / di;
            if (g > 0.0 && g < gamma) {
                gamma = g;
                event = Event::drop;
                event_j = active[i];
            }
        }

        // Inactive correlations catching up activate an atom. Ascending scan
        // with strict '<' keeps the lowest index on exact ties.
        if (na < cap) {
            for (std::size_t j = 0; j < K; ++j) {
                if (is_active[j]) continue;
                const double den_p = 1.0 - w[j];
                if (den_p > 1e-14) {
                    const double g = (lam - c[j]) / den_p;
                    if (g > 0.0 && g < gamma) {
                        gamma = g;
                        event = Event::add;
                        event_j = j;
                    }
                }
                const double den_m = 1.0 + w[j];
                if (den_m > 1e-14) {
                    const double g = (lam + c[j]) / den_m;
                    if (g > 0.0 && g < gamma) {
                        gamma = g;
                        event = Event::add;
                        event_j = j;
                    }
                }
            }
        }

        for (std::size_t i = 0; i < na; ++i) alpha[active[i]] += gamma * d[i];
        if (gamma > 0.0) banned = K;

        if (event == Event::target) {
            break;
        } else if (event == Event::drop) {
            banned = event_j;
            alpha[event_j] = 0.0;
            is_active[event_j] = 0;
            active.erase(std::find(active.begin(), active.end(), event_j));
            // Refactor over the surviving atoms in their retained order.
            chol.reset();
            for (std::size_t i = 0; i < active.size(); ++i) {
                gram_row.assign(i, 0.0);
                for (std::size_t p = 0; p < i; ++p)
                    gram_row[p] = dot_pair(atom(active[p]), atom(active[i]), m);
                chol.append(gram_row, dot_self(atom(active[i]), m));
            }
        } else {
            gram_row.assign(na, 0.0);
            for (std::size_t i = 0; i < na; ++i)
                gram_row[i] = dot_pair(atom(active[i]), atom(event_j), m);
            chol.append(gram_row, dot_self(atom(event_j), m));
            active.push_back(event_j);
            is_active[event_j] = 1;
        }
    }

    return finalize(std::move(alpha), x, Pt);
}

SparseCode oracle_solve(const Tensor& x, const Tensor& P, const ElasticNetParams& params) {
    validate_inputs(x, P, params);
    const std::size_t m = P.rows();
    const std::size_t K = P.cols();
    const double lambda1 = params.lambda1;
    const double lambda2 = params.lambda2;
    const std::size_t max_cycles = params.max_iterations ? params.max_iterations : 200000;
    constexpr double kOracleKkt = 1e-10;

    std::vector<double> col_sqnorm(K, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < K; ++j) col_sqnorm[j] += P(i, j) * P(i, j);

    Tensor alpha({K});
    std::vector<double> r(x.storage());

    for (std::size_t cycle = 0; cycle < max_cycles; ++cycle) {
        for (std::size_t j = 0; j < K; ++j) {
            double rho = col_sqnorm[j] * alpha[j];
            for (std::size_t i = 0; i < m; ++i) rho += P(i, j) * r[i];
            const double next = soft_threshold(rho, lambda1) / (col_sqnorm[j] + lambda2);
            const double delta = next - alpha[j];
            if (delta != 0.0) {
                for (std::size_t i = 0; i < m; ++i) r[i] -= delta * P(i, j);
                alpha[j] = next;
            }
        }

        // KKT over the maintained residual; exact enough at 1e-10.
        double worst = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            double cj = 0.0;
            for (std::size_t i = 0; i < m; ++i) cj += P(i, j) * r[i];
            double v;
            if (alpha[j] != 0.0) {
                const double sign = alpha[j] > 0.0 ? 1.0 : -1.0;
                v = std::abs(cj - lambda1 * sign - lambda2 * alpha[j]);
            } else {
                v = std::max(0.0, std::abs(cj) - lambda1);
            }
            worst = std::max(worst, v);
        }
        if (worst < kOracleKkt) {
            SparseCode code = finalize(std::move(alpha), x, transpose(P));
            return code;
        }
    }

    SparseCode best = finalize(std::move(alpha), x, transpose(P));
    const double kkt = kkt_residual(best, x, P, params);
    throw SolverError("elastic_net oracle: coordinate descent did not reach 1e-10 KKT within " +
                          std::to_string(max_cycles) + " cycles (residual " + std::to_string(kkt) + ")",
                      std::move(best), kkt);
}

} // namespace sfnn
