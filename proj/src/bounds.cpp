#include "spintrack/bounds.hpp"

#include <cmath>
#include <random>

#include "spintrack/errors.hpp"
#include "spintrack/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spintrack {

void BoundQuery::validate() const {
    if (!(t > 0.0)) throw DomainError("bound: t must be positive");
    if (!(n_atoms > 0.0)) throw DomainError("bound: n_atoms must be positive");
    if (!(n_sigma >= 0.0)) throw DomainError("bound: n_sigma must be non-negative");
    if (!(q_omega >= 0.0)) throw DomainError("bound: q_omega must be non-negative");
    if (!(kappa_loc >= 0.0 && kappa_coll >= 0.0)) throw DomainError("bound: rates must be non-negative");
    if (!(kappa_loc > 0.0 || kappa_coll > 0.0)) {
        throw DomainError("bound: at least one dephasing rate must be positive");
    }
    if (!(sigma0 >= 0.0)) throw DomainError("bound: sigma0 must be non-negative");
}

double effective_dephasing(double n, double kappa_loc, double kappa_coll) {
    if (!(n > 0.0)) throw DomainError("effective_dephasing: n must be positive");
    return kappa_coll + 2.0 * kappa_loc / n;
}

double cs_bound_amse(const BoundQuery& q) {
    q.validate();
    if (!(q.q_omega > 0.0)) throw DomainError("cs_bound_amse: q_omega must be positive (use sql_bound)");
    const double kappa = effective_dephasing(q.n_atoms, q.kappa_loc, q.kappa_coll);
    const double x = q.t * std::sqrt(q.q_omega / kappa);
    return std::sqrt(q.q_omega * kappa) / std::tanh(x);
}

double cs_bound_finite_prior(const BoundQuery& q) {
    q.validate();
    const double kappa = effective_dephasing(q.n_atoms, q.kappa_loc, q.kappa_coll);
    const double s = q.sigma0 * q.sigma0;
    if (q.q_omega == 0.0) {
        if (std::isinf(s)) return kappa / q.t;
        return 1.0 / (1.0 / s + q.t / kappa);
    }
    const double a = std::sqrt(q.q_omega * kappa);
    const double th = std::tanh(q.t * std::sqrt(q.q_omega / kappa));
    if (std::isinf(s)) return a / th;
    // Numerator and denominator divided by cosh(x).
    return a * (s + a * th) / (a + s * th);
}

double variance_recursion(double v_p, double v_q, double sigma0_sq, std::int64_t k) {
    if (!(v_p >= 0.0 && v_q > 0.0 && sigma0_sq >= 0.0 && k >= 0)) {
        throw DomainError("variance_recursion: need v_p >= 0, v_q > 0, sigma0^2 >= 0, k >= 0");
    }
    double v = sigma0_sq;
    for (std::int64_t i = 0; i < k; ++i) v = v_p + v_q * v / (v_q + v);
    return v;
}

double variance_closed_form(double v_p, double v_q, double s, std::int64_t k) {
    if (!(v_p >= 0.0 && v_q > 0.0 && s >= 0.0 && k >= 0)) {
        throw DomainError("variance_closed_form: need v_p >= 0, v_q > 0, sigma0^2 >= 0, k >= 0");
    }
    if (k == 0) return s;
    if (v_p == 0.0) {
        // Both roots coincide; V_k = 1 / (1/s + k / v_q).
        return s == 0.0 ? 0.0 : 1.0 / (1.0 / s + static_cast<double>(k) / v_q);
    }
    const double root = std::sqrt(v_p * (4.0 * v_q + v_p));

    // V+ V- = 4 V_Q^2, so V- is recovered without cancellation.
    const double v_plus = 2.0 * v_q + v_p + root;
    const double v_minus = 4.0 * v_q * v_q / v_plus;
    const double gap = 2.0 * root / v_plus;  // 1 - V-/V+
    const double log_ratio = gap < 0.5 ? std::log1p(-gap) : std::log(v_minus / v_plus);
    const double kd = static_cast<double>(k);
    const double ratio_k = std::exp(kd * log_ratio);
    const double one_minus_ratio_k = -std::expm1(kd * log_ratio);

    // W+ W- = 4 V_P V_Q (s^2 - V_P V_Q - V_P s) and
    // U+ U- = 4 (V_P V_Q + V_P s - s^2); take the cancellation-free member
    // of each pair directly and derive the other from the product.
    // s^2 - V_P s - V_P V_Q factored over its roots r+ = (V_P + root)/2 and
    // r- = -V_P V_Q / r+.
    const double r_plus = 0.5 * (v_p + root);
    const double quad = (s - r_plus) * (s + v_p * v_q / r_plus);
    const double a = 2.0 * v_p * v_q + s * v_p;
    const double w_plus = a + s * root;
    const double w_minus = 4.0 * v_p * v_q * quad / w_plus;

    const double b = v_p - 2.0 * s;
    double u_plus, u_minus;
    const double u_prod = -4.0 * quad;
    if (b >= 0.0) {
        u_minus = b + root;
        u_plus = u_prod / u_minus;
    } else {
        u_plus = -b + root;
        u_minus = u_prod / u_plus;
    }

    // W+ + W- = 2 s root and U+ + U- = 2 root; when the minus member is
    // negative, rewrite the sum as a sum of non-negative terms.
    const double num = w_minus >= 0.0 ? w_plus + w_minus * ratio_k
                                      : 2.0 * s * root - w_minus * one_minus_ratio_k;
    const double den = u_minus >= 0.0 ? u_plus + u_minus * ratio_k : 2.0 * root - u_minus * one_minus_ratio_k;
    return num / den;
}

DiscreteVariances discrete_variances(const BoundQuery& q, double step) {
    if (!(step > 0.0)) throw DomainError("discrete_variances: step must be positive");
    const double kappa = effective_dephasing(q.n_atoms, q.kappa_loc, q.kappa_coll);
    const double v_p = -q.q_omega / (2.0 * q.chi) * std::expm1(-2.0 * q.chi * step);
    return {v_p, kappa / step};
}

double sql_bound(double t, double n, double kappa_loc, double kappa_coll) {
    if (!(t > 0.0)) throw DomainError("sql_bound: t must be positive");
    return effective_dephasing(n, kappa_loc, kappa_coll) / t;
}

AveragedBound n_averaged_bound(const BoundQuery& q, std::int64_t mc_draws, std::uint64_t seed) {
    q.validate();
    auto v_inf = [&](double n) {
        BoundQuery qn = q;
        qn.n_atoms = n;
        return q.q_omega > 0.0 ? cs_bound_amse(qn) : sql_bound(q.t, n, q.kappa_loc, q.kappa_coll);
    };
    AveragedBound out{v_inf(q.n_atoms), std::nullopt, 0};
    if (mc_draws <= 0) return out;

    std::mt19937_64 gen(derive_seed(seed, 0, RngStream::kAtomNumber));
    double mean = 0.0;
    for (std::int64_t i = 0; i < mc_draws; ++i) {
        const double n = draw_atom_number(q.n_atoms, q.n_sigma, gen);
        mean += (v_inf(n) - mean) / static_cast<double>(i + 1);
    }
    out.monte_carlo = mean;
    out.draws = mc_draws;
    return out;
}

std::vector<double> logspace(double lo, double hi, int count) {
    if (!(lo > 0.0 && hi >= lo && count >= 1)) throw DomainError("logspace: need 0 < lo <= hi and count >= 1");
    std::vector<double> out(static_cast<std::size_t>(count));
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    const double a = std::log10(lo), b = std::log10(hi);
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (count - 1));
    out.back() = hi;
    return out;
}

namespace {

BoundRow bound_row(BoundQuery q, double t, double n) {
    q.t = t;
    q.n_atoms = n;
    BoundRow r;
    r.t = t;
    r.n_atoms = n;
    r.kappa = effective_dephasing(n, q.kappa_loc, q.kappa_coll);
    r.sql = sql_bound(t, n, q.kappa_loc, q.kappa_coll);
    r.v_inf = q.q_omega > 0.0 ? cs_bound_amse(q) : r.sql;
    r.v_sigma0 = cs_bound_finite_prior(q);
    return r;
}

}  // namespace

std::vector<BoundRow> bound_table(const BoundQuery& base, const std::vector<double>& t_grid,
                                  const std::vector<double>& n_grid, int threads) {
    BoundQuery probe = base;
    if (!t_grid.empty()) probe.t = t_grid.front();
    if (!n_grid.empty()) probe.n_atoms = n_grid.front();
    probe.validate();
    for (double t : t_grid) {
        if (!(t > 0.0)) throw DomainError("bound_table: grid times must be positive");
    }
    for (double n : n_grid) {
        if (!(n > 0.0)) throw DomainError("bound_table: atom numbers must be positive");
    }
    const auto nt = static_cast<std::int64_t>(t_grid.size());
    const auto nn = n_grid.size();
    std::vector<BoundRow> rows(t_grid.size() * nn);
#ifdef _OPENMP
    const int workers = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(workers)
#else
    (void)threads;
#endif
    for (std::int64_t i = 0; i < nt; ++i) {
        const auto ti = static_cast<std::size_t>(i);
        for (std::size_t j = 0; j < nn; ++j) rows[ti * nn + j] = bound_row(base, t_grid[ti], n_grid[j]);
    }
    return rows;
}

std::vector<BoundRow> bound_table_serial(const BoundQuery& base, const std::vector<double>& t_grid,
                                         const std::vector<double>& n_grid) {
    std::vector<BoundRow> rows;
    rows.reserve(t_grid.size() * n_grid.size());
    for (double t : t_grid) {
        for (double n : n_grid) rows.push_back(bound_row(base, t, n));
    }
    return rows;
}

SurfaceShape surface_shape(const std::vector<BoundRow>& rows, std::size_t n_t, std::size_t n_n) {
    if (rows.size() != n_t * n_n) throw DomainError("surface_shape: table size does not match the grid");
    SurfaceShape out;
    auto at = [&](std::size_t i, std::size_t j) -> const BoundRow& { return rows[i * n_n + j]; };
    for (std::size_t i = 0; i < n_t; ++i) {
        for (std::size_t j = 0; j < n_n; ++j) {
            const double v = at(i, j).v_sigma0;
            if (j > 0 && !(v < at(i, j - 1).v_sigma0)) out.decreasing_in_n = false;
            if (i > 0 && !(v <= at(i - 1, j).v_sigma0)) out.non_increasing_in_t = false;
            if (j > 0 && j + 1 < n_n) {
                const double left = (v - at(i, j - 1).v_sigma0) / (at(i, j).n_atoms - at(i, j - 1).n_atoms);
                const double right = (at(i, j + 1).v_sigma0 - v) / (at(i, j + 1).n_atoms - at(i, j).n_atoms);
                if (!(right - left > 0.0)) out.convex_in_n = false;
            }
        }
    }
    return out;
}

}  // namespace spintrack
