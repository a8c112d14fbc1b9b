#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace spintrack {

/// Inputs of the dephasing-limited tracking bounds. Rates in Hz, q_omega in
/// rad^2/s^3, sigma0 in rad/s (infinity means a flat prior).
struct BoundQuery {
    double t = 0.01;
    double n_atoms = 1e13;
    double n_sigma = 0.0;
    double q_omega = 1e6;
    double kappa_loc = 100.0;
    double kappa_coll = 0.0;
    double sigma0 = std::numeric_limits<double>::infinity();
    double chi = 1.0;

    void validate() const;
};

/// kappa(N) = kappa_coll + 2 kappa_loc / N.
double effective_dephasing(double n, double kappa_loc, double kappa_coll);

/// Flat-prior bound sqrt(q kappa) coth(t sqrt(q / kappa)). Requires q_omega > 0.
double cs_bound_amse(const BoundQuery& q);

/// Finite-prior bound V_sigma0(t). Evaluated through tanh so it stays finite
/// for any t; q_omega = 0 reduces to 1 / (1/sigma0^2 + t/kappa).
double cs_bound_finite_prior(const BoundQuery& q);

/// V_k = V_P + V_Q V_{k-1} / (V_Q + V_{k-1}), V_0 = sigma0^2, iterated k times.
double variance_recursion(double v_p, double v_q, double sigma0_sq, std::int64_t k);

/// Closed form of the same recursion, evaluated through (V-/V+)^k.
double variance_closed_form(double v_p, double v_q, double sigma0_sq, std::int64_t k);

/// Per-step variances of the discretized problem: V_P = q/(2 chi)(1 - e^{-2 chi dt}),
/// V_Q = kappa / dt.
struct DiscreteVariances {
    double v_p;
    double v_q;
};
DiscreteVariances discrete_variances(const BoundQuery& q, double step);

/// Standard quantum limit kappa(N) / t.
double sql_bound(double t, double n, double kappa_loc, double kappa_coll);

struct AveragedBound {
    double at_mean_n;                      ///< V_inf(t, N_bar): the reportable bound
    std::optional<double> monte_carlo;     ///< E_N[V_inf(t, N)] when sampled
    std::int64_t draws = 0;
};

/// Atom-number-averaged bound. With mc_draws > 0 also estimates
/// E_N[V_inf(t, N)] over Gaussian N (non-positive draws are redrawn).
AveragedBound n_averaged_bound(const BoundQuery& q, std::int64_t mc_draws = 0, std::uint64_t seed = 0);

/// One row of a bound table over (t, N).
struct BoundRow {
    double t = 0.0;
    double n_atoms = 0.0;
    double kappa = 0.0;     ///< effective dephasing [Hz]
    double v_inf = 0.0;     ///< flat-prior bound (SQL when q_omega = 0)
    double v_sigma0 = 0.0;  ///< finite-prior bound
    double sql = 0.0;
};

/// `count` points log-spaced over [lo, hi] inclusive.
std::vector<double> logspace(double lo, double hi, int count);

/// Bound table over the grid, rows ordered t-major. `base` supplies every
/// field except t and n_atoms. Parallel over t; identical for any thread count.
std::vector<BoundRow> bound_table(const BoundQuery& base, const std::vector<double>& t_grid,
                                  const std::vector<double>& n_grid, int threads = 0);
/// Shape of the finite-prior surface of a t-major bound table. Along t the
/// bound saturates to a constant in double precision, so monotonicity in t
/// is checked as non-increasing; in N it is strict.
struct SurfaceShape {
    bool decreasing_in_n = true;
    bool non_increasing_in_t = true;
    bool convex_in_n = true;  ///< second difference on the non-uniform N grid > 0
};
SurfaceShape surface_shape(const std::vector<BoundRow>& rows, std::size_t n_t, std::size_t n_n);

std::vector<BoundRow> bound_table_serial(const BoundQuery& base, const std::vector<double>& t_grid,
                                         const std::vector<double>& n_grid);

}  // namespace spintrack
