#pragma once

#include <cstdint>
#include <vector>

#include "perchom/elliptic.hpp"
#include "perchom/parabolic.hpp"

namespace perchom {

// h(t,x) = theta^-1 ( pbar(t, x-y) + sum_k D_k pbar(t, x-y) chi_k(x) ), with
// D_k the forward difference of pbar on lattice points; zero off-cluster.
Field two_scale_h(const Environment& env, const ClusterLabeling& lab,
                  const std::vector<CorrectorField>& chis, double sigma2,
                  double theta_hat, double t, const Coord& y);

struct TwoScaleBundle {
    double t = 0.0;
    double tau = 0.0;
    double kappa = 0.0;
    Field h, q, v, w; // w = h - v - q pointwise
};

// q evolves theta^-1 pbar(tau,.) from tau to t; v evolves h(tau,.) - that
// initial layer; w = h(t,.) - v - q.
TwoScaleBundle evolve_qvw(const Environment& env, const ClusterLabeling& lab,
                          double sigma2, double theta_hat,
                          const std::vector<CorrectorField>& chis, const Coord& y,
                          double t, double kappa, double tol = 1e-10);

struct LcltError {
    double sup_central = 0.0;  // sup over |x-y| <= 3 sqrt(t) of t^{d/2}|p - theta^-1 pbar|
    double sup_weighted = 0.0; // same sup with weight e^{|x-y|^2/(C0 t)} over all vertices
    double weighted_l2 = 0.0;  // ||(p - theta^-1 pbar) W_C||_{L2(cluster)}
};

// Exponential part of e^{Psi_C}: exp(r^2/(Ct)) below the branch, the
// Carne-Varopoulos form above. The t^{d/2} prefactor of Phi_C is dropped in
// weighted norms; with it the weighted L2 cannot decay in t at all (a
// single lattice site already contributes t^{-1/2}).
double gaussian_weight(double C, double t, double r);

LcltError lclt_error(const Environment& env, const ClusterLabeling& lab,
                     const KernelSnapshot& snap, double sigma2, double theta_hat,
                     double C0, double C_psi);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; // rms residual of the fit
    int n = 0;
};

RateFit fit_rate(const std::vector<std::pair<double, double>>& t_and_error);

struct KappaSchedule {
    double alpha = 0.0;
    double kappa = 0.0;
    std::vector<double> kappa_n;
    int N = 0;
};

// alpha = delta/2, kappa = delta/(d+2); kappa_0 = kappa/2,
// kappa_{n+1} = min((1-kappa) kappa_n + kappa/2, 1/2 - delta); N = first hit.
KappaSchedule kappa_schedule(double delta, int d);

struct GreenReport {
    int d = 2;
    Coord y{0, 0, 0};
    std::vector<std::int64_t> x_index;
    std::vector<double> g;     // quadrature value
    std::vector<double> g_hom; // homogenized gbar(x - y)
    double K_estimate = 0.0;   // d=2: median of g - gbar over the annulus
    double K_spread = 0.0;     // d=2: interquartile-style spread (80% range)
    double t_max = 0.0;
    double t0 = 0.25;
    double rho = 1.25;
};

double green_homogenized(double sigma2, double theta, double r, int d);

// Duhamel quadrature of the heat kernel on a geometric time grid, with the
// d=2 p(t,y,y) subtraction and analytic homogenized tails beyond T_max.
GreenReport green_function(const Environment& env, const ClusterLabeling& lab,
                           const Coord& y, double t_max, double tol = 1e-10,
                           double sigma2 = 2.0, double theta = 1.0,
                           double annulus_lo = 20.0, double annulus_hi = 40.0);

struct DirichletResult {
    double rel_error = 0.0;   // r^-1 ||u - ubar||_L2(cylinder) / ||grad f||
    double grad_f_norm = 0.0;
};

// Parabolic Cauchy-Dirichlet problem on cluster cap B_r versus the
// constant-coefficient surrogate (unit conductances scaled by sigma2/2) on
// the full lattice, same discretization, boundary data f(x) (affine/smooth),
// run over I_r = (-r^2, 0] from initial data f.
DirichletResult dirichlet_homogenization_experiment(
    const Environment& env, const ClusterLabeling& lab, const Coord& center,
    double r, const Field& f, double sigma2, int n_steps = 1024,
    double tol = 1e-8);

} // namespace perchom
