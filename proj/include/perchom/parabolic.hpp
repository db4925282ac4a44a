#pragma once

#include <cstdint>
#include <vector>

#include "perchom/operator.hpp"

namespace perchom {

enum class EvolveMethod { Uniformization, RkIntegrator, MonteCarlo };

struct KernelSnapshot {
    double t = 0.0;
    std::int64_t y_index = -1;
    Field values;
    EvolveMethod method = EvolveMethod::Uniformization;
    double mass_defect_bound = 0.0; // certified truncation bound (uniformization)
    int terms = 0;                  // series terms / accepted steps
};

// Evolve an arbitrary initial field on the masked subgraph for `duration`.
// Uniformization: with Lambda = max rate, exp(tL) = e^{-Lt} sum (Lt)^k/k! P^k,
// P = I + L/Lambda; nonnegative weights, mass preserved up to the certified
// Poisson tail <= tol. Weights are computed in log form so large Lambda*t is
// exact up to floating point.
Field evolve_field(const GraphOperator& op, const Field& init, double duration,
                   double tol, double* mass_defect_bound = nullptr,
                   int* terms = nullptr);

Field evolve_field_rk(const GraphOperator& op, const Field& init,
                      double duration, double tol, int* steps = nullptr);

KernelSnapshot evolve_kernel(const Environment& env, const ClusterLabeling& lab,
                             const Coord& y, double t, EvolveMethod method,
                             double tol);

// Gaussian kernel with diffusivity sigma^2: (2 pi s2 t)^{-d/2} e^{-|x|^2/(2 s2 t)}.
double homogenized_kernel(double sigma2, double t, const double* x, int d);
double homogenized_kernel_r2(double sigma2, double t, double r2, int d);

// Discrete Gaussian-type envelope with the Carne-Varopoulos branch at |x|=t,
// and its negative logarithm.
struct EnvelopeValue {
    double phi;
    double psi;
};
EnvelopeValue envelope(double C, double t, double r, int d);

enum class WalkType { VSRW, CSRW, SRW };

struct WalkSample {
    WalkType type;
    std::int64_t y_index;
    double horizon; // time, or step count for SRW
    std::vector<std::int64_t> endpoints;
    std::uint64_t seed;
};

WalkSample sample_walks(const Environment& env, const ClusterLabeling& lab,
                        const Coord& y, double t_or_steps, WalkType type,
                        int n_replicas, std::uint64_t seed);

struct BoundReport {
    double carne_varopoulos_C = -1.0; // minimal feasible grid C, -1 if none
    double barlow_C = -1.0;
    std::vector<std::int64_t> cv_violations;     // vertices violating largest grid C
    std::vector<std::int64_t> barlow_violations;
};

// Minimal grid constants such that p(t,x,y) <= C exp(-...) (Carne-Varopoulos
// branch form) and p(t,x,y) <= Phi_C(t, x-y) (Barlow form) hold at every
// cluster vertex.
BoundReport check_kernel_bounds(const Environment& env, const ClusterLabeling& lab,
                                const KernelSnapshot& snap,
                                const std::vector<double>& C_grid);

// Normalized L2 norm of the gradient over cluster \cap B_r(center), per radius.
std::vector<double> gradient_profile(const Environment& env,
                                     const ClusterLabeling& lab,
                                     const KernelSnapshot& snap,
                                     const Coord& center,
                                     const std::vector<double>& radii);

// sum over proxy vertices of pbar(t, x-y) minus theta_hat.
double gaussian_mass(const Environment& env, const ClusterLabeling& lab,
                     double sigma2, double theta_hat, double t, const Coord& y);

// e^{-z} I_n(z), scaled modified Bessel function of integer order.
double scaled_bessel_i(int n, double z);

// VSRW heat kernel on the full lattice Z^2 with unit conductances:
// p(t,x,0) = e^{-4t} I_{x1}(2t) I_{x2}(2t).
double z2_unit_kernel(double t, std::int64_t x1, std::int64_t x2);

} // namespace perchom
