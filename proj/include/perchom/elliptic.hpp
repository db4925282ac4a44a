#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "perchom/operator.hpp"

namespace perchom {

struct CellEnergy {
    double nu = 0.0;
    bool degenerate = false; // empty cluster in the cube
};

// nu(cube, p) = (1/2|cube|) min over u = l_p + C_0(cluster cap cube) of the
// Dirichlet energy; solved as a Dirichlet problem on the cube's cluster.
CellEnergy cell_energy(const Environment& env, const TriadicCube& cube,
                       const std::array<double, 3>& p_dir, double tol = 1e-12);

struct HomogenizedParams {
    double theta_hat = 0.0;
    double theta_ci = 0.0;
    int m = 0;
    std::array<std::array<double, 3>, 3> abar{};      // level m
    std::array<std::array<double, 3>, 3> abar_prev{}; // level m-1
    std::array<std::array<double, 3>, 3> abar_ci{};   // 95% CI halfwidths, level m
    double sigma2 = 0.0; // 2 theta^-1 tr(abar)/d
    int n_samples = 0;
};

HomogenizedParams estimate_homogenized(int d, double p, double lambda, Law law,
                                       int m, int n_samples, std::uint64_t seed,
                                       bool force = false);

struct CorrectorField {
    int direction = 1; // k in 1..d
    Field values;      // chi on box vertices, zero off the proxy cluster
    std::int64_t anchor_index = -1;
};

// Finite-volume corrector: chi = 0 on the cluster boundary of the box, then
// shifted so chi(anchor) = 0 with anchor the proxy vertex closest to y.
CorrectorField solve_corrector(const Environment& env, const ClusterLabeling& lab,
                               int k, const Coord& y, double tol = 1e-10);

enum class FluxVariant { Centered, Translated };

struct FluxField {
    int direction = 1;
    FluxVariant variant = FluxVariant::Centered;
    std::vector<Field> comp; // d components over box vertices, zero off-cluster
};

FluxField flux_field(const Environment& env, const ClusterLabeling& lab,
                     const CorrectorField& chi, double sigma2,
                     FluxVariant variant);

struct WeakNorm {
    double dual_norm = 0.0; // quadratic-equivalent normalized H^-1
    double msp_bound = 0.0; // multiscale-Poincare style upper bound
};

// Normalized dual norm of a scalar field on cluster cap B_r(center):
// <f, A^-1 f>^{1/2} / |V|^{1/2} with A = r^-2 I + unit-weight cluster
// Laplacian; equivalent to the two-term Sobolev norm within sqrt(2).
WeakNorm weak_norm(const Environment& env, const ClusterLabeling& lab,
                   const Field& f, const Coord& center, double r,
                   double tol = 1e-10);

// Vector fields: ell^2 combination of per-component dual norms.
WeakNorm weak_norm_vector(const Environment& env, const ClusterLabeling& lab,
                          const std::vector<Field>& comps, const Coord& center,
                          double r, double tol = 1e-10);

// osc over cluster cap B_r(anchor) per radius; nondecreasing in r.
std::vector<double> corrector_oscillation(const Environment& env,
                                          const ClusterLabeling& lab,
                                          const CorrectorField& chi,
                                          const std::vector<double>& radii);

struct PoincareResult {
    double lambda2 = 0.0; // smallest nonzero eigenvalue of the cluster Laplacian
    double c_p = 0.0;     // 1 / (r sqrt(lambda2))
    bool disconnected = false;
};

// lambda_2 of the unit-weight open-bond Laplacian on proxy cap B_r(center).
// When the in-ball restriction splits, the strict contract returns lambda2=0
// with the flag; largest_component=true instead restricts to the biggest
// in-ball piece (boundary slivers are routine on percolation balls).
PoincareResult poincare_constant(const Environment& env, const ClusterLabeling& lab,
                                 const Coord& center, double r, double tol = 1e-8,
                                 bool largest_component = false);

} // namespace perchom
