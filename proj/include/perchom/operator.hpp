#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "perchom/cluster.hpp"
#include "perchom/environment.hpp"

namespace perchom {

// Scalar field over the vertices of a box, stored dense; entries outside the
// active mask are kept at zero.
using Field = std::vector<double>;

enum class Boundary { Free, DirichletZero };

// Matrix-free nabla . a nabla restricted to a vertex mask: only bonds with
// both endpoints inside the mask contribute, so the masked subgraph is a
// closed system under Free boundary (zero row sums).
struct GraphOperator {
    const Environment* env = nullptr;
    std::vector<std::uint8_t> mask; // empty = all vertices
    Boundary bc = Boundary::Free;

    // Per-direction bond weights, zeroed outside the mask.
    std::vector<std::vector<double>> weights;
    std::vector<double> diag; // sum of incident weights per vertex

    GraphOperator() = default;
    GraphOperator(const Environment& e, std::vector<std::uint8_t> m,
                  Boundary b = Boundary::Free);

    std::int64_t size() const { return env->box.vertex_count(); }

    // out = (nabla . a nabla) u; masked-out entries stay zero.
    void apply(const Field& u, Field& out) const;

    double max_rate() const; // max_x sum_z a({x,z}) within the mask
};

std::vector<std::uint8_t> proxy_mask(const Environment& env,
                                     const ClusterLabeling& lab);
std::vector<std::uint8_t> full_mask(const Environment& env);

struct SolveResult {
    Field u;
    int iterations = 0;
    double rel_residual = 0.0;
    std::vector<double> residual_history;
};

// Conjugate gradient with Jacobi preconditioner on an SPD operator given as a
// callback. Deterministic: fixed-order reductions via the dispatched kernels.
SolveResult cg_solve(const std::function<void(const Field&, Field&)>& apply_A,
                     const Field& b, const Field& x0,
                     const std::vector<double>& diag_precond, double tol,
                     int max_iter, bool tol_is_absolute = false);

// Solve -nabla . a nabla u = rhs on the masked subgraph with u fixed to
// boundary_values on `boundary` vertices. Residual criterion per contract:
// relative to ||rhs|| when rhs != 0, absolute otherwise.
SolveResult solve_dirichlet(const Environment& env,
                            const std::vector<std::uint8_t>& domain_mask,
                            const std::vector<std::uint8_t>& boundary_mask,
                            const Field& rhs, const Field& boundary_values,
                            double tol, int max_iter = 0);

int default_cg_cap(std::int64_t n_vertices);

} // namespace perchom
