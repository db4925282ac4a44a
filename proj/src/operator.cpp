#include "perchom/operator.hpp"

#include <algorithm>
#include <cmath>

#include "perchom/simd/kernels.hpp"

namespace perchom {

GraphOperator::GraphOperator(const Environment& e, std::vector<std::uint8_t> m,
                             Boundary b)
    : env(&e), mask(std::move(m)), bc(b) {
    const LatticeBox& box = e.box;
    const std::int64_t n = box.vertex_count();
    if (!mask.empty() && static_cast<std::int64_t>(mask.size()) != n)
        throw ShapeError("mask size does not match box");

    weights.assign(static_cast<std::size_t>(box.d),
                   std::vector<double>(static_cast<std::size_t>(n), 0.0));
    diag.assign(static_cast<std::size_t>(n), 0.0);
    for (int k = 1; k <= box.d; ++k) {
        const auto& src = e.cond[static_cast<std::size_t>(k - 1)];
        auto& w = weights[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            double a = src[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            if (!mask.empty() &&
                (!mask[static_cast<std::size_t>(i)] ||
                 !mask[static_cast<std::size_t>(i + s)]))
                continue;
            w[static_cast<std::size_t>(i)] = a;
            diag[static_cast<std::size_t>(i)] += a;
            diag[static_cast<std::size_t>(i + s)] += a;
        }
    }
}

void GraphOperator::apply(const Field& u, Field& out) const {
    const LatticeBox& box = env->box;
    const std::int64_t n = box.vertex_count();
    if (static_cast<std::int64_t>(u.size()) != n)
        throw ShapeError("field size does not match box");
    out.assign(static_cast<std::size_t>(n), 0.0);
    const auto& K = simd::active();
    for (int k = 1; k <= box.d; ++k) {
        const auto& w = weights[static_cast<std::size_t>(k - 1)];
        const std::size_t s = static_cast<std::size_t>(box.stride(k - 1));
        K.stencil_fwd(w.data(), u.data(), out.data(), s, static_cast<std::size_t>(n));
        K.stencil_rev(w.data(), u.data(), out.data(), s, static_cast<std::size_t>(n));
    }
}

double GraphOperator::max_rate() const {
    double m = 0.0;
    for (double v : diag) m = std::max(m, v);
    return m;
}

std::vector<std::uint8_t> proxy_mask(const Environment& env,
                                     const ClusterLabeling& lab) {
    const std::int64_t n = env.box.vertex_count();
    std::vector<std::uint8_t> m(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i)
        if (lab.on_proxy(i)) m[static_cast<std::size_t>(i)] = 1;
    return m;
}

std::vector<std::uint8_t> full_mask(const Environment& env) {
    return std::vector<std::uint8_t>(
        static_cast<std::size_t>(env.box.vertex_count()), 1);
}

int default_cg_cap(std::int64_t n_vertices) {
    return static_cast<int>(20.0 * std::sqrt(double(n_vertices))) + 1000;
}

SolveResult cg_solve(const std::function<void(const Field&, Field&)>& apply_A,
                     const Field& b, const Field& x0,
                     const std::vector<double>& diag_precond, double tol,
                     int max_iter, bool tol_is_absolute) {
    const auto& K = simd::active();
    const std::size_t n = b.size();

    SolveResult res;
    res.u = x0;

    Field r(n, 0.0), z(n, 0.0), p(n, 0.0), Ap(n, 0.0);
    std::vector<double> dinv(n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        dinv[i] = diag_precond[i] > 0.0 ? 1.0 / diag_precond[i] : 0.0;

    apply_A(res.u, Ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];

    const double bnorm = std::sqrt(K.nrm2sq(b.data(), n));
    const double target = tol_is_absolute ? tol : tol * std::max(bnorm, 1e-300);

    double rnorm = std::sqrt(K.nrm2sq(r.data(), n));
    res.residual_history.push_back(rnorm);
    if (rnorm <= target || n == 0) {
        res.rel_residual = bnorm > 0 ? rnorm / bnorm : rnorm;
        return res;
    }

    K.vmul(dinv.data(), r.data(), z.data(), n);
    p = z;
    double rz = K.dot(r.data(), z.data(), n);

    for (int it = 1; it <= max_iter; ++it) {
        apply_A(p, Ap);
        const double pAp = K.dot(p.data(), Ap.data(), n);
        if (pAp <= 0.0) break; // singular direction; bail to error below
        const double alpha = rz / pAp;
        K.axpy(alpha, p.data(), res.u.data(), n);
        K.axpy(-alpha, Ap.data(), r.data(), n);
        rnorm = std::sqrt(K.nrm2sq(r.data(), n));
        res.residual_history.push_back(rnorm);
        res.iterations = it;
        if (rnorm <= target) {
            res.rel_residual = bnorm > 0 ? rnorm / bnorm : rnorm;
            return res;
        }
        K.vmul(dinv.data(), r.data(), z.data(), n);
        const double rz_next = K.dot(r.data(), z.data(), n);
        K.xpby(z.data(), rz_next / rz, p.data(), n);
        rz = rz_next;
    }
    throw SolverError("conjugate gradient failed to reach tolerance",
                      res.residual_history);
}

SolveResult solve_dirichlet(const Environment& env,
                            const std::vector<std::uint8_t>& domain_mask,
                            const std::vector<std::uint8_t>& boundary_mask,
                            const Field& rhs, const Field& boundary_values,
                            double tol, int max_iter) {
    if (tol <= 0.0) throw ParamError("tolerance must be positive");
    const std::int64_t n = env.box.vertex_count();
    if (static_cast<std::int64_t>(rhs.size()) != n ||
        static_cast<std::int64_t>(boundary_values.size()) != n)
        throw ShapeError("field size does not match box");

    GraphOperator op(env, domain_mask, Boundary::DirichletZero);
    if (max_iter <= 0) max_iter = default_cg_cap(n);

    // Unknowns are interior vertices of the mask; boundary vertices are
    // pinned. A = -L on interior; boundary couplings move to the right side.
    std::vector<std::uint8_t> interior(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i)
        interior[static_cast<std::size_t>(i)] =
            (domain_mask.empty() || domain_mask[static_cast<std::size_t>(i)]) &&
            !boundary_mask[static_cast<std::size_t>(i)];

    Field g(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        if (boundary_mask[static_cast<std::size_t>(i)])
            g[static_cast<std::size_t>(i)] = boundary_values[static_cast<std::size_t>(i)];

    Field Lg(static_cast<std::size_t>(n), 0.0);
    op.apply(g, Lg);

    double rhs_norm_sq = 0.0;
    Field b(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!interior[static_cast<std::size_t>(i)]) continue;
        b[static_cast<std::size_t>(i)] = rhs[static_cast<std::size_t>(i)] +
                                         Lg[static_cast<std::size_t>(i)];
        rhs_norm_sq += rhs[static_cast<std::size_t>(i)] * rhs[static_cast<std::size_t>(i)];
    }

    auto apply_interior = [&](const Field& u, Field& out) {
        op.apply(u, out);
        for (std::int64_t i = 0; i < n; ++i) {
            if (interior[static_cast<std::size_t>(i)])
                out[static_cast<std::size_t>(i)] = -out[static_cast<std::size_t>(i)];
            else
                out[static_cast<std::size_t>(i)] = 0.0;
        }
    };

    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        if (interior[static_cast<std::size_t>(i)])
            diag[static_cast<std::size_t>(i)] = op.diag[static_cast<std::size_t>(i)];

    // Contract: residual of -nabla.a nabla u - rhs on interior vertices is
    // <= tol*||rhs|| when rhs != 0, and <= tol absolute otherwise. The CG
    // residual b - A u equals that equation residual, so pass the target as
    // an absolute threshold.
    const double target = rhs_norm_sq > 0.0 ? tol * std::sqrt(rhs_norm_sq) : tol;
    Field x0(static_cast<std::size_t>(n), 0.0);
    SolveResult sol =
        cg_solve(apply_interior, b, x0, diag, target, max_iter, true);

    for (std::int64_t i = 0; i < n; ++i)
        if (boundary_mask[static_cast<std::size_t>(i)])
            sol.u[static_cast<std::size_t>(i)] =
                boundary_values[static_cast<std::size_t>(i)];
    return sol;
}

} // namespace perchom
