#include "perchom/homog.hpp"

#include <algorithm>
#include <cmath>

#include "perchom/simd/kernels.hpp"

namespace perchom {

namespace {

constexpr double kPi = 3.14159265358979323846;

Field pbar_field(const Environment& env, const ClusterLabeling& lab,
                 double sigma2, double t, const Coord& y) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    Field out(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        out[static_cast<std::size_t>(i)] =
            homogenized_kernel_r2(sigma2, t, l2_dist_sq(box.coord_of_index(i), y, box.d),
                                  box.d);
    }
    return out;
}

} // namespace

Field two_scale_h(const Environment& env, const ClusterLabeling& lab,
                  const std::vector<CorrectorField>& chis, double sigma2,
                  double theta_hat, double t, const Coord& y) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    if (static_cast<int>(chis.size()) != d)
        throw InputError("need one corrector per direction");
    for (int k = 0; k < d; ++k)
        if (chis[static_cast<std::size_t>(k)].direction != k + 1)
            throw InputError("correctors must be ordered by direction");

    const std::int64_t n = box.vertex_count();
    Field out(static_cast<std::size_t>(n), 0.0);
    const double inv_theta = 1.0 / theta_hat;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        const Coord c = box.coord_of_index(i);
        const double p0 =
            homogenized_kernel_r2(sigma2, t, l2_dist_sq(c, y, d), d);
        double acc = p0;
        for (int k = 0; k < d; ++k) {
            Coord cf = c;
            cf[k] += 1;
            const double pf =
                homogenized_kernel_r2(sigma2, t, l2_dist_sq(cf, y, d), d);
            acc += (pf - p0) *
                   chis[static_cast<std::size_t>(k)]
                       .values[static_cast<std::size_t>(i)];
        }
        out[static_cast<std::size_t>(i)] = inv_theta * acc;
    }
    return out;
}

TwoScaleBundle evolve_qvw(const Environment& env, const ClusterLabeling& lab,
                          double sigma2, double theta_hat,
                          const std::vector<CorrectorField>& chis, const Coord& y,
                          double t, double kappa, double tol) {
    TwoScaleBundle b;
    b.t = t;
    b.kappa = kappa;
    // tau = t^{1-kappa} only satisfies the regime t >= 3 tau for enormous t
    // (t >= 3^{1/kappa}); cap at t/3 so desk-scale runs stay mesoscopic.
    b.tau = std::min(std::pow(t, 1.0 - kappa), t / 3.0);
    if (!(b.tau > 0.0) || t < 3.0 * b.tau)
        throw ParamError("mesoscopic regime requires t >= 3 tau");

    GraphOperator op(env, proxy_mask(env, lab));

    Field q0 = pbar_field(env, lab, sigma2, b.tau, y);
    const auto& K = simd::active();
    K.scale(1.0 / theta_hat, q0.data(), q0.size());

    Field h_tau = two_scale_h(env, lab, chis, sigma2, theta_hat, b.tau, y);
    Field v0 = h_tau;
    K.axpy(-1.0, q0.data(), v0.data(), v0.size());

    b.q = evolve_field(op, q0, t - b.tau, tol);
    b.v = evolve_field(op, v0, t - b.tau, tol);
    b.h = two_scale_h(env, lab, chis, sigma2, theta_hat, t, y);

    b.w = b.h;
    K.axpy(-1.0, b.v.data(), b.w.data(), b.w.size());
    K.axpy(-1.0, b.q.data(), b.w.data(), b.w.size());
    return b;
}

double gaussian_weight(double C, double t, double r) {
    if (r <= t) return std::exp(r * r / (C * t));
    return std::exp((r / C) * (1.0 + std::log(r / t)));
}

LcltError lclt_error(const Environment& env, const ClusterLabeling& lab,
                     const KernelSnapshot& snap, double sigma2, double theta_hat,
                     double C0, double C_psi) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    const double t = snap.t;
    const Coord y = box.coord_of_index(snap.y_index);
    const double central_r2 = 9.0 * t;

    LcltError err;
    double wl2 = 0.0;
    const std::int64_t n = box.vertex_count();
    const double tpow = std::pow(t, 0.5 * d);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        const double r2 = l2_dist_sq(box.coord_of_index(i), y, d);
        const double diff = snap.values[static_cast<std::size_t>(i)] -
                            homogenized_kernel_r2(sigma2, t, r2, d) / theta_hat;
        const double a = std::abs(diff);
        if (r2 <= central_r2)
            err.sup_central = std::max(err.sup_central, tpow * a);
        err.sup_weighted =
            std::max(err.sup_weighted, tpow * a * std::exp(r2 / (C0 * t)));
        const double weighted =
            diff * gaussian_weight(C_psi, t, std::sqrt(r2));
        wl2 += weighted * weighted;
    }
    err.weighted_l2 = std::sqrt(wl2);
    return err;
}

RateFit fit_rate(const std::vector<std::pair<double, double>>& t_and_error) {
    if (t_and_error.size() < 3) throw InputError("rate fit needs >= 3 points");
    for (std::size_t i = 0; i + 1 < t_and_error.size(); ++i)
        if (!(t_and_error[i].first < t_and_error[i + 1].first))
            throw InputError("t values must be strictly increasing");
    for (const auto& [t, e] : t_and_error) {
        if (t <= 0.0) throw InputError("t values must be positive");
        if (e <= 0.0) throw StatsError("error values must be positive for a log fit");
    }

    RateFit fit;
    fit.n = static_cast<int>(t_and_error.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [t, e] : t_and_error) {
        const double x = std::log(t), y = std::log(e);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    const double n = double(fit.n);
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / n;
    double rss = 0;
    for (const auto& [t, e] : t_and_error) {
        const double r = std::log(e) - (fit.intercept + fit.slope * std::log(t));
        rss += r * r;
    }
    fit.residual = std::sqrt(rss / n);
    return fit;
}

KappaSchedule kappa_schedule(double delta, int d) {
    if (!(delta > 0.0 && delta < 0.5))
        throw ParamError("delta must lie in (0, 1/2)");
    KappaSchedule s;
    s.alpha = delta / 2.0;
    s.kappa = delta / double(d + 2);
    const double cap = 0.5 - delta;
    double k = s.kappa / 2.0;
    s.kappa_n.push_back(k);
    int n = 0;
    // The uncapped iteration contracts toward 1/2 > cap, so the min clamps
    // to exactly cap in finitely many steps (from either side).
    while (k != cap) {
        k = std::min((1.0 - s.kappa) * k + s.kappa / 2.0, cap);
        s.kappa_n.push_back(k);
        ++n;
        if (n > 100000) throw ParamError("kappa schedule failed to converge");
    }
    s.N = n;
    return s;
}

double green_homogenized(double sigma2, double theta, double r, int d) {
    if (r <= 0.0) throw ParamError("r must be positive");
    if (d == 2) return -std::log(r) / (kPi * sigma2 * theta);
    return std::tgamma(0.5 * d - 1.0) /
           (2.0 * std::pow(kPi, 0.5 * d) * sigma2 * theta) *
           std::pow(r, 2.0 - double(d));
}

namespace {

// E(s) = int_0^s (1 - e^-u)/u du by alternating series.
double entire_e1_like(double s) {
    double term = s, sum = 0.0;
    for (int k = 1; k < 200; ++k) {
        sum += term / double(k);
        term *= -s / double(k + 1);
        if (std::abs(term) < 1e-18) break;
    }
    return sum;
}

// Lower incomplete gamma gamma(a, x) for a in (0, 2], by series.
double lower_gamma(double a, double x) {
    if (x <= 0.0) return 0.0;
    double term = std::pow(x, a) * std::exp(-x) / a;
    double sum = term;
    for (int k = 1; k < 500; ++k) {
        term *= x / (a + double(k));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

} // namespace

GreenReport green_function(const Environment& env, const ClusterLabeling& lab,
                           const Coord& y, double t_max, double tol,
                           double sigma2, double theta, double annulus_lo,
                           double annulus_hi) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    std::int64_t min_side = box.sides[0];
    for (int a = 0; a < d; ++a) min_side = std::min(min_side, box.sides[a]);
    if (t_max < 10.0 * double(min_side))
        throw QuadratureError("T_max must be at least 10x the box side");

    const std::int64_t yi = box.index_of(y);
    if (!lab.on_proxy(yi)) throw ParamError("y must lie on the proxy cluster");

    GreenReport rep;
    rep.d = d;
    rep.y = y;
    rep.t_max = t_max;

    // Geometric grid t0, t0 rho, ..., clipped at t_max; the initial segment
    // [0, t0] is subdivided uniformly because the on-diagonal integrand
    // varies fastest there.
    std::vector<double> grid{0.0};
    for (int j = 1; j <= 16; ++j) grid.push_back(rep.t0 * j / 16.0);
    for (double t = rep.t0 * rep.rho; t < t_max; t *= rep.rho) grid.push_back(t);
    grid.push_back(t_max);

    GraphOperator op(env, proxy_mask(env, lab));
    const std::int64_t n = box.vertex_count();

    Field p(static_cast<std::size_t>(n), 0.0);
    p[static_cast<std::size_t>(yi)] = 1.0;

    Field acc(static_cast<std::size_t>(n), 0.0);
    Field integ_prev(static_cast<std::size_t>(n), 0.0);

    auto integrand = [&](const Field& snap, Field& out) {
        if (d >= 3) {
            out = snap;
        } else {
            const double pyy = snap[static_cast<std::size_t>(yi)];
            out.assign(static_cast<std::size_t>(n), 0.0);
            for (std::int64_t i = 0; i < n; ++i)
                if (lab.on_proxy(i))
                    out[static_cast<std::size_t>(i)] =
                        snap[static_cast<std::size_t>(i)] - pyy;
        }
    };

    // At t=0 the integrand is the delta (d>=3) or delta - 1 on the cluster.
    if (d >= 3) {
        integ_prev[static_cast<std::size_t>(yi)] = 1.0;
    } else {
        for (std::int64_t i = 0; i < n; ++i)
            if (lab.on_proxy(i)) integ_prev[static_cast<std::size_t>(i)] = -1.0;
        integ_prev[static_cast<std::size_t>(yi)] = 0.0;
    }

    const auto& K = simd::active();
    const double leg_tol = tol / double(grid.size());
    Field integ(static_cast<std::size_t>(n), 0.0);
    for (std::size_t j = 1; j < grid.size(); ++j) {
        const double dt = grid[j] - grid[j - 1];
        p = evolve_field(op, p, dt, leg_tol);
        integrand(p, integ);
        // Trapezoid panel.
        K.axpy(0.5 * dt, integ_prev.data(), acc.data(), acc.size());
        K.axpy(0.5 * dt, integ.data(), acc.data(), acc.size());
        std::swap(integ, integ_prev);
    }

    // Analytic tails beyond t_max from theta^-1 pbar.
    std::vector<double> diffs;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        const Coord c = box.coord_of_index(i);
        const double r2 = l2_dist_sq(c, y, d);
        double tail;
        if (d == 2) {
            const double a = r2 / (2.0 * sigma2);
            tail = -entire_e1_like(a / t_max) / (2.0 * kPi * sigma2 * theta);
        } else {
            if (r2 == 0.0) {
                tail = std::pow(2.0 * kPi * sigma2, -1.5) * 2.0 /
                       std::sqrt(t_max) / theta;
            } else {
                const double a = r2 / (2.0 * sigma2);
                tail = std::pow(2.0 * kPi * sigma2, -1.5) * std::pow(a, -0.5) *
                       lower_gamma(0.5, a / t_max) / theta;
            }
        }
        const double g = acc[static_cast<std::size_t>(i)] + tail;
        rep.x_index.push_back(i);
        rep.g.push_back(g);
        const double r = std::sqrt(r2);
        rep.g_hom.push_back(r > 0.0 ? green_homogenized(sigma2, theta, r, d) : 0.0);
        if (d == 2 && r >= annulus_lo && r <= annulus_hi)
            diffs.push_back(g - rep.g_hom.back());
    }

    if (d == 2 && !diffs.empty()) {
        std::sort(diffs.begin(), diffs.end());
        rep.K_estimate = diffs[diffs.size() / 2];
        rep.K_spread = diffs.back() - diffs.front();
    }
    return rep;
}

DirichletResult dirichlet_homogenization_experiment(
    const Environment& env, const ClusterLabeling& lab, const Coord& center,
    double r, const Field& f, double sigma2, int n_steps, double tol) {
    const LatticeBox& box = env.box;
    const int d = box.d;
    const std::int64_t n = box.vertex_count();
    if (static_cast<std::int64_t>(f.size()) != n)
        throw ShapeError("boundary field size does not match box");

    // Cluster domain and its lateral boundary (vertices with a lattice
    // neighbor outside the ball).
    std::vector<std::uint8_t> in_ball(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i)
        if (l2_dist_sq(box.coord_of_index(i), center, d) <= r * r)
            in_ball[static_cast<std::size_t>(i)] = 1;

    auto lateral_boundary = [&](const std::vector<std::uint8_t>& domain) {
        std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
        for (std::int64_t i = 0; i < n; ++i) {
            if (!domain[static_cast<std::size_t>(i)]) continue;
            const Coord c = box.coord_of_index(i);
            Coord nb{0, 0, 0};
            bool edge = false;
            for (int k = 0; k < d && !edge; ++k) {
                for (int sgn = -1; sgn <= 1 && !edge; sgn += 2) {
                    nb = c;
                    nb[k] += sgn;
                    if (!box.contains(nb) ||
                        l2_dist_sq(nb, center, d) > r * r)
                        edge = true;
                }
            }
            if (edge) bnd[static_cast<std::size_t>(i)] = 1;
        }
        return bnd;
    };

    std::vector<std::uint8_t> cluster_dom(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i)
        cluster_dom[static_cast<std::size_t>(i)] =
            in_ball[static_cast<std::size_t>(i)] && lab.on_proxy(i);

    // Surrogate: full-lattice ball with constant conductance sigma2/2.
    Environment flat = env;
    for (int k = 0; k < d; ++k) {
        auto& w = flat.cond[static_cast<std::size_t>(k)];
        for (std::int64_t i = 0; i < n; ++i) {
            const Coord c = box.local_of_index(i);
            w[static_cast<std::size_t>(i)] =
                (c[k] < box.sides[k] - 1) ? 0.5 * sigma2 : 0.0;
        }
    }

    const double dt = r * r / double(n_steps);

    auto run = [&](const Environment& e, const std::vector<std::uint8_t>& dom)
        -> std::vector<Field> {
        GraphOperator op(e, dom);
        std::vector<std::uint8_t> bnd = lateral_boundary(dom);

        std::vector<std::uint8_t> interior(static_cast<std::size_t>(n), 0);
        for (std::int64_t i = 0; i < n; ++i)
            interior[static_cast<std::size_t>(i)] =
                dom[static_cast<std::size_t>(i)] && !bnd[static_cast<std::size_t>(i)];

        Field g(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (bnd[static_cast<std::size_t>(i)])
                g[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)];
        Field Lg(static_cast<std::size_t>(n), 0.0);
        op.apply(g, Lg);

        auto apply_impl = [&](const Field& v, Field& out) {
            op.apply(v, out);
            for (std::int64_t i = 0; i < n; ++i) {
                if (interior[static_cast<std::size_t>(i)])
                    out[static_cast<std::size_t>(i)] =
                        v[static_cast<std::size_t>(i)] -
                        dt * out[static_cast<std::size_t>(i)];
                else
                    out[static_cast<std::size_t>(i)] = 0.0;
            }
        };
        std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (interior[static_cast<std::size_t>(i)])
                diag[static_cast<std::size_t>(i)] =
                    1.0 + dt * op.diag[static_cast<std::size_t>(i)];

        // Initial data f on the domain.
        Field x(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (interior[static_cast<std::size_t>(i)])
                x[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)];

        std::vector<Field> history;
        history.reserve(static_cast<std::size_t>(n_steps));
        Field b(static_cast<std::size_t>(n), 0.0);
        for (int s = 0; s < n_steps; ++s) {
            for (std::int64_t i = 0; i < n; ++i)
                b[static_cast<std::size_t>(i)] =
                    interior[static_cast<std::size_t>(i)]
                        ? x[static_cast<std::size_t>(i)] +
                              dt * Lg[static_cast<std::size_t>(i)]
                        : 0.0;
            SolveResult sol =
                cg_solve(apply_impl, b, x, diag, tol, default_cg_cap(n) * 4, false);
            x = sol.u;
            Field full = x;
            for (std::int64_t i = 0; i < n; ++i)
                if (bnd[static_cast<std::size_t>(i)])
                    full[static_cast<std::size_t>(i)] =
                        f[static_cast<std::size_t>(i)];
            history.push_back(std::move(full));
        }
        return history;
    };

    std::vector<Field> u_cluster = run(env, cluster_dom);
    std::vector<Field> u_flat = run(flat, in_ball);

    // Normalized L2 over the cluster cylinder.
    std::int64_t vol = 0;
    for (std::int64_t i = 0; i < n; ++i)
        if (cluster_dom[static_cast<std::size_t>(i)]) ++vol;
    double acc = 0.0;
    for (int s = 0; s < n_steps; ++s) {
        double sq = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!cluster_dom[static_cast<std::size_t>(i)]) continue;
            const double diff =
                u_cluster[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] -
                u_flat[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)];
            sq += diff * diff;
        }
        acc += dt * sq / double(std::max<std::int64_t>(vol, 1));
    }
    const double l2 = std::sqrt(acc / (r * r));

    // ||grad f|| over the cluster ball (normalized L2 of open-bond gradient).
    double gf = 0.0;
    for (int k = 1; k <= d; ++k) {
        const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            if (w[static_cast<std::size_t>(i)] == 0.0) continue;
            if (!cluster_dom[static_cast<std::size_t>(i)] ||
                !cluster_dom[static_cast<std::size_t>(i + s)])
                continue;
            const double dfv = f[static_cast<std::size_t>(i + s)] -
                               f[static_cast<std::size_t>(i)];
            gf += dfv * dfv;
        }
    }
    gf = std::sqrt(gf / double(std::max<std::int64_t>(vol, 1)));

    DirichletResult res;
    res.grad_f_norm = gf;
    res.rel_error = gf > 0.0 ? l2 / (r * gf) : l2 / r;
    return res;
}

} // namespace perchom
