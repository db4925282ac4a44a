#include "perchom/elliptic.hpp"

#include <algorithm>
#include <cmath>

#include "perchom/simd/kernels.hpp"

namespace perchom {

namespace {

// Vertices of the sub-box [lo, hi] (inclusive) as box indices; clipped cubes
// are rejected by the caller.
struct SubBox {
    Coord lo{0, 0, 0}, hi{0, 0, 0};
    bool inside(const LatticeBox& box) const {
        for (int a = 0; a < box.d; ++a)
            if (lo[a] < box.origin[a] || hi[a] >= box.origin[a] + box.sides[a])
                return false;
        return true;
    }
};

} // namespace

CellEnergy cell_energy(const Environment& env, const TriadicCube& cube,
                       const std::array<double, 3>& p_dir, double tol) {
    const LatticeBox& box = env.box;
    SubBox sb{cube.lo(), cube.hi()};
    if (!sb.inside(box)) throw GeometryError("cube exceeds the environment box");

    const std::int64_t n = box.vertex_count();

    // Cluster restricted to the cube: components of open bonds inside it.
    // The energy space is l_p + C_0 of the full cube cluster set, so all
    // open-bond components participate; the Dirichlet solve decouples them.
    std::vector<std::uint8_t> cube_mask(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        const Coord c = box.coord_of_index(i);
        if (cube.contains(c)) cube_mask[static_cast<std::size_t>(i)] = 1;
    }

    // Keep only vertices with an open bond inside the cube.
    std::vector<std::uint8_t> active(static_cast<std::size_t>(n), 0);
    bool any_bond = false;
    for (int k = 1; k <= box.d; ++k) {
        const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            if (w[static_cast<std::size_t>(i)] == 0.0) continue;
            if (!cube_mask[static_cast<std::size_t>(i)] ||
                !cube_mask[static_cast<std::size_t>(i + s)])
                continue;
            active[static_cast<std::size_t>(i)] = 1;
            active[static_cast<std::size_t>(i + s)] = 1;
            any_bond = true;
        }
    }
    if (!any_bond) return {0.0, true};

    // Boundary: cluster vertices on the cube's faces carry l_p; interior
    // components not touching the faces relax freely (to a constant).
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        const Coord c = box.coord_of_index(i);
        for (int a = 0; a < box.d; ++a) {
            if (c[a] == sb.lo[a] || c[a] == sb.hi[a]) {
                bnd[static_cast<std::size_t>(i)] = 1;
                break;
            }
        }
    }

    Field lp(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!active[static_cast<std::size_t>(i)]) continue;
        const Coord c = box.coord_of_index(i);
        double v = 0.0;
        for (int a = 0; a < box.d; ++a) v += p_dir[static_cast<std::size_t>(a)] * double(c[a]);
        lp[static_cast<std::size_t>(i)] = v;
    }

    // Solve with the cube-cluster mask; warm start from l_p so that for
    // constant conductances the affine minimizer exits CG immediately.
    SolveResult sol;
    {
        GraphOperator op(env, active, Boundary::DirichletZero);
        std::vector<std::uint8_t> interior(static_cast<std::size_t>(n), 0);
        for (std::int64_t i = 0; i < n; ++i)
            interior[static_cast<std::size_t>(i)] =
                active[static_cast<std::size_t>(i)] && !bnd[static_cast<std::size_t>(i)];

        auto apply_interior = [&](const Field& u, Field& out) {
            op.apply(u, out);
            for (std::int64_t i = 0; i < n; ++i) {
                if (interior[static_cast<std::size_t>(i)])
                    out[static_cast<std::size_t>(i)] = -out[static_cast<std::size_t>(i)];
                else
                    out[static_cast<std::size_t>(i)] = 0.0;
            }
        };

        Field b(static_cast<std::size_t>(n), 0.0);
        Field Lg(static_cast<std::size_t>(n), 0.0);
        Field g(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (bnd[static_cast<std::size_t>(i)])
                g[static_cast<std::size_t>(i)] = lp[static_cast<std::size_t>(i)];
        op.apply(g, Lg);
        for (std::int64_t i = 0; i < n; ++i)
            if (interior[static_cast<std::size_t>(i)])
                b[static_cast<std::size_t>(i)] = Lg[static_cast<std::size_t>(i)];

        std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (interior[static_cast<std::size_t>(i)])
                diag[static_cast<std::size_t>(i)] = op.diag[static_cast<std::size_t>(i)];

        Field x0(static_cast<std::size_t>(n), 0.0);
        for (std::int64_t i = 0; i < n; ++i)
            if (interior[static_cast<std::size_t>(i)])
                x0[static_cast<std::size_t>(i)] = lp[static_cast<std::size_t>(i)];

        sol = cg_solve(apply_interior, b, x0, diag, tol, default_cg_cap(n), true);
        for (std::int64_t i = 0; i < n; ++i)
            if (bnd[static_cast<std::size_t>(i)])
                sol.u[static_cast<std::size_t>(i)] = lp[static_cast<std::size_t>(i)];
    }

    double energy = 0.0;
    for (int k = 1; k <= box.d; ++k) {
        const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            const double a = w[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            if (!active[static_cast<std::size_t>(i)] ||
                !active[static_cast<std::size_t>(i + s)])
                continue;
            const double du = sol.u[static_cast<std::size_t>(i + s)] -
                              sol.u[static_cast<std::size_t>(i)];
            energy += a * du * du;
        }
    }
    return {energy / (2.0 * double(cube.volume())), false};
}

HomogenizedParams estimate_homogenized(int d, double p, double lambda, Law law,
                                       int m, int n_samples, std::uint64_t seed,
                                       bool force) {
    if (m < 2) throw ParamError("m must be >= 2");
    if (n_samples < 1) throw ParamError("n_samples must be >= 1");
    subcritical_guard(d, p, force);

    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    HomogenizedParams out;
    out.m = m;
    out.n_samples = n_samples;

    // Direction list: axes, then normalized axis pairs for polarization.
    std::vector<std::array<double, 3>> dirs;
    for (int k = 0; k < d; ++k) {
        std::array<double, 3> e{0, 0, 0};
        e[static_cast<std::size_t>(k)] = 1.0;
        dirs.push_back(e);
    }
    std::vector<std::pair<int, int>> pairs;
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k) {
            std::array<double, 3> e{0, 0, 0};
            e[static_cast<std::size_t>(j)] = inv_sqrt2;
            e[static_cast<std::size_t>(k)] = inv_sqrt2;
            dirs.push_back(e);
            pairs.emplace_back(j, k);
        }

    std::vector<std::vector<double>> nus_m(dirs.size());
    std::vector<std::vector<double>> nus_prev(dirs.size());
    std::vector<double> thetas;

    const std::int64_t side = pow3(m);
    const std::int64_t h = (side - 1) / 2;
    for (int s = 0; s < n_samples; ++s) {
        // Box centered at the origin so the sampled cube is the genuine
        // triadic cube of level m around 0.
        const LatticeBox box(d, {-h, -h, -h}, {side, side, side});
        Environment env = generate_environment(
            box, p, lambda, law, derive_seed(seed, static_cast<std::uint64_t>(s)));
        ClusterLabeling lab = label_clusters(env);
        thetas.push_back(proxy_density_central(env, lab));

        TriadicCube cube;
        cube.level = m;
        cube.d = d;
        for (std::size_t di = 0; di < dirs.size(); ++di)
            nus_m[di].push_back(cell_energy(env, cube, dirs[di]).nu);

        TriadicCube sub;
        sub.level = m - 1;
        sub.d = d;
        for (std::size_t di = 0; di < dirs.size(); ++di)
            nus_prev[di].push_back(cell_energy(env, sub, dirs[di]).nu);
    }

    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / double(v.size());
    };
    auto ci_of = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        const double mu = mean_of(v);
        double var = 0;
        for (double x : v) var += (x - mu) * (x - mu);
        var /= double(v.size() - 1);
        return 1.959963984540054 * std::sqrt(var / double(v.size()));
    };

    auto fill = [&](const std::vector<std::vector<double>>& nus,
                    std::array<std::array<double, 3>, 3>& abar) {
        std::vector<double> q(dirs.size());
        for (std::size_t di = 0; di < dirs.size(); ++di)
            q[di] = 2.0 * mean_of(nus[di]);
        for (int k = 0; k < d; ++k)
            abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] =
                q[static_cast<std::size_t>(k)];
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const auto [j, k] = pairs[pi];
            const double off =
                q[static_cast<std::size_t>(d) + pi] -
                0.5 * (q[static_cast<std::size_t>(j)] + q[static_cast<std::size_t>(k)]);
            abar[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)] = off;
            abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = off;
        }
    };
    fill(nus_m, out.abar);
    fill(nus_prev, out.abar_prev);
    for (int k = 0; k < d; ++k)
        out.abar_ci[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] =
            2.0 * ci_of(nus_m[static_cast<std::size_t>(k)]);

    out.theta_hat = mean_of(thetas);
    out.theta_ci = ci_of(thetas);

    double trace = 0.0;
    for (int k = 0; k < d; ++k)
        trace += out.abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
    out.sigma2 = out.theta_hat > 0.0
                     ? 2.0 * (trace / double(d)) / out.theta_hat
                     : 0.0;
    return out;
}

CorrectorField solve_corrector(const Environment& env, const ClusterLabeling& lab,
                               int k, const Coord& y, double tol) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    if (k < 1 || k > box.d) throw ParamError("direction out of range");

    std::vector<std::uint8_t> mask = proxy_mask(env, lab);

    // Cluster boundary of the box: proxy vertices on the geometric faces.
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const Coord c = box.local_of_index(i);
        for (int a = 0; a < box.d; ++a)
            if (c[a] == 0 || c[a] == box.sides[a] - 1) {
                bnd[static_cast<std::size_t>(i)] = 1;
                break;
            }
    }

    // rhs = nabla . a e_k  (divergence of the slope field).
    Field rhs(static_cast<std::size_t>(n), 0.0);
    const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
    const std::int64_t s = box.stride(k - 1);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const Coord c = box.local_of_index(i);
        double div = 0.0;
        if (c[k - 1] < box.sides[k - 1] - 1 && mask[static_cast<std::size_t>(i + s)])
            div += w[static_cast<std::size_t>(i)];
        if (c[k - 1] > 0 && mask[static_cast<std::size_t>(i - s)])
            div -= w[static_cast<std::size_t>(i - s)];
        rhs[static_cast<std::size_t>(i)] = div;
    }

    Field zero(static_cast<std::size_t>(n), 0.0);
    SolveResult sol = solve_dirichlet(env, mask, bnd, rhs, zero, tol);

    // Anchor: proxy vertex closest to y in Euclidean distance, lexicographic
    // tie break, then shift so chi(anchor) = 0.
    std::int64_t anchor = -1;
    double best = 1e300;
    Coord best_c{0, 0, 0};
    for (std::int64_t i = 0; i < n; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const Coord c = box.coord_of_index(i);
        const double dist = l2_dist_sq(c, y, box.d);
        if (dist < best ||
            (dist == best && lex_less(c, best_c, box.d))) {
            best = dist;
            best_c = c;
            anchor = i;
        }
    }
    if (anchor < 0) throw ParamError("no proxy vertex for anchoring");
    const double shift = sol.u[static_cast<std::size_t>(anchor)];
    for (std::int64_t i = 0; i < n; ++i) {
        if (mask[static_cast<std::size_t>(i)])
            sol.u[static_cast<std::size_t>(i)] -= shift;
        else
            sol.u[static_cast<std::size_t>(i)] = 0.0;
    }

    CorrectorField chi;
    chi.direction = k;
    chi.values = std::move(sol.u);
    chi.anchor_index = anchor;
    return chi;
}

FluxField flux_field(const Environment& env, const ClusterLabeling& lab,
                     const CorrectorField& chi, double sigma2,
                     FluxVariant variant) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    const int k = chi.direction;

    FluxField out;
    out.direction = k;
    out.variant = variant;
    out.comp.assign(static_cast<std::size_t>(box.d),
                    Field(static_cast<std::size_t>(n), 0.0));

    // Centered flux component i at x: a({x,x+e_i}) (delta_{ik} + D_i chi(x))
    // - sigma2/2 delta_{ik}; zero off-cluster.
    std::vector<Field> centered(static_cast<std::size_t>(box.d),
                                Field(static_cast<std::size_t>(n), 0.0));
    // Component i lives on the bond slot (x, x+e_i); far-face vertices have
    // no such slot and carry 0, so the a == 1 flux vanishes identically.
    for (int i_dir = 1; i_dir <= box.d; ++i_dir) {
        const auto& w = env.cond[static_cast<std::size_t>(i_dir - 1)];
        const std::int64_t s = box.stride(i_dir - 1);
        auto& g = centered[static_cast<std::size_t>(i_dir - 1)];
        for (std::int64_t x = 0; x < n; ++x) {
            if (!lab.on_proxy(x)) continue;
            const Coord c = box.local_of_index(x);
            if (c[i_dir - 1] >= box.sides[i_dir - 1] - 1) continue;
            const double a = w[static_cast<std::size_t>(x)];
            double dchi = 0.0;
            if (a != 0.0)
                dchi = chi.values[static_cast<std::size_t>(x + s)] -
                       chi.values[static_cast<std::size_t>(x)];
            const double slope = (i_dir == k) ? 1.0 : 0.0;
            g[static_cast<std::size_t>(x)] =
                a * (slope + dchi) - 0.5 * sigma2 * slope;
        }
    }

    if (variant == FluxVariant::Centered) {
        out.comp = std::move(centered);
        return out;
    }

    // Translated: component i at x is the centered component i at x - e_i.
    for (int i_dir = 1; i_dir <= box.d; ++i_dir) {
        const std::int64_t s = box.stride(i_dir - 1);
        const auto& src = centered[static_cast<std::size_t>(i_dir - 1)];
        auto& dst = out.comp[static_cast<std::size_t>(i_dir - 1)];
        for (std::int64_t x = 0; x < n; ++x) {
            if (!lab.on_proxy(x)) continue;
            const Coord c = box.local_of_index(x);
            if (c[i_dir - 1] == 0) continue;
            dst[static_cast<std::size_t>(x)] = src[static_cast<std::size_t>(x - s)];
        }
    }
    return out;
}

namespace {

// Unit-weight Laplacian of the open-bond subgraph restricted to a vertex set.
struct UnitLaplacian {
    const LatticeBox* box;
    std::vector<std::vector<std::uint8_t>> open; // per direction: bond inside set
    std::vector<double> degree;

    UnitLaplacian(const Environment& env, const std::vector<std::uint8_t>& set)
        : box(&env.box) {
        const std::int64_t n = box->vertex_count();
        open.assign(static_cast<std::size_t>(box->d),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0));
        degree.assign(static_cast<std::size_t>(n), 0.0);
        for (int k = 1; k <= box->d; ++k) {
            const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = box->stride(k - 1);
            for (std::int64_t i = 0; i < n; ++i) {
                if (w[static_cast<std::size_t>(i)] == 0.0) continue;
                if (!set[static_cast<std::size_t>(i)] ||
                    !set[static_cast<std::size_t>(i + s)])
                    continue;
                open[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(i)] = 1;
                degree[static_cast<std::size_t>(i)] += 1.0;
                degree[static_cast<std::size_t>(i + s)] += 1.0;
            }
        }
    }

    // out = L1 u (positive semidefinite graph Laplacian, free boundary)
    void apply(const Field& u, Field& out) const {
        const std::int64_t n = box->vertex_count();
        out.assign(static_cast<std::size_t>(n), 0.0);
        for (int k = 1; k <= box->d; ++k) {
            const auto& o = open[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = box->stride(k - 1);
            for (std::int64_t i = 0; i < n; ++i) {
                if (!o[static_cast<std::size_t>(i)]) continue;
                const double du = u[static_cast<std::size_t>(i)] -
                                  u[static_cast<std::size_t>(i + s)];
                out[static_cast<std::size_t>(i)] += du;
                out[static_cast<std::size_t>(i + s)] -= du;
            }
        }
    }
};

std::vector<std::uint8_t> ball_cluster_set(const Environment& env,
                                           const ClusterLabeling& lab,
                                           const Coord& center, double r) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    std::vector<std::uint8_t> set(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        if (!lab.on_proxy(i)) continue;
        if (l2_dist_sq(box.coord_of_index(i), center, box.d) <= r * r)
            set[static_cast<std::size_t>(i)] = 1;
    }
    return set;
}

} // namespace

WeakNorm weak_norm(const Environment& env, const ClusterLabeling& lab,
                   const Field& f, const Coord& center, double r, double tol) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    std::vector<std::uint8_t> set = ball_cluster_set(env, lab, center, r);

    std::int64_t vol = 0;
    for (std::int64_t i = 0; i < n; ++i)
        if (set[static_cast<std::size_t>(i)]) ++vol;
    if (vol == 0) return {0.0, 0.0};

    UnitLaplacian lap(env, set);
    const double shift = 1.0 / (r * r);

    Field b(static_cast<std::size_t>(n), 0.0);
    bool all_zero = true;
    for (std::int64_t i = 0; i < n; ++i)
        if (set[static_cast<std::size_t>(i)]) {
            b[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)];
            if (b[static_cast<std::size_t>(i)] != 0.0) all_zero = false;
        }
    if (all_zero) return {0.0, 0.0};

    auto apply_A = [&](const Field& u, Field& out) {
        lap.apply(u, out);
        for (std::int64_t i = 0; i < n; ++i) {
            if (set[static_cast<std::size_t>(i)])
                out[static_cast<std::size_t>(i)] += shift * u[static_cast<std::size_t>(i)];
            else
                out[static_cast<std::size_t>(i)] = 0.0;
        }
    };
    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        if (set[static_cast<std::size_t>(i)])
            diag[static_cast<std::size_t>(i)] =
                lap.degree[static_cast<std::size_t>(i)] + shift;

    Field x0(static_cast<std::size_t>(n), 0.0);
    SolveResult sol = cg_solve(apply_A, b, x0, diag, tol,
                               default_cg_cap(vol) * 4, false);

    const auto& K = simd::active();
    const double quad = K.dot(b.data(), sol.u.data(), b.size());

    WeakNorm out;
    out.dual_norm = std::sqrt(std::max(0.0, quad) / double(vol));

    // Multiscale-Poincare style upper bound: sum over scales 3^j of the rms
    // block average of f at that scale, plus the whole-ball mean term.
    double mean = 0.0;
    for (std::int64_t i = 0; i < n; ++i)
        if (set[static_cast<std::size_t>(i)]) mean += b[static_cast<std::size_t>(i)];
    mean /= double(vol);
    double bound = std::abs(mean) * r;
    for (int j = 0; pow3(j) <= static_cast<std::int64_t>(r); ++j) {
        const std::int64_t bs = pow3(j);
        // Block sums over the aligned 3^j grid.
        double acc = 0.0;
        std::int64_t blocks = 0;
        Coord lo{0, 0, 0};
        for (int a = 0; a < box.d; ++a) lo[a] = center[a] - static_cast<std::int64_t>(r);
        std::int64_t span = 2 * static_cast<std::int64_t>(r) + 1;
        const std::int64_t nb = (span + bs - 1) / bs;
        std::int64_t total_blocks = 1;
        for (int a = 0; a < box.d; ++a) total_blocks *= nb;
        for (std::int64_t bi = 0; bi < total_blocks; ++bi) {
            std::int64_t rem = bi;
            Coord blo{0, 0, 0};
            for (int a = box.d - 1; a >= 0; --a) {
                blo[a] = lo[a] + (rem % nb) * bs;
                rem /= nb;
            }
            double s = 0.0;
            std::int64_t cnt = 0;
            Coord c{0, 0, 0};
            for (std::int64_t o0 = 0; o0 < bs; ++o0)
                for (std::int64_t o1 = 0; o1 < bs; ++o1)
                    for (std::int64_t o2 = 0; o2 < (box.d == 3 ? bs : 1); ++o2) {
                        c[0] = blo[0] + o0;
                        c[1] = blo[1] + o1;
                        c[2] = box.d == 3 ? blo[2] + o2 : 0;
                        if (!box.contains(c)) continue;
                        const std::int64_t idx = box.index_of(c);
                        if (!set[static_cast<std::size_t>(idx)]) continue;
                        s += b[static_cast<std::size_t>(idx)];
                        ++cnt;
                    }
            if (cnt > 0) {
                const double avg = s / double(cnt);
                acc += avg * avg;
                ++blocks;
            }
        }
        if (blocks > 0)
            bound += double(bs) * std::sqrt(acc / double(blocks));
    }
    out.msp_bound = bound;
    return out;
}

WeakNorm weak_norm_vector(const Environment& env, const ClusterLabeling& lab,
                          const std::vector<Field>& comps, const Coord& center,
                          double r, double tol) {
    WeakNorm out;
    double q = 0.0, msp = 0.0;
    for (const Field& f : comps) {
        WeakNorm w = weak_norm(env, lab, f, center, r, tol);
        q += w.dual_norm * w.dual_norm;
        msp += w.msp_bound * w.msp_bound;
    }
    out.dual_norm = std::sqrt(q);
    out.msp_bound = std::sqrt(msp);
    return out;
}

std::vector<double> corrector_oscillation(const Environment& env,
                                          const ClusterLabeling& lab,
                                          const CorrectorField& chi,
                                          const std::vector<double>& radii) {
    const LatticeBox& box = env.box;
    const Coord anchor = box.coord_of_index(chi.anchor_index);
    const std::int64_t n = box.vertex_count();
    std::vector<double> out;
    for (double r : radii) {
        double lo = 1e300, hi = -1e300;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!lab.on_proxy(i)) continue;
            if (l2_dist_sq(box.coord_of_index(i), anchor, box.d) > r * r) continue;
            lo = std::min(lo, chi.values[static_cast<std::size_t>(i)]);
            hi = std::max(hi, chi.values[static_cast<std::size_t>(i)]);
        }
        out.push_back(hi >= lo ? hi - lo : 0.0);
    }
    return out;
}

PoincareResult poincare_constant(const Environment& env, const ClusterLabeling& lab,
                                 const Coord& center, double r, double tol,
                                 bool largest_component) {
    const LatticeBox& box = env.box;
    const std::int64_t n = box.vertex_count();
    std::vector<std::uint8_t> set = ball_cluster_set(env, lab, center, r);

    {
        std::vector<std::int64_t> verts;
        for (std::int64_t i = 0; i < n; ++i)
            if (set[static_cast<std::size_t>(i)]) verts.push_back(i);
        if (verts.size() < 2) return {0.0, 0.0, true};
    }

    // Components of the in-ball restriction; label by BFS over open bonds.
    {
        UnitLaplacian probe(env, set);
        std::vector<std::int32_t> comp(static_cast<std::size_t>(n), -1);
        std::vector<std::int64_t> comp_sz;
        std::int32_t nc = 0;
        for (std::int64_t start = 0; start < n; ++start) {
            if (!set[static_cast<std::size_t>(start)] ||
                comp[static_cast<std::size_t>(start)] >= 0)
                continue;
            comp[static_cast<std::size_t>(start)] = nc;
            comp_sz.push_back(1);
            std::vector<std::int64_t> stack{start};
            while (!stack.empty()) {
                const std::int64_t x = stack.back();
                stack.pop_back();
                const Coord c = box.local_of_index(x);
                for (int k = 1; k <= box.d; ++k) {
                    const auto& o = probe.open[static_cast<std::size_t>(k - 1)];
                    const std::int64_t s = box.stride(k - 1);
                    if (c[k - 1] < box.sides[k - 1] - 1 &&
                        o[static_cast<std::size_t>(x)] &&
                        comp[static_cast<std::size_t>(x + s)] < 0) {
                        comp[static_cast<std::size_t>(x + s)] = nc;
                        ++comp_sz.back();
                        stack.push_back(x + s);
                    }
                    if (c[k - 1] > 0 && o[static_cast<std::size_t>(x - s)] &&
                        comp[static_cast<std::size_t>(x - s)] < 0) {
                        comp[static_cast<std::size_t>(x - s)] = nc;
                        ++comp_sz.back();
                        stack.push_back(x - s);
                    }
                }
            }
            ++nc;
        }
        if (nc > 1) {
            if (!largest_component) return {0.0, 0.0, true};
            std::int32_t keep = 0;
            for (std::int32_t cnum = 1; cnum < nc; ++cnum)
                if (comp_sz[static_cast<std::size_t>(cnum)] >
                    comp_sz[static_cast<std::size_t>(keep)])
                    keep = cnum;
            for (std::int64_t i = 0; i < n; ++i)
                if (set[static_cast<std::size_t>(i)] &&
                    comp[static_cast<std::size_t>(i)] != keep)
                    set[static_cast<std::size_t>(i)] = 0;
        }
    }

    std::vector<std::int64_t> verts;
    for (std::int64_t i = 0; i < n; ++i)
        if (set[static_cast<std::size_t>(i)]) verts.push_back(i);
    if (verts.size() < 2) return {0.0, 0.0, true};

    UnitLaplacian lap(env, set);

    // Inverse power iteration on L restricted to the orthogonal complement of
    // constants: solve L z = v (consistent after projection), normalize.
    const auto& K = simd::active();
    const double vol = double(verts.size());

    auto project = [&](Field& u) {
        double mean = 0.0;
        for (std::int64_t i : verts) mean += u[static_cast<std::size_t>(i)];
        mean /= vol;
        for (std::int64_t i : verts) u[static_cast<std::size_t>(i)] -= mean;
    };

    auto applyL = [&](const Field& u, Field& out) {
        lap.apply(u, out);
        for (std::int64_t i = 0; i < n; ++i)
            if (!set[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(i)] = 0.0;
    };

    std::vector<double> diag(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i : verts)
        diag[static_cast<std::size_t>(i)] =
            std::max(lap.degree[static_cast<std::size_t>(i)], 1e-12);

    Field v(static_cast<std::size_t>(n), 0.0);
    for (std::size_t j = 0; j < verts.size(); ++j)
        v[static_cast<std::size_t>(verts[j])] =
            hash_uniform(env.seed, 0x706f696eULL, static_cast<std::uint64_t>(j), 7) -
            0.5;
    project(v);
    double nv = std::sqrt(K.nrm2sq(v.data(), v.size()));
    K.scale(1.0 / nv, v.data(), v.size());

    double lambda2 = 0.0, prev = -1.0;
    for (int it = 0; it < 400; ++it) {
        // Solve L z = v on the projected space.
        auto apply_proj = [&](const Field& u, Field& out) {
            Field tmp = u;
            project(tmp);
            applyL(tmp, out);
            project(out);
        };
        Field x0(static_cast<std::size_t>(n), 0.0);
        SolveResult sol =
            cg_solve(apply_proj, v, x0, diag, 1e-12, default_cg_cap(n) * 4, false);
        project(sol.u);
        const double nz = std::sqrt(K.nrm2sq(sol.u.data(), sol.u.size()));
        if (nz == 0.0) break;
        K.scale(1.0 / nz, sol.u.data(), sol.u.size());
        // Rayleigh quotient of the normalized iterate.
        Field Lu(static_cast<std::size_t>(n), 0.0);
        applyL(sol.u, Lu);
        lambda2 = K.dot(sol.u.data(), Lu.data(), Lu.size());
        v = sol.u;
        if (prev > 0.0 && std::abs(lambda2 - prev) <= tol * lambda2) break;
        prev = lambda2;
    }

    PoincareResult res;
    res.lambda2 = lambda2;
    res.c_p = lambda2 > 0.0 ? 1.0 / (r * std::sqrt(lambda2)) : 0.0;
    res.disconnected = false;
    return res;
}

} // namespace perchom
