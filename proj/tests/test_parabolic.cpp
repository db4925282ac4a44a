#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "perchom/cluster.hpp"
#include "perchom/parabolic.hpp"
#include "perchom/simd/kernels.hpp"
#include "test_util.hpp"

using namespace perchom;

namespace {

KernelSnapshot evolve_from(const Environment& env, const ClusterLabeling& lab,
                           const Coord& y, double t, double tol = 1e-12) {
    return evolve_kernel(env, lab, y, t, EvolveMethod::Uniformization, tol);
}

} // namespace

TEST_CASE("scaled Bessel: frozen references on both sides of the switch") {
    // I_0(1) = 1.2660658..., scaled e^-1 I_0(1).
    CHECK(scaled_bessel_i(0, 1.0) ==
          doctest::Approx(std::exp(-1.0) * 1.2660658777520084).epsilon(1e-12));
    // Reference values (scipy.special.ive) just below and above the
    // series/recurrence switch at z=30.
    CHECK(scaled_bessel_i(0, 29.999) ==
          doctest::Approx(0.0731471761291321).epsilon(1e-12));
    CHECK(scaled_bessel_i(5, 29.999) ==
          doctest::Approx(0.04792532493078519).epsilon(1e-12));
    CHECK(scaled_bessel_i(0, 30.001) ==
          doctest::Approx(0.0731447168973632).epsilon(1e-12));
    CHECK(scaled_bessel_i(12, 30.001) ==
          doctest::Approx(0.006584611771816058).epsilon(1e-12));
    // Identity e^-z (I_0(z) + 2 sum I_n(z)) = 1.
    for (double z : {2.0, 10.0, 80.0}) {
        double sum = scaled_bessel_i(0, z);
        for (int n = 1; n < 400; ++n) sum += 2.0 * scaled_bessel_i(n, z);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("t=0 returns the delta") {
    Environment env = generate_environment(LatticeBox::square(2, 8), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    KernelSnapshot s = evolve_from(env, lab, {3, 3, 0}, 0.0);
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
        CHECK(s.values[static_cast<std::size_t>(i)] ==
              (i == s.y_index ? 1.0 : 0.0));
}

TEST_CASE("two-vertex chain matches the closed form") {
    Environment env = testutil::manual_env(LatticeBox::square(2, 2));
    const double a = 0.6;
    testutil::set_bond(env, {0, 0, 0}, 1, a);
    ClusterLabeling lab = label_clusters(env);
    for (double t : {0.1, 0.5, 2.0, 10.0}) {
        KernelSnapshot s = evolve_from(env, lab, {0, 0, 0}, t);
        const double expect = 0.5 * (1.0 + std::exp(-2.0 * a * t));
        CHECK(s.values[static_cast<std::size_t>(env.box.index_of({0, 0, 0}))] ==
              doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("full-lattice d=2 kernel matches the Bessel product oracle") {
    // Box large enough that the boundary never matters at t <= 5.
    Environment env = generate_environment(LatticeBox::square(2, 41), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    const Coord y{20, 20, 0};
    for (double t : {0.5, 2.0, 5.0}) {
        KernelSnapshot s = evolve_from(env, lab, y, t, 1e-13);
        for (std::int64_t dx = -8; dx <= 8; dx += 4)
            for (std::int64_t dy = -8; dy <= 8; dy += 4) {
                const double ref = z2_unit_kernel(t, dx, dy);
                const double got = s.values[static_cast<std::size_t>(
                    env.box.index_of({20 + dx, 20 + dy, 0}))];
                CHECK(std::abs(got - ref) <= 1e-8);
            }
    }
}

TEST_CASE("uniformization conserves mass and positivity") {
    Environment env = generate_environment(LatticeBox::square(2, 24), 0.7, 1.0,
                                           Law::BernoulliUnit, 11);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
        if (lab.on_proxy(i)) { y = env.box.coord_of_index(i); break; }
    KernelSnapshot s = evolve_from(env, lab, y, 30.0, 1e-12);
    const auto& K = simd::active();
    const double mass = K.sum(s.values.data(), s.values.size());
    CHECK(std::abs(mass - 1.0) <= 1e-12);
    for (double v : s.values) CHECK(v >= 0.0);
    CHECK(s.mass_defect_bound <= 1e-12);
}

TEST_CASE("symmetry and semigroup identities") {
    Environment env = generate_environment(LatticeBox::square(2, 20), 0.75, 1.0,
                                           Law::BernoulliUnit, 5);
    ClusterLabeling lab = label_clusters(env);
    std::vector<Coord> pts;
    for (std::int64_t i = 0; i < env.box.vertex_count() && pts.size() < 2; ++i)
        if (lab.on_proxy(i) &&
            l2_dist_sq(env.box.coord_of_index(i), {10, 10, 0}, 2) < 16.0)
            pts.push_back(env.box.coord_of_index(i));
    REQUIRE(pts.size() == 2);

    const double t = 12.0;
    KernelSnapshot from_x = evolve_from(env, lab, pts[0], t);
    KernelSnapshot from_y = evolve_from(env, lab, pts[1], t);

    // p(t,x,y) = p(t,y,x)
    const double pxy =
        from_y.values[static_cast<std::size_t>(env.box.index_of(pts[0]))];
    const double pyx =
        from_x.values[static_cast<std::size_t>(env.box.index_of(pts[1]))];
    CHECK(pxy == doctest::Approx(pyx).epsilon(1e-10));

    // sum_z p(t,x,z) p(t,z,y) = p(2t,x,y)
    const auto& K = simd::active();
    const double conv =
        K.dot(from_x.values.data(), from_y.values.data(), from_x.values.size());
    KernelSnapshot long_run = evolve_from(env, lab, pts[1], 2.0 * t);
    const double direct =
        long_run.values[static_cast<std::size_t>(env.box.index_of(pts[0]))];
    CHECK(std::abs(conv - direct) <= 1e-9);
}

TEST_CASE("monte-carlo method produces a normalized endpoint histogram") {
    Environment env = testutil::manual_env(LatticeBox::square(2, 2));
    const double a = 0.8, t = 1.0;
    testutil::set_bond(env, {0, 0, 0}, 1, a);
    ClusterLabeling lab = label_clusters(env);
    KernelSnapshot s =
        evolve_kernel(env, lab, {0, 0, 0}, t, EvolveMethod::MonteCarlo, 5e-3);
    const auto& K = simd::active();
    CHECK(K.sum(s.values.data(), s.values.size()) == doctest::Approx(1.0));
    const double expect = 0.5 * (1.0 + std::exp(-2.0 * a * t));
    CHECK(s.values[static_cast<std::size_t>(env.box.index_of({0, 0, 0}))] ==
          doctest::Approx(expect).epsilon(0.02));
    CHECK(s.terms >= 1000);
}

TEST_CASE("rk integrator cross-checks uniformization") {
    Environment env = generate_environment(LatticeBox::square(2, 12), 0.8, 0.5,
                                           Law::UniformOnLambdaOne, 9);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
        if (lab.on_proxy(i)) { y = env.box.coord_of_index(i); break; }
    KernelSnapshot uni = evolve_from(env, lab, y, 4.0, 1e-12);
    KernelSnapshot rk =
        evolve_kernel(env, lab, y, 4.0, EvolveMethod::RkIntegrator, 1e-10);
    for (std::size_t i = 0; i < uni.values.size(); ++i)
        CHECK(std::abs(uni.values[i] - rk.values[i]) <= 1e-7);
}

TEST_CASE("homogenized kernel: value, normalization, scaling") {
    const double x0[2] = {0.0, 0.0};
    CHECK(homogenized_kernel(2.0, 1.0, x0, 2) ==
          doctest::Approx(1.0 / (4.0 * 3.14159265358979324)).epsilon(1e-12));

    // Midpoint quadrature of the d=2 Gaussian over a generous grid.
    const double s2 = 1.3, t = 2.0;
    double acc = 0.0;
    const double h = 0.05;
    for (double x = -12.0 + h / 2; x < 12.0; x += h)
        for (double yv = -12.0 + h / 2; yv < 12.0; yv += h) {
            const double xv[2] = {x, yv};
            acc += h * h * homogenized_kernel(s2, t, xv, 2);
        }
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));

    // pbar(t,x) = t^{-d/2} pbar(1, x/sqrt(t))
    const double xa[2] = {1.7, -0.4};
    const double xs[2] = {1.7 / std::sqrt(t), -0.4 / std::sqrt(t)};
    CHECK(homogenized_kernel(s2, t, xa, 2) ==
          doctest::Approx(homogenized_kernel(s2, 1.0, xs, 2) / t).epsilon(1e-12));

    CHECK_THROWS_AS(homogenized_kernel(2.0, 0.0, x0, 2), ParamError);
}

TEST_CASE("envelope: branch continuity, monotonicity, convexity") {
    const double C = 3.0, t = 5.0;
    CHECK(envelope(C, t, 0.0, 2).phi ==
          doctest::Approx(C * std::pow(t, -1.0)).epsilon(1e-12));

    // Both branches coincide at |x| = t.
    const double at = envelope(C, t, t, 2).phi;
    CHECK(at == doctest::Approx(C * std::pow(t, -1.0) * std::exp(-t / C))
                    .epsilon(1e-12));

    // Phi nonincreasing in r; Psi convex in r.
    double prev = envelope(C, t, 0.0, 2).phi;
    std::vector<double> psi;
    for (double r = 0.0; r <= 3.0 * t; r += 0.5) {
        const EnvelopeValue e = envelope(C, t, r, 2);
        CHECK(e.phi <= prev + 1e-15);
        prev = e.phi;
        psi.push_back(e.psi);
    }
    for (std::size_t i = 1; i + 1 < psi.size(); ++i)
        CHECK(psi[i] <= 0.5 * (psi[i - 1] + psi[i + 1]) + 1e-10);
}

TEST_CASE("envelope semigroup-type bound with a fitted constant") {
    const double C = 2.0, t1 = 3.0, t2 = 5.0;
    // conv(Phi_C(t1), Phi_C(t2)) lies under Phi_{C'}(t1+t2) for some grid C'.
    auto max_ratio = [&](double cprime) {
        double worst = 0.0;
        for (std::int64_t x = -30; x <= 30; ++x) {
            double conv = 0.0;
            for (std::int64_t z = -60; z <= 60; ++z)
                conv += envelope(C, t1, std::abs(double(x - z)), 1).phi *
                        envelope(C, t2, std::abs(double(z)), 1).phi;
            worst = std::max(
                worst, conv / envelope(cprime, t1 + t2, std::abs(double(x)), 1).phi);
        }
        return worst;
    };
    double fitted = -1.0;
    for (double cprime : {4.0, 8.0, 16.0, 32.0, 64.0}) {
        if (max_ratio(cprime) <= 1.0) {
            fitted = cprime;
            break;
        }
    }
    CHECK(fitted > C);
}

TEST_CASE("walks: t=0 keeps every replica at the start") {
    Environment env = generate_environment(LatticeBox::square(2, 10), 0.8, 1.0,
                                           Law::BernoulliUnit, 2);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
        if (lab.on_proxy(i)) { y = env.box.coord_of_index(i); break; }
    WalkSample ws = sample_walks(env, lab, y, 0.0, WalkType::VSRW, 50, 3);
    for (std::int64_t e : ws.endpoints) CHECK(e == env.box.index_of(y));
}

TEST_CASE("walks: two-vertex chain matches the closed form within 3 sigma") {
    Environment env = testutil::manual_env(LatticeBox::square(2, 2));
    const double a = 0.8, t = 1.0;
    testutil::set_bond(env, {0, 0, 0}, 1, a);
    ClusterLabeling lab = label_clusters(env);
    const int n = 100000;
    WalkSample ws = sample_walks(env, lab, {0, 0, 0}, t, WalkType::VSRW, n, 7);
    int stay = 0;
    for (std::int64_t e : ws.endpoints)
        if (e == env.box.index_of({0, 0, 0})) ++stay;
    const double expect = 0.5 * (1.0 + std::exp(-2.0 * a * t));
    const double sigma = std::sqrt(expect * (1 - expect) / double(n));
    CHECK(std::abs(double(stay) / n - expect) <= 3.0 * sigma);
}

TEST_CASE("walks: endpoints reproducible and on the proxy cluster") {
    Environment env = generate_environment(LatticeBox::square(2, 16), 0.7, 1.0,
                                           Law::BernoulliUnit, 4);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i)
        if (lab.on_proxy(i)) { y = env.box.coord_of_index(i); break; }
    WalkSample a = sample_walks(env, lab, y, 25.0, WalkType::CSRW, 64, 9);
    WalkSample b = sample_walks(env, lab, y, 25.0, WalkType::CSRW, 64, 9);
    CHECK(a.endpoints == b.endpoints);
    for (std::int64_t e : a.endpoints) CHECK(lab.on_proxy(e));
    WalkSample srw = sample_walks(env, lab, y, 40.0, WalkType::SRW, 64, 9);
    for (std::int64_t e : srw.endpoints) CHECK(lab.on_proxy(e));
}

TEST_CASE("VSRW endpoint histogram is consistent with the kernel") {
    Environment env = generate_environment(LatticeBox::square(2, 24), 0.75, 1.0,
                                           Law::BernoulliUnit, 6);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    double best = 1e18;
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
        if (!lab.on_proxy(i)) continue;
        const double d2 = l2_dist_sq(env.box.coord_of_index(i), {12, 12, 0}, 2);
        if (d2 < best) { best = d2; y = env.box.coord_of_index(i); }
    }
    const double t = 20.0;
    const int n = 60000;
    KernelSnapshot snap = evolve_from(env, lab, y, t);
    WalkSample ws = sample_walks(env, lab, y, t, WalkType::VSRW, n, 13);
    std::vector<double> hist(snap.values.size(), 0.0);
    for (std::int64_t e : ws.endpoints)
        hist[static_cast<std::size_t>(e)] += 1.0 / double(n);
    double tv = 0.0, bound = 0.0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        tv += 0.5 * std::abs(hist[i] - snap.values[i]);
        bound += 0.5 * std::sqrt(std::max(snap.values[i] * (1 - snap.values[i]),
                                          0.0) /
                                 double(n));
    }
    CHECK(tv <= 4.0 * bound);
}

TEST_CASE("kernel bounds: fitted constants behave") {
    Environment env = generate_environment(LatticeBox::square(2, 33), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    KernelSnapshot snap = evolve_from(env, lab, {16, 16, 0}, 5.0);

    BoundReport coarse = check_kernel_bounds(env, lab, snap, {1, 2, 4, 8, 16});
    CHECK(coarse.barlow_C > 0.0);
    CHECK(coarse.barlow_C <= 10.0);
    CHECK(coarse.carne_varopoulos_C > 0.0);

    // Refining the grid cannot increase the fitted constant.
    BoundReport fine =
        check_kernel_bounds(env, lab, snap, {1, 1.5, 2, 3, 4, 6, 8, 12, 16});
    CHECK(fine.barlow_C <= coarse.barlow_C);
    CHECK(fine.carne_varopoulos_C <= coarse.carne_varopoulos_C);

    // A tiny grid that cannot cover the kernel reports violations.
    BoundReport none = check_kernel_bounds(env, lab, snap, {1e-6});
    CHECK(none.barlow_C < 0.0);
    CHECK(!none.barlow_violations.empty());
}

TEST_CASE("gradient profile decays away from the source") {
    Environment env = generate_environment(LatticeBox::square(2, 65), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    const Coord y{32, 32, 0};
    KernelSnapshot snap = evolve_from(env, lab, y, 16.0);
    std::vector<double> at_y = gradient_profile(env, lab, snap, y, {2.0});
    // Far enough out that the Gaussian factor dominates the |x|/t growth of
    // the gradient prefactor (at 2 sqrt(t) the two roughly cancel).
    Coord far{32 + 4 * 4, 32, 0}; // |x - y| = 4 sqrt(t)
    std::vector<double> away = gradient_profile(env, lab, snap, far, {2.0});
    CHECK(away[0] < at_y[0]);

    // Constant field has zero profile.
    KernelSnapshot flat = snap;
    for (auto& v : flat.values) v = 1.0;
    std::vector<double> zero = gradient_profile(env, lab, flat, y, {3.0});
    CHECK(zero[0] == 0.0);
}

TEST_CASE("parabolic caccioppoli constant is stable across window sizes") {
    // For the caloric function u = p(t,.,y):
    //   ||grad u||_{L2(I_{R/2} x B_{R/2})} <= (C/R) ||u - mean||_{L2(I_R x B_R)},
    // and the fitted C should be stable within a factor 2 over R in {16, 32}.
    Environment env = generate_environment(LatticeBox::square(2, 160), 0.7, 1.0,
                                           Law::BernoulliUnit, 77);
    ClusterLabeling lab = label_clusters(env);
    Coord y{0, 0, 0};
    double best = 1e18;
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
        if (!lab.on_proxy(i)) continue;
        const double d2 = l2_dist_sq(env.box.coord_of_index(i), {80, 80, 0}, 2);
        if (d2 < best) { best = d2; y = env.box.coord_of_index(i); }
    }
    const double t_end = 4000.0;

    // Common sample grid: 17 times per window, unioned and sorted.
    std::vector<double> times;
    for (double R : {16.0, 32.0})
        for (int j = 0; j <= 16; ++j)
            times.push_back(t_end - R * R + j * R * R / 16.0);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    GraphOperator op(env, proxy_mask(env, lab));
    Field p(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
    p[static_cast<std::size_t>(env.box.index_of(y))] = 1.0;
    double prev = 0.0;
    std::vector<std::pair<double, Field>> snaps;
    for (double t : times) {
        p = evolve_field(op, p, t - prev, 1e-11);
        prev = t;
        snaps.emplace_back(t, p);
    }

    auto grad_sq_ball = [&](const Field& u, double r) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
            if (!lab.on_proxy(i)) continue;
            if (l2_dist_sq(env.box.coord_of_index(i), y, 2) > r * r) continue;
            const Coord c = env.box.local_of_index(i);
            double g = 0.0;
            for (int k = 1; k <= 2; ++k) {
                const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
                const std::int64_t s = env.box.stride(k - 1);
                if (c[k - 1] < env.box.sides[k - 1] - 1 &&
                    w[static_cast<std::size_t>(i)] != 0.0 && lab.on_proxy(i + s))
                    g += std::abs(u[static_cast<std::size_t>(i + s)] -
                                  u[static_cast<std::size_t>(i)]);
                if (c[k - 1] > 0 && w[static_cast<std::size_t>(i - s)] != 0.0 &&
                    lab.on_proxy(i - s))
                    g += std::abs(u[static_cast<std::size_t>(i)] -
                                  u[static_cast<std::size_t>(i - s)]);
            }
            acc += g * g;
        }
        return acc;
    };

    auto window_integral = [&](double r_time, double r_ball, bool gradient) {
        // Trapezoid over the snapshots falling in (t_end - r_time^2, t_end].
        std::vector<std::pair<double, double>> vals;
        for (const auto& [t, u] : snaps) {
            if (t < t_end - r_time * r_time - 1e-9) continue;
            double v;
            if (gradient) {
                v = grad_sq_ball(u, r_ball);
            } else {
                double mean = 0.0;
                std::int64_t cnt = 0;
                for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
                    if (!lab.on_proxy(i)) continue;
                    if (l2_dist_sq(env.box.coord_of_index(i), y, 2) >
                        r_ball * r_ball)
                        continue;
                    mean += u[static_cast<std::size_t>(i)];
                    ++cnt;
                }
                mean /= double(cnt);
                v = 0.0;
                for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) {
                    if (!lab.on_proxy(i)) continue;
                    if (l2_dist_sq(env.box.coord_of_index(i), y, 2) >
                        r_ball * r_ball)
                        continue;
                    const double d = u[static_cast<std::size_t>(i)] - mean;
                    v += d * d;
                }
            }
            vals.emplace_back(t, v);
        }
        double acc = 0.0;
        for (std::size_t j = 1; j < vals.size(); ++j)
            acc += 0.5 * (vals[j].second + vals[j - 1].second) *
                   (vals[j].first - vals[j - 1].first);
        return acc;
    };

    std::vector<double> fitted;
    for (double R : {16.0, 32.0}) {
        const double lhs = std::sqrt(window_integral(R / 2, R / 2, true));
        const double rhs = std::sqrt(window_integral(R, R, false));
        REQUIRE(rhs > 0.0);
        fitted.push_back(R * lhs / rhs);
    }
    const double ratio = fitted[1] / fitted[0];
    CHECK(ratio <= 2.0);
    CHECK(ratio >= 0.5);
}

TEST_CASE("gaussian mass: p=1 residual is tiny at t=25") {
    Environment env = generate_environment(LatticeBox::square(2, 129), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    const double r = gaussian_mass(env, lab, 2.0, 1.0, 25.0, {64, 64, 0});
    CHECK(std::abs(r) <= 1e-3);
    // Insufficient padding raises the truncation error.
    CHECK_THROWS_AS(gaussian_mass(env, lab, 2.0, 1.0, 1e5, {64, 64, 0}),
                    QuadratureError);
}

TEST_CASE("overflow guard on absurd horizons") {
    Environment env = generate_environment(LatticeBox::square(2, 8), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    CHECK_THROWS_AS(
        evolve_kernel(env, lab, {4, 4, 0}, 1e9, EvolveMethod::Uniformization, 1e-9),
        OverflowError);
}
