#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "perchom/elliptic.hpp"
#include "perchom/simd/kernels.hpp"
#include "test_util.hpp"

using namespace perchom;

namespace {

Environment centered_full_env(int d, int m) {
    const std::int64_t side = pow3(m);
    const std::int64_t h = (side - 1) / 2;
    return generate_environment(LatticeBox(d, {-h, -h, -h}, {side, side, side}),
                                1.0, 1.0, Law::BernoulliUnit, 0);
}

} // namespace

TEST_CASE("cell energy closed form for a == 1") {
    // nu(cube_m, e_k) = (3^m - 1) / (2 3^m), exactly.
    for (int m : {1, 2, 3}) {
        Environment env = centered_full_env(2, m);
        TriadicCube cube;
        cube.level = m;
        cube.d = 2;
        for (int k = 0; k < 2; ++k) {
            std::array<double, 3> dir{0, 0, 0};
            dir[static_cast<std::size_t>(k)] = 1.0;
            CellEnergy ce = cell_energy(env, cube, dir);
            const double expect =
                double(pow3(m) - 1) / (2.0 * double(pow3(m)));
            CHECK(std::abs(ce.nu - expect) <= 1e-12);
            CHECK(!ce.degenerate);
        }
    }
    // Hand count for m=1: six direction-1 bonds, nu = 6 / (2*9) = 1/3.
    Environment env = centered_full_env(2, 1);
    TriadicCube cube;
    cube.level = 1;
    cube.d = 2;
    CHECK(cell_energy(env, cube, {1, 0, 0}).nu == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("cell energy: all bonds closed is degenerate") {
    Environment env = testutil::manual_env(LatticeBox(2, {-1, -1, 0}, {3, 3, 1}));
    TriadicCube cube;
    cube.level = 1;
    cube.d = 2;
    CellEnergy ce = cell_energy(env, cube, {1, 0, 0});
    CHECK(ce.nu == 0.0);
    CHECK(ce.degenerate);
}

TEST_CASE("cell energy is monotone in conductances") {
    // Raising a single bond cannot decrease the minimal energy.
    const std::int64_t h = 4;
    LatticeBox box(2, {-h, -h, 0}, {9, 9, 1});
    Environment env = generate_environment(box, 0.9, 0.5,
                                           Law::UniformOnLambdaOne, 17);
    TriadicCube cube;
    cube.level = 2;
    cube.d = 2;
    const CellEnergy base = cell_energy(env, cube, {1, 0, 0});
    testutil::Rng rng(5);
    for (int trial = 0; trial < 6; ++trial) {
        Environment bumped = env;
        // Pick an open bond and raise it toward 1.
        while (true) {
            const int k = 1 + static_cast<int>(rng.next() % 2);
            const std::int64_t i =
                static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(
                                              box.vertex_count()));
            auto& w = bumped.cond[static_cast<std::size_t>(k - 1)]
                                 [static_cast<std::size_t>(i)];
            if (w > 0.0 && w < 1.0) {
                w = 1.0;
                break;
            }
        }
        const CellEnergy up = cell_energy(bumped, cube, {1, 0, 0});
        CHECK(up.nu >= base.nu - 1e-12);
    }
}

TEST_CASE("homogenized parameters at p=1: exact closed form") {
    HomogenizedParams hp = estimate_homogenized(2, 1.0, 1.0, Law::BernoulliUnit,
                                                3, 2, 1);
    const double expect = double(pow3(3) - 1) / double(pow3(3));
    CHECK(hp.abar[0][0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(hp.abar[1][1] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(std::abs(hp.abar[0][1]) <= 1e-10);
    CHECK(hp.theta_hat == 1.0);
    CHECK(hp.sigma2 == doctest::Approx(2.0 * expect).epsilon(1e-12));
    CHECK(hp.sigma2 > 0.0);
    CHECK(hp.sigma2 <= 2.0);
}

TEST_CASE("uniform-law diagonal is bracketed by the ellipticity bounds") {
    const double lambda = 0.4;
    HomogenizedParams hp = estimate_homogenized(
        2, 1.0, lambda, Law::UniformOnLambdaOne, 3, 4, 3);
    const double full = double(pow3(3) - 1) / double(pow3(3));
    for (int k = 0; k < 2; ++k) {
        CHECK(hp.abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] >=
              lambda * full - 1e-12);
        CHECK(hp.abar[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)] <=
              full + 1e-12);
    }
}

TEST_CASE("corrector vanishes identically for a == 1") {
    Environment env = generate_environment(LatticeBox::square(2, 27), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 1, {13, 13, 0});
    for (double v : chi.values) CHECK(std::abs(v) <= 1e-9);
}

TEST_CASE("corrector satisfies its Euler-Lagrange residual") {
    Environment env = generate_environment(LatticeBox::square(2, 27), 0.7, 1.0,
                                           Law::BernoulliUnit, 23);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 1, {13, 13, 0}, 1e-11);
    CHECK(chi.values[static_cast<std::size_t>(chi.anchor_index)] == 0.0);

    // Residual of nabla . a (e_1 + nabla chi) on interior cluster vertices.
    const LatticeBox& box = env.box;
    Field res(static_cast<std::size_t>(box.vertex_count()), 0.0);
    for (std::int64_t i = 0; i < box.vertex_count(); ++i) {
        if (!lab.on_proxy(i)) continue;
        const Coord c = box.local_of_index(i);
        bool interior = true;
        for (int a = 0; a < 2; ++a)
            if (c[a] == 0 || c[a] == box.sides[a] - 1) interior = false;
        if (!interior) continue;
        double acc = 0.0;
        for (int k = 1; k <= 2; ++k) {
            const auto& w = env.cond[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = box.stride(k - 1);
            const double ek = k == 1 ? 1.0 : 0.0;
            if (w[static_cast<std::size_t>(i)] != 0.0 && lab.on_proxy(i + s))
                acc += w[static_cast<std::size_t>(i)] *
                       (ek + chi.values[static_cast<std::size_t>(i + s)] -
                        chi.values[static_cast<std::size_t>(i)]);
            if (c[k - 1] > 0 && w[static_cast<std::size_t>(i - s)] != 0.0 &&
                lab.on_proxy(i - s))
                acc -= w[static_cast<std::size_t>(i - s)] *
                       (ek + chi.values[static_cast<std::size_t>(i)] -
                        chi.values[static_cast<std::size_t>(i - s)]);
        }
        res[static_cast<std::size_t>(i)] = acc;
    }
    const auto& K = simd::active();
    CHECK(std::sqrt(K.nrm2sq(res.data(), res.size())) <= 1e-8);
}

TEST_CASE("corrector matches the dense oracle on a 6x6 box") {
    Environment env = generate_environment(LatticeBox::square(2, 6), 0.8, 0.4,
                                           Law::UniformOnLambdaOne, 31);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 2, {3, 3, 0}, 1e-13);

    // Dense: unknowns = proxy vertices away from the box faces.
    const LatticeBox& box = env.box;
    std::vector<std::int64_t> interior;
    for (std::int64_t i = 0; i < box.vertex_count(); ++i) {
        if (!lab.on_proxy(i)) continue;
        const Coord c = box.local_of_index(i);
        if (c[0] == 0 || c[0] == 5 || c[1] == 0 || c[1] == 5) continue;
        interior.push_back(i);
    }
    // Build the proxy-masked operator matrix.
    Environment masked = env;
    for (int k = 1; k <= 2; ++k) {
        auto& w = masked.cond[static_cast<std::size_t>(k - 1)];
        const std::int64_t s = box.stride(k - 1);
        for (std::int64_t i = 0; i < box.vertex_count(); ++i) {
            Coord c = box.local_of_index(i);
            if (c[k - 1] >= box.sides[k - 1] - 1) continue;
            if (!lab.on_proxy(i) || !lab.on_proxy(i + s))
                w[static_cast<std::size_t>(i)] = 0.0;
        }
    }
    testutil::Matrix A = testutil::dense_operator(masked, interior);
    std::vector<double> b;
    for (std::int64_t i : interior) {
        const Coord c = box.local_of_index(i);
        double div = 0.0;
        const auto& w = masked.cond[1];
        const std::int64_t s = box.stride(1);
        if (c[1] < 5) div += w[static_cast<std::size_t>(i)];
        if (c[1] > 0) div -= w[static_cast<std::size_t>(i - s)];
        b.push_back(div);
    }
    std::vector<double> x = testutil::dense_solve(A, b);
    // Shift both to the anchor.
    double shift = 0.0;
    for (std::size_t r = 0; r < interior.size(); ++r)
        if (interior[r] == chi.anchor_index) shift = x[r];
    const bool anchored_interior = [&] {
        for (std::int64_t i : interior)
            if (i == chi.anchor_index) return true;
        return false;
    }();
    for (std::size_t r = 0; r < interior.size(); ++r) {
        const double ref = anchored_interior ? x[r] - shift : x[r];
        CHECK(std::abs(chi.values[static_cast<std::size_t>(interior[r])] - ref) <=
              1e-10);
    }
}

TEST_CASE("flux vanishes identically for a == 1 with sigma2 = 2") {
    Environment env = generate_environment(LatticeBox::square(2, 9), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 1, {4, 4, 0});
    for (FluxVariant v : {FluxVariant::Centered, FluxVariant::Translated}) {
        FluxField g = flux_field(env, lab, chi, 2.0, v);
        for (const Field& comp : g.comp)
            for (std::size_t i = 0; i < comp.size(); ++i)
                CHECK(std::abs(comp[i]) <= 1e-9);
    }
}

TEST_CASE("translated flux is the centered flux shifted by e_i") {
    Environment env = generate_environment(LatticeBox::square(2, 15), 0.75, 1.0,
                                           Law::BernoulliUnit, 13);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 1, {7, 7, 0});
    FluxField c = flux_field(env, lab, chi, 1.3, FluxVariant::Centered);
    FluxField tr = flux_field(env, lab, chi, 1.3, FluxVariant::Translated);
    const LatticeBox& box = env.box;
    for (int i_dir = 1; i_dir <= 2; ++i_dir) {
        const std::int64_t s = box.stride(i_dir - 1);
        for (std::int64_t i = 0; i < box.vertex_count(); ++i) {
            const Coord cc = box.local_of_index(i);
            if (cc[i_dir - 1] >= box.sides[i_dir - 1] - 1) continue;
            if (!lab.on_proxy(i) || !lab.on_proxy(i + s)) continue;
            CHECK(tr.comp[static_cast<std::size_t>(i_dir - 1)]
                         [static_cast<std::size_t>(i + s)] ==
                  doctest::Approx(c.comp[static_cast<std::size_t>(i_dir - 1)]
                                        [static_cast<std::size_t>(i)]));
        }
    }
}

TEST_CASE("weak norm: zero field, constants, and the dense oracle") {
    Environment env = generate_environment(LatticeBox::square(2, 11), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    ClusterLabeling lab = label_clusters(env);
    const Coord center{5, 5, 0};
    const double r = 5.0;

    Field zero(static_cast<std::size_t>(env.box.vertex_count()), 0.0);
    CHECK(weak_norm(env, lab, zero, center, r).dual_norm == 0.0);

    // Constant c on the full lattice: dual norm = c r (constants maximize).
    Field cst(static_cast<std::size_t>(env.box.vertex_count()), 0.7);
    WeakNorm wc = weak_norm(env, lab, cst, center, r, 1e-12);
    CHECK(wc.dual_norm == doctest::Approx(0.7 * r).epsilon(1e-8));

    // Dense check on a small ball: <f, A^-1 f>/|V| via eigen-free solve.
    Environment env5 = generate_environment(LatticeBox::square(2, 5), 0.9, 0.5,
                                            Law::UniformOnLambdaOne, 3);
    ClusterLabeling lab5 = label_clusters(env5);
    const Coord c5{2, 2, 0};
    const double r5 = 2.0;
    Field f = testutil::random_field(env5, 77);
    WeakNorm w = weak_norm(env5, lab5, f, c5, r5, 1e-13);

    // Assemble A = r^-2 I + unit Laplacian on cluster cap ball.
    std::vector<std::int64_t> verts;
    for (std::int64_t i = 0; i < env5.box.vertex_count(); ++i)
        if (lab5.on_proxy(i) &&
            l2_dist_sq(env5.box.coord_of_index(i), c5, 2) <= r5 * r5)
            verts.push_back(i);
    Environment unit = env5;
    for (int k = 1; k <= 2; ++k) {
        auto& wk = unit.cond[static_cast<std::size_t>(k - 1)];
        for (auto& v : wk)
            if (v != 0.0) v = 1.0;
    }
    // Drop bonds leaving the vertex set.
    {
        std::vector<std::uint8_t> inset(
            static_cast<std::size_t>(env5.box.vertex_count()), 0);
        for (std::int64_t v : verts) inset[static_cast<std::size_t>(v)] = 1;
        for (int k = 1; k <= 2; ++k) {
            auto& wk = unit.cond[static_cast<std::size_t>(k - 1)];
            const std::int64_t s = env5.box.stride(k - 1);
            for (std::int64_t i = 0; i < env5.box.vertex_count(); ++i) {
                Coord c = env5.box.local_of_index(i);
                if (c[k - 1] >= env5.box.sides[k - 1] - 1) continue;
                if (!inset[static_cast<std::size_t>(i)] ||
                    !inset[static_cast<std::size_t>(i + s)])
                    wk[static_cast<std::size_t>(i)] = 0.0;
            }
        }
    }
    testutil::Matrix A = testutil::dense_operator(unit, verts);
    for (std::size_t i = 0; i < verts.size(); ++i) A[i][i] += 1.0 / (r5 * r5);
    std::vector<double> b;
    for (std::int64_t v : verts) b.push_back(f[static_cast<std::size_t>(v)]);
    std::vector<double> x = testutil::dense_solve(A, b);
    double quad = 0.0;
    for (std::size_t i = 0; i < verts.size(); ++i) quad += b[i] * x[i];
    const double expect = std::sqrt(quad / double(verts.size()));
    CHECK(std::abs(w.dual_norm - expect) <= 1e-10);
    CHECK(w.msp_bound >= 0.0);
}

TEST_CASE("corrector oscillation: zero for a == 1 and monotone in r") {
    Environment env = generate_environment(LatticeBox::square(2, 81), 0.7, 1.0,
                                           Law::BernoulliUnit, 29);
    ClusterLabeling lab = label_clusters(env);
    CorrectorField chi = solve_corrector(env, lab, 1, {40, 40, 0});
    std::vector<double> osc =
        corrector_oscillation(env, lab, chi, {5.0, 10.0, 20.0, 35.0});
    for (std::size_t i = 1; i < osc.size(); ++i) CHECK(osc[i] >= osc[i - 1]);

    Environment full = generate_environment(LatticeBox::square(2, 27), 1.0, 1.0,
                                            Law::BernoulliUnit, 0);
    ClusterLabeling lab_full = label_clusters(full);
    CorrectorField flat = solve_corrector(full, lab_full, 1, {13, 13, 0});
    std::vector<double> zero = corrector_oscillation(full, lab_full, flat, {9.0});
    CHECK(zero[0] <= 1e-8);
}

TEST_CASE("poincare: path eigenvalue against the classical closed form") {
    // Path of n vertices along axis 1: lambda_2 = 2(1 - cos(pi/n)).
    for (int n : {4, 7, 11}) {
        Environment env = testutil::manual_env(LatticeBox(2, {0, 0, 0}, {n, 2, 1}));
        for (int x = 0; x + 1 < n; ++x)
            testutil::set_bond(env, {x, 0, 0}, 1, 1.0);
        ClusterLabeling lab = label_clusters(env);
        PoincareResult pr =
            poincare_constant(env, lab, {n / 2, 0, 0}, double(n));
        const double expect = 2.0 * (1.0 - std::cos(3.14159265358979324 / n));
        CHECK(pr.lambda2 == doctest::Approx(expect).epsilon(1e-6));

        // Dense eigensolver cross-check.
        std::vector<std::int64_t> verts;
        for (int x = 0; x < n; ++x) verts.push_back(env.box.index_of({x, 0, 0}));
        testutil::Matrix A = testutil::dense_operator(env, verts);
        std::vector<double> ev = testutil::dense_eigen_sym(A);
        CHECK(pr.lambda2 == doctest::Approx(ev[1]).epsilon(1e-6));
    }
}

TEST_CASE("poincare: disconnected in-ball restriction is flagged") {
    // U-shaped cluster; the radius-1 ball at (0,1) meets it in two vertices
    // joined only outside the ball.
    Environment env = testutil::manual_env(LatticeBox::square(2, 3));
    testutil::set_bond(env, {0, 0, 0}, 1, 1.0);
    testutil::set_bond(env, {1, 0, 0}, 1, 1.0);
    testutil::set_bond(env, {2, 0, 0}, 2, 1.0);
    testutil::set_bond(env, {2, 1, 0}, 2, 1.0);
    testutil::set_bond(env, {0, 2, 0}, 1, 1.0);
    testutil::set_bond(env, {1, 2, 0}, 1, 1.0);
    ClusterLabeling lab = label_clusters(env);
    REQUIRE(lab.comp_size.size() == 1);
    PoincareResult pr = poincare_constant(env, lab, {0, 1, 0}, 1.0);
    CHECK(pr.disconnected);
    CHECK(pr.lambda2 == 0.0);
    // The largest-component policy picks one endpoint and degenerates too
    // (a single vertex carries no spectral gap).
    PoincareResult lc = poincare_constant(env, lab, {0, 1, 0}, 1.0, 1e-8, true);
    CHECK(lc.disconnected);
}

TEST_CASE("poincare constant is stable in r at p=0.7") {
    Environment env = generate_environment(LatticeBox::square(2, 96), 0.7, 1.0,
                                           Law::BernoulliUnit, 41);
    ClusterLabeling lab = label_clusters(env);
    std::vector<double> cps;
    for (double r : {16.0, 32.0}) {
        PoincareResult pr =
            poincare_constant(env, lab, {48, 48, 0}, r, 1e-8, true);
        CHECK(!pr.disconnected);
        CHECK(pr.lambda2 > 0.0);
        cps.push_back(pr.c_p);
    }
    CHECK(cps[1] / cps[0] <= 2.0);
    CHECK(cps[1] / cps[0] >= 0.5);
}
