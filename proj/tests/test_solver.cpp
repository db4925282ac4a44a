#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "perchom/operator.hpp"
#include "perchom/simd/kernels.hpp"
#include "test_util.hpp"

using namespace perchom;

TEST_CASE("apply: constants are harmonic under free boundary") {
    Environment env = generate_environment(LatticeBox::square(2, 6), 0.7, 0.5,
                                           Law::UniformOnLambdaOne, 4);
    GraphOperator op(env, {});
    Field u(static_cast<std::size_t>(env.box.vertex_count()), 3.25);
    Field out;
    op.apply(u, out);
    for (double v : out) CHECK(std::abs(v) <= 1e-12);
}

TEST_CASE("apply: two-vertex graph formula") {
    Environment env = testutil::manual_env(LatticeBox::square(2, 2));
    const double a = 0.37;
    testutil::set_bond(env, {0, 0, 0}, 1, a);
    GraphOperator op(env, {});
    Field u(4, 0.0);
    u[static_cast<std::size_t>(env.box.index_of({1, 0, 0}))] = 1.0;
    Field out;
    op.apply(u, out);
    CHECK(out[static_cast<std::size_t>(env.box.index_of({0, 0, 0}))] ==
          doctest::Approx(a));
    CHECK(out[static_cast<std::size_t>(env.box.index_of({1, 0, 0}))] ==
          doctest::Approx(-a));
}

TEST_CASE("apply matches the dense assembly oracle on a 4x4 box") {
    Environment env = generate_environment(LatticeBox::square(2, 4), 0.8, 0.3,
                                           Law::UniformOnLambdaOne, 8);
    std::vector<std::int64_t> verts;
    for (std::int64_t i = 0; i < env.box.vertex_count(); ++i) verts.push_back(i);
    testutil::Matrix A = testutil::dense_operator(env, verts); // -L
    Field u = testutil::random_field(env, 17);
    GraphOperator op(env, {});
    Field out;
    op.apply(u, out);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < verts.size(); ++j) acc += A[i][j] * u[j];
        CHECK(out[i] == doctest::Approx(-acc).epsilon(1e-14));
    }
}

TEST_CASE("operator is symmetric on random fields") {
    Environment env = generate_environment(LatticeBox::square(2, 8), 0.7, 0.4,
                                           Law::UniformOnLambdaOne, 12);
    GraphOperator op(env, {});
    Field u = testutil::random_field(env, 1), v = testutil::random_field(env, 2);
    Field Lu, Lv;
    op.apply(u, Lu);
    op.apply(v, Lv);
    const auto& K = simd::active();
    const double a = K.dot(u.data(), Lv.data(), u.size());
    const double b = K.dot(Lu.data(), v.data(), v.size());
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("shape errors") {
    Environment env = generate_environment(LatticeBox::square(2, 4), 1.0, 1.0,
                                           Law::BernoulliUnit, 0);
    GraphOperator op(env, {});
    Field bad(3, 0.0);
    Field out;
    CHECK_THROWS_AS(op.apply(bad, out), ShapeError);
}

TEST_CASE("dirichlet solve: constant boundary data extends to a constant") {
    Environment env = generate_environment(LatticeBox::square(2, 6), 0.8, 0.5,
                                           Law::UniformOnLambdaOne, 21);
    const std::int64_t n = env.box.vertex_count();
    std::vector<std::uint8_t> domain(static_cast<std::size_t>(n), 1);
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        Coord c = env.box.local_of_index(i);
        if (c[0] == 0 || c[0] == 5 || c[1] == 0 || c[1] == 5)
            bnd[static_cast<std::size_t>(i)] = 1;
    }
    Field rhs(static_cast<std::size_t>(n), 0.0);
    Field g(static_cast<std::size_t>(n), 2.75);
    SolveResult sol = solve_dirichlet(env, domain, bnd, rhs, g, 1e-12);
    for (std::int64_t i = 0; i < n; ++i)
        CHECK(sol.u[static_cast<std::size_t>(i)] == doctest::Approx(2.75).epsilon(1e-10));
}

TEST_CASE("dirichlet solve: 3-vertex path interpolates linearly") {
    // Path 0-1-2 along axis 1 of a 3x2 box, unit conductances on that row.
    Environment env = testutil::manual_env(LatticeBox(2, {0, 0, 0}, {3, 2, 1}));
    testutil::set_bond(env, {0, 0, 0}, 1, 1.0);
    testutil::set_bond(env, {1, 0, 0}, 1, 1.0);
    const std::int64_t n = env.box.vertex_count();
    std::vector<std::uint8_t> domain(static_cast<std::size_t>(n), 0);
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    Field rhs(static_cast<std::size_t>(n), 0.0), g(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t x = 0; x < 3; ++x)
        domain[static_cast<std::size_t>(env.box.index_of({x, 0, 0}))] = 1;
    bnd[static_cast<std::size_t>(env.box.index_of({0, 0, 0}))] = 1;
    bnd[static_cast<std::size_t>(env.box.index_of({2, 0, 0}))] = 1;
    g[static_cast<std::size_t>(env.box.index_of({2, 0, 0}))] = 2.0;
    SolveResult sol = solve_dirichlet(env, domain, bnd, rhs, g, 1e-12);
    CHECK(sol.u[static_cast<std::size_t>(env.box.index_of({1, 0, 0}))] ==
          doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("dirichlet solve matches the dense oracle on a 5x5 box") {
    Environment env = generate_environment(LatticeBox::square(2, 5), 0.85, 0.3,
                                           Law::UniformOnLambdaOne, 33);
    const std::int64_t n = env.box.vertex_count();
    std::vector<std::uint8_t> domain(static_cast<std::size_t>(n), 1);
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        Coord c = env.box.local_of_index(i);
        if (c[0] == 0 || c[0] == 4 || c[1] == 0 || c[1] == 4)
            bnd[static_cast<std::size_t>(i)] = 1;
    }
    Field rhs = testutil::random_field(env, 41);
    Field g = testutil::random_field(env, 42);
    SolveResult sol = solve_dirichlet(env, domain, bnd, rhs, g, 1e-13);

    // Dense oracle over interior unknowns: (-L) u = rhs + (L g)|interior.
    std::vector<std::int64_t> interior;
    for (std::int64_t i = 0; i < n; ++i)
        if (!bnd[static_cast<std::size_t>(i)]) interior.push_back(i);
    testutil::Matrix A = testutil::dense_operator(env, interior);
    GraphOperator op(env, {});
    Field gb(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        if (bnd[static_cast<std::size_t>(i)])
            gb[static_cast<std::size_t>(i)] = g[static_cast<std::size_t>(i)];
    Field Lg;
    op.apply(gb, Lg);
    std::vector<double> b;
    for (std::int64_t i : interior)
        b.push_back(rhs[static_cast<std::size_t>(i)] + Lg[static_cast<std::size_t>(i)]);
    std::vector<double> x = testutil::dense_solve(A, b);
    for (std::size_t r = 0; r < interior.size(); ++r)
        CHECK(std::abs(sol.u[static_cast<std::size_t>(interior[r])] - x[r]) <=
              1e-10);
}

TEST_CASE("solver error carries residual history") {
    Environment env = generate_environment(LatticeBox::square(2, 16), 0.8, 0.5,
                                           Law::UniformOnLambdaOne, 3);
    const std::int64_t n = env.box.vertex_count();
    std::vector<std::uint8_t> domain(static_cast<std::size_t>(n), 1);
    std::vector<std::uint8_t> bnd(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        Coord c = env.box.local_of_index(i);
        if (c[0] == 0 || c[0] == 15 || c[1] == 0 || c[1] == 15)
            bnd[static_cast<std::size_t>(i)] = 1;
    }
    Field rhs = testutil::random_field(env, 4);
    Field g(static_cast<std::size_t>(n), 0.0);
    try {
        solve_dirichlet(env, domain, bnd, rhs, g, 1e-12, /*max_iter=*/2);
        FAIL("expected SolverError");
    } catch (const SolverError& e) {
        CHECK(e.residual_history.size() >= 2);
    }
}
