#include "calsens/lp.hpp"
#include "calsens/random.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>
#include <limits>

using namespace calsens;

namespace {

// Enumerates every basic solution of a box-bounded LP (all bounds finite).
double vertex_enumeration(const LpProblem& p, bool& feasible) {
    const int m = static_cast<int>(p.a.rows());
    const int n = static_cast<int>(p.a.cols());
    double best = std::numeric_limits<double>::infinity();
    feasible = false;
    for (int mask = 0; mask < (1 << n); ++mask) {
        if (__builtin_popcount(mask) != m) continue;
        std::vector<int> basic, nonbasic;
        for (int j = 0; j < n; ++j) ((mask >> j) & 1 ? basic : nonbasic).push_back(j);
        Matrix b(m, m);
        for (int k = 0; k < m; ++k) b.col(k) = p.a.col(basic[k]);
        Eigen::FullPivLU<Matrix> lu(b);
        if (lu.rank() < m) continue;
        const int nn = static_cast<int>(nonbasic.size());
        for (int side = 0; side < (1 << nn); ++side) {
            Vector x(n);
            Vector rhs = p.b;
            for (int k = 0; k < nn; ++k) {
                const int j = nonbasic[k];
                x[j] = (side >> k) & 1 ? p.upper[j] : p.lower[j];
                rhs -= p.a.col(j) * x[j];
            }
            Vector xb = lu.solve(rhs);
            bool ok = true;
            for (int k = 0; k < m; ++k) {
                x[basic[k]] = xb[k];
                if (xb[k] < p.lower[basic[k]] - 1e-9 || xb[k] > p.upper[basic[k]] + 1e-9) ok = false;
            }
            if (!ok) continue;
            feasible = true;
            best = std::min(best, p.cost.dot(x));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("simple bounded LP") {
    // min -x1 - 2 x2  s.t. x1 + x2 + s = 3, 0<=x1<=2, 0<=x2<=2, s>=0
    LpProblem p;
    p.a = Matrix(1, 3);
    p.a << 1, 1, 1;
    p.b = Vector::Constant(1, 3.0);
    p.cost = Vector(3);
    p.cost << -1, -2, 0;
    p.lower = Vector::Zero(3);
    p.upper = Vector(3);
    p.upper << 2, 2, std::numeric_limits<double>::infinity();
    auto sol = solve_lp(p);
    REQUIRE(sol.status == LpStatus::Optimal);
    CHECK(sol.objective == doctest::Approx(-5.0));
    CHECK(sol.x[0] == doctest::Approx(1.0));
    CHECK(sol.x[1] == doctest::Approx(2.0));
}

TEST_CASE("infeasible and unbounded") {
    LpProblem p;
    p.a = Matrix(1, 2);
    p.a << 1, 1;
    p.b = Vector::Constant(1, 5.0);
    p.cost = Vector::Zero(2);
    p.lower = Vector::Zero(2);
    p.upper = Vector::Ones(2);
    CHECK(solve_lp(p).status == LpStatus::Infeasible);

    LpProblem q;
    q.a = Matrix(1, 2);
    q.a << 1, -1;
    q.b = Vector::Zero(1);
    q.cost = Vector(2);
    q.cost << -1, 0;
    q.lower = Vector::Zero(2);
    q.upper = Vector::Constant(2, std::numeric_limits<double>::infinity());
    CHECK(solve_lp(q).status == LpStatus::Unbounded);
}

TEST_CASE("random box LPs agree with vertex enumeration") {
    Rng rng(2024);
    int feasible_count = 0;
    for (int rep = 0; rep < 150; ++rep) {
        const int m = 1 + static_cast<int>(rng.below(3));
        const int n = m + 1 + static_cast<int>(rng.below(5));
        LpProblem p;
        p.a = Matrix(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) p.a(i, j) = rng.below(4) == 0 ? 0.0 : rng.normal();
        p.lower = Vector(n);
        p.upper = Vector(n);
        Vector x0(n);
        for (int j = 0; j < n; ++j) {
            p.lower[j] = -1.0 + rng.uniform();
            p.upper[j] = p.lower[j] + 0.2 + 2.0 * rng.uniform();
            x0[j] = p.lower[j] + rng.uniform() * (p.upper[j] - p.lower[j]);
        }
        // Mostly feasible right-hand sides, occasionally shifted away.
        p.b = p.a * x0;
        if (rep % 7 == 0) p.b.array() += 5.0;
        p.cost = Vector(n);
        for (int j = 0; j < n; ++j) p.cost[j] = rng.normal();
        bool feasible = false;
        const double brute = vertex_enumeration(p, feasible);
        auto sol = solve_lp(p);
        if (!feasible) {
            // Rank-deficient systems have no full basis; the simplex may still find a point.
            if (sol.status == LpStatus::Optimal) {
                CHECK((p.a * sol.x - p.b).cwiseAbs().maxCoeff() < 1e-8);
                CHECK(Eigen::FullPivLU<Matrix>(p.a).rank() < m);
            } else {
                CHECK(sol.status == LpStatus::Infeasible);
            }
            continue;
        }
        ++feasible_count;
        REQUIRE(sol.status == LpStatus::Optimal);
        CHECK(sol.objective == doctest::Approx(brute).epsilon(1e-8));
        CHECK((p.a * sol.x - p.b).cwiseAbs().maxCoeff() < 1e-8);
        // Dual feasibility: reduced costs have the right sign at bounds.
        for (int j = 0; j < n; ++j) {
            const double d = sol.reduced_costs[j];
            if (sol.x[j] > p.lower[j] + 1e-9 && sol.x[j] < p.upper[j] - 1e-9) CHECK(std::abs(d) < 1e-7);
            else if (sol.x[j] <= p.lower[j] + 1e-9) CHECK(d > -1e-7);
            else CHECK(d < 1e-7);
        }
    }
    CHECK(feasible_count > 100);
}

TEST_CASE("warm start at upper bounds reaches the same optimum") {
    Rng rng(99);
    const int m = 3, n = 30;
    LpProblem p;
    p.a = Matrix(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) p.a(i, j) = rng.normal();
    p.lower = Vector::Zero(n);
    p.upper = Vector::Ones(n);
    p.b = p.a * Vector::Constant(n, 0.5);
    p.cost = Vector(n);
    for (int j = 0; j < n; ++j) p.cost[j] = rng.normal();
    auto cold = solve_lp(p);
    std::vector<char> start(n, 0);
    for (int j = 0; j < n; ++j) start[j] = p.cost[j] < 0;
    auto warm = solve_lp(p, {}, &start);
    REQUIRE(cold.status == LpStatus::Optimal);
    REQUIRE(warm.status == LpStatus::Optimal);
    CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-10));
    CHECK(warm.iterations <= cold.iterations);
}

namespace {

LpProblem random_box_lp(Rng& rng, int m, int n) {
    LpProblem p;
    p.a = Matrix(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) p.a(i, j) = rng.normal();
    p.lower = Vector::Zero(n);
    p.upper = Vector::Ones(n);
    Vector x0(n);
    for (int j = 0; j < n; ++j) x0[j] = rng.uniform();
    p.b = p.a * x0;
    p.cost = Vector(n);
    for (int j = 0; j < n; ++j) p.cost[j] = rng.normal();
    return p;
}

}  // namespace

TEST_CASE("basis restart after a change of right-hand side or bounds") {
    Rng rng(2024);
    int restarted = 0;
    for (int rep = 0; rep < 60; ++rep) {
        const int m = 2 + rep % 4, n = 12 + rep % 9;
        LpProblem p = random_box_lp(rng, m, n);
        const LpSolution first = solve_lp(p);
        REQUIRE(first.status == LpStatus::Optimal);
        REQUIRE(first.basis.has_value());

        LpProblem q = p;
        if (rep % 2 == 0) {
            Vector x1(n);
            for (int j = 0; j < n; ++j) x1[j] = rng.uniform();
            q.b = q.a * x1;
        } else {
            for (int j = 0; j < n; ++j) q.upper[j] = 0.5 + rng.uniform();
            q.b = q.a * Vector::Constant(n, 0.4);
        }
        const LpSolution cold = solve_lp(q);
        const LpSolution warm = solve_lp_from_basis(q, *first.basis);
        REQUIRE(cold.status == LpStatus::Optimal);
        REQUIRE(warm.status == LpStatus::Optimal);
        CHECK(warm.objective == doctest::Approx(cold.objective).epsilon(1e-9));
        CHECK((q.a * warm.x - q.b).lpNorm<Eigen::Infinity>() < 1e-8);
        for (int j = 0; j < n; ++j) {
            CHECK(warm.x[j] >= q.lower[j] - 1e-9);
            CHECK(warm.x[j] <= q.upper[j] + 1e-9);
        }
        restarted += warm.iterations <= cold.iterations ? 1 : 0;
    }
    CHECK(restarted > 30);
}

TEST_CASE("basis restart detects infeasibility and survives a singular basis") {
    Rng rng(7);
    LpProblem p = random_box_lp(rng, 3, 10);
    const LpSolution first = solve_lp(p);
    REQUIRE(first.basis.has_value());

    LpProblem q = p;
    q.b[0] = q.a.row(0).cwiseAbs().sum() + 5.0;  // beyond any point of the box
    CHECK(solve_lp_from_basis(q, *first.basis).status == LpStatus::Infeasible);
    CHECK(solve_lp(q).status == LpStatus::Infeasible);

    LpBasis broken = *first.basis;
    broken.basic.assign(broken.basic.size(), broken.basic[0]);
    const LpSolution again = solve_lp_from_basis(p, broken);
    REQUIRE(again.status == LpStatus::Optimal);
    CHECK(again.objective == doctest::Approx(first.objective).epsilon(1e-10));
}
