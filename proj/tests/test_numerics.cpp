#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ridehail/errors.hpp"
#include "ridehail/numerics.hpp"

using namespace ridehail;

TEST_CASE("erf matches high-precision reference values") {
    // reference values computed with 40-digit arithmetic
    CHECK(num::erf(0.0) == 0.0);
    CHECK(num::erf(0.5) == doctest::Approx(0.5204998778130465).epsilon(1e-14));
    CHECK(num::erf(1.0) == doctest::Approx(0.8427007929497149).epsilon(1e-14));
    CHECK(num::erf(2.0) == doctest::Approx(0.9953222650189527).epsilon(1e-14));
    CHECK(num::erf(3.5) == doctest::Approx(0.9999992569016276).epsilon(1e-14));
    CHECK(std::fabs(num::erf(10.0) - 1.0) < 1e-12);
}

TEST_CASE("erf is odd and monotone, and agrees with the C library") {
    double prev = -1.1;
    for (int k = 0; k <= 10000; ++k) {
        const double y = -8.0 + 16.0 * k / 10000.0;
        const double v = num::erf(y);
        CHECK(v == doctest::Approx(-num::erf(-y)).epsilon(1e-15));
        CHECK(std::fabs(v - std::erf(y)) < 1e-13);
        CHECK(v >= prev - 1e-13);  // monotone at the documented accuracy
        CHECK(std::fabs(v) <= 1.0);
        // strictly inside (-1, 1) wherever doubles can represent that
        if (std::fabs(y) < 5.0) {
            CHECK(v > prev);
            CHECK(std::fabs(v) < 1.0);
        }
        prev = v;
    }
}

TEST_CASE("integrate: constants and frozen beta-function value") {
    CHECK(num::integrate([](double) { return 1.0; }, 0.0, 1.0, 1e-12) ==
          doctest::Approx(1.0).epsilon(1e-13));
    // int_0^1 (1-s^2)^1000 ds = B(1/2, 1001)/2
    const double v = num::integrate(
        [](double s) { return std::pow(1.0 - s * s, 1000.0); }, 0.0, 1.0, 1e-12);
    CHECK(v == doctest::Approx(0.028014452194210898).epsilon(1e-10));
}

TEST_CASE("integrate: gaussian against closed form") {
    for (double mu : {0.3, 2.0, 40.0}) {
        for (double radius : {0.5, 1.0, 3.0}) {
            const double got = num::integrate(
                [&](double r) { return std::exp(-mu * M_PI * r * r); }, 0.0, radius, 1e-12);
            const double want = num::erf(std::sqrt(mu * M_PI) * radius) / (2.0 * std::sqrt(mu));
            CHECK(got == doctest::Approx(want).epsilon(1e-10));
        }
    }
}

TEST_CASE("integrate: splitting at any interior point changes little") {
    const auto f = [](double s) { return std::cos(3.0 * s) + s * s; };
    const double tol = 1e-10;
    const double whole = num::integrate(f, 0.0, 2.0, tol);
    for (double cut : {0.1, 0.7, 1.3, 1.9}) {
        const double split = num::integrate(f, 0.0, cut, tol) + num::integrate(f, cut, 2.0, tol);
        CHECK(std::fabs(whole - split) <= 2.0 * tol);
    }
}

TEST_CASE("integrate: refinement stall is reported") {
    // an endpoint singularity at an impossible tolerance keeps subdividing
    // until the depth cap trips
    const auto spike = [](double s) { return s > 0.0 ? 1.0 / std::sqrt(s) : 1e154; };
    CHECK_THROWS_AS(num::integrate(spike, 0.0, 1.0, 1e-300), ConvergenceError);
}

TEST_CASE("find_root: basics") {
    num::RootBracket b{0.0, 2.0, 1e-14, 0.0};
    CHECK(num::find_root([](double x) { return x - 1.0; }, b) ==
          doctest::Approx(1.0).epsilon(1e-13));
    CHECK(num::find_root([](double x) { return x * x - 2.0; }, b) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS_WITH(num::find_root([](double x) { return x + 3.0; }, b), "no sign change");
}

TEST_CASE("find_root: result independent of the bracket") {
    const auto f = [](double x) { return std::exp(x) - 3.0 * x - 0.5; };  // root near 1.756
    const double r1 = num::find_root(f, {1.0, 4.0, 1e-13, 0.0});
    const double r2 = num::find_root(f, {1.5, 2.5, 1e-13, 0.0});
    const double r3 = num::find_root(f, {1.7, 40.0, 1e-13, 0.0});
    CHECK(r1 == doctest::Approx(r2).epsilon(1e-12));
    CHECK(r1 == doctest::Approx(r3).epsilon(1e-12));
}

TEST_CASE("find_root agrees with a dense grid scan on a mass-balance style curve") {
    // x (w + t) = m with logarithmically diverging w: same flavor as the
    // stationarity equation solved in production code.
    const double m = 25.0;
    const auto f = [&](double x) { return x * (-std::log1p(-x / 2.0) + 10.0) - m; };
    // oracle: dense scan, then plain bisection
    double lo = 1e-6, hi = 2.0 - 1e-12, root_scan = -1.0;
    const int n = 200000;
    double prev = f(lo);
    for (int k = 1; k <= n; ++k) {
        const double x = lo + (hi - lo) * k / n;
        const double cur = f(x);
        if ((prev <= 0) != (cur <= 0)) {
            double a = lo + (hi - lo) * (k - 1) / n, b = x;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (a + b);
                ((f(a) <= 0) == (f(mid) <= 0) ? a : b) = mid;
            }
            root_scan = 0.5 * (a + b);
            break;
        }
        prev = cur;
    }
    REQUIRE(root_scan > 0);
    const double root = num::find_root(f, {1e-6, 2.0 - 1e-12, 1e-12, 0.0});
    CHECK(root == doctest::Approx(root_scan).epsilon(1e-6));
}

// --- LP ---------------------------------------------------------------

namespace {

// Brute-force oracle: enumerate basic solutions of Ax=b, x>=0.
double brute_force_lp(const num::LinearProgram& lp, bool& feasible) {
    const std::size_t m = lp.constraints.rows(), n = lp.constraints.cols();
    std::vector<std::size_t> cols(m);
    double best = -1e300;
    feasible = false;
    std::vector<int> choose(n, 0);
    for (std::size_t i = 0; i < m; ++i) choose[n - 1 - i] = 1;
    std::sort(choose.begin(), choose.end());
    do {
        cols.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (choose[j]) cols.push_back(j);
        // solve B xb = rhs by gaussian elimination
        std::vector<std::vector<double>> aug(m, std::vector<double>(m + 1));
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = 0; k < m; ++k) aug[i][k] = lp.constraints(i, cols[k]);
            aug[i][m] = lp.rhs[i];
        }
        bool singular = false;
        for (std::size_t p = 0; p < m && !singular; ++p) {
            std::size_t piv = p;
            for (std::size_t i = p + 1; i < m; ++i)
                if (std::fabs(aug[i][p]) > std::fabs(aug[piv][p])) piv = i;
            if (std::fabs(aug[piv][p]) < 1e-11) { singular = true; break; }
            std::swap(aug[p], aug[piv]);
            for (std::size_t i = 0; i < m; ++i) {
                if (i == p) continue;
                const double f = aug[i][p] / aug[p][p];
                for (std::size_t k = p; k <= m; ++k) aug[i][k] -= f * aug[p][k];
            }
        }
        if (singular) continue;
        bool ok = true;
        double obj = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double xk = aug[k][m] / aug[k][k];
            if (xk < -1e-9) { ok = false; break; }
            obj += lp.objective[cols[k]] * xk;
        }
        if (ok) {
            feasible = true;
            best = std::max(best, obj);
        }
    } while (std::next_permutation(choose.begin(), choose.end()));
    return best;
}

}  // namespace

TEST_CASE("solve_lp: forced point, infeasible, unbounded") {
    {
        num::LinearProgram lp{{1.0}, Matrix(1, 1, 1.0), {1.0}};
        const auto sol = num::solve_lp(lp);
        REQUIRE(sol.status == num::LpStatus::optimal);
        CHECK(sol.x[0] == doctest::Approx(1.0));
        CHECK(sol.objective == doctest::Approx(1.0));
    }
    {
        num::LinearProgram lp{{1.0}, Matrix(1, 1, 1.0), {-1.0}};  // x = -1, x >= 0
        CHECK(num::solve_lp(lp).status == num::LpStatus::infeasible);
    }
    {
        // max x1 s.t. x1 - x2 = 0: the ray x1 = x2 escapes
        num::LinearProgram lp{{1.0, 0.0}, Matrix(1, 2), {0.0}};
        lp.constraints(0, 0) = 1.0;
        lp.constraints(0, 1) = -1.0;
        CHECK(num::solve_lp(lp).status == num::LpStatus::unbounded);
    }
}

TEST_CASE("solve_lp: one-variable time-budget problem") {
    // max c*t*y s.t. y*T = 1  ->  y = 1/T, objective c t / T
    const double total_time = 12.5, reward = 1.0, trip = 10.0;
    num::LinearProgram lp{{reward * trip}, Matrix(1, 1, total_time), {1.0}};
    const auto sol = num::solve_lp(lp);
    REQUIRE(sol.status == num::LpStatus::optimal);
    CHECK(sol.x[0] == doctest::Approx(1.0 / total_time).epsilon(1e-12));
    CHECK(sol.objective == doctest::Approx(reward * trip / total_time).epsilon(1e-12));
    CHECK(sol.complementarity_residual < 1e-9);
}

TEST_CASE("solve_lp: randomized problems against vertex enumeration") {
    std::mt19937_64 rng(20240817);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    int optimal_count = 0;
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t n = 4 + static_cast<std::size_t>(rng() % 5);  // 4..8 vars
        const std::size_t m = 2 + static_cast<std::size_t>(rng() % 2);  // 2..3 rows
        num::LinearProgram lp;
        lp.constraints = Matrix(m + 1, n);
        lp.rhs.assign(m + 1, 0.0);
        lp.objective.assign(n, 0.0);
        std::vector<double> x0(n);
        for (auto& v : x0) v = unif(rng);
        for (std::size_t i = 0; i < m; ++i) {
            double b = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                lp.constraints(i, j) = 2.0 * unif(rng) - 1.0;
                b += lp.constraints(i, j) * x0[j];
            }
            lp.rhs[i] = b;
        }
        // bounding simplex slice keeps the problem bounded and feasible at x0
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            lp.constraints(m, j) = 1.0;
            s += x0[j];
        }
        lp.rhs[m] = s;
        for (auto& c : lp.objective) c = 2.0 * unif(rng) - 1.0;

        const auto sol = num::solve_lp(lp);
        bool feasible = false;
        const double best = brute_force_lp(lp, feasible);
        REQUIRE(feasible);  // by construction
        REQUIRE(sol.status == num::LpStatus::optimal);
        ++optimal_count;
        CHECK(sol.objective == doctest::Approx(best).epsilon(1e-8));
        for (std::size_t i = 0; i <= m; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) row += lp.constraints(i, j) * sol.x[j];
            CHECK(std::fabs(row - lp.rhs[i]) < 1e-9);
        }
        for (double v : sol.x) CHECK(v >= -1e-12);
        // dual feasibility and complementary slackness
        for (std::size_t j = 0; j < n; ++j) {
            double reduced = lp.objective[j];
            for (std::size_t i = 0; i <= m; ++i) reduced -= sol.duals[i] * lp.constraints(i, j);
            CHECK(reduced <= 1e-9);
            CHECK(std::fabs(reduced * sol.x[j]) < 1e-9);
        }
        CHECK(sol.complementarity_residual <= 1e-9);
    }
    CHECK(optimal_count == 120);
}

TEST_CASE("least_squares reproduces exact solutions") {
    Matrix a(3, 2);
    a(0, 0) = 1.0; a(0, 1) = 0.0;
    a(1, 0) = 0.0; a(1, 1) = 2.0;
    a(2, 0) = 1.0; a(2, 1) = 1.0;
    const std::vector<double> rhs = {3.0, 4.0, 5.0};  // consistent: z = (3, 2)
    const auto z = num::least_squares(a, rhs);
    CHECK(z[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(z[1] == doctest::Approx(2.0).epsilon(1e-8));
}
