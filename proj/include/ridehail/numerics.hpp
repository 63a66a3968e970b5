#pragma once

#include <functional>
#include <vector>

#include "ridehail/matrix.hpp"

namespace ridehail::num {

// Error function, |abs error| <= ~1e-15 over all finite arguments.
// Uses the non-alternating scaled Maclaurin series for |y| < 6 (no
// cancellation) and saturates to +-1 beyond, where erfc(6) < 2.2e-17.
double erf(double y);

// d/dy erf(y) = (2/sqrt(pi)) exp(-y^2)
double erf_derivative(double y);

struct RootBracket {
    double lo = 0.0;
    double hi = 0.0;
    double tol_x = 1e-12;
    double tol_f = 1e-12;
};

// Bracketed scalar root finding: bisection safeguarded by inverse quadratic
// interpolation (Brent). Requires f(lo) and f(hi) of opposite sign; throws
// std::invalid_argument("no sign change") otherwise. Deterministic.
double find_root(const std::function<double(double)>& f, const RootBracket& bracket);

// Adaptive Simpson quadrature of f over [lo, hi] with estimated absolute
// error <= tol. Recursion depth is capped at 60; exceeding it throws
// ConvergenceError("max-subdivisions exceeded").
double integrate(const std::function<double(double)>& f, double lo, double hi, double tol);

// ---------------------------------------------------------------------------
// Small dense linear programming
// ---------------------------------------------------------------------------

// Standard-form LP:  maximize c.x  subject to  A x = b,  x >= 0.
struct LinearProgram {
    std::vector<double> objective;       // length n
    Matrix constraints;                  // m x n
    std::vector<double> rhs;             // length m
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    std::vector<double> x;               // primal solution (when optimal)
    std::vector<double> duals;           // one multiplier per constraint row
    double objective = 0.0;
    double complementarity_residual = 0.0;  // max |x_j * reduced_cost_j|
};

// Two-phase dense simplex with Bland's anti-cycling rule. Intended for small
// problems (up to a few thousand variables).
LpSolution solve_lp(const LinearProgram& lp);

// Minimum-norm least-squares solve of A z ~= rhs via damped normal equations.
// Tiny systems only (multiplier recovery, Gauss-Newton steps).
std::vector<double> least_squares(const Matrix& a, const std::vector<double>& rhs,
                                  double damping = 1e-12);

}  // namespace ridehail::num
