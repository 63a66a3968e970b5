#include "ridehail/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ridehail/errors.hpp"

namespace ridehail::num {

namespace {
constexpr double kTwoOverSqrtPi = 1.1283791670955125738961589031;
}

double erf(double y) {
    if (std::isnan(y)) return y;
    const double ay = std::fabs(y);
    if (ay >= 6.0) return y > 0 ? 1.0 : -1.0;  // erfc(6) ~ 2.2e-17
    // erf(y) = (2/sqrt(pi)) e^{-y^2} sum_{n>=0} 2^n y^{2n+1} / (1*3*...*(2n+1));
    // all terms positive, so no cancellation anywhere in the range.
    const double y2 = y * y;
    double term = ay;
    double sum = ay;
    for (int n = 0; n < 200; ++n) {
        term *= 2.0 * y2 / (2.0 * n + 3.0);
        sum += term;
        if (term < sum * 1e-18) break;
    }
    const double r = std::min(1.0, kTwoOverSqrtPi * std::exp(-y2) * sum);
    return y > 0 ? r : -r;
}

double erf_derivative(double y) { return kTwoOverSqrtPi * std::exp(-y * y); }

double find_root(const std::function<double(double)>& f, const RootBracket& bracket) {
    double a = bracket.lo, b = bracket.hi;
    if (!(a < b)) throw std::invalid_argument("find_root: lo must be < hi");
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0) == (fb > 0)) throw std::invalid_argument("no sign change");

    // Brent: keep [a,b] a bracketing interval with b the best iterate.
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 0; iter < 200; ++iter) {
        if ((fb > 0) == (fc > 0)) {
            c = a; fc = fa;
            d = e = b - a;
        }
        if (std::fabs(fc) < std::fabs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * 2.22e-16 * std::fabs(b) + 0.5 * bracket.tol_x;
        const double xm = 0.5 * (c - b);
        if (std::fabs(xm) <= tol1 || std::fabs(fb) <= bracket.tol_f) return b;
        if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
            // inverse quadratic (or secant) step
            const double s = fb / fa;
            double p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qq = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0) q = -q;
            p = std::fabs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::fabs(tol1 * q), std::fabs(e * q))) {
                e = d; d = p / q;
            } else {
                d = xm; e = d;
            }
        } else {
            d = xm; e = d;
        }
        a = b; fa = fb;
        b += (std::fabs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
        fb = f(b);
        if (fb == 0.0) return b;
    }
    return b;
}

namespace {

struct SimpsonState {
    const std::function<double(double)>& f;
    double tol;
};

double adaptive_simpson(const SimpsonState& st, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
    if (depth > 60) throw ConvergenceError("max-subdivisions exceeded");
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = st.f(lm), frm = st.f(rm);
    const double h = b - a;
    const double left = h / 12.0 * (fa + 4.0 * flm + fm);
    const double right = h / 12.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(st, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1) +
           adaptive_simpson(st, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double lo, double hi, double tol) {
    if (tol <= 0) throw std::invalid_argument("integrate: tol must be positive");
    if (lo == hi) return 0.0;
    double sign = 1.0;
    if (lo > hi) { std::swap(lo, hi); sign = -1.0; }
    SimpsonState st{f, tol};
    const double m = 0.5 * (lo + hi);
    const double fa = f(lo), fm = f(m), fb = f(hi);
    const double whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    return sign * adaptive_simpson(st, lo, hi, fa, fm, fb, whole, tol, 0);
}

// ---------------------------------------------------------------------------
// Dense two-phase simplex
// ---------------------------------------------------------------------------

namespace {
constexpr double kPivotEps = 1e-11;

// Tableau layout: rows 0..m-1 are constraints, row m holds reduced costs of
// the active objective, entries 0..total-1 are variable columns and column
// `total` is the rhs / objective value.
struct Tableau {
    std::size_t m, total;
    std::vector<double> t;  // (m+1) x (total+1)
    std::vector<int> basis; // basic variable per row

    double& at(std::size_t i, std::size_t j) { return t[i * (total + 1) + j]; }
    double at(std::size_t i, std::size_t j) const { return t[i * (total + 1) + j]; }

    void pivot(std::size_t row, std::size_t col) {
        const double inv = 1.0 / at(row, col);
        for (std::size_t j = 0; j <= total; ++j) at(row, j) *= inv;
        at(row, col) = 1.0;
        for (std::size_t i = 0; i <= m; ++i) {
            if (i == row) continue;
            const double factor = at(i, col);
            if (factor == 0.0) continue;
            for (std::size_t j = 0; j <= total; ++j) at(i, j) -= factor * at(row, j);
            at(i, col) = 0.0;
        }
        basis[row] = static_cast<int>(col);
    }

    // Bland's rule: lowest-index entering variable with positive reduced
    // cost, lowest-index leaving row on ties. Returns false when unbounded.
    bool run(const std::vector<bool>& allowed) {
        for (;;) {
            std::size_t col = total;
            for (std::size_t j = 0; j < total; ++j) {
                if (allowed[j] && at(m, j) > kPivotEps) { col = j; break; }
            }
            if (col == total) return true;  // optimal
            std::size_t row = m;
            double best_ratio = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                if (at(i, col) <= kPivotEps) continue;
                const double ratio = at(i, total) / at(i, col);
                if (row == m || ratio < best_ratio - 1e-15 ||
                    (ratio < best_ratio + 1e-15 && basis[i] < basis[row])) {
                    row = i; best_ratio = ratio;
                }
            }
            if (row == m) return false;  // unbounded
            pivot(row, col);
        }
    }
};
}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
    const std::size_t m = lp.constraints.rows();
    const std::size_t n = lp.constraints.cols();
    if (lp.objective.size() != n || lp.rhs.size() != m)
        throw std::invalid_argument("solve_lp: inconsistent dimensions");

    const std::size_t total = n + m;  // structural + one artificial per row
    Tableau tb;
    tb.m = m;
    tb.total = total;
    tb.t.assign((m + 1) * (total + 1), 0.0);
    tb.basis.assign(m, 0);

    for (std::size_t i = 0; i < m; ++i) {
        const double sgn = lp.rhs[i] < 0 ? -1.0 : 1.0;  // keep rhs nonnegative
        for (std::size_t j = 0; j < n; ++j) tb.at(i, j) = sgn * lp.constraints(i, j);
        tb.at(i, n + i) = 1.0;
        tb.at(i, total) = sgn * lp.rhs[i];
        tb.basis[i] = static_cast<int>(n + i);
    }

    // Phase 1: maximize -(sum of artificials).
    for (std::size_t j = 0; j <= total; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += tb.at(i, j);
        tb.at(m, j) = (j < n || j == total) ? s : s - 1.0;
    }
    std::vector<bool> allowed(total, true);
    tb.run(allowed);  // phase 1 is always bounded

    LpSolution out;
    if (tb.at(m, total) > 1e-8) {
        out.status = LpStatus::infeasible;
        return out;
    }
    // Drive any leftover zero-level artificials out of the basis.
    for (std::size_t i = 0; i < m; ++i) {
        if (tb.basis[i] < static_cast<int>(n)) continue;
        std::size_t col = total;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::fabs(tb.at(i, j)) > kPivotEps) { col = j; break; }
        }
        if (col != total) tb.pivot(i, col);
        // else: the row is redundant (all-zero in structural columns); the
        // artificial stays basic at level ~0 and never re-enters.
    }

    // Phase 2 objective.
    for (std::size_t j = 0; j <= total; ++j) tb.at(m, j) = 0.0;
    for (std::size_t j = 0; j < n; ++j) tb.at(m, j) = lp.objective[j];
    for (std::size_t i = 0; i < m; ++i) {
        const int bj = tb.basis[i];
        if (bj < static_cast<int>(n) && lp.objective[bj] != 0.0) {
            const double factor = lp.objective[bj];
            for (std::size_t j = 0; j <= total; ++j) tb.at(m, j) -= factor * tb.at(i, j);
            tb.at(m, bj) = 0.0;
        }
    }
    for (std::size_t j = n; j < total; ++j) allowed[j] = false;  // artificials locked out
    if (!tb.run(allowed)) {
        out.status = LpStatus::unbounded;
        return out;
    }

    out.status = LpStatus::optimal;
    out.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (tb.basis[i] < static_cast<int>(n)) out.x[tb.basis[i]] = tb.at(i, total);
    }
    out.objective = 0.0;
    for (std::size_t j = 0; j < n; ++j) out.objective += lp.objective[j] * out.x[j];
    // Duals sit in the artificial columns of the cost row (up to the rhs
    // sign flips applied at setup).
    out.duals.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double sgn = lp.rhs[i] < 0 ? -1.0 : 1.0;
        out.duals[i] = -sgn * tb.at(m, n + i);
    }
    double comp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double reduced = lp.objective[j];
        for (std::size_t i = 0; i < m; ++i) reduced -= out.duals[i] * lp.constraints(i, j);
        comp = std::max(comp, std::fabs(reduced * out.x[j]));
    }
    out.complementarity_residual = comp;
    return out;
}

std::vector<double> least_squares(const Matrix& a, const std::vector<double>& rhs,
                                  double damping) {
    const std::size_t m = a.rows(), n = a.cols();
    if (rhs.size() != m) throw std::invalid_argument("least_squares: size mismatch");
    // Normal equations (A'A + damping I) z = A'rhs, solved by Cholesky.
    Matrix ata(n, n);
    std::vector<double> atb(n, 0.0);
    double scale = damping;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::fabs(a(i, j)));
    const double ridge = damping * scale * scale + 1e-300;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = j; k < n; ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += a(i, j) * a(i, k);
            ata(j, k) = s;
            ata(k, j) = s;
        }
        ata(j, j) += ridge;
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += a(i, j) * rhs[i];
        atb[j] = s;
    }
    // In-place Cholesky LL'.
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            const double l = ata(j, k);
            for (std::size_t i = j; i < n; ++i) ata(i, j) -= ata(i, k) * l;
        }
        const double piv = ata(j, j);
        if (!(piv > 0)) throw ConvergenceError("least_squares: indefinite normal matrix");
        const double inv = 1.0 / std::sqrt(piv);
        for (std::size_t i = j; i < n; ++i) ata(i, j) *= inv;
    }
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = atb[i];
        for (std::size_t k = 0; k < i; ++k) s -= ata(i, k) * z[k];
        z[i] = s / ata(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = z[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= ata(k, ii) * z[k];
        z[ii] = s / ata(ii, ii);
    }
    return z;
}

}  // namespace ridehail::num
