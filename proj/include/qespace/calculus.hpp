#pragma once

#include <cmath>
#include <vector>

#include "qespace/linalg.hpp"

namespace qe {

/// Coefficient multiplier m(xi) applied pointwise.
template <typename F>
Element multiplier(const Element& a, F&& m) {
    const Box& box = a.box();
    const Backend& bk = a.space()->bk;
    Element out(a.space());
    double xi[kMaxDim];
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex v = a.data()[i];
        if (v == Complex(0, 0)) continue;
        bk.xi(box.freq(i), xi);
        out.data()[i] = v * m(xi);
    }
    return out;
}

/// partial_Theta^j: the multiplier 2 pi i xi_j.
inline Element partial_theta(const Element& a, int axis) {
    return multiplier(a, [axis](const double* xi) { return Complex(0, kTwoPi * xi[axis]); });
}

/// (1 - Delta_Theta)^{s/2}: the multiplier (1 + 4 pi^2 |xi|^2)^{s/2}.
inline Element laplacian_power(const Element& a, double s) {
    const int n = a.dim();
    return multiplier(a, [s, n](const double* xi) {
        double q = 1.0;
        for (int d = 0; d < n; ++d) q += 4.0 * kPi * kPi * xi[d] * xi[d];
        return Complex(std::pow(q, s / 2.0), 0.0);
    });
}

/// Heat semigroup S_{Theta,t}: the multiplier e^{-t |xi|^2}.
inline Element heat(const Element& a, double t) {
    if (t < 0) throw NegativeTime("heat: t must be nonnegative");
    const int n = a.dim();
    return multiplier(a, [t, n](const double* xi) {
        double q = 0.0;
        for (int d = 0; d < n; ++d) q += xi[d] * xi[d];
        return Complex(std::exp(-t * q), 0.0);
    });
}

/// [x_{Theta,j}, a] = (1/2 pi i) sum_k Theta_jk partial_Theta^k a,
/// i.e. the real multiplier sum_k Theta_jk xi_k.  Stays inside the algebra
/// on both backends.
inline Element commutator_x(const Element& a, int axis) {
    const int n = a.dim();
    const Deformation& def = a.space()->def;
    return multiplier(a, [&def, axis, n](const double* xi) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += def.theta(axis, k) * xi[k];
        return Complex(s, 0.0);
    });
}

namespace detail {

/// Grid derivative along one axis of the sample array: 4th-order central
/// stencil, falling back to 2nd-order central one step from the edge and
/// 2nd-order one-sided at the edge.
inline Element grid_axis_derivative(const Element& a, int axis) {
    const Box& box = a.box();
    const int R = box.radius();
    const double h = a.space()->bk.step();
    Element out(a.space());
    const Freq e = Freq::unit(a.dim(), axis);

    auto at = [&](const Freq& k) { return a.coeff(k); };
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Freq k = box.freq(i);
        const int c = k[axis];
        Complex d;
        if (c - 2 >= -R && c + 2 <= R) {
            d = (at(k - e - e) - 8.0 * at(k - e) + 8.0 * at(k + e) - at(k + e + e)) /
                (12.0 * h);
        } else if (c - 1 >= -R && c + 1 <= R) {
            d = (at(k + e) - at(k - e)) / (2.0 * h);
        } else if (c == -R) {
            d = (-3.0 * at(k) + 4.0 * at(k + e) - at(k + e + e)) / (2.0 * h);
        } else {
            d = (3.0 * at(k) - 4.0 * at(k - e) + at(k - e - e)) / (2.0 * h);
        }
        out.data()[i] = d;
    }
    return out;
}

}  // namespace detail

/// Left quantum variable: x_{Theta,j} lambda(f) = lambda(D^l_{Theta,j} f)
/// with D^l_{Theta,j} = sum_{k<j} Theta_jk M_{xi_k} - (1/2 pi i) d/dxi_j.
inline Element x_left(const Element& a, int axis) {
    if (!a.space()->bk.is_grid()) throw BackendMismatch("x_left: grid backend required");
    const Deformation& def = a.space()->def;
    const int n = a.dim();
    Element out = multiplier(a, [&def, axis, n](const double* xi) {
        double s = 0.0;
        for (int k = 0; k < axis; ++k) s += def.theta(axis, k) * xi[k];
        return Complex(s, 0.0);
    });
    // -(1/2 pi i) = i / (2 pi)
    out += Complex(0, 1.0 / kTwoPi) * detail::grid_axis_derivative(a, axis);
    return out;
}

/// Right quantum variable: lambda(f) x_{Theta,j} = lambda(D^r_{Theta,j} f)
/// with D^r_{Theta,j} = sum_{i>j} Theta_ij M_{xi_i} - (1/2 pi i) d/dxi_j.
inline Element x_right(const Element& a, int axis) {
    if (!a.space()->bk.is_grid()) throw BackendMismatch("x_right: grid backend required");
    const Deformation& def = a.space()->def;
    const int n = a.dim();
    Element out = multiplier(a, [&def, axis, n](const double* xi) {
        double s = 0.0;
        for (int i = axis + 1; i < n; ++i) s += def.theta(i, axis) * xi[i];
        return Complex(s, 0.0);
    });
    out += Complex(0, 1.0 / kTwoPi) * detail::grid_axis_derivative(a, axis);
    return out;
}

/// Sobolev norm ||(1 - Delta_Theta)^{s/2} a||_2.
inline double sobolev_norm(const Element& a, double s) {
    return l2_norm(laplacian_power(a, s));
}

/// Littlewood-Paley family psi_j(xi) = phi(2^{-j} xi) - phi(2^{-j+1} xi)
/// built from the shared radial bump (1 on B_1, 0 off B_2).
struct DyadicPartition {
    int j_max;

    explicit DyadicPartition(const Backend& bk) {
        const double ximax =
            bk.step() * bk.radius() * std::sqrt(static_cast<double>(bk.dim()));
        j_max = std::max(1, static_cast<int>(std::ceil(std::log2(std::max(2.0, ximax)))) + 1);
    }

    static double base_bump(double r) { return smooth_cutoff(r, 1.0, 2.0); }

    /// psi_j for j >= 1; the core bump phi is psi_0.
    static double psi(int j, double r) {
        if (j == 0) return base_bump(r);
        return base_bump(std::ldexp(r, -j)) - base_bump(std::ldexp(r, -j + 1));
    }

    /// Partial sums telescope: sum_{j=0..J} psi_j = phi(2^{-J} xi).
    double partition_defect(double r) const {
        double s = 0.0;
        for (int j = 0; j <= j_max; ++j) s += psi(j, r);
        return std::abs(s - base_bump(std::ldexp(r, -j_max)));
    }
};

/// Dyadic block lambda(psi_j f).
inline Element dyadic_block(const Element& a, int j) {
    const int n = a.dim();
    return multiplier(a, [j, n](const double* xi) {
        double r2 = 0.0;
        for (int d = 0; d < n; ++d) r2 += xi[d] * xi[d];
        return Complex(DyadicPartition::psi(j, std::sqrt(r2)), 0.0);
    });
}

enum class GradientSide { Column, Row };

/// Row / column square function sum_k (d^k a)(d^k a)^* resp.
/// sum_k (d^k a)^*(d^k a) of the Theta-gradient.
inline Element gradient_square(const Element& a, GradientSide side) {
    Element s(a.space());
    for (int k = 0; k < a.dim(); ++k) {
        Element d = partial_theta(a, k);
        if (side == GradientSide::Row)
            s += twisted_product(d, adjoint(d));
        else
            s += twisted_product(adjoint(d), d);
    }
    return s;
}

/// Surrogate for ||nabla_Theta a||: the max of the row and column square
/// function operator norms (operator-valued Voiculescu bound), computed as
/// sqrt of the norm of the positive square-function elements.
inline double free_gradient_norm(const Element& a, double tol = 1e-8) {
    const double row = operator_norm(gradient_square(a, GradientSide::Row), tol);
    const double col = operator_norm(gradient_square(a, GradientSide::Column), tol);
    return std::sqrt(std::max(row, col));
}

/// Default heat-time grid: 40 log-spaced points in [1e-4, 1e2].
inline std::vector<double> default_t_grid(int count = 40, double t_min = 1e-4,
                                          double t_max = 1e2) {
    std::vector<double> t(count);
    for (int i = 0; i < count; ++i)
        t[i] = t_min * std::pow(t_max / t_min, static_cast<double>(i) / (count - 1));
    return t;
}

/// Semigroup BMO norm: max over rows/columns of
/// sup_t ||S_t(a* a) - S_t(a)* S_t(a)||^{1/2}, the sup taken over t_grid.
/// A monotone lower approximant of the true sup over t > 0.
inline double bmo_norm(const Element& a, const std::vector<double>& t_grid,
                       double tol = 1e-8) {
    double best = 0.0;
    const Element astar = adjoint(a);
    const Element col_sq = twisted_product(astar, a);
    const Element row_sq = twisted_product(a, astar);
    for (double t : t_grid) {
        if (t <= 0) throw NegativeTime("bmo_norm: t_grid must be positive");
        const Element sa = heat(a, t);
        const Element dev_c = heat(col_sq, t) - twisted_product(adjoint(sa), sa);
        const Element dev_r = heat(row_sq, t) - twisted_product(sa, adjoint(sa));
        best = std::max(best, operator_norm(dev_c, tol));
        best = std::max(best, operator_norm(dev_r, tol));
    }
    return std::sqrt(std::max(0.0, best));
}

inline double bmo_norm(const Element& a) { return bmo_norm(a, default_t_grid()); }

struct H1Result {
    double column;
    double row;
    double quadrature_tail_bound;
};

/// Hardy norm ||(int_0^inf S_t |nabla_Theta S_t a|^2 dt)^{1/2}||_1 by
/// trapezoid quadrature over t_grid; column and row square functions are
/// reported separately.  Reporting-grade.
inline H1Result h1_norm(const Element& a, const std::vector<double>& t_grid) {
    if (std::abs(trace(a)) > 1e-10)
        throw NonzeroTrace("h1_norm: element must have vanishing trace");

    auto integrate = [&](GradientSide side) {
        Element acc(a.space());
        for (std::size_t i = 0; i < t_grid.size(); ++i) {
            const double t = t_grid[i];
            const Element sta = heat(a, t);
            const Element g = heat(gradient_square(sta, side), t);
            double wq;
            if (i == 0)
                wq = (t_grid[1] - t_grid[0]) / 2.0;
            else if (i + 1 == t_grid.size())
                wq = (t_grid[i] - t_grid[i - 1]) / 2.0;
            else
                wq = (t_grid[i + 1] - t_grid[i - 1]) / 2.0;
            acc += Complex(wq, 0) * g;
        }
        return acc;
    };

    const double col = trace_function_psd(integrate(GradientSide::Column),
                                          [](double x) { return std::sqrt(x); });
    const double row = trace_function_psd(integrate(GradientSide::Row),
                                          [](double x) { return std::sqrt(x); });
    return {col, row, std::exp(-2.0 * t_grid.back())};
}

/// A function tabulated on a symmetric x-grid with elements as values.
struct BallTabulation {
    Box xbox;                     // index box of the x-grid
    double xstep = 0.0;           // spacing
    std::vector<Element> values;  // size xbox.size()

    double xcoord(const Freq& k, int d) const { return xstep * k[d]; }
    double xnorm(const Freq& k) const {
        return xstep * std::sqrt(static_cast<double>(k.norm2_sq()));
    }
};

/// Ratio LHS / RHS of the Poincare inequality on the ball B_R:
/// LHS = || avg_{B_R} |phi - phi_avg|^2 ||^{1/2} and RHS the row/column
/// surrogate of the free-gradient norm restricted to the ball.
/// The inequality predicts LHS <= 2 sqrt(2) R * RHS up to surrogate slack.
inline double poincare_ratio(const BallTabulation& phi, double R, double tol = 1e-8) {
    const Box& xbox = phi.xbox;
    std::vector<std::size_t> ball;
    for (std::size_t i = 0; i < xbox.size(); ++i)
        if (phi.xnorm(xbox.freq(i)) <= R) ball.push_back(i);
    if (ball.empty()) throw EmptyBall("poincare_ratio: no grid points inside the ball");
    if (phi.values.empty()) throw EmptyBall("poincare_ratio: empty tabulation");

    const SpacePtr space = phi.values.front().space();

    Element mean(space);
    for (std::size_t i : ball) mean += phi.values[i];
    mean *= Complex(1.0 / ball.size(), 0);

    Element var(space);
    for (std::size_t i : ball) {
        Element d = phi.values[i] - mean;
        var += twisted_product(adjoint(d), d);
    }
    var *= Complex(1.0 / ball.size(), 0);
    const double lhs = std::sqrt(std::max(0.0, operator_norm(var, tol)));

    // Central x-differences of the tabulation, one-sided at tabulated edges.
    auto xderiv = [&](std::size_t i, int axis) {
        const Freq k = xbox.freq(i);
        const Freq e = Freq::unit(xbox.dim(), axis);
        const bool up = xbox.contains(k + e), dn = xbox.contains(k - e);
        if (up && dn)
            return (phi.values[xbox.index(k + e)] - phi.values[xbox.index(k - e)]) *
                   Complex(1.0 / (2.0 * phi.xstep), 0);
        if (up)
            return (phi.values[xbox.index(k + e)] - phi.values[i]) *
                   Complex(1.0 / phi.xstep, 0);
        return (phi.values[i] - phi.values[xbox.index(k - e)]) * Complex(1.0 / phi.xstep, 0);
    };

    double rhs_sq = 0.0;
    for (std::size_t i : ball) {
        Element row(space), col(space);
        for (int d = 0; d < xbox.dim(); ++d) {
            const Element g = xderiv(i, d);
            row += twisted_product(g, adjoint(g));
            col += twisted_product(adjoint(g), g);
        }
        rhs_sq = std::max(rhs_sq, operator_norm(row, tol));
        rhs_sq = std::max(rhs_sq, operator_norm(col, tol));
    }
    const double rhs = std::sqrt(std::max(0.0, rhs_sq));
    if (rhs == 0.0) return 0.0;
    return lhs / rhs;
}

}  // namespace qe
