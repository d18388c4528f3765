#pragma once

#include "qespace/pdo.hpp"

namespace qe {

/// Lifting bump phi(xi) = prod_i eta(xi_i) with eta(t) = exp(1 - 1/(1-t^2))
/// on (-1,1): phi(0) = 1 and supp phi in (-1,1)^n, hence phi(k) = delta_{k,0}
/// on the integer lattice exactly.
struct LiftingBump {
    double operator()(const double* xi, int n) const {
        double v = 1.0;
        for (int d = 0; d < n; ++d) {
            v *= bump_eta(xi[d]);
            if (v == 0.0) return 0.0;
        }
        return v;
    }
};

/// Integer steps per unit frequency; LatticeOffGrid unless 1/h is integral.
inline int lattice_steps(const SpacePtr& grid_space) {
    if (!grid_space->bk.is_grid())
        throw BackendMismatch("lattice_steps: grid backend required");
    const double inv = 1.0 / grid_space->bk.step();
    const int steps = static_cast<int>(std::lround(inv));
    if (std::abs(inv - steps) > 1e-9 * inv || steps < 1)
        throw LatticeOffGrid("integer lattice does not lie on the grid");
    return steps;
}

inline Freq lattice_to_grid(const SpacePtr& grid_space, const Freq& k) {
    const int steps = lattice_steps(grid_space);
    Freq g(k.dim());
    for (int d = 0; d < k.dim(); ++d) g[d] = k[d] * steps;
    if (!grid_space->box().contains(g))
        throw LatticeOffGrid("lattice frequency outside the grid box");
    return g;
}

/// A_Theta -> R_Theta at the truncated level: torus coefficients become
/// lattice spikes on the grid.
inline Element embed_torus_element(const Element& x, const SpacePtr& grid_space) {
    if (!x.space()->bk.is_torus())
        throw BackendMismatch("embed_torus_element: torus element expected");
    Element out(grid_space);
    const Box& tbox = x.space()->box();
    const double w = grid_space->bk.weight();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex v = x.data()[i];
        if (v == Complex(0, 0)) continue;
        out.add(lattice_to_grid(grid_space, tbox.freq(i)), v / w);
    }
    return out;
}

/// Lifting: tilde a(xi) = sum_k phi(xi - k) a(k), tabulated on the grid.
inline Symbol lift_symbol(const Symbol& a, const SpacePtr& grid_space, int pad = 0) {
    if (!a.space()->bk.is_torus()) throw BackendMismatch("lift_symbol: torus symbol expected");
    const LiftingBump phi;
    const int n = a.space()->dim();
    const Box& tb = a.table_box();
    const double h = grid_space->bk.step();

    if (a.is_scalar()) {
        const Box gtb(n, grid_space->box().radius() + pad);
        std::vector<Complex> vals(gtb.size(), Complex(0, 0));
        for (std::size_t gi = 0; gi < gtb.size(); ++gi) {
            const Freq g = gtb.freq(gi);
            Complex s(0, 0);
            for (std::size_t ki = 0; ki < tb.size(); ++ki) {
                const Freq k = tb.freq(ki);
                double diff[kMaxDim];
                for (int d = 0; d < n; ++d) diff[d] = h * g[d] - k[d];
                const double p = phi(diff, n);
                if (p != 0.0) s += p * a.scalar_at(k);
            }
            vals[gi] = s;
        }
        return Symbol::scalar_from_table(grid_space, pad, a.declared(), std::move(vals));
    }

    return Symbol::from_function(grid_space, pad, a.declared(), [&](const Freq& g) {
        Element acc(grid_space);
        for (std::size_t ki = 0; ki < tb.size(); ++ki) {
            const Freq k = tb.freq(ki);
            double diff[kMaxDim];
            for (int d = 0; d < n; ++d) diff[d] = h * g[d] - k[d];
            const double p = phi(diff, n);
            if (p == 0.0) continue;
            Element v = embed_torus_element(a.at(k), grid_space);
            v *= Complex(p, 0);
            acc += v;
        }
        return acc;
    });
}

/// Restriction to integer frequencies; operator values are projected onto
/// their lattice coefficients.
inline Symbol restrict_symbol(const Symbol& atilde, const SpacePtr& torus_space) {
    if (!atilde.space()->bk.is_grid())
        throw BackendMismatch("restrict_symbol: grid symbol expected");
    if (!torus_space->bk.is_torus())
        throw BackendMismatch("restrict_symbol: torus target expected");
    const int n = torus_space->dim();
    const Box& ttb = torus_space->box();
    const double wg = atilde.space()->bk.weight();

    if (atilde.is_scalar()) {
        std::vector<Complex> vals(ttb.size());
        for (std::size_t i = 0; i < ttb.size(); ++i)
            vals[i] = atilde.scalar_at(lattice_to_grid(atilde.space(), ttb.freq(i)));
        return Symbol::scalar_from_table(torus_space, 0, atilde.declared(), std::move(vals));
    }
    return Symbol::from_function(torus_space, 0, atilde.declared(), [&](const Freq& k) {
        const Element g = atilde.at(lattice_to_grid(atilde.space(), k));
        Element v(torus_space);
        for (std::size_t i = 0; i < ttb.size(); ++i) {
            const Freq kk = ttb.freq(i);
            v.data()[i] = g.coeff(lattice_to_grid(atilde.space(), kk)) * wg;
        }
        return v;
    });
}

/// h_j = |b_j|^{-1/2} lambda(1_{b_j}) for the ball b_j of radius 2^{-j}:
/// the discrete-ball indicator with its quadrature measure, which keeps
/// ||h_j||_2 = 1 exact.
inline Element ball_state(const SpacePtr& grid_space, int j) {
    const Backend& bk = grid_space->bk;
    const double radius = std::ldexp(1.0, -j);
    const int steps = static_cast<int>(std::floor(radius / bk.step()));
    if (steps < 2)
        throw ResolutionTooCoarse("ball_state: fewer than 5 grid points across the ball");
    Element h(grid_space);
    const Box& box = grid_space->box();
    std::size_t count = 0;
    for (std::size_t i = 0; i < box.size(); ++i) {
        const Freq k = box.freq(i);
        if (bk.xi_norm_sq(k) <= radius * radius) {
            h.data()[i] = Complex(1, 0);
            ++count;
        }
    }
    const double measure = bk.weight() * static_cast<double>(count);
    h *= Complex(1.0 / std::sqrt(measure), 0);
    return h;
}

/// Lambda_j embedding: lambda(k) -> lambda(k) h_j, an isometry up to
/// quadrature error on interior supports.
inline Element lambda_embed(const Element& x, const SpacePtr& grid_space, int j) {
    if (!x.space()->bk.is_torus())
        throw BackendMismatch("lambda_embed: torus element expected");
    const Element hj = ball_state(grid_space, j);
    Element out(grid_space);
    const Box& tbox = x.space()->box();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex v = x.data()[i];
        if (v == Complex(0, 0)) continue;
        Element term = shift_left(lattice_to_grid(grid_space, tbox.freq(i)), hj);
        term *= v;
        out += term;
    }
    return out;
}

/// Transference defect || Lambda_j(Psi_a x) - Psi_{tilde a}(Lambda_j x) ||_2
/// for a discrete symbol a against a precomputed lifting.
inline double transference_defect(const Symbol& a, const Symbol& atilde, const Element& x,
                                  const SpacePtr& grid_space, int j) {
    require_same_space(a.space(), x.space());
    require_same_space(atilde.space(), grid_space);
    const Element lhs = lambda_embed(apply_pdo(a, x), grid_space, j);
    const Element rhs = apply_pdo(atilde, lambda_embed(x, grid_space, j));
    return l2_norm(lhs - rhs);
}

inline double transference_defect(const Symbol& a, const Element& x,
                                  const SpacePtr& grid_space, int j) {
    return transference_defect(a, lift_symbol(a, grid_space), x, grid_space, j);
}

}  // namespace qe
