#pragma once

#include "qespace/pdo.hpp"

namespace qe {

/// Two-sided inverse of an element: dense solve of the left-regular system
/// on an interior sub-block (condition-number gate), then Newton-Hotelling
/// polish z <- z + z (1 - a z) on the full box.
inline Element invert_element(const Element& a, int block_radius = -1,
                              double cond_gate = 1e8, int polish_steps = 6) {
    const SpacePtr& sp = a.space();
    const Box& box = sp->box();
    const int R = box.radius();
    if (block_radius < 0) block_radius = std::min(R, 8);

    const Box sub(sp->dim(), block_radius);
    const double w = sp->bk.weight();
    Matrix M = Matrix::Zero(sub.size(), sub.size());
    for (std::size_t c = 0; c < sub.size(); ++c) {
        const Freq fk = sub.freq(c);
        for (std::size_t s = 0; s < a.size(); ++s) {
            if (a.data()[s] == Complex(0, 0)) continue;
            const Freq d = box.freq(s);
            const Freq p = d + fk;
            if (!sub.contains(p)) continue;
            M(sub.index(p), c) = w * a.data()[s] * sp->phase_lower(d, fk);
        }
    }
    Eigen::PartialPivLU<Matrix> lu(M);
    {
        Eigen::VectorXd evals;
        Matrix evecs;
        hermitian_eig(Matrix(M.adjoint() * M), evals, evecs);
        const double lmin = std::max(0.0, evals(0));
        const double lmax = std::max(0.0, evals(evals.size() - 1));
        if (lmin <= 0 || std::sqrt(lmax / lmin) > cond_gate)
            throw SingularMatrix("invert_element: condition number above gate");
    }
    Vector rhs = Vector::Zero(sub.size());
    rhs(sub.index(Freq(sp->dim()))) = 1.0 / w;  // coefficient vector of 1
    const Vector zsub = lu.solve(rhs);

    Element z(sp);
    for (std::size_t i = 0; i < sub.size(); ++i)
        z.data()[box.index(sub.freq(i))] = zsub(static_cast<Eigen::Index>(i));

    const Element one = unit(sp);
    for (int it = 0; it < polish_steps; ++it) {
        const Element resid = one - twisted_product(a, z);
        if (l2_norm(resid) < 1e-14) break;
        z += twisted_product(z, resid);
    }
    return z;
}

/// Parametrix data: Psi_{b_k} Psi_a = id - Psi_{c_k} with c_k = c_1^{<> k}.
struct Parametrix {
    Symbol b1;
    Symbol c1;
    Symbol bk;
    Symbol ck;
    int k = 1;
    double gamma = 0.0;          // delta - rho
    double cutoff_radius = 0.0;  // phi is 1 on B_R, 0 off B_{R+1}
    EllipticityMargin margin;
};

/// b_1(xi) = (1 - phi(xi)) a(xi)^{-1} with the shared smooth cutoff at the
/// ellipticity radius; c_1 = 1 - b_1 <> a by the exact composition;
/// b_k, c_k by iteration with the exact <>.
inline Parametrix parametrix(const Symbol& a, double m, int k, int invert_block_radius = -1) {
    if (k < 1) throw ConfigInvalid("parametrix: k >= 1 required");
    Parametrix p;
    p.margin = ellipticity_margin(a, m);
    p.cutoff_radius = p.margin.R;
    p.gamma = a.declared().delta - a.declared().rho;
    const double R = p.cutoff_radius;

    OrderData d_b;
    d_b.m = -m;
    d_b.rho = a.declared().rho;
    d_b.delta = a.declared().delta;

    if (a.is_scalar()) {
        const Box& tb = a.table_box();
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) {
            const Freq xi = tb.freq(i);
            const double r = std::sqrt(a.space()->bk.xi_norm_sq(xi));
            const double cut = 1.0 - smooth_cutoff(r, R, R + 1.0);
            vals[i] = cut == 0.0 ? Complex(0, 0) : cut / a.scalar_at(xi);
        }
        p.b1 = Symbol::scalar_from_table(a.space(), a.pad(), d_b, std::move(vals));
    } else {
        p.b1 = Symbol::from_function(a.space(), a.pad(), d_b, [&](const Freq& xi) {
            const double r = std::sqrt(a.space()->bk.xi_norm_sq(xi));
            const double cut = 1.0 - smooth_cutoff(r, R, R + 1.0);
            if (cut == 0.0) return zero(a.space());
            Element inv = invert_element(a.at(xi), invert_block_radius);
            inv *= cut;
            return inv;
        });
    }

    // c_1 = 1 - b_1 <> a
    Symbol b1a = compose_symbols(p.b1, a);
    Symbol one = Symbol::one(a.space(), b1a.pad());
    OrderData d_c;
    d_c.m = p.gamma;
    d_c.rho = a.declared().rho;
    d_c.delta = a.declared().delta;
    p.c1 = one + Complex(-1, 0) * b1a;
    p.c1.set_declared(d_c);

    // b_k = b_1 + c_1 <> b_{k-1}, c_k = c_1 <> c_{k-1}
    p.bk = p.b1;
    p.ck = p.c1;
    for (int j = 2; j <= k; ++j) {
        Symbol cb = compose_symbols(p.c1, p.bk);
        Symbol b1s = p.b1.pad() > cb.pad() ? p.b1.shrink_pad(cb.pad()) : p.b1;
        if (cb.pad() > b1s.pad()) cb = cb.shrink_pad(b1s.pad());
        p.bk = b1s + cb;
        p.ck = compose_symbols(p.c1, p.ck);
        OrderData d_ck = d_c;
        d_ck.m = j * p.gamma;
        p.ck.set_declared(d_ck);
    }
    p.k = k;
    return p;
}

/// Least-squares fit of the decay order: the slope of log ||c(xi)|| against
/// log <xi> over the tabulated sample.
inline double remainder_order_fit(const Symbol& c, double min_radius = 1.0,
                                  double tol = 1e-6) {
    const Box& tb = c.table_box();
    const Backend& bk = c.space()->bk;
    Rng rng(577);
    std::vector<std::pair<double, double>> pts;  // (log <xi>, log ||c||)
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const Freq k = tb.freq(i);
        const double r = std::sqrt(bk.xi_norm_sq(k));
        if (r < min_radius) continue;
        const double nrm = detail::value_norm(c, k, tol, rng);
        if (nrm <= 0) continue;
        pts.emplace_back(0.5 * std::log1p(bk.xi_norm_sq(k)), std::log(nrm));
    }
    if (pts.size() < 3) throw InsufficientRange("remainder_order_fit: too few sample radii");
    double lo = 1e300, hi = -1e300;
    for (auto& [x, y] : pts) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi - lo < std::log(1.5))
        throw InsufficientRange("remainder_order_fit: radius range below half a dyad");

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto& [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double nn = static_cast<double>(pts.size());
    return (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
}

struct SolveResult {
    Element u;                    // iterative solution
    Element u_direct;             // dense linear-solve oracle
    double residual = 0.0;        // ||Psi_a u - phi|| / ||phi||
    double direct_residual = 0.0;
    double route_agreement = 0.0;  // ||u - u_direct|| / ||u_direct||
    int iterations = 0;
    int k_used = 1;
};

/// Solve Psi_a(u) = phi by the parametrix iteration
/// u_{i+1} = Psi_{b_k} phi + Psi_{c_k} u_i, cross-checked against a dense
/// solve of the Psi_a matrix.  k is raised (up to a cap) while the
/// truncated remainder is not a contraction.
inline SolveResult solve_elliptic(const Symbol& a, const Element& phi, double tol,
                                  int max_iter, int k_start = 2, int k_cap = 8) {
    require_same_space(a.space(), phi.space());
    if (tol <= 0) throw ConfigInvalid("solve_elliptic: tol > 0 required");
    const double mdecl = a.declared().m;

    SolveResult out;

    // direct oracle
    const Matrix A = pdo_matrix(a);
    Eigen::PartialPivLU<Matrix> lu(A);
    const Vector ud = lu.solve(to_vector(phi));
    out.u_direct = from_vector(phi.space(), ud);
    const double phinorm = l2_norm(phi);
    out.direct_residual =
        phinorm > 0 ? l2_norm(apply_pdo(a, out.u_direct) - phi) / phinorm : 0.0;

    int k = k_start;
    Parametrix par = parametrix(a, mdecl, k);
    while (pdo_l2_norm(par.ck) >= 1.0 && k < k_cap) {
        ++k;
        par = parametrix(a, mdecl, k);
    }
    out.k_used = k;

    Element u = apply_pdo(par.bk, phi);
    double best_resid = 1e300;
    Element best_u = u;
    for (int it = 1; it <= max_iter; ++it) {
        const double resid = phinorm > 0 ? l2_norm(apply_pdo(a, u) - phi) / phinorm : 0.0;
        if (resid < best_resid) {
            best_resid = resid;
            best_u = u;
        }
        out.iterations = it;
        if (resid <= tol) break;
        u = apply_pdo(par.bk, phi) + apply_pdo(par.ck, u);
    }
    out.u = best_u;
    out.residual = best_resid;
    const double udn = l2_norm(out.u_direct);
    out.route_agreement = udn > 0 ? l2_norm(out.u - out.u_direct) / udn : 0.0;
    if (best_resid > tol)
        throw NoConvergence("solve_elliptic: iteration stalled", best_resid);
    return out;
}

struct RegularityReport {
    double ratio = 0.0;       // ||u||_{2,s+m} / (||u||_{2,r} + ||phi||_{2,s})
    double ratio_ell = 0.0;   // hypoelliptic variant with l = m + Lambda_{rho,n}
    double lambda_index = 0;  // Lambda_{rho,n}
    double residual = 0.0;
    bool defined = true;
    bool negative_index_gate = false;  // Lemma-style degree condition on c_k
};

/// Sobolev regularity ratios for a solved instance.  The hypoelliptic
/// index uses Lambda_{rho,n} = -(1-rho) max{2 N_cv, n+2} with the
/// configured derivative cap as N_cv.
inline RegularityReport regularity_report(const Symbol& a, const Element& u,
                                          const Element& phi, double s, double r, double m,
                                          double residual_threshold = 1e-6,
                                          double ck_fitted_order = 0.0, int n_cv = -1) {
    require_same_space(a.space(), u.space());
    RegularityReport rep;
    const int n = a.space()->dim();
    if (n_cv < 0) n_cv = n / 2 + 1;
    const double rho = a.declared().rho;
    const double delta = a.declared().delta;
    rep.lambda_index = -(1.0 - rho) * std::max<double>(2 * n_cv, n + 2);

    const double phin = l2_norm(phi);
    rep.residual = phin > 0 ? l2_norm(apply_pdo(a, u) - phi) / phin : l2_norm(apply_pdo(a, u));
    if (rep.residual > residual_threshold)
        throw ResidualTooLarge("regularity_report: Psi_a u does not match phi");

    const double denom = sobolev_norm(u, r) + sobolev_norm(phi, s);
    if (denom == 0.0) {
        rep.defined = false;
        return rep;
    }
    rep.ratio = sobolev_norm(u, s + m) / denom;
    rep.ratio_ell = sobolev_norm(u, s + m + rep.lambda_index) / denom;
    rep.negative_index_gate =
        ck_fitted_order + (1.0 + delta) * std::max<double>(2 * n_cv, n + 2) <=
        m + rep.lambda_index;
    return rep;
}

}  // namespace qe
