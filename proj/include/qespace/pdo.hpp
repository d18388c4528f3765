#pragma once

#include <limits>

#include "qespace/symbol.hpp"

namespace qe {

/// Psi_a(x) = sum_k w a(k) f_x(k) lambda(k), evaluated with twisted shifts;
/// scalar symbols act as plain Fourier multipliers.
inline Element apply_pdo(const Symbol& a, const Element& x) {
    require_same_space(a.space(), x.space());
    const double w = a.space()->bk.weight();
    Element out(x.space());
    const Box& box = x.box();
    if (a.is_scalar()) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            const Complex f = x.data()[i];
            if (f != Complex(0, 0)) out.data()[i] = f * a.scalar_at(box.freq(i));
        }
        return out;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Complex f = x.data()[i];
        if (f == Complex(0, 0)) continue;
        const Freq k = box.freq(i);
        Element term = shift_right(a.at(k), k);
        term *= w * f;
        out += term;
    }
    return out;
}

/// Matrix of Psi_a on coefficient vectors:
/// M[p, k] = w hat{a}(p - k, k) e^{2 pi i <xi_{p-k}, Theta_low xi_k>},
/// consistent with apply_pdo on every basis vector.
inline Matrix pdo_matrix(const Symbol& a) {
    const Box& box = a.space()->box();
    if (box.size() > kDenseDimCap) throw DimensionOverflow("pdo_matrix: basis size exceeds cap");
    const double w = a.space()->bk.weight();
    Matrix M = Matrix::Zero(box.size(), box.size());

    if (a.is_scalar()) {
        for (std::size_t k = 0; k < box.size(); ++k) M(k, k) = a.scalar_at(box.freq(k));
        return M;
    }
    for (std::size_t k = 0; k < box.size(); ++k) {
        const Freq fk = box.freq(k);
        const Element col = shift_right(a.at(fk), fk);
        for (std::size_t p = 0; p < box.size(); ++p) {
            const Complex v = col.data()[p];
            if (v != Complex(0, 0)) M(p, k) = w * v;
        }
    }
    return M;
}

/// Largest singular value of the Psi_a matrix.
inline double pdo_l2_norm(const Symbol& a, double tol = 1e-8, Rng* rng = nullptr) {
    const Matrix M = pdo_matrix(a);
    if (static_cast<std::size_t>(M.rows()) <= 2000) return largest_singular_value_dense(M);
    Rng local(54321);
    Rng& r = rng ? *rng : local;
    return power_iteration_norm([&](const Vector& v) { return Vector(M * v); },
                                [&](const Vector& v) { return Vector(M.adjoint() * v); },
                                M.rows(), tol, r);
}

/// Symbol restricted to a smaller torus truncation (keeps table values).
inline Symbol restrict_symbol(const Symbol& a, const SpacePtr& sub) {
    if (sub->dim() != a.space()->dim()) throw BackendMismatch("restrict_symbol: dimension");
    const Box& subbox = sub->box();
    const Box& bigbox = a.space()->box();
    if (subbox.radius() > bigbox.radius())
        throw BackendMismatch("restrict_symbol: target box larger than source");
    const int pad = std::min(a.pad(), bigbox.radius() + a.pad() - subbox.radius());
    if (a.is_scalar()) {
        const Box tb(sub->dim(), subbox.radius() + pad);
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) vals[i] = a.scalar_at(tb.freq(i));
        return Symbol::scalar_from_table(sub, pad, a.declared(), std::move(vals));
    }
    return Symbol::from_function(sub, pad, a.declared(), [&](const Freq& xi) {
        const Element big = a.at(xi);
        Element v(sub);
        for (std::size_t i = 0; i < subbox.size(); ++i) {
            const Freq z = subbox.freq(i);
            v.data()[i] = big.coeff(z);
        }
        return v;
    });
}

/// Calderon-Vaillancourt check: the ratio of the L2 operator norm to the
/// largest S-seminorm with |alpha|, |beta| <= order_cap (default
/// [n/2] + 1; the sharp cap is open, so it stays a parameter).
struct CvCheck {
    double l2_norm = 0.0;
    double seminorm = 0.0;
    double ratio = 0.0;
    bool defined = true;  // false for the 0/0 degenerate case
    SeminormTable table;
    std::vector<std::pair<int, double>> stability;  // (radius, norm) series
};

inline CvCheck cv_check(const Symbol& a, int order_cap = -1, double tol = 1e-6) {
    const int n = a.space()->dim();
    if (order_cap < 0) order_cap = n / 2 + 1;
    CvCheck r;
    r.table = seminorms_S(a, order_cap, order_cap, tol);
    r.seminorm = r.table.max_constant();
    r.l2_norm = pdo_l2_norm(a);
    if (r.seminorm == 0.0 && r.l2_norm == 0.0) {
        r.defined = false;
        r.ratio = 0.0;
        return r;
    }
    r.ratio = r.seminorm > 0 ? r.l2_norm / r.seminorm : std::numeric_limits<double>::infinity();

    // Truncation-stability series: the norm on nested sub-truncations.
    if (a.space()->bk.is_torus()) {
        const int N = a.space()->box().radius();
        for (int sub : {N / 2, (3 * N) / 4, N}) {
            if (sub < 1) continue;
            const SpacePtr subspace =
                make_space(a.space()->def, Backend::torus(n, sub));
            r.stability.emplace_back(sub, pdo_l2_norm(restrict_symbol(a, subspace)));
        }
    }
    return r;
}

/// Sobolev operator norm of Psi_a on W_{2,s}: the norm of the
/// (1 - Delta)^{s/2}-conjugated matrix.
inline double pdo_sobolev_norm(const Symbol& a, double s_from, double s_to) {
    const Box& box = a.space()->box();
    const Backend& bk = a.space()->bk;
    Matrix M = pdo_matrix(a);
    Eigen::VectorXd wts(box.size());
    for (std::size_t i = 0; i < box.size(); ++i)
        wts(i) = 1.0 + 4.0 * kPi * kPi * bk.xi_norm_sq(box.freq(i));
    for (std::size_t p = 0; p < box.size(); ++p)
        for (std::size_t k = 0; k < box.size(); ++k)
            M(p, k) *= std::pow(wts(p), s_to / 2.0) * std::pow(wts(k), -s_from / 2.0);
    return largest_singular_value_dense(M);
}

inline double pdo_sobolev_norm(const Symbol& a, double s) {
    return pdo_sobolev_norm(a, s, s);
}

/// Bourdaud-type check: S-seminorms of a and of its adjoint symbol at the
/// finite order |alpha| <= n+1, |beta| <= 1, plus the W_{2,s} operator
/// norm of Psi_a.
struct BourdaudCheck {
    double seminorm_a = 0.0;
    double seminorm_adj = 0.0;
    double sobolev_norm = 0.0;
    double s = 0.0;
    SeminormTable table_a;
    SeminormTable table_adj;
};

inline BourdaudCheck bourdaud_check(const Symbol& a, double s, double tol = 1e-6) {
    if (!(s > 0.0 && s < 1.0)) throw ConfigInvalid("bourdaud_check: 0 < s < 1 required");
    const int n = a.space()->dim();
    BourdaudCheck r;
    r.s = s;
    r.table_a = seminorms_S(a, n + 1, 1, tol);
    r.table_adj = seminorms_S(adjoint_symbol(a), n + 1, 1, tol);
    r.seminorm_a = r.table_a.max_constant();
    r.seminorm_adj = r.table_adj.max_constant();
    r.sobolev_norm = pdo_sobolev_norm(a, s);
    return r;
}

}  // namespace qe
