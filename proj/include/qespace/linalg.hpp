#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#if defined(QE_HAVE_LAPACKE)
#include <complex>
#define lapack_complex_double std::complex<double>
#define lapack_complex_float std::complex<float>
#include <lapacke.h>
#endif

#include "qespace/element.hpp"

namespace qe {

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Cap on dense matrix dimension for basis representations.
inline constexpr std::size_t kDenseDimCap = 6000;

/// Hermitian eigendecomposition (ascending eigenvalues).  LAPACK's zheevd
/// when available, Eigen otherwise.
inline void hermitian_eig(const Matrix& A, Eigen::VectorXd& evals, Matrix& evecs) {
    const auto n = A.rows();
#if defined(QE_HAVE_LAPACKE)
    evecs = A;
    evals.resize(n);
    const lapack_int info =
        LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n),
                       evecs.data(), static_cast<lapack_int>(n), evals.data());
    if (info != 0) throw EigFailure("zheevd failed, info=" + std::to_string(info));
#else
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    if (es.info() != Eigen::Success) throw EigFailure("hermitian eigensolver failed");
    evals = es.eigenvalues();
    evecs = es.eigenvectors();
#endif
}

/// Largest singular value of a dense matrix via the Gram spectrum.
inline double largest_singular_value_dense(const Matrix& A) {
    const Matrix G = A.adjoint() * A;
    Eigen::VectorXd evals;
    Matrix evecs;
#if defined(QE_HAVE_LAPACKE)
    Matrix work = G;
    evals.resize(G.rows());
    const lapack_int info =
        LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'L', static_cast<lapack_int>(G.rows()),
                       work.data(), static_cast<lapack_int>(G.rows()), evals.data());
    if (info != 0) throw EigFailure("zheevd failed, info=" + std::to_string(info));
#else
    Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw EigFailure("hermitian eigensolver failed");
    evals = es.eigenvalues();
#endif
    const double top = evals.size() ? evals(evals.size() - 1) : 0.0;
    return std::sqrt(std::max(0.0, top));
}

/// Power iteration on A*A with randomized restarts.  Successive-change
/// stopping with an Aitken correction for slow contraction; returns the
/// norm estimate or throws NoConvergence carrying the best iterate.
inline double power_iteration_norm(const std::function<Vector(const Vector&)>& apply,
                                   const std::function<Vector(const Vector&)>& apply_adj,
                                   Eigen::Index dim, double tol, Rng& rng,
                                   int restarts = 3, int max_iter = 500) {
    double best = 0.0;
    bool converged = false;
    for (int r = 0; r < restarts; ++r) {
        Vector v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v(i) = gaussian_complex(rng);
        double nv = v.norm();
        if (nv == 0.0) continue;
        v /= nv;
        double sigma = 0.0;
        double prev_change = -1.0;
        for (int it = 0; it < max_iter; ++it) {
            Vector w = apply_adj(apply(v));
            const double nw = w.norm();
            if (nw == 0.0) {
                sigma = 0.0;
                converged = true;
                break;
            }
            const double s = std::sqrt(nw);
            v = w / nw;
            const double change = std::abs(s - sigma);
            if (it > 0) {
                // estimated residual error: change * r^2 / (1 - r^2)
                double err = change;
                if (prev_change > 0 && change < prev_change) {
                    const double ratio = change / prev_change;
                    err = change * ratio / std::max(1e-3, 1.0 - ratio);
                }
                if (err <= tol * std::max(s, 1e-300)) {
                    sigma = s;
                    converged = true;
                    break;
                }
            }
            prev_change = change;
            sigma = s;
        }
        best = std::max(best, sigma);
    }
    if (!converged) throw NoConvergence("power iteration did not converge", best);
    return best;
}

/// Largest singular value via Lanczos on A*A with full reorthogonalization.
/// Far tighter than plain power iteration on clustered spectra; intended
/// for the iterative norm paths.
inline double lanczos_norm(const std::function<Vector(const Vector&)>& apply,
                           const std::function<Vector(const Vector&)>& apply_adj,
                           Eigen::Index dim, double tol, Rng& rng, int max_steps = 60) {
    max_steps = static_cast<int>(std::min<Eigen::Index>(max_steps, dim));
    Vector v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v(i) = gaussian_complex(rng);
    double nv = v.norm();
    if (nv == 0.0) return 0.0;
    v /= nv;

    std::vector<Vector> basis;
    std::vector<double> alpha, beta;
    basis.push_back(v);
    Vector w;
    double prev = -1.0;
    for (int j = 0; j < max_steps; ++j) {
        w = apply_adj(apply(basis[j]));
        const double a = std::real(basis[j].dot(w));
        alpha.push_back(a);
        w -= a * basis[j];
        if (j > 0) w -= beta[j - 1] * basis[j - 1];
        // full reorthogonalization
        for (const auto& b : basis) w -= b.dot(w) * b;
        const double nb = w.norm();

        // Ritz estimate from the tridiagonal section
        const int m = j + 1;
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
        const double top = std::max(0.0, es.eigenvalues().maxCoeff());
        const double sigma = std::sqrt(top);
        if (nb <= 1e-14 || (prev >= 0 && std::abs(sigma - prev) <= tol * std::max(sigma, 1e-300)))
            return sigma;
        prev = sigma;
        beta.push_back(nb);
        basis.push_back(w / nb);
    }
    return prev < 0 ? 0.0 : prev;
}

/// Matrix of left multiplication x -> a * x in the frequency basis:
/// M[p, k] = w f_a(p - k) e^{2 pi i <xi_{p-k}, Theta_low xi_k>}.
inline Matrix left_regular_matrix(const Element& a) {
    const auto& space = *a.space();
    const Box& box = space.box();
    const std::size_t dim = box.size();
    if (dim > kDenseDimCap)
        throw DimensionOverflow("left_regular_matrix: basis size exceeds cap");

    const double w = space.bk.weight();
    Matrix M = Matrix::Zero(dim, dim);
    const auto supp = a.support();
    for (std::size_t k = 0; k < dim; ++k) {
        const Freq fk = box.freq(k);
        for (std::size_t is : supp) {
            const Freq d = box.freq(is);
            const Freq p = d + fk;
            if (!box.contains(p)) continue;
            M(box.index(p), k) = w * a.data()[is] * space.phase_lower(d, fk);
        }
    }
    return M;
}

/// Matrix of right multiplication x -> x * a in the frequency basis.
inline Matrix right_regular_matrix(const Element& a) {
    const auto& space = *a.space();
    const Box& box = space.box();
    const std::size_t dim = box.size();
    if (dim > kDenseDimCap)
        throw DimensionOverflow("right_regular_matrix: basis size exceeds cap");

    const double w = space.bk.weight();
    Matrix M = Matrix::Zero(dim, dim);
    const auto supp = a.support();
    for (std::size_t k = 0; k < dim; ++k) {
        const Freq fk = box.freq(k);
        for (std::size_t is : supp) {
            const Freq d = box.freq(is);
            const Freq p = fk + d;
            if (!box.contains(p)) continue;
            // x_k * a_d picks the phase of lambda(k) lambda(d).
            M(box.index(p), k) = w * a.data()[is] * space.phase_lower(fk, d);
        }
    }
    return M;
}

inline Vector to_vector(const Element& a) {
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.data()[i];
    return v;
}

inline Element from_vector(const SpacePtr& space, const Vector& v) {
    Element e(space);
    for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = v(static_cast<Eigen::Index>(i));
    return e;
}

/// Largest singular value of the left-regular matrix: the truncated
/// operator norm, a monotone lower approximant of ||a||_{R_Theta}.
/// Dense up to kDenseDimCap, power iteration beyond.
inline double operator_norm(const Element& a, double tol = 1e-8, Rng* rng = nullptr) {
    if (tol <= 0) throw ConfigInvalid("operator_norm: tol must be positive");
    const Matrix M = left_regular_matrix(a);
    if (static_cast<std::size_t>(M.rows()) <= 2000) return largest_singular_value_dense(M);
    Rng local(12345);
    Rng& r = rng ? *rng : local;
    return power_iteration_norm([&](const Vector& v) { return Vector(M * v); },
                                [&](const Vector& v) { return Vector(M.adjoint() * v); },
                                M.rows(), tol, r);
}

/// tau((a* a)^{p/2}) evaluated through the left-regular functional
/// calculus against the coefficient vector of the unit.  Reporting-grade:
/// truncation makes the calculus only approximately multiplicative.
inline double lp_norm(const Element& a, double p) {
    if (p < 1) throw ConfigInvalid("lp_norm: p must be >= 1");
    const auto& space = *a.space();
    const Matrix M = left_regular_matrix(a);
    Eigen::VectorXd evals;
    Matrix evecs;
    hermitian_eig(Matrix(M.adjoint() * M), evals, evecs);

    // Weighted pairing tau(g(a*a)) = w <V^H Omega, g(Lambda) V^H Omega>
    // with Omega the coefficient vector of the unit (h^{-n} delta).
    const double w = space.bk.weight();
    Vector om = to_vector(unit(a.space()));
    Vector proj = evecs.adjoint() * om;
    double s = 0.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i) {
        const double lam = std::max(0.0, evals(i));
        s += std::norm(proj(i)) * std::pow(lam, p / 2.0);
    }
    s *= w;
    return std::pow(s, 1.0 / p);
}

/// tau(f(x)) for self-adjoint x given through its left-regular matrix,
/// evaluated as <Omega, f(M) Omega> with eigenvalue clamping at zero.
inline double trace_function_psd(const Element& x, double (*f)(double)) {
    const Matrix M = left_regular_matrix(x);
    Eigen::VectorXd evals;
    Matrix evecs;
    hermitian_eig(Matrix((M + M.adjoint()) * 0.5), evals, evecs);
    const double w = x.space()->bk.weight();
    Vector om = to_vector(unit(x.space()));
    Vector proj = evecs.adjoint() * om;
    double s = 0.0;
    for (Eigen::Index i = 0; i < proj.size(); ++i)
        s += std::norm(proj(i)) * f(std::max(0.0, evals(i)));
    return s * w;
}

}  // namespace qe
