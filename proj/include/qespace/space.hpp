#pragma once

#include <memory>
#include <sstream>
#include <vector>

#include "qespace/core.hpp"

namespace qe {

/// The deformation matrix Theta: antisymmetric, n x n.  The bicharacter
/// phases of the algebra only involve the lower-triangular truncation
/// <xi, Theta_low eta> = sum_{j>k} Theta[j][k] xi_j eta_k.
class Deformation {
public:
    Deformation() = default;

    Deformation(int n, std::vector<double> theta) : n_(n), th_(std::move(theta)) {
        if (n < 1 || n > kMaxDim) throw ConfigInvalid("deformation: bad dimension");
        if (th_.size() != static_cast<std::size_t>(n) * n)
            throw ConfigInvalid("deformation: theta must be n x n");
        for (int j = 0; j < n; ++j) {
            if (th_[j * n_ + j] != 0.0)
                throw ConfigInvalid("deformation: theta diagonal must vanish");
            for (int k = 0; k < j; ++k) {
                if (std::abs(th_[j * n_ + k] + th_[k * n_ + j]) > 1e-14)
                    throw ConfigInvalid("deformation: theta must be antisymmetric");
            }
        }
    }

    /// n=2 standard form theta * (e12 - e21).
    static Deformation rotation(double theta) {
        return Deformation(2, {0.0, theta, -theta, 0.0});
    }

    static Deformation zero(int n) {
        return Deformation(n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0));
    }

    int dim() const { return n_; }
    double theta(int j, int k) const { return th_[j * n_ + k]; }
    const std::vector<double>& raw() const { return th_; }

    /// Scale Theta -> s * Theta (used by the dilation D_R with s = R^2).
    Deformation scaled(double s) const {
        std::vector<double> t(th_);
        for (double& v : t) v *= s;
        return Deformation(n_, std::move(t));
    }

    bool is_zero() const {
        for (double v : th_)
            if (v != 0.0) return false;
        return true;
    }

    /// <u, Theta_low v> = sum_{j>k} Theta[j][k] u_j v_k for real vectors.
    double lower_pair(const double* u, const double* v) const {
        double s = 0.0;
        for (int j = 1; j < n_; ++j)
            for (int k = 0; k < j; ++k) s += th_[j * n_ + k] * u[j] * v[k];
        return s;
    }

    /// <u, Theta v> (full antisymmetric pairing).
    double full_pair(const double* u, const double* v) const {
        double s = 0.0;
        for (int j = 0; j < n_; ++j)
            for (int k = 0; k < n_; ++k) s += th_[j * n_ + k] * u[j] * v[k];
        return s;
    }

    bool operator==(const Deformation& o) const { return n_ == o.n_ && th_ == o.th_; }

private:
    int n_ = 0;
    std::vector<double> th_;
};

enum class BackendKind { Torus, Grid };

/// Finite truncation of the coefficient space.
///
/// Torus: integer frequencies with |k_i| <= N (step 1).
/// Grid: frequencies k*h with |k_i| <= (M-1)/2, h = 2L/(M-1), M odd so 0
/// is a grid point.  Both cases share the same box indexing; the grid
/// carries the Riemann quadrature weight h^n.
class Backend {
public:
    Backend() = default;

    static Backend torus(int n, int N) {
        Backend b;
        b.kind_ = BackendKind::Torus;
        b.n_ = n;
        b.box_ = Box(n, N);
        b.h_ = 1.0;
        b.L_ = static_cast<double>(N);
        return b;
    }

    static Backend grid(int n, double L, int M) {
        if (M < 3 || M % 2 == 0) throw ConfigInvalid("grid: M must be odd and >= 3");
        if (L <= 0) throw ConfigInvalid("grid: L must be positive");
        Backend b;
        b.kind_ = BackendKind::Grid;
        b.n_ = n;
        b.box_ = Box(n, (M - 1) / 2);
        b.h_ = 2.0 * L / (M - 1);
        b.L_ = L;
        return b;
    }

    BackendKind kind() const { return kind_; }
    bool is_torus() const { return kind_ == BackendKind::Torus; }
    bool is_grid() const { return kind_ == BackendKind::Grid; }

    int dim() const { return n_; }
    const Box& box() const { return box_; }
    int radius() const { return box_.radius(); }
    int points_per_axis() const { return box_.side(); }
    double step() const { return h_; }
    double half_width() const { return L_; }

    /// Quadrature weight: h^n on grids, 1 on the torus.
    double weight() const {
        double w = 1.0;
        for (int i = 0; i < n_; ++i) w *= h_;
        return w;
    }

    /// Continuous frequency attached to an index.
    void xi(const Freq& k, double* out) const {
        for (int i = 0; i < n_; ++i) out[i] = h_ * k[i];
    }
    double xi_norm_sq(const Freq& k) const {
        return h_ * h_ * static_cast<double>(k.norm2_sq());
    }

    bool operator==(const Backend& o) const {
        return kind_ == o.kind_ && n_ == o.n_ && box_ == o.box_ && h_ == o.h_;
    }
    bool operator!=(const Backend& o) const { return !(*this == o); }

private:
    BackendKind kind_ = BackendKind::Torus;
    int n_ = 0;
    Box box_;
    double h_ = 1.0;
    double L_ = 0.0;
};

/// A deformation bound to a truncated backend.  Every element, symbol and
/// kernel of one computation shares a single Space.
struct Space {
    Deformation def;
    Backend bk;

    int dim() const { return bk.dim(); }
    const Box& box() const { return bk.box(); }

    /// Bicharacter phase e^{2 pi i <xi, Theta_low eta>} at integer indices.
    Complex phase_lower(const Freq& a, const Freq& b) const {
        double ua[kMaxDim], ub[kMaxDim];
        bk.xi(a, ua);
        bk.xi(b, ub);
        const double arg = kTwoPi * def.lower_pair(ua, ub);
        return {std::cos(arg), std::sin(arg)};
    }

    bool operator==(const Space& o) const { return def == o.def && bk == o.bk; }
    bool operator!=(const Space& o) const { return !(*this == o); }

    std::uint64_t digest() const {
        std::uint64_t h = fnv1a("space", 5);
        h = fnv1a_append(h, static_cast<double>(bk.is_torus() ? 0 : 1));
        h = fnv1a_append(h, static_cast<double>(bk.dim()));
        h = fnv1a_append(h, static_cast<double>(bk.radius()));
        h = fnv1a_append(h, bk.step());
        for (double v : def.raw()) h = fnv1a_append(h, v);
        return h;
    }
};

using SpacePtr = std::shared_ptr<const Space>;

inline SpacePtr make_space(Deformation def, Backend bk) {
    if (def.dim() != bk.dim()) throw ConfigInvalid("space: dimension mismatch");
    return std::make_shared<const Space>(Space{std::move(def), std::move(bk)});
}

inline void require_same_space(const SpacePtr& a, const SpacePtr& b) {
    if (a == b) return;
    if (!a || !b || *a != *b)
        throw BackendMismatch("operands live on different backends");
}

}  // namespace qe
