#pragma once

#include <unordered_map>

#include "qespace/pdo.hpp"

namespace qe {

/// One elementary kernel generator c lambda(zeta) (x) lambda(eta)^*.
struct KernelGen {
    Complex c;
    Freq zeta;
    Freq eta;
};

/// The doubled coefficient space R_Theta (x) R_Theta^op: vectors are
/// B x B matrices X[p, q] representing pairs x (x) y, with the
/// representation rule rho(a (x) b)(x (x) y) = (a x) (x) (y b).
/// pi_Theta-type kernels (eta = zeta) preserve the anti-diagonal classes
/// s = p + q, which gives them a block structure used for fractional
/// powers of the quantum distance.
class DoubledSpace {
public:
    explicit DoubledSpace(SpacePtr space) : space_(std::move(space)) {
        const Box& box = space_->box();
        dim_ = box.size();
    }

    const SpacePtr& space() const { return space_; }
    const Box& box() const { return space_->box(); }
    std::size_t leg_dim() const { return dim_; }

    Matrix zero_vec() const { return Matrix::Zero(dim_, dim_); }

    /// rho(c lambda(zeta) (x) lambda(eta)^*) X, accumulated into out.
    void gen_apply(const KernelGen& g, const Matrix& X, Matrix& out) const {
        const Space& sp = *space_;
        const Box& box = sp.box();
        const int R = box.radius();
        const int n = sp.dim();
        // second-leg scalar: lambda(eta)^* = phi_eta lambda(-eta)
        const Complex phi_eta = sp.phase_lower(g.eta, g.eta);
        for (std::size_t ip = 0; ip < dim_; ++ip) {
            const Freq p = box.freq(ip);
            const Freq ps = p + g.zeta;
            if (ps.norm_inf() > R) continue;
            const Complex cp = g.c * sp.phase_lower(g.zeta, p);
            const std::size_t ips = box.index(ps);
            for (std::size_t iq = 0; iq < dim_; ++iq) {
                const Complex x = X(ip, iq);
                if (x == Complex(0, 0)) continue;
                const Freq q = box.freq(iq);
                const Freq qs = q - g.eta;
                if (qs.norm_inf() > R) continue;
                const Complex cq = phi_eta * sp.phase_lower(q, -g.eta);
                out(ips, box.index(qs)) += cp * cq * x;
            }
        }
        (void)n;
    }

    /// Adjoint of gen_apply in the doubled inner product.
    void gen_apply_adjoint(const KernelGen& g, const Matrix& X, Matrix& out) const {
        const Space& sp = *space_;
        const Box& box = sp.box();
        const int R = box.radius();
        const Complex phi_eta = sp.phase_lower(g.eta, g.eta);
        for (std::size_t ip = 0; ip < dim_; ++ip) {
            const Freq p = box.freq(ip);
            const Freq ps = p + g.zeta;
            if (ps.norm_inf() > R) continue;
            const Complex cp = g.c * sp.phase_lower(g.zeta, p);
            const std::size_t ips = box.index(ps);
            for (std::size_t iq = 0; iq < dim_; ++iq) {
                const Freq q = box.freq(iq);
                const Freq qs = q - g.eta;
                if (qs.norm_inf() > R) continue;
                const Complex cq = phi_eta * sp.phase_lower(q, -g.eta);
                out(ip, iq) += std::conj(cp * cq) * X(ips, box.index(qs));
            }
        }
    }

private:
    SpacePtr space_;
    std::size_t dim_ = 0;
};

/// An element of R_Theta (x) R_Theta^op acting on the doubled space,
/// stored as a sparse generator list.  Operator norms under rho are the
/// declared surrogate for the tensor-product von Neumann norm.
class KernelOp {
public:
    KernelOp() = default;
    KernelOp(SpacePtr space, std::vector<KernelGen> gens)
        : space_(std::move(space)), gens_(std::move(gens)) {}

    static KernelOp identity(const SpacePtr& space) {
        return KernelOp(space, {KernelGen{Complex(1, 0), Freq(space->dim()), Freq(space->dim())}});
    }

    const SpacePtr& space() const { return space_; }
    const std::vector<KernelGen>& gens() const { return gens_; }
    std::size_t gen_count() const { return gens_.size(); }

    bool diagonal() const {
        for (const auto& g : gens_)
            if (!(g.zeta == g.eta)) return false;
        return true;
    }

    Matrix apply(const Matrix& X) const {
        DoubledSpace ds(space_);
        Matrix out = ds.zero_vec();
        for (const auto& g : gens_) ds.gen_apply(g, X, out);
        return out;
    }

    Matrix apply_adjoint(const Matrix& X) const {
        DoubledSpace ds(space_);
        Matrix out = ds.zero_vec();
        for (const auto& g : gens_) ds.gen_apply_adjoint(g, X, out);
        return out;
    }

    /// T_k x = (id (x) tau)(k (1 (x) x)): coefficient-space matrix
    /// T[zeta, eta] = c(zeta, eta) / w.
    Matrix tk_matrix() const {
        const Box& box = space_->box();
        if (box.size() > kDenseDimCap) throw DimensionOverflow("tk_matrix: basis size exceeds cap");
        const double w = space_->bk.weight();
        Matrix T = Matrix::Zero(box.size(), box.size());
        for (const auto& g : gens_) T(box.index(g.zeta), box.index(g.eta)) += g.c / w;
        return T;
    }

    Element apply_tk(const Element& x) const {
        require_same_space(space_, x.space());
        const Box& box = space_->box();
        Element out(x.space());
        const double w = space_->bk.weight();
        for (const auto& g : gens_)
            out.data()[box.index(g.zeta)] += (g.c / w) * x.coeff(g.eta);
        return out;
    }

    /// T_k through the doubled representation: rho(k)(1 (x) x), second leg
    /// contracted by the trace.  The independent route for the generator sum.
    Element apply_tk_doubled(const Element& x) const {
        require_same_space(space_, x.space());
        const Box& box = space_->box();
        DoubledSpace ds(space_);
        Matrix X = ds.zero_vec();
        const Vector xv = to_vector(x);
        const Vector ov = to_vector(unit(space_));
        for (std::size_t p = 0; p < box.size(); ++p)
            for (std::size_t q = 0; q < box.size(); ++q) X(p, q) = ov(p) * xv(q);
        const Matrix Y = apply(X);
        // tau on the second leg: the coefficient at frequency zero.
        Element out(x.space());
        const std::size_t q0 = box.index(Freq(space_->dim()));
        for (std::size_t p = 0; p < box.size(); ++p) out.data()[p] = Y(p, q0);
        return out;
    }

    KernelOp& operator+=(const KernelOp& o) {
        require_same_space(space_, o.space_);
        gens_.insert(gens_.end(), o.gens_.begin(), o.gens_.end());
        consolidate();
        return *this;
    }
    KernelOp& operator*=(Complex s) {
        for (auto& g : gens_) g.c *= s;
        return *this;
    }
    friend KernelOp operator+(KernelOp a, const KernelOp& b) { return a += b; }
    friend KernelOp operator*(Complex s, KernelOp a) { return a *= s; }

    /// bullet product in R_Theta (x) R_Theta^op by generator convolution;
    /// generators leaving the box are dropped.
    KernelOp bullet(const KernelOp& o) const {
        require_same_space(space_, o.space_);
        const Space& sp = *space_;
        const int R = sp.box().radius();
        std::vector<KernelGen> out;
        out.reserve(gens_.size() * o.gens_.size());
        for (const auto& g1 : gens_)
            for (const auto& g2 : o.gens_) {
                const Freq z = g1.zeta + g2.zeta;
                const Freq e = g1.eta + g2.eta;
                if (z.norm_inf() > R || e.norm_inf() > R) continue;
                // op-structure: second legs compose in reversed order.
                const Complex c = g1.c * g2.c * sp.phase_lower(g1.zeta, g2.zeta) *
                                  std::conj(sp.phase_lower(g1.eta, g2.eta));
                out.push_back({c, z, e});
            }
        KernelOp r(space_, std::move(out));
        r.consolidate();
        return r;
    }

    KernelOp adjoint_op() const {
        const Space& sp = *space_;
        std::vector<KernelGen> out;
        out.reserve(gens_.size());
        for (const auto& g : gens_) {
            // (c lambda(z) (x) lambda(e)^*)^* = conj(c) lambda(z)^* (x) lambda(e)
            const Complex c = std::conj(g.c) * sp.phase_lower(g.zeta, g.zeta) *
                              std::conj(sp.phase_lower(g.eta, g.eta));
            out.push_back({c, -g.zeta, -g.eta});
        }
        return KernelOp(space_, std::move(out));
    }

    /// Operator norm under rho via power iteration on the doubled space.
    double rho_norm(double tol, Rng& rng, int restarts = 2, int max_iter = 200) const {
        const Eigen::Index d = static_cast<Eigen::Index>(space_->box().size());
        auto ap = [&](const Vector& v) {
            Matrix X = Eigen::Map<const Matrix>(v.data(), d, d);
            Matrix Y = apply(X);
            return Vector(Eigen::Map<Vector>(Y.data(), d * d));
        };
        auto apadj = [&](const Vector& v) {
            Matrix X = Eigen::Map<const Matrix>(v.data(), d, d);
            Matrix Y = apply_adjoint(X);
            return Vector(Eigen::Map<Vector>(Y.data(), d * d));
        };
        try {
            return power_iteration_norm(ap, apadj, d * d, tol, rng, restarts, max_iter);
        } catch (const NoConvergence& e) {
            return e.best;
        }
    }

    void consolidate() {
        std::unordered_map<std::uint64_t, std::size_t> seen;
        std::vector<KernelGen> merged;
        const Box& box = space_->box();
        for (const auto& g : gens_) {
            const std::uint64_t key =
                static_cast<std::uint64_t>(box.index(g.zeta)) * box.size() + box.index(g.eta);
            auto it = seen.find(key);
            if (it == seen.end()) {
                seen.emplace(key, merged.size());
                merged.push_back(g);
            } else {
                merged[it->second].c += g.c;
            }
        }
        std::erase_if(merged, [](const KernelGen& g) { return g.c == Complex(0, 0); });
        gens_ = std::move(merged);
    }

private:
    SpacePtr space_;
    std::vector<KernelGen> gens_;
};

/// Kernel of Psi_a: k_a = sum_xi w (a(xi) lambda(xi)) (x) lambda(xi)^*,
/// expanded into elementary generators.  Acting as T_k it reproduces
/// apply_pdo.
inline KernelOp kernel_of(const Symbol& a) {
    const Box& box = a.space()->box();
    const double w = a.space()->bk.weight();
    std::vector<KernelGen> gens;
    for (std::size_t k = 0; k < box.size(); ++k) {
        const Freq xi = box.freq(k);
        const Element col = shift_right(a.at(xi), xi);
        for (std::size_t p = 0; p < box.size(); ++p) {
            const Complex v = col.data()[p];
            if (v == Complex(0, 0)) continue;
            gens.push_back({w * w * v, box.freq(p), xi});
        }
    }
    return KernelOp(a.space(), std::move(gens));
}

/// Discrete Fourier transform of a window function g on the frequency
/// grid, by quadrature over |x|_inf <= xmax with step dx.
/// hat g(zeta) = sum_x dx^n g(x) e^{-2 pi i <x, zeta>}.
template <typename G>
std::vector<Complex> window_transform(const SpacePtr& space, G&& g, double xmax, double dx) {
    const Box& box = space->box();
    const int n = space->dim();
    const int half = static_cast<int>(std::floor(xmax / dx + 0.5));
    const Box xbox(n, half);
    double wq = 1.0;
    for (int i = 0; i < n; ++i) wq *= dx;

    std::vector<Complex> ghat(box.size(), Complex(0, 0));
    std::vector<Complex> gx(xbox.size());
    std::vector<double> x(kMaxDim);
    for (std::size_t j = 0; j < xbox.size(); ++j) {
        const Freq kj = xbox.freq(j);
        for (int d = 0; d < n; ++d) x[d] = dx * kj[d];
        gx[j] = g(x.data());
    }
    double xi[kMaxDim];
    for (std::size_t i = 0; i < box.size(); ++i) {
        space->bk.xi(box.freq(i), xi);
        Complex s(0, 0);
        for (std::size_t j = 0; j < xbox.size(); ++j) {
            if (gx[j] == Complex(0, 0)) continue;
            const Freq kj = xbox.freq(j);
            double arg = 0.0;
            for (int d = 0; d < n; ++d) arg += dx * kj[d] * xi[d];
            arg *= -kTwoPi;
            s += gx[j] * Complex(std::cos(arg), std::sin(arg));
        }
        ghat[i] = wq * s;
    }
    return ghat;
}

/// pi_Theta(g) = sum_zeta w hat g(zeta) lambda(zeta) (x) lambda(zeta)^*.
/// The window radius truncates the x-quadrature of hat g; leftover mass of
/// g outside the window is the reported tail.
/// Dual x-grid step: the DFT-consistent sampling step 1/(M h), for which
/// plane waves e^{2 pi i <x, zeta_0>} transform to exact grid deltas.
inline double dft_dual_step(const SpacePtr& space) {
    return 1.0 / (space->bk.points_per_axis() * space->bk.step());
}

template <typename G>
KernelOp pi_theta(const SpacePtr& space, G&& g, double window, double* tail_mass = nullptr,
                  double dx = 0.0) {
    const int n = space->dim();
    if (dx <= 0.0) dx = dft_dual_step(space) / 2.0;
    // mass of g on the boundary shell, reported as the window tail
    double tail = 0.0;
    {
        const int shell = 8;
        double wq = 1.0;
        for (int i = 0; i < n; ++i) wq *= dx;
        std::vector<double> x(kMaxDim);
        const int half = static_cast<int>(std::floor(window / dx + 0.5));
        const Box xbox(n, half);
        for (std::size_t j = 0; j < xbox.size(); ++j) {
            const Freq kj = xbox.freq(j);
            if (kj.norm_inf() < half - shell) continue;
            for (int d = 0; d < n; ++d) x[d] = dx * kj[d];
            tail += wq * std::norm(g(x.data()));
        }
        tail = std::sqrt(tail);
    }
    if (tail_mass) *tail_mass = tail;

    const auto ghat = window_transform(space, g, window, dx);
    const Box& box = space->box();
    const double w = space->bk.weight();
    std::vector<KernelGen> gens;
    gens.reserve(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) {
        if (ghat[i] == Complex(0, 0)) continue;
        const Freq z = box.freq(i);
        gens.push_back({w * ghat[i], z, z});
    }
    return KernelOp(space, std::move(gens));
}

}  // namespace qe
