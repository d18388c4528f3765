#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qespace/space.hpp"

namespace qe {

/// A truncated element lambda_Theta(f) of the quantum Euclidean space or
/// quantum torus, stored by its coefficient function on the backend box.
/// Torus coefficients are lattice Fourier coefficients; grid coefficients
/// are samples of f, and integrals become h^n-weighted Riemann sums.
///
/// Values are immutable in spirit: operations return fresh elements.
class Element {
public:
    Element() = default;

    explicit Element(SpacePtr space)
        : space_(std::move(space)), c_(space_->box().size(), Complex(0, 0)) {}

    const SpacePtr& space() const { return space_; }
    const Box& box() const { return space_->box(); }
    int dim() const { return space_->dim(); }
    std::size_t size() const { return c_.size(); }

    Complex coeff(const Freq& k) const {
        if (!box().contains(k)) return {0, 0};
        return c_[box().index(k)];
    }
    void set(const Freq& k, Complex v) {
        if (!box().contains(k)) throw OutOfSupport("Element::set: frequency outside box");
        c_[box().index(k)] = v;
    }
    void add(const Freq& k, Complex v) {
        if (!box().contains(k)) throw OutOfSupport("Element::add: frequency outside box");
        c_[box().index(k)] += v;
    }

    const std::vector<Complex>& data() const { return c_; }
    std::vector<Complex>& data() { return c_; }

    /// l2 mass dropped past the truncation boundary by the operation that
    /// produced this element (products only; multipliers are exact).
    double truncation_loss() const { return loss_; }
    void set_truncation_loss(double v) { loss_ = v; }

    /// Indices of nonzero coefficients (used to keep products sparse).
    std::vector<std::size_t> support() const {
        std::vector<std::size_t> s;
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != Complex(0, 0)) s.push_back(i);
        return s;
    }

    int support_radius() const {
        int r = 0;
        for (std::size_t i = 0; i < c_.size(); ++i)
            if (c_[i] != Complex(0, 0)) r = std::max(r, box().freq(i).norm_inf());
        return r;
    }

    Element& operator+=(const Element& o) {
        require_same_space(space_, o.space_);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    Element& operator-=(const Element& o) {
        require_same_space(space_, o.space_);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Element& operator*=(Complex s) {
        for (auto& v : c_) v *= s;
        return *this;
    }

    friend Element operator+(Element a, const Element& b) { return a += b; }
    friend Element operator-(Element a, const Element& b) { return a -= b; }
    friend Element operator*(Complex s, Element a) { return a *= s; }
    friend Element operator*(Element a, Complex s) { return a *= s; }

private:
    SpacePtr space_;
    std::vector<Complex> c_;
    double loss_ = 0.0;
};

/// Basis unitary lambda_Theta(xi): unit coefficient at xi on the torus,
/// discrete delta scaled by h^{-n} on grids.
inline Element elementary(const SpacePtr& space, const Freq& xi) {
    if (!space->box().contains(xi))
        throw OutOfSupport("elementary: frequency not representable on this backend");
    Element e(space);
    e.set(xi, Complex(1.0 / space->bk.weight(), 0.0));
    return e;
}

/// The multiplicative unit 1 = lambda_Theta(0).
inline Element unit(const SpacePtr& space) { return elementary(space, Freq(space->dim())); }

inline Element zero(const SpacePtr& space) { return Element(space); }

/// Twisted convolution: coefficients of f_a *_Theta f_b with the phase
/// e^{2 pi i <xi - eta, Theta_low eta>}; Riemann-sum weight h^n on grids.
/// Frequencies outside the backend box are dropped and their l2 mass is
/// reported through truncation_loss() of the result.
inline Element twisted_product(const Element& a, const Element& b) {
    require_same_space(a.space(), b.space());
    const auto& space = *a.space();
    const Box& box = space.box();
    const double w = space.bk.weight();

    Element out(a.space());
    const auto sa = a.support();
    const auto sb = b.support();
    double dropped = 0.0;

    // xi = p + q runs over supp(a) + supp(b); the phase couples the two.
    for (std::size_t ia : sa) {
        const Freq p = box.freq(ia);
        const Complex ca = a.data()[ia] * w;
        for (std::size_t ib : sb) {
            const Freq q = box.freq(ib);
            const Complex term = ca * b.data()[ib] * space.phase_lower(p, q);
            const Freq xi = p + q;
            if (box.contains(xi)) {
                out.data()[box.index(xi)] += term;
            } else {
                dropped += std::norm(term);
            }
        }
    }
    // Dropped mass is quadrature-weighted like the Plancherel norm.
    out.set_truncation_loss(std::sqrt(dropped * w));
    return out;
}

/// Adjoint: coefficient map xi -> e^{2 pi i <xi, Theta_low xi>} conj(f(-xi)).
/// An exact involution on the truncated box.
inline Element adjoint(const Element& a) {
    const auto& space = *a.space();
    const Box& box = space.box();
    Element out(a.space());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex v = a.data()[i];
        if (v == Complex(0, 0)) continue;
        const Freq k = box.freq(i);
        const Freq mk = -k;
        out.data()[box.index(mk)] = space.phase_lower(mk, mk) * std::conj(v);
    }
    return out;
}

/// tau_Theta: the coefficient at frequency zero.
inline Complex trace(const Element& a) { return a.coeff(Freq(a.dim())); }

/// <a, b> = tau(adjoint(a) b), evaluated directly as the (h^n-weighted)
/// l2 inner product of coefficients (Plancherel).
inline Complex l2_pairing(const Element& a, const Element& b) {
    require_same_space(a.space(), b.space());
    Complex s(0, 0);
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a.data()[i]) * b.data()[i];
    return s * a.space()->bk.weight();
}

inline double l2_norm(const Element& a) {
    return std::sqrt(std::abs(l2_pairing(a, a).real()));
}

/// Point modulation sigma_Theta^z: coefficients times e^{2 pi i <z, xi>}.
/// A trace-preserving *-automorphism at the truncated level.
inline Element modulate(const Element& a, const std::vector<double>& z) {
    const auto& space = *a.space();
    const Box& box = space.box();
    Element out(a.space());
    double xi[kMaxDim];
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex v = a.data()[i];
        if (v == Complex(0, 0)) continue;
        const Freq k = box.freq(i);
        space.bk.xi(k, xi);
        double arg = 0.0;
        for (int d = 0; d < space.dim(); ++d) arg += z[d] * xi[d];
        arg *= kTwoPi;
        out.data()[i] = v * Complex(std::cos(arg), std::sin(arg));
    }
    return out;
}

/// Dilation D_R: lambda_Theta(xi) -> lambda_{R^2 Theta}(xi / R).
/// The target lives on the grid rescaled by 1/R (same index box, step h/R)
/// with deformation R^2 Theta; coefficient rule g(eta) = R^n f(R eta).
inline Element dilate_element(const Element& a, double R, const SpacePtr& target) {
    const auto& space = *a.space();
    if (!space.bk.is_grid())
        throw BackendMismatch("dilate_element: grid backend required");
    if (R <= 0) throw GridResampling("dilate_element: R must be positive");
    if (target->bk.radius() != space.bk.radius() ||
        std::abs(target->bk.step() - space.bk.step() / R) > 1e-12 * space.bk.step())
        throw GridResampling("dilate_element: target grid must be the source rescaled by 1/R");

    const double scale = std::pow(R, space.dim());
    Element out(target);
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = scale * a.data()[i];
    return out;
}

/// Convenience: the dilated space (R^2 Theta, grid step h/R).
inline SpacePtr dilated_space(const SpacePtr& space, double R) {
    if (!space->bk.is_grid()) throw BackendMismatch("dilated_space: grid backend required");
    const Backend& b = space->bk;
    return make_space(space->def.scaled(R * R),
                      Backend::grid(b.dim(), b.half_width() / R, b.points_per_axis()));
}

inline Element dilate_element(const Element& a, double R) {
    return dilate_element(a, R, dilated_space(a.space(), R));
}

// ---------------------------------------------------------------------------
// Element file format.
//
// Torus: line-oriented records "k_1,...,k_n,re,im" in lexicographic
// frequency order, zero coefficients omitted.
// Grid: header "grid L M n theta..." followed by row-major samples
// "re im", one per line.
// ---------------------------------------------------------------------------

inline void save_element(const Element& a, std::ostream& os) {
    const auto& space = *a.space();
    const Box& box = space.box();
    os << std::setprecision(17);
    if (space.bk.is_torus()) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const Complex v = a.data()[i];
            if (v == Complex(0, 0)) continue;
            const Freq k = box.freq(i);
            for (int d = 0; d < space.dim(); ++d) os << k[d] << ',';
            os << v.real() << ',' << v.imag() << '\n';
        }
    } else {
        os << "grid " << space.bk.half_width() << ' ' << space.bk.points_per_axis() << ' '
           << space.dim();
        for (double t : space.def.raw()) os << ' ' << t;
        os << '\n';
        for (std::size_t i = 0; i < a.size(); ++i)
            os << a.data()[i].real() << ' ' << a.data()[i].imag() << '\n';
    }
}

inline void save_element(const Element& a, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("save_element: cannot open " + path);
    save_element(a, os);
}

inline Element load_element(const SpacePtr& space, std::istream& is) {
    Element out(space);
    if (space->bk.is_torus()) {
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            for (char& ch : line)
                if (ch == ',') ch = ' ';
            std::istringstream ls(line);
            Freq k(space->dim());
            for (int d = 0; d < space->dim(); ++d)
                if (!(ls >> k[d])) throw IoError("load_element: bad record");
            double re, im;
            if (!(ls >> re >> im)) throw IoError("load_element: bad record");
            if (!space->box().contains(k)) throw OutOfSupport("load_element: frequency outside box");
            out.set(k, Complex(re, im));
        }
    } else {
        std::string tag;
        double L;
        int M, n;
        if (!(is >> tag >> L >> M >> n) || tag != "grid")
            throw IoError("load_element: bad grid header");
        if (n != space->dim() || M != space->bk.points_per_axis() ||
            std::abs(L - space->bk.half_width()) > 1e-12)
            throw BackendMismatch("load_element: header does not match space");
        std::vector<double> th(static_cast<std::size_t>(n) * n);
        for (double& t : th)
            if (!(is >> t)) throw IoError("load_element: bad grid header");
        for (std::size_t i = 0; i < out.size(); ++i) {
            double re, im;
            if (!(is >> re >> im)) throw IoError("load_element: truncated samples");
            out.data()[i] = Complex(re, im);
        }
    }
    return out;
}

inline Element load_element(const SpacePtr& space, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_element: cannot open " + path);
    return load_element(space, is);
}

}  // namespace qe
