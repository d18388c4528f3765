#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "qespace/errors.hpp"

namespace qe {

using Complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Maximum supported dimension of the frequency lattice.
inline constexpr int kMaxDim = 6;

/// An integer frequency multi-index in Z^n (n <= kMaxDim).
/// On grid backends the physical frequency is the index scaled by the
/// grid step; on torus backends the index is the frequency itself.
class Freq {
public:
    Freq() = default;
    explicit Freq(int n) : n_(n) { c_.fill(0); }
    Freq(std::initializer_list<int> v) : n_(static_cast<int>(v.size())) {
        c_.fill(0);
        int i = 0;
        for (int x : v) c_[i++] = x;
    }

    int dim() const { return n_; }
    int operator[](int i) const { return c_[i]; }
    int& operator[](int i) { return c_[i]; }

    Freq operator+(const Freq& o) const {
        Freq r(n_);
        for (int i = 0; i < n_; ++i) r.c_[i] = c_[i] + o.c_[i];
        return r;
    }
    Freq operator-(const Freq& o) const {
        Freq r(n_);
        for (int i = 0; i < n_; ++i) r.c_[i] = c_[i] - o.c_[i];
        return r;
    }
    Freq operator-() const {
        Freq r(n_);
        for (int i = 0; i < n_; ++i) r.c_[i] = -c_[i];
        return r;
    }
    bool operator==(const Freq& o) const {
        if (n_ != o.n_) return false;
        for (int i = 0; i < n_; ++i)
            if (c_[i] != o.c_[i]) return false;
        return true;
    }
    bool operator!=(const Freq& o) const { return !(*this == o); }

    int norm_inf() const {
        int m = 0;
        for (int i = 0; i < n_; ++i) m = std::max(m, std::abs(c_[i]));
        return m;
    }
    long long norm2_sq() const {
        long long s = 0;
        for (int i = 0; i < n_; ++i) s += 1ll * c_[i] * c_[i];
        return s;
    }
    bool is_zero() const {
        for (int i = 0; i < n_; ++i)
            if (c_[i] != 0) return false;
        return true;
    }

    static Freq unit(int n, int axis) {
        Freq r(n);
        r[axis] = 1;
        return r;
    }

private:
    std::array<int, kMaxDim> c_{};
    int n_ = 0;
};

/// A symmetric index box [-R, R]^n with lexicographic linearization.
/// Axis 0 is the slowest-varying coordinate.
class Box {
public:
    Box() = default;
    Box(int n, int radius) : n_(n), r_(radius) {
        side_ = 2 * radius + 1;
        size_ = 1;
        for (int i = 0; i < n; ++i) size_ *= side_;
    }

    int dim() const { return n_; }
    int radius() const { return r_; }
    int side() const { return side_; }
    std::size_t size() const { return size_; }

    bool contains(const Freq& k) const { return k.norm_inf() <= r_; }

    std::size_t index(const Freq& k) const {
        std::size_t idx = 0;
        for (int i = 0; i < n_; ++i) idx = idx * side_ + (k[i] + r_);
        return idx;
    }

    Freq freq(std::size_t idx) const {
        Freq k(n_);
        for (int i = n_ - 1; i >= 0; --i) {
            k[i] = static_cast<int>(idx % side_) - r_;
            idx /= side_;
        }
        return k;
    }

    bool operator==(const Box& o) const { return n_ == o.n_ && r_ == o.r_; }

private:
    int n_ = 0;
    int r_ = 0;
    int side_ = 1;
    std::size_t size_ = 1;
};

/// Smooth transition: 1 for u <= 0, 0 for u >= 1, C^inf in between.
inline double smooth_step_down(double u) {
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / u);
    const double b = std::exp(-1.0 / (1.0 - u));
    return b / (a + b);
}

/// Radial cutoff: identically 1 on |x| <= r0, vanishing for |x| >= r1.
inline double smooth_cutoff(double r, double r0, double r1) {
    return smooth_step_down((r - r0) / (r1 - r0));
}

/// One-dimensional bump with eta(0)=1 and support (-1,1).
inline double bump_eta(double t) {
    const double t2 = t * t;
    if (t2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t2));
}

/// Deterministic random helpers: all library randomness flows through a
/// caller-provided engine so that seeded runs are reproducible.
using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Complex unit_complex(Rng& rng) {
    const double ph = uniform(rng, 0.0, kTwoPi);
    return {std::cos(ph), std::sin(ph)};
}

inline Complex gaussian_complex(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    return {g(rng), g(rng)};
}

/// FNV-1a 64-bit hash, used for cache keys and digests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t seed = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a_append(std::uint64_t h, double v) {
    return fnv1a(&v, sizeof(v), h);
}

}  // namespace qe
