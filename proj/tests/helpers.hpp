#pragma once

#include <vector>

#include "qespace/element.hpp"
#include "qespace/linalg.hpp"

namespace qe::test {

/// Random element supported on |k|_inf <= r with m nonzero coefficients.
inline Element random_sparse(const SpacePtr& space, int r, int m, Rng& rng) {
    Element e(space);
    const int n = space->dim();
    std::uniform_int_distribution<int> pick(-r, r);
    for (int i = 0; i < m; ++i) {
        Freq k(n);
        for (int d = 0; d < n; ++d) k[d] = pick(rng);
        e.add(k, gaussian_complex(rng));
    }
    return e;
}

/// Random element with a Gaussian coefficient profile of width sigma
/// (in index units), filled on the whole box.
inline Element random_gaussian_profile(const SpacePtr& space, double sigma, Rng& rng) {
    Element e(space);
    const Box& box = space->box();
    for (std::size_t i = 0; i < e.size(); ++i) {
        const Freq k = box.freq(i);
        const double damp = std::exp(-static_cast<double>(k.norm2_sq()) / (2.0 * sigma * sigma));
        e.data()[i] = damp * gaussian_complex(rng);
    }
    return e;
}

inline double max_coeff_diff(const Element& a, const Element& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace qe::test
