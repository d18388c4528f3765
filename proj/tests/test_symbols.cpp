#include <doctest.h>

#include "helpers.hpp"
#include "qespace/pdo.hpp"

using namespace qe;
using qe::test::max_coeff_diff;
using qe::test::random_sparse;

namespace {

SpacePtr torus2(double theta, int N) {
    return make_space(Deformation::rotation(theta), Backend::torus(2, N));
}
SpacePtr grid2(double theta, double L, int M) {
    return make_space(Deformation::rotation(theta), Backend::grid(2, L, M));
}

Symbol bracket_symbol(const SpacePtr& sp, double m, int pad) {
    return Symbol::scalar(sp, pad, OrderData{m, 1, 0}, [m](const double* xi) {
        return Complex(std::pow(1.0 + xi[0] * xi[0] + xi[1] * xi[1], m / 2.0), 0);
    });
}

/// Random operator-valued symbol with smooth xi-dependence and operator
/// support radius 1.
Symbol random_symbol(const SpacePtr& sp, int pad, Rng& rng, double op_scale = 0.5) {
    const int n = sp->dim();
    std::vector<Element> gens;
    const Box opbox(n, 1);
    std::vector<Complex> amp(opbox.size());
    for (auto& c : amp) c = op_scale * gaussian_complex(rng);
    std::vector<double> freqs(3);
    for (auto& f : freqs) f = uniform(rng, -0.2, 0.2);
    const Complex c0 = gaussian_complex(rng);

    return Symbol::from_function(sp, pad, OrderData{0, 1, 0}, [&](const Freq& k) {
        double xi[kMaxDim];
        sp->bk.xi(k, xi);
        const double osc = std::cos(kTwoPi * (freqs[0] * xi[0] + freqs[1] * xi[1])) +
                           0.3 * std::sin(kTwoPi * freqs[2] * xi[0]);
        Element v(sp);
        v.add(Freq(n), c0 * (1.0 + 0.2 * osc) / sp->bk.weight());
        for (std::size_t i = 0; i < opbox.size(); ++i) {
            const Freq z = opbox.freq(i);
            if (z.is_zero()) continue;
            v.add(z, amp[i] * osc / sp->bk.weight());
        }
        return v;
    });
}

}  // namespace

TEST_CASE("symbol derivatives") {
    Rng rng(31);

    SUBCASE("scalar symbols: mixed derivative reduces to the xi derivative") {
        auto sp = torus2(0.3, 5);
        auto a = bracket_symbol(sp, 1.0, 3);
        auto m = mixed_xi_derivative(a, 0);
        auto d = symbol_xi_derivative(a, 0);
        CHECK(m.is_scalar());
        const Box& tb = m.table_box();
        for (std::size_t i = 0; i < tb.size(); ++i)
            CHECK(std::abs(m.scalar_at(tb.freq(i)) - d.scalar_at(tb.freq(i))) == 0.0);
    }

    SUBCASE("Theta -> 0 convergence bound of the mixed derivative") {
        // || d_{Theta,xi} a - d_xi a || <= (1/2pi) |Theta_j.|_2 * gradient bound
        const double theta = 0.05;
        auto sp = torus2(theta, 4);
        auto a = random_symbol(sp, 2, rng);
        auto m = mixed_xi_derivative(a, 0);
        auto d = symbol_xi_derivative(a, 0);
        Rng nrng(3);
        const Box& box = sp->box();
        for (std::size_t i = 0; i < box.size(); ++i) {
            const Freq k = box.freq(i);
            const double diff = operator_norm_iter(m.at(k) - d.at(k), 1e-8, nrng);
            // commutator term = theta * partial_Theta^2 a
            const double grad = operator_norm_iter(partial_theta(a.at(k), 1), 1e-8, nrng);
            CHECK(diff <= theta * grad + 1e-8);
        }
    }

    SUBCASE("derivative operators mutually commute") {
        auto sp = torus2(0.3, 4);
        auto a = random_symbol(sp, 3, rng);
        auto ab = symbol_xi_derivative(mixed_xi_derivative(a, 0), 1);
        auto ba = mixed_xi_derivative(symbol_xi_derivative(a, 1), 0);
        auto tc = symbol_theta_derivative(mixed_xi_derivative(a, 0), 0);
        auto ct = mixed_xi_derivative(symbol_theta_derivative(a, 0), 0);
        const Box sample(2, 3);
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const Freq k = sample.freq(i);
            CHECK(max_coeff_diff(ab.at(k), ba.at(k)) < 1e-9);
            CHECK(max_coeff_diff(tc.at(k), ct.at(k)) < 1e-9);
        }
    }
}

TEST_CASE("seminorm tables") {
    Rng rng(37);

    SUBCASE("bracket symbol is S^m_{1,0} with stable constants") {
        double c8 = 0, c16 = 0;
        for (int N : {8, 16}) {
            auto sp = torus2(0.3, N);
            auto table = seminorms_S(bracket_symbol(sp, 1.5, 3), 2, 1);
            (N == 8 ? c8 : c16) = table.max_constant();
            for (const auto& e : table.entries) CHECK(std::isfinite(e.constant));
        }
        CHECK(std::abs(c16 - c8) / c8 < 0.10);
    }

    SUBCASE("identity symbol: all nonzero orders vanish") {
        auto sp = torus2(0.3, 4);
        auto table = seminorms_S(Symbol::one(sp, 2), 2, 1);
        for (const auto& e : table.entries) {
            int tot = 0;
            for (int v : e.alpha) tot += v;
            for (int v : e.beta) tot += v;
            if (tot > 0)
                CHECK(e.constant == 0.0);
            else
                CHECK(e.constant == doctest::Approx(1.0));
        }
    }

    SUBCASE("Sigma table alpha1 = 0 slice equals the S table") {
        auto sp = torus2(0.3, 4);
        auto a = random_symbol(sp, 3, rng);
        auto ts = seminorms_S(a, 2, 1);
        auto tsig = seminorms_Sigma(a, 1, 2, 1);
        for (const auto& e : ts.entries) {
            for (const auto& f : tsig.entries) {
                bool a1zero = true;
                for (int v : f.alpha1) a1zero &= (v == 0);
                if (a1zero && f.alpha == e.alpha && f.beta == e.beta) {
                    CHECK(f.constant == doctest::Approx(e.constant).epsilon(1e-6));
                }
            }
        }
    }

    SUBCASE("seminorms are invariant under modulation of the symbol values") {
        auto sp = torus2(0.3, 4);
        auto a = random_symbol(sp, 2, rng);
        const std::vector<double> z{0.31, -0.77};
        auto am = a.map_values(a.declared(),
                               [&](const Freq&, const Element& v) { return modulate(v, z); });
        auto t1 = seminorms_S(a, 1, 1, 1e-8);
        auto t2 = seminorms_S(am, 1, 1, 1e-8);
        for (std::size_t i = 0; i < t1.entries.size(); ++i)
            CHECK(t1.entries[i].constant ==
                  doctest::Approx(t2.entries[i].constant).epsilon(1e-5));
    }

    SUBCASE("stencil exclusion zone is reported") {
        auto sp = torus2(0.3, 4);
        auto a = bracket_symbol(sp, 0.0, 1);
        auto t = seminorms_S(a, 3, 0);
        CHECK(t.excluded_radius == 2);
        CHECK(t.sample_radius == 2);
    }
}

TEST_CASE("adjoint and composition symbols") {
    Rng rng(41);
    auto sp = torus2(0.3, 5);

    SUBCASE("scalar multiplier: adjoint is the conjugate") {
        auto m = Symbol::scalar(sp, 2, OrderData{0, 1, 0}, [](const double* xi) {
            return Complex(std::sin(xi[0]), std::cos(xi[1]));
        });
        auto adj = adjoint_symbol(m);
        CHECK(adj.is_scalar());
        const Box& tb = adj.table_box();
        for (std::size_t i = 0; i < tb.size(); ++i)
            CHECK(std::abs(adj.scalar_at(tb.freq(i)) - std::conj(m.scalar_at(tb.freq(i)))) ==
                  0.0);
    }

    SUBCASE("constant operator symbol lambda(z0): dagger fixes it") {
        const Freq z0{1, -1};
        auto a = Symbol::from_function(sp, 2, OrderData{0, 1, 0},
                                       [&](const Freq&) { return elementary(sp, z0); });
        auto dag = symbol_dagger(a);
        const Element expect = elementary(sp, z0);
        CHECK(max_coeff_diff(dag.at(Freq{0, 0}), expect) < 1e-14);
        CHECK(max_coeff_diff(dag.at(Freq{2, 1}), expect) < 1e-14);
        auto adj = adjoint_symbol(a);
        CHECK(max_coeff_diff(adj.at(Freq{0, 0}), adjoint(expect)) < 1e-14);
    }

    SUBCASE("matrix adjoint identity (pairing oracle)") {
        for (int trial = 0; trial < 5; ++trial) {
            auto a = random_symbol(sp, 2, rng);
            const Matrix lhs = pdo_matrix(a).adjoint();
            const Matrix rhs = pdo_matrix(adjoint_symbol(a));
            // interior block: columns reachable without truncation
            double m = 0;
            for (std::size_t k = 0; k < sp->box().size(); ++k) {
                if (sp->box().freq(k).norm_inf() > 3) continue;
                for (std::size_t p = 0; p < sp->box().size(); ++p) {
                    if (sp->box().freq(p).norm_inf() > 3) continue;
                    m = std::max(m, std::abs(lhs(p, k) - rhs(p, k)));
                }
            }
            CHECK(m < 1e-8);
        }
    }

    SUBCASE("two scalar multipliers compose pointwise") {
        auto m1 = bracket_symbol(sp, 1.0, 2);
        auto m2 = bracket_symbol(sp, -2.0, 2);
        auto c = compose_symbols(m1, m2);
        CHECK(c.is_scalar());
        CHECK(std::abs(c.scalar_at(Freq{2, 1}) -
                       m1.scalar_at(Freq{2, 1}) * m2.scalar_at(Freq{2, 1})) < 1e-14);
    }

    SUBCASE("constant lambda(z0) composed with a multiplier") {
        const Freq z0{0, 1};
        auto a1 = Symbol::from_function(sp, 2, OrderData{0, 1, 0},
                                        [&](const Freq&) { return elementary(sp, z0); });
        auto m = bracket_symbol(sp, 1.0, 2);
        auto c = compose_symbols(a1, m);
        // (a1 <> m)(xi) = m(xi) lambda(z0)
        Element expect = elementary(sp, z0);
        expect *= m.scalar_at(Freq{1, 2});
        CHECK(max_coeff_diff(c.at(Freq{1, 2}), expect) < 1e-12);
    }

    SUBCASE("matrix composition identity on interior blocks") {
        for (int trial = 0; trial < 5; ++trial) {
            auto a1 = random_symbol(sp, 2, rng);
            auto a2 = random_symbol(sp, 2, rng);
            const Matrix lhs = pdo_matrix(a1) * pdo_matrix(a2);
            const Matrix rhs = pdo_matrix(compose_symbols(a1, a2));
            double m = 0;
            for (std::size_t k = 0; k < sp->box().size(); ++k) {
                if (sp->box().freq(k).norm_inf() > 2) continue;  // spread radius 2
                for (std::size_t p = 0; p < sp->box().size(); ++p) {
                    if (sp->box().freq(p).norm_inf() > 3) continue;
                    m = std::max(m, std::abs(lhs(p, k) - rhs(p, k)));
                }
            }
            CHECK(m < 1e-8);
        }
    }

    SUBCASE("composition is associative on interior supports") {
        auto a = random_symbol(sp, 4, rng, 0.3);
        auto b = random_symbol(sp, 4, rng, 0.3);
        auto c = random_symbol(sp, 4, rng, 0.3);
        auto ab_c = compose_symbols(compose_symbols(a, b), c);
        auto a_bc = compose_symbols(a, compose_symbols(b, c));
        const Box sample(2, 2);
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const Freq k = sample.freq(i);
            CHECK(max_coeff_diff(ab_c.at(k), a_bc.at(k)) < 1e-8);
        }
    }

    SUBCASE("adjoint is an involution on interior supports") {
        auto a = random_symbol(sp, 4, rng, 0.4);
        auto aa = adjoint_symbol(adjoint_symbol(a));
        const Box sample(2, 3);
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const Freq k = sample.freq(i);
            CHECK(max_coeff_diff(aa.at(k), a.at(k)) < 1e-8);
        }
    }

    SUBCASE("insufficient padding is reported") {
        auto a = random_symbol(sp, 0, rng);
        CHECK_THROWS_AS(symbol_dagger(a), PaddingInsufficient);
    }
}

TEST_CASE("expansion truncation") {
    Rng rng(43);

    SUBCASE("scalar a2 makes the expansion exact at one term") {
        auto sp = torus2(0.3, 5);
        auto a1 = random_symbol(sp, 2, rng);
        auto a2 = bracket_symbol(sp, -1.0, 2);
        auto [exp1, rem] = expansion_truncation(a1, a2, 1);
        auto exact = compose_symbols(a1, a2);
        const Box sample(2, 2);
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const Freq k = sample.freq(i);
            CHECK(max_coeff_diff(exp1.at(k), exact.at(k)) < 1e-12);
        }
    }

    SUBCASE("remainder decreases monotonically in the term count") {
        // grid pair of declared (1,0) type: central xi-differences keep the
        // discrete Taylor remainder at the continuum order
        auto sp = grid2(0.3, 4.0, 17);
        auto a1 = bracket_symbol(sp, 1.0, 4);
        const Freq z0{2, 0};
        auto a2 = Symbol::from_function(sp, 4, OrderData{0, 1, 0}, [&](const Freq& k) {
            double xi[2];
            sp->bk.xi(k, xi);
            Element e = elementary(sp, z0);
            e *= std::pow(1.0 + xi[0] * xi[0] + xi[1] * xi[1], -0.5);
            return e;
        });
        double prev = 1e300;
        for (int nt = 1; nt <= 3; ++nt) {
            auto [expn, rem] = expansion_truncation(a1, a2, nt);
            CHECK(rem < prev);
            prev = rem;
        }
    }
}

TEST_CASE("symbol dilation") {
    Rng rng(47);
    auto sp = grid2(0.3, 4.0, 17);

    SUBCASE("R = 1 identity; scalar symbols resample") {
        auto a = bracket_symbol(sp, 1.0, 2);
        auto d1 = dilate_symbol(a, 1.0);
        CHECK(std::abs(d1.scalar_at(Freq{3, 1}) - a.scalar_at(Freq{3, 1})) == 0.0);
        // tilde a(xi') = a(R xi') with index alignment
        auto d2 = dilate_symbol(a, 2.0);
        CHECK(std::abs(d2.scalar_at(Freq{3, 1}) - a.scalar_at(Freq{3, 1})) == 0.0);
        CHECK(d2.space()->bk.step() == doctest::Approx(sp->bk.step() / 2.0));
    }

    SUBCASE("torus symbols are rejected") {
        auto spt = torus2(0.3, 4);
        CHECK_THROWS_AS(dilate_symbol(bracket_symbol(spt, 0.0, 1), 2.0), GridResampling);
    }
}

TEST_CASE("ellipticity margin") {
    Rng rng(53);
    auto sp = torus2(0.3, 6);

    SUBCASE("bracket squared has margin C >= 1 at order 2") {
        auto a = bracket_symbol(sp, 2.0, 2);
        auto em = ellipticity_margin(a, 2.0);
        CHECK(em.C >= 1.0);
        CHECK(em.R <= 1.0 + 1e-12);
    }

    SUBCASE("zero symbol is not elliptic") {
        auto z = Symbol::scalar(sp, 0, OrderData{0, 1, 0},
                                [](const double*) { return Complex(0, 0); });
        CHECK_THROWS_AS(ellipticity_margin(z, 0.0), NotElliptic);
    }

    SUBCASE("Neumann bound for a small operator perturbation") {
        const double eps = 0.3;
        auto a = Symbol::from_function(sp, 2, OrderData{2, 1, 0}, [&](const Freq& k) {
            double xi[2];
            sp->bk.xi(k, xi);
            const double br = 1.0 + xi[0] * xi[0] + xi[1] * xi[1];
            Element v = unit(sp);
            Element p = elementary(sp, Freq{1, 0}) + adjoint(elementary(sp, Freq{1, 0}));
            p *= eps / 2.0;
            v += p;
            v *= br;
            return v;
        });
        auto em = ellipticity_margin(a, 2.0);
        // smallest singular value >= (1 - ||p||) <xi>^2 >= (1 - eps) |xi|^2
        CHECK(em.C >= (1.0 - eps) - 0.05);
    }
}

TEST_CASE("symbol file round-trip") {
    Rng rng(59);
    auto sp = torus2(0.3, 3);
    auto a = random_symbol(sp, 1, rng);
    std::stringstream ss;
    save_symbol(a, ss);
    auto b = load_symbol(sp, ss);
    CHECK(b.pad() == a.pad());
    const Box& tb = a.table_box();
    for (std::size_t i = 0; i < tb.size(); ++i)
        CHECK(max_coeff_diff(a.at(tb.freq(i)), b.at(tb.freq(i))) == 0.0);
}
