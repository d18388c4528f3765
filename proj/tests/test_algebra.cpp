#include <doctest.h>

#include "helpers.hpp"
#include "qespace/element.hpp"
#include "qespace/linalg.hpp"

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

}  // namespace

TEST_CASE("elementary: unit, products, hand-checked adjoint phase") {
    const double theta = 0.3;
    auto sp = torus2(theta, 6);
    const Freq e1{1, 0}, e2{0, 1};
    Rng rng(7);

    SUBCASE("xi = 0 is the multiplicative unit") {
        auto one = elementary(sp, Freq{0, 0});
        auto a = random_sparse(sp, 3, 5, rng);
        CHECK(max_coeff_diff(twisted_product(one, a), a) < 1e-14);
        CHECK(max_coeff_diff(twisted_product(a, one), a) < 1e-14);
    }

    SUBCASE("lambda(e1) lambda(e2) = lambda(e1+e2), no phase") {
        // <e1, Theta_low e2> = 0 since only j>k entries enter.
        auto p = twisted_product(elementary(sp, e1), elementary(sp, e2));
        CHECK(std::abs(p.coeff(Freq{1, 1}) - Complex(1, 0)) < 1e-14);
    }

    SUBCASE("lambda(e2) lambda(e1) picks e^{-2 pi i theta}") {
        // sum_{j>k} Theta_jk xi_j eta_k = Theta_21 = -theta.
        auto p = twisted_product(elementary(sp, e2), elementary(sp, e1));
        const Complex expect = std::polar(1.0, -kTwoPi * theta);
        CHECK(std::abs(p.coeff(Freq{1, 1}) - expect) < 1e-14);
    }

    SUBCASE("adjoint(lambda(e1+e2)) = e^{-2 pi i theta} lambda(-e1-e2)") {
        // Frozen by hand: sum_{j>k} Theta_jk xi_j xi_k = -theta at xi = e1+e2.
        auto a = adjoint(elementary(sp, Freq{1, 1}));
        const Complex expect = std::polar(1.0, -kTwoPi * theta);
        CHECK(std::abs(a.coeff(Freq{-1, -1}) - expect) < 1e-14);
        // Cross-check: a* a = 1.
        auto prod = twisted_product(a, elementary(sp, Freq{1, 1}));
        CHECK(max_coeff_diff(prod, unit(sp)) < 1e-12);
    }

    SUBCASE("out-of-support frequency is rejected") {
        CHECK_THROWS_AS(elementary(sp, Freq{7, 0}), OutOfSupport);
    }
}

TEST_CASE("twisted product: undeformed case, commutation, associativity") {
    Rng rng(42);

    SUBCASE("Theta = 0 reduces to ordinary convolution") {
        auto sp = torus2(0.0, 5);
        auto a = random_sparse(sp, 2, 4, rng);
        auto b = random_sparse(sp, 2, 4, rng);
        auto p = twisted_product(a, b);
        Element conv(sp);
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) {
                const Freq s = sp->box().freq(i) + sp->box().freq(j);
                if (sp->box().contains(s)) conv.add(s, a.data()[i] * b.data()[j]);
            }
        CHECK(max_coeff_diff(p, conv) < 1e-13);
    }

    SUBCASE("commutation relation on lattice points") {
        const double theta = 1.0 / std::sqrt(2.0);
        auto sp = torus2(theta, 6);
        std::uniform_int_distribution<int> pick(-3, 3);
        for (int trial = 0; trial < 25; ++trial) {
            Freq xi{pick(rng), pick(rng)}, eta{pick(rng), pick(rng)};
            auto lhs = twisted_product(elementary(sp, xi), elementary(sp, eta));
            auto rhs = twisted_product(elementary(sp, eta), elementary(sp, xi));
            double xv[2], ev[2];
            sp->bk.xi(xi, xv);
            sp->bk.xi(eta, ev);
            const Complex comm = std::polar(1.0, kTwoPi * sp->def.full_pair(xv, ev));
            rhs *= comm;
            CHECK(max_coeff_diff(lhs, rhs) < 1e-12);
        }
    }

    SUBCASE("associativity on interior-supported triples, matrix oracle") {
        for (double theta : {0.0, 0.3, 1.0 / std::sqrt(2.0)}) {
            auto sp = torus2(theta, 6);
            auto a = random_sparse(sp, 2, 4, rng);
            auto b = random_sparse(sp, 2, 4, rng);
            auto c = random_sparse(sp, 2, 4, rng);
            auto ab_c = twisted_product(twisted_product(a, b), c);
            auto a_bc = twisted_product(a, twisted_product(b, c));
            CHECK(max_coeff_diff(ab_c, a_bc) < 1e-10);

            // Independent oracle: products of left-regular matrices applied
            // to the coefficient vector of the unit.
            const Matrix Ma = left_regular_matrix(a);
            const Matrix Mb = left_regular_matrix(b);
            const Matrix Mc = left_regular_matrix(c);
            const Vector v = Matrix(Ma * Mb * Mc) * to_vector(unit(sp));
            CHECK((to_vector(ab_c) - v).cwiseAbs().maxCoeff() < 1e-10);
        }
    }

    SUBCASE("backend mismatch is rejected") {
        auto sp1 = torus2(0.3, 5);
        auto sp2 = torus2(0.3, 6);
        CHECK_THROWS_AS(twisted_product(unit(sp1), unit(sp2)), BackendMismatch);
    }

    SUBCASE("dropped tail mass is reported") {
        auto sp = torus2(0.3, 2);
        auto a = elementary(sp, Freq{2, 0});
        auto p = twisted_product(a, a);  // lands at 4 e1: fully dropped
        CHECK(p.truncation_loss() == doctest::Approx(1.0));
        CHECK(max_coeff_diff(p, zero(sp)) == 0.0);
    }
}

TEST_CASE("adjoint: involution and unitarity") {
    Rng rng(3);
    auto sp = torus2(0.3, 6);

    SUBCASE("adjoint(1) = 1 and single-axis frequencies pick no phase") {
        CHECK(max_coeff_diff(adjoint(unit(sp)), unit(sp)) == 0.0);
        auto a = adjoint(elementary(sp, Freq{1, 0}));
        CHECK(std::abs(a.coeff(Freq{-1, 0}) - Complex(1, 0)) < 1e-15);
    }

    SUBCASE("involution holds to machine precision") {
        auto a = random_sparse(sp, 6, 12, rng);
        CHECK(max_coeff_diff(adjoint(adjoint(a)), a) < 1e-15);
    }

    SUBCASE("unitarity of lambda(xi)") {
        std::uniform_int_distribution<int> pick(-6, 6);
        for (int t = 0; t < 20; ++t) {
            Freq xi{pick(rng), pick(rng)};
            auto u = elementary(sp, xi);
            CHECK(max_coeff_diff(twisted_product(adjoint(u), u), unit(sp)) < 1e-12);
        }
    }

    SUBCASE("anti-homomorphism (ab)* = b* a*") {
        auto a = random_sparse(sp, 3, 5, rng);
        auto b = random_sparse(sp, 3, 5, rng);
        auto lhs = adjoint(twisted_product(a, b));
        auto rhs = twisted_product(adjoint(b), adjoint(a));
        CHECK(max_coeff_diff(lhs, rhs) < 1e-12);
    }
}

TEST_CASE("trace and L2 pairing") {
    Rng rng(11);
    auto sp = torus2(0.3, 6);

    SUBCASE("trace values") {
        CHECK(trace(elementary(sp, Freq{2, -1})) == Complex(0, 0));
        CHECK(trace(unit(sp)) == Complex(1, 0));
    }

    SUBCASE("trace(a a*) = sum |f|^2 on the torus") {
        auto a = random_sparse(sp, 3, 8, rng);
        double s = 0.0;
        for (const auto& v : a.data()) s += std::norm(v);
        CHECK(std::abs(trace(twisted_product(a, adjoint(a))) - Complex(s, 0)) < 1e-10);
    }

    SUBCASE("trace property trace(ab) = trace(ba) on interior supports") {
        auto a = random_sparse(sp, 3, 6, rng);
        auto b = random_sparse(sp, 3, 6, rng);
        const Complex tab = trace(twisted_product(a, b));
        const Complex tba = trace(twisted_product(b, a));
        CHECK(std::abs(tab - tba) < 1e-10);
    }

    SUBCASE("orthonormality of the basis") {
        CHECK(std::abs(l2_pairing(elementary(sp, Freq{1, 2}), elementary(sp, Freq{1, 2})) -
                       Complex(1, 0)) < 1e-14);
        CHECK(std::abs(l2_pairing(elementary(sp, Freq{1, 2}), elementary(sp, Freq{2, 1}))) <
              1e-14);
    }

    SUBCASE("Plancherel and the trace route agree") {
        auto a = random_sparse(sp, 3, 8, rng);
        auto b = random_sparse(sp, 3, 8, rng);
        const Complex direct = l2_pairing(a, b);
        const Complex via_trace = trace(twisted_product(adjoint(a), b));
        CHECK(std::abs(direct - via_trace) < 1e-10);

        double plancherel = 0.0;
        for (const auto& v : a.data()) plancherel += std::norm(v);
        CHECK(std::abs(l2_pairing(a, a).real() - plancherel) < 1e-12);
    }

    SUBCASE("grid pairing carries the quadrature weight") {
        auto sp_g = grid2(0.3, 4.0, 9);
        const double w = sp_g->bk.weight();
        auto a = random_sparse(sp_g, 3, 8, rng);
        double plancherel = 0.0;
        for (const auto& v : a.data()) plancherel += std::norm(v);
        CHECK(std::abs(l2_pairing(a, a).real() - w * plancherel) < 1e-12);
        // Plancherel against the trace route, grid case.
        const Complex via_trace = trace(twisted_product(adjoint(a), a));
        CHECK(std::abs(l2_pairing(a, a) - via_trace) < 1e-10);
    }
}

TEST_CASE("left regular matrix") {
    Rng rng(5);

    SUBCASE("unit gives the identity, shift at Theta = 0") {
        auto sp = torus2(0.0, 3);
        CHECK((left_regular_matrix(unit(sp)) - Matrix::Identity(49, 49)).norm() == 0.0);
        const Matrix S = left_regular_matrix(elementary(sp, Freq{1, 0}));
        // Columns k map to p = k + e1 with unit entries.
        for (int k1 = -3; k1 <= 2; ++k1) {
            CHECK(std::abs(S(sp->box().index(Freq{k1 + 1, 0}), sp->box().index(Freq{k1, 0})) -
                           Complex(1, 0)) < 1e-15);
        }
    }

    SUBCASE("homomorphism on the interior block") {
        auto sp = torus2(0.3, 5);
        auto a = random_sparse(sp, 2, 4, rng);
        auto b = random_sparse(sp, 2, 4, rng);
        const Matrix lhs = left_regular_matrix(twisted_product(a, b));
        const Matrix rhs = left_regular_matrix(a) * left_regular_matrix(b);
        // Columns with |k|_inf <= N - ra - rb see no truncation.
        double m = 0.0;
        for (std::size_t k = 0; k < sp->box().size(); ++k) {
            if (sp->box().freq(k).norm_inf() > 1) continue;
            m = std::max(m, (lhs.col(k) - rhs.col(k)).cwiseAbs().maxCoeff());
        }
        CHECK(m < 1e-10);
    }

    SUBCASE("positivity of a* a up to the eigenvalue floor") {
        auto sp = torus2(0.3, 4);
        auto a = random_sparse(sp, 2, 6, rng);
        const Matrix M = left_regular_matrix(twisted_product(adjoint(a), a));
        Eigen::VectorXd evals;
        Matrix evecs;
        hermitian_eig(Matrix((M + M.adjoint()) * 0.5), evals, evecs);
        CHECK(evals.minCoeff() > -1e-10);
    }
}

TEST_CASE("operator norm") {
    Rng rng(9);

    SUBCASE("unitaries have norm 1") {
        auto sp = torus2(0.3, 5);
        CHECK(operator_norm(elementary(sp, Freq{2, -1})) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("u + u* approaches 2 monotonically in N") {
        const double theta = 1.0 / std::sqrt(2.0);
        double prev = 0.0;
        for (int N : {4, 8, 16}) {
            auto sp = torus2(theta, N);
            auto a = elementary(sp, Freq{1, 0});
            const double nrm = operator_norm(a + adjoint(a));
            CHECK(nrm >= prev - 1e-12);
            prev = nrm;
            if (N == 16) CHECK(std::abs(nrm - 2.0) < 0.05);
        }
    }

    SUBCASE("operator norm dominates the normalized L2 norm") {
        auto sp = torus2(0.3, 4);
        for (int t = 0; t < 5; ++t) {
            auto a = random_sparse(sp, 4, 10, rng);
            CHECK(operator_norm(a) >= l2_norm(a) / l2_norm(unit(sp)) - 1e-9);
        }
    }

    SUBCASE("invalid tolerance") {
        auto sp = torus2(0.3, 2);
        CHECK_THROWS_AS(operator_norm(unit(sp), -1.0), ConfigInvalid);
    }
}

TEST_CASE("lp norm") {
    Rng rng(13);
    auto sp = torus2(0.3, 4);

    SUBCASE("p = 2 reproduces Plancherel") {
        auto a = random_sparse(sp, 2, 6, rng);
        CHECK(lp_norm(a, 2.0) == doctest::Approx(l2_norm(a)).epsilon(1e-8));
    }

    SUBCASE("unitaries have unit Lp norm for every p") {
        for (double p : {1.0, 2.0, 3.5, 6.0}) {
            CHECK(lp_norm(elementary(sp, Freq{1, -2}), p) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("Hoelder: |ab|_1 <= |a|_2 |b|_2") {
        for (int t = 0; t < 5; ++t) {
            auto a = random_sparse(sp, 2, 5, rng);
            auto b = random_sparse(sp, 2, 5, rng);
            const double lhs = lp_norm(twisted_product(a, b), 1.0);
            CHECK(lhs <= l2_norm(a) * l2_norm(b) + 1e-8);
        }
    }
}

TEST_CASE("modulation") {
    Rng rng(17);
    auto sp = torus2(0.3, 5);

    SUBCASE("z = 0 is the identity; trace is preserved exactly") {
        auto a = random_sparse(sp, 4, 8, rng);
        CHECK(max_coeff_diff(modulate(a, {0.0, 0.0}), a) == 0.0);
        auto m = modulate(a, {0.37, -1.2});
        CHECK(trace(m) == trace(a));
    }

    SUBCASE("*-automorphism: modulate(ab) = modulate(a) modulate(b)") {
        auto a = random_sparse(sp, 2, 5, rng);
        auto b = random_sparse(sp, 2, 5, rng);
        const std::vector<double> z{0.41, 0.77};
        auto lhs = modulate(twisted_product(a, b), z);
        auto rhs = twisted_product(modulate(a, z), modulate(b, z));
        CHECK(max_coeff_diff(lhs, rhs) < 1e-12);
        CHECK(max_coeff_diff(modulate(adjoint(a), z), adjoint(modulate(a, z))) < 1e-12);
    }

    SUBCASE("Fubini: averaging over the torus z-grid recovers trace(a) 1") {
        auto a = random_sparse(sp, 4, 8, rng);
        const int Mz = 2 * sp->bk.radius() + 1;
        Element avg(sp);
        for (int i = 0; i < Mz; ++i)
            for (int j = 0; j < Mz; ++j) {
                avg += modulate(a, {static_cast<double>(i) / Mz, static_cast<double>(j) / Mz});
            }
        avg *= Complex(1.0 / (Mz * Mz), 0);
        Element expect = unit(sp);
        expect *= trace(a);
        CHECK(max_coeff_diff(avg, expect) < 1e-13);
    }
}

TEST_CASE("dilation") {
    Rng rng(23);
    auto sp = grid2(0.3, 4.0, 17);

    SUBCASE("R = 1 is the identity") {
        auto a = random_sparse(sp, 4, 8, rng);
        auto d = dilate_element(a, 1.0);
        CHECK(max_coeff_diff(d, a) == 0.0);
        CHECK(d.space()->def == sp->def);
    }

    SUBCASE("L2 scaling factor R^{n/2}") {
        auto a = random_sparse(sp, 6, 10, rng);
        for (double R : {2.0, 4.0}) {
            auto d = dilate_element(a, R);
            CHECK(l2_norm(d) == doctest::Approx(R * l2_norm(a)).epsilon(1e-12));  // n = 2
        }
    }

    SUBCASE("*-homomorphism onto the R^2 Theta algebra") {
        auto a = random_sparse(sp, 3, 6, rng);
        auto b = random_sparse(sp, 3, 6, rng);
        const double R = 2.0;
        auto lhs = dilate_element(twisted_product(a, b), R);
        auto rhs = twisted_product(dilate_element(a, R), dilate_element(b, R));
        CHECK(max_coeff_diff(lhs, rhs) < 1e-9);
        CHECK(max_coeff_diff(dilate_element(adjoint(a), R), adjoint(dilate_element(a, R))) <
              1e-12);
    }

    SUBCASE("torus backend is rejected") {
        auto sp_t = torus2(0.3, 4);
        CHECK_THROWS_AS(dilate_element(unit(sp_t), 2.0), BackendMismatch);
    }
}

TEST_CASE("element file round-trip") {
    Rng rng(29);

    SUBCASE("torus records") {
        auto sp = torus2(0.3, 4);
        auto a = random_sparse(sp, 3, 7, rng);
        std::stringstream ss;
        save_element(a, ss);
        auto b = load_element(sp, ss);
        CHECK(max_coeff_diff(a, b) == 0.0);
    }

    SUBCASE("grid header and samples") {
        auto sp = grid2(0.5, 2.0, 5);
        auto a = random_sparse(sp, 2, 6, rng);
        std::stringstream ss;
        save_element(a, ss);
        auto b = load_element(sp, ss);
        CHECK(max_coeff_diff(a, b) < 1e-15);
    }
}
