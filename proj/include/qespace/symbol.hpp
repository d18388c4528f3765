#pragma once

#include <map>
#include <optional>
#include <vector>

#include "qespace/calculus.hpp"

namespace qe {

/// Fast path for a * lambda(y): a twisted coefficient shift.
inline Element shift_right(const Element& a, const Freq& y) {
    const auto& space = *a.space();
    const Box& box = space.box();
    Element out(a.space());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex v = a.data()[i];
        if (v == Complex(0, 0)) continue;
        const Freq d = box.freq(i);
        const Freq p = d + y;
        if (box.contains(p)) out.data()[box.index(p)] = v * space.phase_lower(d, y);
    }
    return out;
}

/// Fast path for lambda(y) * a.
inline Element shift_left(const Freq& y, const Element& a) {
    const auto& space = *a.space();
    const Box& box = space.box();
    Element out(a.space());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const Complex v = a.data()[i];
        if (v == Complex(0, 0)) continue;
        const Freq d = box.freq(i);
        const Freq p = y + d;
        if (box.contains(p)) out.data()[box.index(p)] = v * space.phase_lower(y, d);
    }
    return out;
}

/// Iterative operator norm: power iteration on a*a with matrix-free
/// twisted-product matvecs and deterministic starts (seminorm tables must
/// not depend on shared generator state).  Returns the best estimate on
/// non-convergence instead of throwing.
inline double operator_norm_iter(const Element& a, double tol, Rng& /*unused*/,
                                 int restarts = 2, int max_iter = 300) {
    const Element astar = adjoint(a);
    const SpacePtr sp = a.space();
    auto apply = [&](const Vector& v) {
        return to_vector(twisted_product(a, from_vector(sp, v)));
    };
    auto apply_adj = [&](const Vector& v) {
        return to_vector(twisted_product(astar, from_vector(sp, v)));
    };
    Rng fixed(0x9e3779b97f4a7c15ull ^ fnv1a(a.data().data(), a.size() * sizeof(Complex)));
    (void)restarts;
    return lanczos_norm(apply, apply_adj, static_cast<Eigen::Index>(sp->box().size()), tol,
                        fixed, std::min(max_iter, 80));
}

/// Declared Hoermander order data (m, rho, delta).
struct OrderData {
    double m = 0.0;
    double rho = 1.0;
    double delta = 0.0;
};

/// A tabulated symbol xi -> a(xi) in R_Theta.
///
/// The table covers the backend box enlarged by `pad` index steps per axis
/// so that the exact adjoint/composition formulas (which read the symbol
/// off-box) stay exact.  Derivative stencils consume padding; intermediate
/// results may carry negative padding (table smaller than the backend box),
/// in which case only the shrunken sample set remains valid.  Scalar
/// symbols (values in C 1) are flagged and keep a scalar table.
class Symbol {
public:
    Symbol() = default;

    template <typename F>
    static Symbol scalar(const SpacePtr& space, int pad, OrderData declared, F&& f) {
        Symbol s;
        s.init(space, pad, declared, true);
        for (std::size_t i = 0; i < s.tbox_.size(); ++i) {
            double xi[kMaxDim];
            space->bk.xi(s.tbox_.freq(i), xi);
            s.scalar_[i] = f(xi);
        }
        return s;
    }

    static Symbol scalar_from_table(const SpacePtr& space, int pad, OrderData declared,
                                    std::vector<Complex> vals) {
        Symbol s;
        s.init(space, pad, declared, true);
        if (vals.size() != s.tbox_.size())
            throw ConfigInvalid("scalar_from_table: table size mismatch");
        s.scalar_ = std::move(vals);
        return s;
    }

    template <typename F>
    static Symbol from_function(const SpacePtr& space, int pad, OrderData declared, F&& f) {
        Symbol s;
        s.init(space, pad, declared, false);
        s.table_.reserve(s.tbox_.size());
        for (std::size_t i = 0; i < s.tbox_.size(); ++i) s.table_.push_back(f(s.tbox_.freq(i)));
        return s;
    }

    /// The identity symbol a(xi) = 1.
    static Symbol one(const SpacePtr& space, int pad) {
        return scalar(space, pad, OrderData{0, 1, 0},
                      [](const double*) { return Complex(1, 0); });
    }

    const SpacePtr& space() const { return space_; }
    int pad() const { return pad_; }
    const Box& table_box() const { return tbox_; }
    const OrderData& declared() const { return declared_; }
    void set_declared(OrderData d) { declared_ = d; }
    bool is_scalar() const { return scalar_flag_; }

    bool in_table(const Freq& xi) const { return tbox_.contains(xi); }

    Complex scalar_at(const Freq& xi) const {
        if (!in_table(xi)) throw PaddingInsufficient("symbol table does not cover frequency");
        return scalar_[tbox_.index(xi)];
    }

    /// Value a(xi) as an element (synthesized from the scalar table when flagged).
    Element at(const Freq& xi) const {
        if (!in_table(xi)) throw PaddingInsufficient("symbol table does not cover frequency");
        if (scalar_flag_) {
            Element e = unit(space_);
            e *= scalar_[tbox_.index(xi)];
            return e;
        }
        return table_[tbox_.index(xi)];
    }

    /// Max support radius of the operator part across the table (0 for scalars).
    int value_support_radius() const {
        if (scalar_flag_) return 0;
        int r = 0;
        for (const auto& e : table_) r = std::max(r, e.support_radius());
        return r;
    }

    /// Pointwise map over the table, preserving padding.
    template <typename F>
    Symbol map_values(OrderData declared, F&& f) const {
        if (scalar_flag_) {
            Symbol s;
            s.init(space_, pad_, declared, false);
            s.table_.reserve(tbox_.size());
            for (std::size_t i = 0; i < tbox_.size(); ++i) {
                Element e = unit(space_);
                e *= scalar_[i];
                s.table_.push_back(f(tbox_.freq(i), e));
            }
            return s;
        }
        Symbol s;
        s.init(space_, pad_, declared, false);
        s.table_.reserve(tbox_.size());
        for (std::size_t i = 0; i < tbox_.size(); ++i)
            s.table_.push_back(f(tbox_.freq(i), table_[i]));
        return s;
    }

    /// Copy restricted to a smaller pad.
    Symbol shrink_pad(int new_pad) const {
        if (new_pad > pad_) throw PaddingInsufficient("cannot grow symbol padding");
        Symbol s;
        s.init(space_, new_pad, declared_, scalar_flag_);
        for (std::size_t i = 0; i < s.tbox_.size(); ++i) {
            const Freq k = s.tbox_.freq(i);
            if (scalar_flag_)
                s.scalar_[i] = scalar_[tbox_.index(k)];
            else
                s.table_.push_back(table_[tbox_.index(k)]);
        }
        return s;
    }

    Symbol& operator+=(const Symbol& o) {
        require_same_space(space_, o.space_);
        if (pad_ != o.pad_) throw PaddingInsufficient("symbol sum: unequal padding");
        if (scalar_flag_ && o.scalar_flag_) {
            for (std::size_t i = 0; i < scalar_.size(); ++i) scalar_[i] += o.scalar_[i];
        } else {
            to_operator_valued();
            for (std::size_t i = 0; i < table_.size(); ++i) table_[i] += o.at(tbox_.freq(i));
        }
        return *this;
    }
    Symbol& operator*=(Complex c) {
        if (scalar_flag_)
            for (auto& v : scalar_) v *= c;
        else
            for (auto& e : table_) e *= c;
        return *this;
    }
    friend Symbol operator+(Symbol a, const Symbol& b) { return a += b; }
    friend Symbol operator*(Complex c, Symbol a) { return a *= c; }

    std::uint64_t digest() const {
        std::uint64_t h = space_->digest();
        h = fnv1a_append(h, static_cast<double>(pad_));
        h = fnv1a_append(h, declared_.m);
        h = fnv1a_append(h, declared_.rho);
        h = fnv1a_append(h, declared_.delta);
        if (scalar_flag_) {
            h = fnv1a(scalar_.data(), scalar_.size() * sizeof(Complex), h);
        } else {
            for (const auto& e : table_)
                h = fnv1a(e.data().data(), e.size() * sizeof(Complex), h);
        }
        return h;
    }

private:
    void init(const SpacePtr& space, int pad, OrderData declared, bool scalar_flag) {
        const int tr = space->box().radius() + pad;
        if (tr < 0) throw PaddingInsufficient("symbol table exhausted by stencils");
        space_ = space;
        pad_ = pad;
        tbox_ = Box(space->dim(), tr);
        declared_ = declared;
        scalar_flag_ = scalar_flag;
        if (scalar_flag)
            scalar_.assign(tbox_.size(), Complex(0, 0));
        else
            table_.clear();
    }

    void to_operator_valued() {
        if (!scalar_flag_) return;
        table_.clear();
        table_.reserve(tbox_.size());
        for (std::size_t i = 0; i < tbox_.size(); ++i) {
            Element e = unit(space_);
            e *= scalar_[i];
            table_.push_back(std::move(e));
        }
        scalar_.clear();
        scalar_flag_ = false;
    }

    SpacePtr space_;
    int pad_ = 0;
    Box tbox_;
    OrderData declared_;
    bool scalar_flag_ = true;
    std::vector<Complex> scalar_;
    std::vector<Element> table_;
};

/// Frequency derivative of the symbol table: forward difference on the
/// torus lattice, central difference (step h) on grids.  Consumes one unit
/// of padding.
inline Symbol symbol_xi_derivative(const Symbol& a, int axis) {
    const Freq e = Freq::unit(a.space()->dim(), axis);
    const bool torus = a.space()->bk.is_torus();
    const double h = a.space()->bk.step();
    OrderData d = a.declared();
    d.m -= d.rho;

    if (a.is_scalar()) {
        const Box tb(a.space()->dim(), a.table_box().radius() - 1);
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) {
            const Freq k = tb.freq(i);
            vals[i] = torus ? a.scalar_at(k + e) - a.scalar_at(k)
                            : (a.scalar_at(k + e) - a.scalar_at(k - e)) / (2.0 * h);
        }
        return Symbol::scalar_from_table(a.space(), a.pad() - 1, d, std::move(vals));
    }
    return Symbol::from_function(a.space(), a.pad() - 1, d, [&](const Freq& k) {
        if (torus) return a.at(k + e) - a.at(k);
        Element r = a.at(k + e) - a.at(k - e);
        r *= Complex(1.0 / (2.0 * h), 0);
        return r;
    });
}

/// partial_Theta of the symbol values, pointwise in xi.
inline Symbol symbol_theta_derivative(const Symbol& a, int axis) {
    OrderData d = a.declared();
    d.m += d.delta;
    return a.map_values(d, [axis](const Freq&, const Element& v) { return partial_theta(v, axis); });
}

/// Mixed derivative: partial_{Theta,xi}^j = partial_xi^j + 2 pi i [x_j, .]
/// = partial_xi^j + sum_k Theta_jk partial_Theta^k (torus-safe commutator).
inline Symbol mixed_xi_derivative(const Symbol& a, int axis) {
    Symbol s = symbol_xi_derivative(a, axis);
    if (a.is_scalar()) return s;  // commutator vanishes on scalars
    const Deformation& def = a.space()->def;
    const int n = a.space()->dim();
    for (int k = 0; k < n; ++k) {
        const double t = def.theta(axis, k);
        if (t == 0.0) continue;
        Symbol dk = symbol_theta_derivative(a, k).shrink_pad(a.pad() - 1);
        dk *= Complex(t, 0);
        s += dk;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Seminorm tables
// ---------------------------------------------------------------------------

/// One optimal constant sup_xi <xi>^{-(m - rho|alpha| + delta|beta|)}
/// ||D^{alpha,beta} a(xi)|| for a multi-index pair.
struct SeminormEntry {
    std::vector<int> alpha1;  // mixed derivative orders (Sigma classes only)
    std::vector<int> alpha;   // plain xi-derivative orders
    std::vector<int> beta;    // Theta-derivative orders
    double constant = 0.0;
};

struct SeminormTable {
    OrderData declared;
    int sample_radius = 0;    // frequencies with |xi|_inf <= sample_radius entered the sup
    int excluded_radius = 0;  // boundary ring excluded to keep stencils in-table
    std::vector<SeminormEntry> entries;

    double max_constant() const {
        double m = 0.0;
        for (const auto& e : entries) m = std::max(m, e.constant);
        return m;
    }

    /// Largest constant among entries with total orders within the caps.
    double max_constant_up_to(int max_alpha, int max_beta) const {
        double m = 0.0;
        for (const auto& e : entries) {
            int ta = 0, tb = 0;
            for (int v : e.alpha) ta += v;
            for (int v : e.alpha1) ta += v;
            for (int v : e.beta) tb += v;
            if (ta <= max_alpha && tb <= max_beta) m = std::max(m, e.constant);
        }
        return m;
    }
};

namespace detail {

inline void enumerate_multi(int n, int total_max, std::vector<std::vector<int>>& out) {
    std::vector<int> cur(n, 0);
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
        if (pos == n) {
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[pos] = v;
            rec(pos + 1, remaining - v);
        }
        cur[pos] = 0;
    };
    rec(0, total_max);
}

inline int total(const std::vector<int>& mi) {
    int s = 0;
    for (int v : mi) s += v;
    return s;
}

inline double bracket_xi(const Backend& bk, const Freq& k) {
    return std::sqrt(1.0 + bk.xi_norm_sq(k));
}

/// Apply a multi-index of symbol derivatives (derivative per axis, repeated).
template <typename Deriv>
Symbol apply_multi(const Symbol& a, const std::vector<int>& mi, Deriv&& d) {
    Symbol cur = a;
    for (std::size_t ax = 0; ax < mi.size(); ++ax)
        for (int r = 0; r < mi[ax]; ++r) cur = d(cur, static_cast<int>(ax));
    return cur;
}

inline double value_norm(const Symbol& s, const Freq& k, double tol, Rng& rng) {
    if (s.is_scalar()) return std::abs(s.scalar_at(k));
    const Element v = s.at(k);
    if (v.support_radius() == 0)
        return std::abs(v.coeff(Freq(v.dim()))) * v.space()->bk.weight();
    return operator_norm_iter(v, tol, rng);
}

/// Shared sup over the valid sample box.
inline double weighted_sup(const Symbol& ds, const OrderData& declared, int order_xi,
                           int order_theta, int sample_radius, double tol, Rng& rng) {
    const double expo =
        declared.m - declared.rho * order_xi + declared.delta * order_theta;
    const Box sample(ds.space()->dim(), sample_radius);
    double best = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const Freq k = sample.freq(i);
        const double wgt = std::pow(bracket_xi(ds.space()->bk, k), -expo);
        best = std::max(best, wgt * value_norm(ds, k, tol, rng));
    }
    return best;
}

}  // namespace detail

/// Hoermander S^m_{rho,delta} seminorms: optimal constants over the valid
/// sample set for all |alpha| <= max_alpha, |beta| <= max_beta.  Boundary
/// frequencies whose stencils leave the table are excluded and reported.
inline SeminormTable seminorms_S(const Symbol& a, int max_alpha, int max_beta,
                                 double tol = 1e-6) {
    const int n = a.space()->dim();
    const int R = a.space()->box().radius();
    SeminormTable table;
    table.declared = a.declared();
    table.excluded_radius = std::max(0, max_alpha - a.pad());
    table.sample_radius = R - table.excluded_radius;
    if (table.sample_radius < 0)
        throw StencilOverflow("seminorms_S: no valid sample frequencies remain");

    std::vector<std::vector<int>> alphas, betas;
    detail::enumerate_multi(n, max_alpha, alphas);
    detail::enumerate_multi(n, max_beta, betas);
    Rng rng(941);

    for (const auto& alpha : alphas) {
        Symbol da = detail::apply_multi(
            a, alpha, [](const Symbol& s, int ax) { return symbol_xi_derivative(s, ax); });
        for (const auto& beta : betas) {
            Symbol dab = detail::apply_multi(da, beta, [](const Symbol& s, int ax) {
                return symbol_theta_derivative(s, ax);
            });
            SeminormEntry entry;
            entry.alpha = alpha;
            entry.beta = beta;
            entry.constant =
                detail::weighted_sup(dab, a.declared(), detail::total(alpha),
                                     detail::total(beta), table.sample_radius, tol, rng);
            table.entries.push_back(std::move(entry));
        }
    }
    return table;
}

/// Sigma^m_{rho,delta} seminorms with split mixed/plain xi-derivatives.
inline SeminormTable seminorms_Sigma(const Symbol& a, int max_alpha1, int max_alpha2,
                                     int max_beta, double tol = 1e-6) {
    const int n = a.space()->dim();
    const int R = a.space()->box().radius();
    const int max_xi = max_alpha1 + max_alpha2;
    SeminormTable table;
    table.declared = a.declared();
    table.excluded_radius = std::max(0, max_xi - a.pad());
    table.sample_radius = R - table.excluded_radius;
    if (table.sample_radius < 0)
        throw StencilOverflow("seminorms_Sigma: no valid sample frequencies remain");

    std::vector<std::vector<int>> a1s, a2s, betas;
    detail::enumerate_multi(n, max_alpha1, a1s);
    detail::enumerate_multi(n, max_alpha2, a2s);
    detail::enumerate_multi(n, max_beta, betas);
    Rng rng(947);

    for (const auto& a1 : a1s) {
        Symbol da1 = detail::apply_multi(
            a, a1, [](const Symbol& s, int ax) { return mixed_xi_derivative(s, ax); });
        for (const auto& a2 : a2s) {
            Symbol da12 = detail::apply_multi(da1, a2, [](const Symbol& s, int ax) {
                return symbol_xi_derivative(s, ax);
            });
            for (const auto& beta : betas) {
                Symbol dall = detail::apply_multi(da12, beta, [](const Symbol& s, int ax) {
                    return symbol_theta_derivative(s, ax);
                });
                SeminormEntry entry;
                entry.alpha1 = a1;
                entry.alpha = a2;
                entry.beta = beta;
                entry.constant = detail::weighted_sup(
                    dall, a.declared(), detail::total(a1) + detail::total(a2),
                    detail::total(beta), table.sample_radius, tol, rng);
                table.entries.push_back(std::move(entry));
            }
        }
    }
    return table;
}

// ---------------------------------------------------------------------------
// Exact adjoint and composition
// ---------------------------------------------------------------------------

/// Exact dual symbol: a_dagger(xi) has coefficient function
/// z -> hat{a}(z, xi - z); requires padding at least the operator support
/// radius of the values.
inline Symbol symbol_dagger(const Symbol& a) {
    const int r_op = a.value_support_radius();
    if (a.pad() < r_op)
        throw PaddingInsufficient("symbol_dagger: padding below value support radius");
    if (a.is_scalar()) return a;  // hat{a} concentrated at z = 0

    const Box& cbox = a.space()->box();
    return Symbol::from_function(a.space(), a.pad() - r_op, a.declared(), [&](const Freq& xi) {
        Element v(a.space());
        for (std::size_t i = 0; i < cbox.size(); ++i) {
            const Freq z = cbox.freq(i);
            if (z.norm_inf() > r_op) continue;
            v.data()[i] = a.at(xi - z).coeff(z);
        }
        return v;
    });
}

/// Adjoint symbol a_dagger^*: Psi_a^* = Psi_{adjoint_symbol(a)}.
inline Symbol adjoint_symbol(const Symbol& a) {
    if (a.is_scalar()) {
        const Box& tb = a.table_box();
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) vals[i] = std::conj(a.scalar_at(tb.freq(i)));
        return Symbol::scalar_from_table(a.space(), a.pad(), a.declared(), std::move(vals));
    }
    Symbol dag = symbol_dagger(a);
    return dag.map_values(dag.declared(),
                          [](const Freq&, const Element& v) { return adjoint(v); });
}

/// Exact composition: Psi_{a1} Psi_{a2} = Psi_{a1 <> a2} with
/// (a1 <> a2)(xi) = sum_y w hat{a2}(y, xi) a1(xi + y) lambda(y).
inline Symbol compose_symbols(const Symbol& a1, const Symbol& a2) {
    require_same_space(a1.space(), a2.space());
    const double w = a1.space()->bk.weight();
    const int r2 = a2.value_support_radius();
    const int out_pad = std::min(a1.pad() - r2, a2.pad());
    if (a1.space()->box().radius() + out_pad < 0)
        throw PaddingInsufficient("compose_symbols: padding below value support radius");

    OrderData d;
    d.m = a1.declared().m + a2.declared().m;
    d.rho = std::min(a1.declared().rho, a2.declared().rho);
    d.delta = std::max(a1.declared().delta, a2.declared().delta);

    if (a1.is_scalar() && a2.is_scalar()) {
        const Box tb(a1.space()->dim(), a1.space()->box().radius() + out_pad);
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) {
            const Freq xi = tb.freq(i);
            vals[i] = a1.scalar_at(xi) * a2.scalar_at(xi);
        }
        return Symbol::scalar_from_table(a1.space(), out_pad, d, std::move(vals));
    }

    const Box& cbox = a1.space()->box();
    return Symbol::from_function(a1.space(), out_pad, d, [&](const Freq& xi) {
        Element acc(a1.space());
        const Element v2 = a2.at(xi);
        for (std::size_t i = 0; i < cbox.size(); ++i) {
            const Complex c = v2.data()[i];
            if (c == Complex(0, 0)) continue;
            const Freq y = cbox.freq(i);
            Element term = shift_right(a1.at(xi + y), y);
            term *= w * c;
            acc += term;
        }
        return acc;
    });
}

/// Truncated asymptotic expansion of a1 <> a2:
///   sum_{|gamma| < N} partial_xi^gamma a1 partial_Theta^gamma a2
///                     / ((2 pi i)^{|gamma|} gamma!)
/// together with the weighted remainder against the exact composition,
///   sup_xi <xi>^{-(m1 + m2 + n - (rho - delta2) N)} || exact - expansion ||.
inline std::pair<Symbol, double> expansion_truncation(const Symbol& a1, const Symbol& a2,
                                                      int n_terms, double tol = 1e-6) {
    if (n_terms < 1) throw ConfigInvalid("expansion_truncation: n_terms >= 1");
    require_same_space(a1.space(), a2.space());
    const int n = a1.space()->dim();

    std::vector<std::vector<int>> gammas;
    detail::enumerate_multi(n, n_terms - 1, gammas);

    const Symbol exact = compose_symbols(a1, a2);
    std::optional<Symbol> acc;
    for (const auto& g : gammas) {
        const int tg = detail::total(g);
        Symbol d1 = detail::apply_multi(
            a1, g, [](const Symbol& s, int ax) { return symbol_xi_derivative(s, ax); });
        Symbol d2 = detail::apply_multi(
            a2, g, [](const Symbol& s, int ax) { return symbol_theta_derivative(s, ax); });
        double fact = 1.0;
        for (int v : g)
            for (int r = 1; r <= v; ++r) fact *= r;
        const Complex coef = Complex(1, 0) / (std::pow(Complex(0, kTwoPi), tg) * fact);

        const int pad = std::min(d1.pad(), d2.pad());
        Symbol term =
            Symbol::from_function(a1.space(), pad, exact.declared(), [&](const Freq& xi) {
                Element e = twisted_product(d1.at(xi), d2.at(xi));
                e *= coef;
                return e;
            });
        if (!acc) {
            acc = std::move(term);
        } else {
            if (acc->pad() > term.pad()) acc = acc->shrink_pad(term.pad());
            if (term.pad() > acc->pad()) term = term.shrink_pad(acc->pad());
            *acc += term;
        }
    }

    const OrderData d1o = a1.declared(), d2o = a2.declared();
    const double expo =
        d1o.m + d2o.m + n - (std::min(d1o.rho, d2o.rho) - d2o.delta) * n_terms;
    Rng rng(733);
    double rem = 0.0;
    const Box sample(n, std::min(exact.table_box().radius(), acc->table_box().radius()));
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const Freq k = sample.freq(i);
        const Element diff = exact.at(k) - acc->at(k);
        const double nrm = diff.support_radius() == 0
                               ? std::abs(diff.coeff(Freq(n))) * a1.space()->bk.weight()
                               : operator_norm_iter(diff, tol, rng);
        rem = std::max(rem, std::pow(detail::bracket_xi(a1.space()->bk, k), -expo) * nrm);
    }
    return {std::move(*acc), rem};
}

/// Dilated symbol over R^2 Theta with Psi_a = D_R^{-1} Psi_{tilde a} D_R.
/// Index-aligned: tilde a[k] = D_R(a(R xi'_k)) = D_R(a[k]).
inline Symbol dilate_symbol(const Symbol& a, double R) {
    if (!a.space()->bk.is_grid())
        throw GridResampling("dilate_symbol: grid backend required");
    const SpacePtr target = dilated_space(a.space(), R);
    if (a.is_scalar()) {
        const Box& tb = a.table_box();
        std::vector<Complex> vals(tb.size());
        for (std::size_t i = 0; i < tb.size(); ++i) vals[i] = a.scalar_at(tb.freq(i));
        return Symbol::scalar_from_table(target, a.pad(), a.declared(), std::move(vals));
    }
    return Symbol::from_function(target, a.pad(), a.declared(), [&](const Freq& k) {
        return dilate_element(a.at(k), R, target);
    });
}

/// Ellipticity margin: the largest C and smallest sampled radius R with
/// smallest-singular-value(a(xi)) >= C |xi|^m for all sampled |xi| >= R.
struct EllipticityMargin {
    double C = 0.0;
    double R = 0.0;
};

inline EllipticityMargin ellipticity_margin(const Symbol& a, double m, double floor_c = 1e-12) {
    const Box& box = a.space()->box();
    const Backend& bk = a.space()->bk;

    struct Pt {
        double radius;
        double smin;
    };
    std::vector<Pt> pts;
    for (std::size_t i = 0; i < box.size(); ++i) {
        const Freq k = box.freq(i);
        const double r = std::sqrt(bk.xi_norm_sq(k));
        if (r == 0.0) continue;
        double smin;
        if (a.is_scalar()) {
            smin = std::abs(a.scalar_at(k));
        } else {
            const Element v = a.at(k);
            // Interior sub-block of the left-regular matrix keeps the
            // smallest singular value clear of truncation-boundary defect.
            const int rb = std::max(1, box.radius() - v.support_radius());
            const Box sub(box.dim(), rb);
            Matrix M = Matrix::Zero(sub.size(), sub.size());
            const double w = bk.weight();
            for (std::size_t c = 0; c < sub.size(); ++c) {
                const Freq fk = sub.freq(c);
                for (std::size_t s = 0; s < v.size(); ++s) {
                    if (v.data()[s] == Complex(0, 0)) continue;
                    const Freq dd = box.freq(s);
                    const Freq p = dd + fk;
                    if (!sub.contains(p)) continue;
                    M(sub.index(p), c) = w * v.data()[s] * a.space()->phase_lower(dd, fk);
                }
            }
            Eigen::VectorXd evals;
            Matrix evecs;
            hermitian_eig(Matrix(M.adjoint() * M), evals, evecs);
            smin = std::sqrt(std::max(0.0, evals.size() ? evals(0) : 0.0));
        }
        pts.push_back({r, smin});
    }

    std::sort(pts.begin(), pts.end(),
              [](const Pt& x, const Pt& y) { return x.radius < y.radius; });

    double bestC = 0.0, bestR = 0.0;
    double tail_min = 1e300;
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
        tail_min = std::min(tail_min, it->smin / std::pow(it->radius, m));
        if (tail_min > floor_c) {
            bestC = tail_min;
            bestR = it->radius;
        }
    }
    if (bestC <= floor_c)
        throw NotElliptic("ellipticity_margin: no positive margin at any radius");
    return {bestC, bestR};
}

// ---------------------------------------------------------------------------
// Symbol file format: header (backend, deformation, declared orders, pad)
// followed by per-frequency element blocks in the element format.
// ---------------------------------------------------------------------------

inline void save_symbol(const Symbol& a, std::ostream& os) {
    const Space& sp = *a.space();
    os << std::setprecision(17);
    os << "symbol " << (sp.bk.is_torus() ? "torus" : "grid") << ' ' << sp.dim() << ' ';
    if (sp.bk.is_torus())
        os << sp.bk.radius();
    else
        os << sp.bk.half_width() << ' ' << sp.bk.points_per_axis();
    os << " pad " << a.pad() << " order " << a.declared().m << ' ' << a.declared().rho << ' '
       << a.declared().delta << " theta";
    for (double t : sp.def.raw()) os << ' ' << t;
    os << '\n';
    const Box& tb = a.table_box();
    for (std::size_t i = 0; i < tb.size(); ++i) {
        const Freq k = tb.freq(i);
        os << "xi";
        for (int d = 0; d < sp.dim(); ++d) os << ' ' << k[d];
        os << '\n';
        const Element v = a.at(k);
        for (std::size_t j = 0; j < v.size(); ++j)
            os << v.data()[j].real() << ' ' << v.data()[j].imag() << '\n';
    }
}

inline void save_symbol(const Symbol& a, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("save_symbol: cannot open " + path);
    save_symbol(a, os);
}

inline Symbol load_symbol(const SpacePtr& space, std::istream& is) {
    std::string tag, kind, padtag, ordertag, thetatag;
    int n;
    if (!(is >> tag >> kind >> n) || tag != "symbol") throw IoError("load_symbol: bad header");
    if (kind == "torus") {
        int N;
        is >> N;
        if (!space->bk.is_torus() || N != space->bk.radius() || n != space->dim())
            throw BackendMismatch("load_symbol: torus header mismatch");
    } else {
        double L;
        int M;
        is >> L >> M;
        if (!space->bk.is_grid() || M != space->bk.points_per_axis() || n != space->dim() ||
            std::abs(L - space->bk.half_width()) > 1e-12)
            throw BackendMismatch("load_symbol: grid header mismatch");
    }
    int pad;
    OrderData d;
    is >> padtag >> pad >> ordertag >> d.m >> d.rho >> d.delta >> thetatag;
    if (padtag != "pad" || ordertag != "order" || thetatag != "theta")
        throw IoError("load_symbol: bad header fields");
    std::vector<double> th(static_cast<std::size_t>(n) * n);
    for (double& t : th) is >> t;

    const Box tb(n, space->box().radius() + pad);
    std::vector<Element> vals;
    vals.reserve(tb.size());
    for (std::size_t i = 0; i < tb.size(); ++i) {
        std::string xtag;
        Freq k(n);
        is >> xtag;
        if (xtag != "xi") throw IoError("load_symbol: expected frequency block");
        for (int di = 0; di < n; ++di) is >> k[di];
        Element v(space);
        for (std::size_t j = 0; j < v.size(); ++j) {
            double re, im;
            if (!(is >> re >> im)) throw IoError("load_symbol: truncated block");
            v.data()[j] = Complex(re, im);
        }
        vals.push_back(std::move(v));
    }
    std::size_t idx = 0;
    return Symbol::from_function(space, pad, d, [&](const Freq&) { return vals[idx++]; });
}

inline Symbol load_symbol(const SpacePtr& space, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_symbol: cannot open " + path);
    return load_symbol(space, is);
}

}  // namespace qe
