#pragma once

#include "lame.hpp"
#include "spectral_time.hpp"

#include <optional>
#include <random>
#include <string>

namespace cnslab {

// mu' = lambda + mu; pressure_slope is P'(1) > 0
struct LinCNSCoefficients {
    double mu = 1.0;
    double mu_prime = 0.0;
    double pressure_slope = 1.0;

    void validate() const
    {
        LameCoefficients{mu, mu_prime}.validate();
        if (!(pressure_slope > 0.0))
            throw std::invalid_argument("lincns: P'(1) must be > 0");
    }

    // (rho, u)(t) = (rho~, c u~)(c t) with c = sqrt(P'(1)) turns P'(1) into 1 and
    // the viscosities into mu / c, mu' / c
    double time_scale() const { return std::sqrt(pressure_slope); }

    LinCNSCoefficients normalized() const
    {
        const double c = time_scale();
        return {mu / c, mu_prime / c, 1.0};
    }
};

struct LinCNSState {
    ScalarField a;
    VectorField u;

    LinCNSState() = default;
    explicit LinCNSState(const Grid& g) : a(g), u(g) {}
    LinCNSState(ScalarField a0, VectorField u0) : a(std::move(a0)), u(std::move(u0)) {}

    Vec pack() const
    {
        Vec x(a.values.size() + u.values.size());
        x << a.values, u.values;
        return x;
    }

    static LinCNSState unpack(const Grid& g, const Vec& x)
    {
        const int n = g.size();
        return {ScalarField(g, x.head(n)), VectorField(g, x.tail(g.d * n))};
    }
};

// A(a, u) = (P div u, L u + grad a) on the mean-free x Dirichlet space; P removes the
// trapezoid mean. Unknowns are packed as [a; u].
struct CoupledOperator {
    Grid grid;
    LinCNSCoefficients physical;
    LinCNSCoefficients coeffs; // normalized, P'(1) = 1
    LinearOperator lame;
    SpMat grad;    // dN x N, reflective ghosts
    SpMat div;     // N x dN, P composed with the zero-ghost divergence
    Vec mean_weights;
    LinearOperator full;
    bool coupled = true;

    int scalar_size() const { return grid.size(); }
    int dimension() const { return full.dimension(); }
    Vec apply(const Vec& x) const { return full.apply(x); }

    Vec project(const Vec& a) const { return a.array() - mean_weights.dot(a) / mean_weights.sum(); }
};

inline SpMat projected_divergence(const Grid& g, const Vec& w)
{
    SpMat d = divergence_matrix(g);
    Eigen::RowVectorXd wd = (w.transpose() * d) / w.sum();
    Triplets t;
    add_block(t, d, 0, 0);
    for (Eigen::Index c = 0; c < wd.size(); ++c)
        if (wd[c] != 0.0)
            for (int r = 0; r < g.size(); ++r)
                t.emplace_back(r, static_cast<int>(c), -wd[c]);
    SpMat m(g.size(), g.d * g.size());
    m.setFromTriplets(t.begin(), t.end());
    m.prune(0.0);
    return m;
}

inline CoupledOperator assemble_coupled(const Grid& g, const LinCNSCoefficients& coeffs, bool coupled = true)
{
    coeffs.validate();
    CoupledOperator a;
    a.grid = g;
    a.physical = coeffs;
    a.coeffs = coeffs.normalized();
    a.coupled = coupled;
    a.lame = assemble_lame(g, {a.coeffs.mu, a.coeffs.mu_prime});
    a.grad = gradient_matrix(g, Ghost::reflect);
    a.mean_weights = g.weights(Ghost::reflect);
    a.div = projected_divergence(g, a.mean_weights);
    const int n = g.size();
    Triplets t;
    if (coupled) {
        add_block(t, a.div, 0, n);
        add_block(t, a.grad, n, 0);
    }
    add_block(t, a.lame.matrix(), n, n);
    SpMat m((g.d + 1) * n, (g.d + 1) * n);
    m.setFromTriplets(t.begin(), t.end());
    a.full = LinearOperator(std::move(m));
    return a;
}

struct SpectralBound {
    double c = 0.0;
    cplx slowest;          // eigenvalue attaining c
    double dropped = 0.0;  // |eigenvalue| removed for the constant density mode
    bool positive = false;
};

// min Re over the spectrum with the constant-a eigenvalue 0 removed; A(1, 0) = 0
// and (w, 0) is a left null vector, so that mode separates exactly
inline SpectralBound spectral_bound(const CoupledOperator& a)
{
    const CVec& ev = a.full.eigenvalues();
    Eigen::Index drop = 0;
    ev.cwiseAbs().minCoeff(&drop);
    SpectralBound r;
    r.dropped = std::abs(ev[drop]);
    r.c = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (i != drop && ev[i].real() < r.c) {
            r.c = ev[i].real();
            r.slowest = ev[i];
        }
    r.positive = r.c > 0.0;
    return r;
}

// min over random Dirichlet u and Re(lambda) >= 0 of Re a_lambda(u, u) / ||grad u||^2,
// a_lambda the form of -mu Lap - (mu' + 1/lambda) grad div
inline double coercivity_probe(const CoupledOperator& a, int trials, unsigned seed)
{
    const Grid& g = a.grid;
    SpMat lap = -vector_laplacian_matrix(g);
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> un(0.0, 1.0);
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        CVec u(g.d * g.size());
        for (auto& v : u)
            v = cplx(nd(gen), nd(gen));
        double phi = M_PI * (un(gen) - 0.5);
        double rad = std::pow(10.0, 4.0 * un(gen) - 2.0);
        cplx lambda = std::polar(rad, phi);
        SpMatC m = lame_matrix(g, {a.coeffs.mu, a.coeffs.mu_prime + 1.0 / lambda});
        double form = (u.dot(m * u)).real();
        double grad2 = u.dot(lap.cast<cplx>() * u).real();
        worst = std::min(worst, form / grad2);
    }
    return worst;
}

// ||lambda (lambda + A)^{-1}|| along lambda = i 2^k
inline std::vector<std::pair<double, double>> imaginary_axis_resolvent(const CoupledOperator& a, int kmin, int kmax)
{
    std::vector<std::pair<double, double>> out;
    for (int k = kmin; k <= kmax; ++k) {
        double s = std::ldexp(1.0, k);
        auto v = scaled_resolvent_norm(a.full, cplx(0.0, s));
        out.emplace_back(s, v.value_or(std::numeric_limits<double>::infinity()));
    }
    return out;
}

// smooth random data: low cosine modes for a (projected mean-free), low sine modes for u
inline LinCNSState random_smooth_state(const CoupledOperator& op, unsigned seed, double amp = 1.0, int modes = 3)
{
    const Grid& g = op.grid;
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    LinCNSState s(g);
    const int terms = modes * modes;
    for (int t = 0; t < terms; ++t) {
        std::vector<int> k(g.d);
        for (int ax = 0; ax < g.d; ++ax)
            k[ax] = std::uniform_int_distribution<int>(1, modes)(gen);
        const double ca = nd(gen) / terms;
        std::vector<double> cu(g.d);
        for (auto& c : cu)
            c = nd(gen) / terms;
        for (int n = 0; n < g.size(); ++n) {
            double ccos = 1.0, csin = 1.0;
            for (int ax = 0; ax < g.d; ++ax) {
                const double x = M_PI * k[ax] * g.x(n, ax) / g.lengths[ax];
                ccos *= std::cos(x);
                csin *= std::sin(x);
            }
            s.a.values[n] += amp * ca * ccos;
            for (int c = 0; c < g.d; ++c)
                s.u.comp(c)[n] += amp * cu[c] * csin;
        }
    }
    s.a.values = op.project(s.a.values);
    return s;
}

// ---------------------------------------------------------------------------
// solves

enum class Strategy { duhamel, kshift };

struct KShiftOptions {
    double tol = 1e-10;
    int max_iter = 400;
    int max_doublings = 8;
    int degree = 10;
    int uniform = 16;
    std::optional<double> k; // skip the norm estimate
};

struct KShiftReport {
    double k = 0.0;
    double norm_estimate = 0.0;
    int doublings = 0;
    int iterations = 0;
    double contraction = 0.0;
};

struct LinCNSResult {
    Trajectory trajectory;
    std::optional<KShiftReport> kshift;
};

using Forcing = std::function<Vec(double)>;

namespace detail {

// the K-shift scheme of the auxiliary problem with its mesh and convolutions
struct KShiftSolver {
    const CoupledOperator& a;
    const SpectralData& spec;
    double k;
    TimeMesh mesh;
    ModalConvolution heat;   // (d/dt + K + L)^{-1} in the L eigenbasis
    ModalConvolution shift;  // (d/dt + K)^{-1}

    KShiftSolver(const CoupledOperator& op, double kk, double t_end, const KShiftOptions& o)
        : a(op), spec(op.lame.spectral()), k(kk),
          mesh(t_end, spec.values.maxCoeff() + kk, o.uniform, o.degree),
          heat(mesh, spec.values.array() + kk), shift(mesh, Vec::Constant(1, kk))
    {
    }

    Mat heat_solve(const Mat& v) const { return spec.q * heat.apply(spec.qinv * v); }

    // grad (d/dt + K)^{-1} P div (d/dt + K + L)^{-1} v
    Mat composite(const Mat& v) const
    {
        Mat u = heat_solve(v);
        Mat w = shift.apply(a.div * u, true);
        return a.grad * w;
    }
};

inline double kshift_norm_estimate(const CoupledOperator& a, double t_end, const KShiftOptions& o)
{
    detail::KShiftSolver s(a, 1.0, t_end, o);
    std::mt19937 gen(3);
    std::normal_distribution<double> nd;
    Mat v(a.grid.d * a.grid.size(), s.mesh.nodes());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v.data()[i] = nd(gen);
    double est = 0.0;
    for (int it = 0; it < 20; ++it) {
        v /= v.norm();
        Mat w = s.composite(v);
        double r = w.norm();
        v = w;
        if (r == 0.0)
            return 0.0;
        if (it > 0 && std::abs(r - est) <= 1e-6 * r) {
            est = r;
            break;
        }
        est = r;
    }
    return est;
}

} // namespace detail

// Auxiliary problem for y = x - x0 with null data, weighted by e^{-Kt}:
//   a~ = (d/dt + K)^{-1} (f~ - P div u~),  v~ = G + grad (d/dt+K)^{-1} P div (d/dt+K+L)^{-1} v~,
// v~ by Neumann iteration, u~ = (d/dt+K+L)^{-1} v~, then x = x0 + e^{Kt} (a~, u~).
inline LinCNSResult solve_kshift(const CoupledOperator& a, const Vec& x0, const Forcing& f, double t_end, int steps,
                                 const KShiftOptions& o = {})
{
    const int n = a.scalar_size(), dn = a.grid.d * n;
    KShiftReport rep;
    rep.norm_estimate = o.k ? 0.0 : detail::kshift_norm_estimate(a, t_end, o);
    double k = o.k.value_or(std::max(2.0 * rep.norm_estimate, 1e-3));
    const Vec a0 = x0.head(n), u0 = x0.tail(dn);
    const Vec res_a = -(a.div * u0);
    const Vec res_u = -(a.lame.apply(u0) + a.grad * a0);
    for (int attempt = 0; attempt <= o.max_doublings; ++attempt, k *= 2.0) {
        detail::KShiftSolver s(a, k, t_end, o);
        const int nodes = s.mesh.nodes();
        Mat fa(n, nodes), gu(dn, nodes);
        for (int j = 0; j < nodes; ++j) {
            const double t = s.mesh.time(j), wgt = std::exp(-k * t);
            Vec fa_j = res_a, gu_j = res_u;
            if (f) {
                Vec fx = f(t);
                fa_j += fx.head(n);
                gu_j += fx.tail(dn);
            }
            fa.col(j) = wgt * fa_j;
            gu.col(j) = wgt * gu_j;
        }
        const Mat g = gu - a.grad * s.shift.apply(fa, true);
        Mat v = g;
        double prev = 0.0;
        bool ok = false;
        int it = 0;
        for (; it < o.max_iter; ++it) {
            Mat vn = g + s.composite(v);
            double upd = (vn - v).norm();
            double scale = vn.norm();
            v = std::move(vn);
            if (scale == 0.0 || upd <= o.tol * scale) {
                ok = true;
                break;
            }
            if (it >= 2 && prev > 0.0) {
                rep.contraction = upd / prev;
                if (rep.contraction >= 1.0)
                    break;
            }
            prev = upd;
        }
        if (!ok) {
            rep.doublings = attempt + 1;
            continue;
        }
        rep.k = k;
        rep.iterations = it + 1;
        rep.doublings = attempt;
        const Mat u = s.heat_solve(v);
        const Mat at = s.shift.apply(fa - a.div * u, true);
        LinCNSResult r;
        r.kshift = rep;
        const double dt = t_end / steps;
        for (int j = 0; j <= steps; ++j) {
            const double t = j == steps ? t_end : j * dt;
            Vec x(n + dn);
            x << s.mesh.interpolate(at, t), s.mesh.interpolate(u, t);
            r.trajectory.times.push_back(t);
            r.trajectory.states.push_back(x0 + std::exp(k * t) * x);
        }
        return r;
    }
    throw DivergenceError("kshift: Neumann iteration not contractive after " + std::to_string(o.max_doublings) +
                          " doublings of K");
}

inline void check_mean_free(const CoupledOperator& a, const Vec& scalar, const char* what)
{
    const double m = a.mean_weights.dot(scalar) / a.mean_weights.sum();
    const double scale = std::max(1.0, scalar.cwiseAbs().maxCoeff());
    if (std::abs(m) > 1e-12 * scale)
        throw std::invalid_argument(std::string("lincns: ") + what + " must be mean-free");
}

inline LinCNSResult solve_lcns(const CoupledOperator& a, const LinCNSState& init, const Forcing& f, double t_end,
                               int steps, Strategy strategy, const KShiftOptions& o = {})
{
    check_mean_free(a, init.a.values, "initial density perturbation");
    const Vec x0 = init.pack();
    if (f)
        for (int j = 0; j < steps; ++j)
            check_mean_free(a, f((j + 0.5) * t_end / steps).head(a.scalar_size()), "density forcing");
    if (strategy == Strategy::kshift)
        return solve_kshift(a, x0, f, t_end, steps, o);
    LinCNSResult r;
    r.trajectory = solve_cauchy(a.full, x0, f, t_end, steps);
    return r;
}

// ---------------------------------------------------------------------------
// norms on (a, u)

// B^{s+1} for a (even extension) and B^s for u (odd extension), s = d/p - 1 by default
struct StateNorms {
    Grid grid;
    BesovParams bp;
    DyadicFilterBank even, odd;

    explicit StateNorms(const Grid& g, std::optional<BesovParams> b = std::nullopt)
        : grid(g), bp(b.value_or(BesovParams{g.d / 2.0 - 1.0, 2.0, 1.0, g.d})),
          even(g, Extension::even_reflection), odd(g, Extension::odd_reflection)
    {
        bp.q = 1.0;
        bp.validate();
    }

    double a(const Vec& v, double shift = 1.0) const { return besov_norm(ScalarField(grid, v), bp.with_s(bp.s + shift), even); }
    double u(const Vec& v, double shift = 0.0) const { return besov_norm(VectorField(grid, v), bp.with_s(bp.s + shift), odd); }
    double state(const Vec& x) const
    {
        const int n = grid.size();
        return a(x.head(n)) + u(x.tail(grid.d * n));
    }
};

struct DecayFit {
    double rate = 0.0;
    double constant = 0.0;
};

// least squares of log ||(a, u)(t)|| over the second half of the trajectory
inline DecayFit decay_measure(const Grid& g, const Trajectory& tr, std::optional<BesovParams> bp = std::nullopt)
{
    if (tr.states.size() < 16)
        throw std::invalid_argument("decay_measure: need at least 16 samples");
    StateNorms sn(g, bp);
    const size_t first = tr.states.size() / 2;
    double st = 0, sy = 0, stt = 0, sty = 0;
    int m = 0;
    for (size_t i = first; i < tr.states.size(); ++i) {
        double v = sn.state(tr.states[i]);
        if (!(v > 0.0))
            throw DegeneracyError("decay_measure: trajectory norm vanishes, fit is degenerate");
        double t = tr.times[i], y = std::log(v);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        ++m;
    }
    double slope = (m * sty - st * sy) / (m * stt - st * st);
    double icpt = (sy - slope * st) / m;
    return {-slope, std::exp(icpt)};
}

struct EpMeasure {
    double sup = 0.0;
    double time_derivative = 0.0;
    double top = 0.0;
    double data = 0.0;
    double lhs = 0.0;
    std::optional<double> ratio;
};

// ||e^{ct}(a,u)||_{E_p}: sup of the base norm, plus L^1 in time of the weighted time
// differences and of ||a||_{B^{s+1}} + mu ||u||_{B^{s+2}}; data term ||(a0,u0)|| +
// L^1 of the weighted forcing (samples at step midpoints)
inline EpMeasure measure_ep(const StateNorms& sn, double mu, const Trajectory& tr, const std::vector<Vec>& forcing,
                            double c_weight)
{
    const int n = sn.grid.size(), dn = sn.grid.d * n;
    EpMeasure m;
    const size_t steps = tr.states.size() - 1;
    for (size_t i = 0; i <= steps; ++i) {
        const double w = std::exp(c_weight * tr.times[i]);
        const Vec& x = tr.states[i];
        m.sup = std::max(m.sup, w * sn.state(x));
        if (i < steps) {
            const double dt = tr.times[i + 1] - tr.times[i];
            const Vec dx = std::exp(c_weight * tr.times[i + 1]) * tr.states[i + 1] - w * x;
            m.time_derivative += sn.state(dx);
            m.top += dt * w * (sn.a(x.head(n)) + mu * sn.u(x.tail(dn), 2.0));
            if (!forcing.empty())
                m.data += dt * std::exp(c_weight * (tr.times[i] + 0.5 * dt)) * sn.state(forcing[i]);
        }
    }
    m.data += sn.state(tr.states[0]);
    m.lhs = m.sup + m.time_derivative + m.top;
    if (m.data > 0.0)
        m.ratio = m.lhs / m.data;
    return m;
}

} // namespace cnslab
