#pragma once

#include "besov.hpp"
#include "semigroup.hpp"

#include <Eigen/LU>
#include <Eigen/SparseLU>

#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cnslab {

// L = -mu Lap - z grad div; z = mu' = lambda + mu for the physical system
struct LameCoefficients {
    double mu = 1.0;
    cplx z = 0.0;

    void validate() const
    {
        if (!(mu > 0.0))
            throw std::invalid_argument("lame: mu must be > 0");
        if (!(mu + z.real() > 0.0))
            throw std::invalid_argument("lame: mu + Re(z) must be > 0");
    }

    double mu_prime_ratio() const { return z.real() / mu; }
};

struct SymbolProbe {
    std::vector<double> xi;
    double delta = 0.5;
};

// Face-gradient matrix of an axis: (n+1 faces per line) x N, zero ghosts.
inline SpMat face_gradient_matrix(const Grid& g, int axis)
{
    const int n = g.dims[axis], st = g.stride(axis);
    const double inv = 1.0 / g.spacing[axis];
    Triplets t;
    for (int node = 0; node < g.size(); ++node) {
        auto c = g.coords(node);
        int line = node - c[axis] * st;
        int base = (line % st) + (line / st / n) * st * (n + 1);
        t.emplace_back(base + c[axis] * st, node, inv);
        t.emplace_back(base + (c[axis] + 1) * st, node, -inv);
    }
    SpMat m(face_count(g, axis), g.size());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// node values averaged onto the faces of an axis; boundary faces take the adjacent node
inline Vec face_average(const Grid& g, const Vec& v, int axis)
{
    const int n = g.dims[axis], st = g.stride(axis);
    Vec q = Vec::Zero(face_count(g, axis));
    for (int node = 0; node < g.size(); ++node) {
        auto c = g.coords(node);
        int line = node - c[axis] * st;
        int base = (line % st) + (line / st / n) * st * (n + 1);
        double w0 = c[axis] == 0 ? 1.0 : 0.5;
        double w1 = c[axis] == n - 1 ? 1.0 : 0.5;
        q[base + c[axis] * st] += w0 * v[node];
        q[base + (c[axis] + 1) * st] += w1 * v[node];
    }
    return q;
}

// -mu Lap + z D^T D with D the zero-ghost centered divergence; D^T D = -grad div,
// so this is -mu Lap - z grad div with the cross terms composed from first-order stencils.
inline SpMatC lame_matrix(const Grid& g, const LameCoefficients& c)
{
    c.validate();
    SpMat lap = vector_laplacian_matrix(g);
    SpMat div = divergence_matrix(g);
    SpMat dtd = SpMat(div.transpose()) * div;
    SpMatC m = (-c.mu) * lap.cast<cplx>() + c.z * dtd.cast<cplx>();
    m.prune(cplx(0.0));
    return m;
}

inline LinearOperator assemble_lame(const Grid& g, const LameCoefficients& c)
{
    c.validate();
    if (c.z.imag() != 0.0)
        throw std::invalid_argument("assemble_lame: complex z needs lame_matrix");
    SpMat m = -c.mu * vector_laplacian_matrix(g);
    if (c.z.real() != 0.0) {
        SpMat div = divergence_matrix(g);
        m += c.z.real() * SpMat(SpMat(div.transpose()) * div);
    }
    m.prune(0.0);
    return LinearOperator(std::move(m), SymmetryHint::self_adjoint);
}

// -2 div(mu D(u)) - grad(lam div u), assembled as a symmetric matrix:
// face-flux Laplacian with face-averaged mu, transposed-gradient terms D_j^T mu D_i,
// and D^T lam D.
inline SpMat varcoef_lame_matrix(const Grid& g, const Vec& mu, const Vec& lam)
{
    const int n = g.size(), d = g.d;
    if (mu.size() != n || lam.size() != n)
        throw std::invalid_argument("varcoef lame: coefficient size mismatch");
    std::vector<SpMat> dc(d);
    for (int a = 0; a < d; ++a)
        dc[a] = diff1_matrix(g, a, Ghost::zero);
    Triplets t;
    for (int a = 0; a < d; ++a) {
        SpMat fg = face_gradient_matrix(g, a);
        Vec mf = face_average(g, mu, a);
        SpMat diffusion = SpMat(fg.transpose()) * mf.asDiagonal() * fg;
        for (int i = 0; i < d; ++i)
            add_block(t, diffusion, i * n, i * n);
    }
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            SpMat cross = SpMat(dc[j].transpose()) * mu.asDiagonal() * dc[i];
            SpMat bulk = SpMat(dc[i].transpose()) * lam.asDiagonal() * dc[j];
            add_block(t, cross, i * n, j * n);
            add_block(t, bulk, i * n, j * n);
        }
    SpMat m(d * n, d * n);
    m.setFromTriplets(t.begin(), t.end());
    m.prune(0.0);
    return m;
}

// rho^{-1} L_var, self-adjoint for the rho-weighted inner product
inline LinearOperator assemble_varcoef_lame(const Grid& g, const Vec& rho, const Vec& mu, const Vec& lam)
{
    const int n = g.size();
    if (rho.size() != n || rho.minCoeff() <= 0.0)
        throw std::invalid_argument("varcoef lame: density must be positive");
    if (mu.minCoeff() <= 0.0 || (lam + 2.0 * mu).minCoeff() <= 0.0)
        throw std::invalid_argument("varcoef lame: ellipticity violated");
    Vec w(g.d * n);
    for (int c = 0; c < g.d; ++c)
        w.segment(c * n, n) = rho;
    SpMat m = w.cwiseInverse().asDiagonal() * varcoef_lame_matrix(g, mu, lam);
    return LinearOperator(std::move(m), SymmetryHint::self_adjoint, w);
}

// ---------------------------------------------------------------------------
// symbol

inline CMat symbol_matrix(const SymbolProbe& pr, const LameCoefficients& c)
{
    const int d = static_cast<int>(pr.xi.size());
    double r2 = 0.0;
    for (double x : pr.xi)
        r2 += x * x;
    CMat s = CMat::Identity(d, d) * (c.mu * r2);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            s(i, j) += c.z * pr.xi[i] * pr.xi[j];
    return s;
}

inline cplx symbol_det(const SymbolProbe& pr, const LameCoefficients& c)
{
    return symbol_matrix(pr, c).determinant();
}

struct SymbolReport {
    int samples = 0;
    int violations = 0;
    double lower_margin = std::numeric_limits<double>::infinity(); // min |det| / lower
    double upper_margin = std::numeric_limits<double>::infinity(); // min upper / |det|
    std::vector<std::vector<double>> offending;
};

inline double symbol_lower_bound(const LameCoefficients& c, double delta, int d, double r)
{
    return std::pow(c.mu * (1.0 - delta), d) * std::pow(2.0, -0.5 * d) * std::pow(r, 2 * d);
}

inline double symbol_upper_bound(const LameCoefficients& c, int d, double r)
{
    return std::pow(c.mu + std::abs(c.z), d) * std::pow(r, 2 * d);
}

inline SymbolReport symbol_bounds_check(const LameCoefficients& c, const std::vector<std::vector<double>>& xis,
                                        double delta)
{
    c.validate();
    if (!(delta > 0.0 && delta < 1.0) || delta * c.mu + c.z.real() < 0.0)
        throw std::invalid_argument("symbol bounds: need delta in (0,1) with delta mu + Re z >= 0");
    SymbolReport rep;
    for (const auto& xi : xis) {
        double r = 0.0;
        for (double x : xi)
            r += x * x;
        r = std::sqrt(r);
        if (r == 0.0)
            throw std::invalid_argument("symbol bounds: xi must be nonzero");
        const int d = static_cast<int>(xi.size());
        double det = std::abs(symbol_det({xi, delta}, c));
        double lo = symbol_lower_bound(c, delta, d, r), hi = symbol_upper_bound(c, d, r);
        ++rep.samples;
        rep.lower_margin = std::min(rep.lower_margin, det / lo);
        rep.upper_margin = std::min(rep.upper_margin, hi / det);
        if (det < lo || det > hi) {
            ++rep.violations;
            rep.offending.push_back(xi);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// solves

inline VectorField elliptic_solve(const LinearOperator& l, const VectorField& f)
{
    for (Eigen::Index i = 0; i < f.values.size(); ++i)
        if (!std::isfinite(f.values[i]))
            throw std::invalid_argument("elliptic_solve: forcing has non-finite values");
    if (f.values.size() != l.dimension())
        throw std::invalid_argument("elliptic_solve: size mismatch");
    if (f.values.isZero(0.0))
        return VectorField(f.grid);
    Eigen::SparseMatrix<double> m(l.matrix());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(m);
    if (lu.info() != Eigen::Success)
        throw NumericalError("elliptic_solve: factorization failed");
    Vec u = lu.solve(f.values);
    double res = (l.apply(u) - f.values).norm() / f.values.norm();
    if (!(res <= 1e-9))
        throw NumericalError("elliptic_solve: relative residual " + std::to_string(res));
    return VectorField(f.grid, std::move(u));
}

struct MaxregMeasurement {
    double sup_norm = 0.0;   // sup_t ||u||_{B^s}
    double dudt = 0.0;       // int ||du/dt||_{B^s}
    double top = 0.0;        // int mu ||u||_{B^{s+2}}
    double data = 0.0;       // ||u0||_{B^s} + int ||f||_{B^s}
    std::optional<double> ratio; // empty when the data vanish
};

struct HeatResult {
    Trajectory trajectory;
    MaxregMeasurement constants;
};

// Besov norm of a Dirichlet velocity vector (odd extension)
inline double velocity_besov(const Grid& g, const Vec& v, const BesovParams& bp, const DyadicFilterBank& bank)
{
    return besov_norm(VectorField(g, v), bp, bank);
}

// Measures the maximal L^1 regularity ratio of a computed trajectory in B^s_{p,1},
// s defaulting to d/p - 1. Forcing samples sit at step midpoints.
inline MaxregMeasurement measure_maxreg(const Grid& g, double mu, const Trajectory& tr, const std::vector<Vec>& forcing,
                                        BesovParams bp, const DyadicFilterBank& bank)
{
    bp.q = 1.0;
    BesovParams top = bp.with_s(bp.s + 2.0);
    MaxregMeasurement m;
    const int steps = static_cast<int>(tr.states.size()) - 1;
    for (int n = 0; n <= steps; ++n) {
        m.sup_norm = std::max(m.sup_norm, velocity_besov(g, tr.states[n], bp, bank));
        if (n < steps) {
            const double dt = tr.times[n + 1] - tr.times[n];
            m.dudt += velocity_besov(g, tr.states[n + 1] - tr.states[n], bp, bank);
            m.top += dt * mu * velocity_besov(g, tr.states[n], top, bank);
            if (!forcing.empty())
                m.data += dt * velocity_besov(g, forcing[n], bp, bank);
        }
    }
    m.data += velocity_besov(g, tr.states[0], bp, bank);
    if (m.data > 0.0)
        m.ratio = (m.sup_norm + m.dudt + m.top) / m.data;
    return m;
}

// du/dt + L u = f, u(0) = u0 by the exponential integrator, with the measured constant
inline HeatResult heat_maxreg_solve(const LinearOperator& l, double mu, const VectorField& u0,
                                    const std::function<Vec(double)>& f, double t_end, int steps,
                                    std::optional<BesovParams> besov = std::nullopt)
{
    if (steps < 8)
        throw std::invalid_argument("heat_maxreg_solve: steps must be >= 8");
    const Grid& g = u0.grid;
    BesovParams bp = besov.value_or(BesovParams{g.d / 2.0 - 1.0, 2.0, 1.0, g.d});
    bp.validate();
    const double dt = t_end / steps;
    std::vector<Vec> samples;
    if (f)
        for (int n = 0; n < steps; ++n)
            samples.push_back(f((n + 0.5) * dt));
    HeatResult r;
    r.trajectory = solve_cauchy(ExpIntegrator(l, dt), u0.values, samples, steps);
    DyadicFilterBank bank(g, Extension::odd_reflection);
    r.constants = measure_maxreg(g, mu, r.trajectory, samples, bp, bank);
    return r;
}

} // namespace cnslab
