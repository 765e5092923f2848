#pragma once

#include "lagrangian.hpp"
#include "lame.hpp"
#include "spectral_time.hpp"

#include <numeric>
#include <optional>
#include <vector>

namespace cnslab {

// ---------------------------------------------------------------------------
// partition of unity

namespace detail {

// quintic smoothstep, C^2 at both ends
inline double smoothstep5(double t)
{
    t = std::clamp(t, 0.0, 1.0);
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

inline double smoothstep5_prime(double t)
{
    if (t <= 0.0 || t >= 1.0)
        return 0.0;
    return 30.0 * t * t * (1.0 - t) * (1.0 - t);
}

// 1 for r <= lo, 0 for r >= hi, quintic in between; r = |s|
inline double ramp(double s, double lo, double hi) { return 1.0 - smoothstep5((std::abs(s) - lo) / (hi - lo)); }

inline double ramp_prime(double s, double lo, double hi)
{
    const double sg = s < 0.0 ? -1.0 : 1.0;
    return -sg * smoothstep5_prime((std::abs(s) - lo) / (hi - lo)) / (hi - lo);
}

} // namespace detail

// One-dimensional profile psi with sum_k psi(s - k) = 1: equal to 1 on |s| <= plateau,
// 0 on |s| >= 1 - plateau. The bump is the tensor product over axes; check and tilde
// bumps are 1 on the support of the previous family and reach 0 a margin later.
struct Partition {
    Grid grid;
    double delta = 0.0;
    double plateau = 0.3;
    double margin = 0.25;
    std::vector<std::array<int, 3>> lattice;  // k with x_k = delta k
    std::vector<std::array<double, 3>> centers;
    double unity_residual = 0.0;
    std::array<double, 3> bound_constants{}; // C_0, C_1, C_2 of |grad^a phi_k| <= C_a delta^{-a}
    double grad_sup = 0.0;                   // max_k sup |grad phi_k| at the nodes
    std::optional<double> besov_phi;         // max_k ||phi_k||_{B^{d/p}}
    std::optional<double> besov_grad;        // max_k delta ||grad phi_k||_{B^{d/p}}

    int count() const { return static_cast<int>(centers.size()); }

    double support_radius() const { return 1.0 - plateau; }
    double check_radius() const { return support_radius() + margin; }
    double tilde_radius() const { return check_radius() + margin; }

    ScalarField phi(int k) const { return profile(k, plateau, 1.0 - plateau); }
    ScalarField check(int k) const { return profile(k, support_radius(), check_radius()); }
    ScalarField tilde(int k) const { return profile(k, check_radius(), tilde_radius()); }

    VectorField grad_phi(int k) const
    {
        VectorField out(grid);
        const double lo = plateau, hi = 1.0 - plateau;
        for (int n = 0; n < grid.size(); ++n) {
            std::array<double, 3> s{}, v{};
            for (int a = 0; a < grid.d; ++a) {
                s[a] = (grid.x(n, a) - centers[k][a]) / delta;
                v[a] = detail::ramp(s[a], lo, hi);
            }
            for (int a = 0; a < grid.d; ++a) {
                double prod = detail::ramp_prime(s[a], lo, hi) / delta;
                for (int b = 0; b < grid.d; ++b)
                    if (b != a)
                        prod *= v[b];
                out.comp(a)[n] = prod;
            }
        }
        return out;
    }

private:
    ScalarField profile(int k, double lo, double hi) const
    {
        ScalarField f(grid);
        for (int n = 0; n < grid.size(); ++n) {
            double prod = 1.0;
            for (int a = 0; a < grid.d && prod != 0.0; ++a)
                prod *= detail::ramp((grid.x(n, a) - centers[k][a]) / delta, lo, hi);
            f.values[n] = prod;
        }
        return f;
    }
};

struct PartitionOptions {
    bool record_besov = false;
    double p = 2.0;
};

inline Partition build_partition(const Grid& g, double delta, const PartitionOptions& o = {})
{
    double lmin = g.lengths[0];
    for (int a = 1; a < g.d; ++a)
        lmin = std::min(lmin, g.lengths[a]);
    if (!(delta > 0.0) || delta > 0.25 * lmin * (1.0 + 1e-12))
        throw std::invalid_argument("partition: delta must be in (0, min box length / 4]");
    Partition part;
    part.grid = g;
    part.delta = delta;
    const double reach = part.support_radius();
    std::array<int, 3> kmin{0, 0, 0}, kmax{0, 0, 0};
    for (int a = 0; a < g.d; ++a) {
        kmin[a] = static_cast<int>(std::floor(-reach)) + 0;
        while ((kmin[a] + reach) * delta <= 0.0)
            ++kmin[a];
        kmax[a] = static_cast<int>(std::ceil(g.lengths[a] / delta + reach));
        while ((kmax[a] - reach) * delta >= g.lengths[a])
            --kmax[a];
    }
    for (int k2 = kmin[2]; k2 <= kmax[2]; ++k2)
        for (int k1 = kmin[1]; k1 <= kmax[1]; ++k1)
            for (int k0 = kmin[0]; k0 <= kmax[0]; ++k0) {
                std::array<int, 3> k{k0, k1, k2};
                std::array<double, 3> c{0.0, 0.0, 0.0};
                for (int a = 0; a < g.d; ++a)
                    c[a] = delta * k[a];
                part.lattice.push_back(k);
                part.centers.push_back(c);
            }

    const double w = 1.0 - 2.0 * part.plateau;
    part.bound_constants = {1.0, std::sqrt(double(g.d)) * 1.875 / w, g.d * (10.0 / std::sqrt(3.0)) / (w * w)};

    Vec sum = Vec::Zero(g.size());
    for (int k = 0; k < part.count(); ++k) {
        ScalarField phi = part.phi(k), chk = part.check(k), til = part.tilde(k);
        sum += phi.values;
        for (int n = 0; n < g.size(); ++n) {
            if (phi.values[n] > 0.0 && chk.values[n] != 1.0)
                throw std::logic_error("partition: check bump is not 1 on the support of phi");
            if (chk.values[n] > 0.0 && til.values[n] != 1.0)
                throw std::logic_error("partition: tilde bump is not 1 on the support of check");
        }
        VectorField gp = part.grad_phi(k);
        double sup = 0.0;
        for (int n = 0; n < g.size(); ++n) {
            double s2 = 0.0;
            for (int a = 0; a < g.d; ++a)
                s2 += gp.comp(a)[n] * gp.comp(a)[n];
            sup = std::max(sup, std::sqrt(s2));
        }
        if (sup > part.bound_constants[1] / delta * (1.0 + 1e-12))
            throw std::logic_error("partition: gradient bound violated");
        part.grad_sup = std::max(part.grad_sup, sup);
    }
    part.unity_residual = (sum.array() - 1.0).abs().maxCoeff();
    if (part.unity_residual > 1e-12)
        throw std::logic_error("partition: sum of bumps differs from 1 by " + std::to_string(part.unity_residual));

    if (o.record_besov) {
        BesovParams bp{g.d / o.p, o.p, 1.0, g.d};
        DyadicFilterBank even(g, Extension::even_reflection);
        double mp = 0.0, mg = 0.0;
        for (int k = 0; k < part.count(); ++k) {
            mp = std::max(mp, besov_norm(part.phi(k), bp, even));
            mg = std::max(mg, delta * besov_norm(part.grad_phi(k), bp, even));
        }
        part.besov_phi = mp;
        part.besov_grad = mg;
    }
    return part;
}

// ---------------------------------------------------------------------------
// coefficients

struct CoefficientFields {
    ScalarField rho, mu, lam;

    void validate() const
    {
        if (rho.grid != mu.grid || rho.grid != lam.grid)
            throw std::invalid_argument("coefficients: grid mismatch");
        if (!(rho.values.minCoeff() > 0.0))
            throw std::invalid_argument("coefficients: inf rho must be > 0");
        if (!(mu.values.minCoeff() > 0.0))
            throw std::invalid_argument("coefficients: inf mu must be > 0");
        if (!((lam.values + 2.0 * mu.values).minCoeff() > 0.0))
            throw std::invalid_argument("coefficients: inf (lambda + 2 mu) must be > 0");
    }

    const Grid& grid() const { return rho.grid; }

    bool constant() const
    {
        auto flat = [](const Vec& v) { return v.maxCoeff() == v.minCoeff(); };
        return flat(rho.values) && flat(mu.values) && flat(lam.values);
    }

    // rho_theta = 1 - theta + theta rho, mu_theta = 1 - theta + theta mu, lambda_theta = theta lambda
    CoefficientFields homotopy(double theta) const
    {
        const Grid& g = grid();
        const Vec one = Vec::Ones(g.size());
        return {ScalarField(g, (1.0 - theta) * one + theta * rho.values),
                ScalarField(g, (1.0 - theta) * one + theta * mu.values), ScalarField(g, theta * lam.values)};
    }

    double zeta_star() const { return 1.0 + lam.values.cwiseQuotient(mu.values).cwiseAbs().maxCoeff(); }
    double mu_over_rho_inf() const { return mu.values.cwiseQuotient(rho.values).minCoeff(); }
    double mu_over_rho_sup() const { return mu.values.cwiseQuotient(rho.values).maxCoeff(); }
    double rho_inf() const { return rho.values.minCoeff(); }

    LinearOperator assemble() const { return assemble_varcoef_lame(grid(), rho.values, mu.values, lam.values); }
};

// ---------------------------------------------------------------------------
// choice of delta

struct PatchMargin {
    double density = 0.0;   // ||tilde(1 - rho / rho_k)||
    double shear = 0.0;     // ||tilde(mu - mu_k)|| / mu_k
    double bulk = 0.0;      // ||tilde(lambda - lambda_k)|| / mu_k
    double max() const { return std::max({density, shear, bulk}); }
};

struct DeltaReport {
    double delta = 0.0;
    std::vector<double> tried;
    std::vector<double> worst;       // largest margin seen per tried delta (a lower bound when it failed)
    std::vector<PatchMargin> margins; // per patch at the chosen delta
};

// Besov margins per patch. Patches are visited in decreasing order of the sup of the
// localized oscillation; with stop_above finite the scan ends at the first patch over it
// (the remaining entries stay unset).
inline std::vector<std::optional<PatchMargin>> patch_margins(const CoefficientFields& c, const Partition& part,
                                                             const BesovParams& bp, const DyadicFilterBank& bank,
                                                             double stop_above = std::numeric_limits<double>::infinity())
{
    const Grid& g = c.grid();
    const int count = part.count();
    std::vector<std::array<Vec, 3>> fields(count);
    std::vector<double> mk(count), proxy(count);
    for (int k = 0; k < count; ++k) {
        const auto& x = part.centers[k];
        const double rk = interpolate_at(g, c.rho.values, x, true);
        mk[k] = interpolate_at(g, c.mu.values, x, true);
        const double lk = interpolate_at(g, c.lam.values, x, true);
        const Vec t = part.tilde(k).values;
        fields[k] = {Vec(t.cwiseProduct((1.0 - c.rho.values.array() / rk).matrix())),
                     Vec(t.cwiseProduct((c.mu.values.array() - mk[k]).matrix()) / mk[k]),
                     Vec(t.cwiseProduct((c.lam.values.array() - lk).matrix()) / mk[k])};
        proxy[k] = 0.0;
        for (const auto& f : fields[k])
            proxy[k] = std::max(proxy[k], f.cwiseAbs().maxCoeff());
    }
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return proxy[i] > proxy[j]; });
    std::vector<std::optional<PatchMargin>> out(count);
    for (int k : order) {
        std::array<double, 3> v{};
        for (int q = 0; q < 3; ++q)
            v[q] = fields[k][q].cwiseAbs().maxCoeff() > 0.0 ? besov_norm(ScalarField(g, fields[k][q]), bp, bank) : 0.0;
        out[k] = PatchMargin{v[0], v[1], v[2]};
        if (out[k]->max() > stop_above)
            break;
    }
    return out;
}

// Halves delta from min box length / 4 until every patch margin is <= epsilon.
inline DeltaReport choose_delta(const CoefficientFields& c, double epsilon = 0.05, double p = 2.0)
{
    c.validate();
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::invalid_argument("choose_delta: epsilon must be in (0, 1)");
    const Grid& g = c.grid();
    double lmin = g.lengths[0], hmax = g.spacing[0];
    for (int a = 1; a < g.d; ++a) {
        lmin = std::min(lmin, g.lengths[a]);
        hmax = std::max(hmax, g.spacing[a]);
    }
    BesovParams bp{g.d / p, p, 1.0, g.d};
    bp.validate();
    DyadicFilterBank even(g, Extension::even_reflection);
    DeltaReport rep;
    for (double delta = 0.25 * lmin; delta >= 2.0 * hmax; delta *= 0.5) {
        Partition part = build_partition(g, delta);
        auto m = patch_margins(c, part, bp, even, epsilon);
        double worst = 0.0;
        for (const auto& x : m)
            if (x)
                worst = std::max(worst, x->max());
        rep.tried.push_back(delta);
        rep.worst.push_back(worst);
        if (worst <= epsilon) {
            rep.delta = delta;
            for (const auto& x : m)
                rep.margins.push_back(*x);
            return rep;
        }
    }
    throw DegeneracyError("choose_delta: coefficients too rough for the grid (delta fell below two cells, last margin " +
                          std::to_string(rep.worst.empty() ? 0.0 : rep.worst.back()) + ")");
}

// ---------------------------------------------------------------------------
// solver

enum class VarcoefMethod { continuity, direct };

struct VarcoefOptions {
    double theta_step = 0.25;
    double min_theta_step = 1.0 / 64.0;
    double inner_tol = 1e-12;
    int max_inner = 80;
    int uniform = 16;
    int degree = 10;
};

struct VarcoefResult {
    Trajectory trajectory;
    std::vector<double> thetas;       // accepted homotopy parameters
    std::vector<double> contractions; // worst inner contraction per accepted step
    int inner_iterations = 0;
    int halvings = 0;
    bool shortcut = false;            // constant coefficients solved in one shot
};

namespace detail {

inline double gershgorin(const SpMat& m)
{
    Vec s = Vec::Zero(m.rows());
    for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
            s[it.row()] += std::abs(it.value());
    return s.maxCoeff();
}

// u' + M u = H on the mesh with u(0) = u0, M = rho^{-1} L self-adjoint for the rho weight
struct FrozenSolver {
    LinearOperator op;
    Vec inv_rho;
    SpMat l;
    ModalConvolution conv;
    Mat decay; // e^{-lambda t} per mode and mesh node

    FrozenSolver(const CoefficientFields& c, const TimeMesh& mesh)
        : op(c.assemble()), inv_rho(c.rho.values.cwiseInverse().replicate(c.grid().d, 1)),
          l(varcoef_lame_matrix(c.grid(), c.mu.values, c.lam.values))
    {
        const SpectralData& s = op.spectral();
        conv = ModalConvolution(mesh, s.values);
        decay.resize(s.values.size(), mesh.nodes());
        for (int n = 0; n < mesh.nodes(); ++n)
            decay.col(n) = (-mesh.time(n) * s.values.array()).exp();
    }

    // returns (u, u') at the mesh nodes for forcing H given at the nodes (already divided by rho)
    std::pair<Mat, Mat> solve(const Vec& u0, const Mat& h) const
    {
        const SpectralData& s = op.spectral();
        Mat c = conv.apply(s.qinv * h);
        c += decay.cwiseProduct((s.qinv * u0).replicate(1, decay.cols()));
        Mat u = s.q * c;
        Mat du = h - op.matrix() * u;
        return {std::move(u), std::move(du)};
    }
};

} // namespace detail

inline VarcoefResult solve_varcoef(const CoefficientFields& c, const VectorField& f, const VectorField& u0, double t_end,
                                   int steps, VarcoefMethod method, const VarcoefOptions& o = {})
{
    c.validate();
    const Grid& g = c.grid();
    if (f.grid != g || u0.grid != g)
        throw std::invalid_argument("solve_varcoef: grid mismatch");
    if (!(t_end > 0.0))
        throw std::invalid_argument("solve_varcoef: T must be > 0");
    const Vec inv_rho = c.rho.values.cwiseInverse().replicate(g.d, 1);
    const Vec scaled = inv_rho.cwiseProduct(f.values);
    VarcoefResult r;

    if (c.constant() && method == VarcoefMethod::continuity) {
        r.shortcut = true;
        r.thetas = {1.0};
        HeatResult h = heat_maxreg_solve(c.assemble(), c.mu_over_rho_inf(), u0, [&](double) { return scaled; }, t_end,
                                         steps);
        r.trajectory = std::move(h.trajectory);
        return r;
    }
    if (method == VarcoefMethod::direct) {
        r.thetas = {1.0};
        r.trajectory = solve_cauchy(c.assemble(), u0.values, [&](double) { return scaled; }, t_end, steps);
        return r;
    }

    const double rmax = std::max(detail::gershgorin(c.homotopy(0.0).assemble().matrix()),
                                 detail::gershgorin(c.assemble().matrix()));
    const TimeMesh mesh(t_end, rmax, o.uniform, o.degree);
    const int nodes = mesh.nodes();
    const Mat fm = f.values.replicate(1, nodes);

    double theta0 = 0.0;
    CoefficientFields c0 = c.homotopy(0.0);
    auto solver = std::make_unique<detail::FrozenSolver>(c0, mesh);
    auto [u, du] = solver->solve(u0.values, solver->inv_rho.asDiagonal() * fm);
    double step = o.theta_step;
    while (theta0 < 1.0) {
        const double theta = std::min(1.0, theta0 + step);
        CoefficientFields ct = c.homotopy(theta);
        ct.validate();
        const SpMat lt = varcoef_lame_matrix(g, ct.mu.values, ct.lam.values);
        const Vec drho = (c0.rho.values - ct.rho.values).replicate(g.d, 1);
        Mat v = u, dv = du;
        double prev = -1.0, worst = 0.0;
        bool ok = false;
        int it = 0;
        for (; it < o.max_inner; ++it) {
            Mat rhs = fm + drho.asDiagonal() * dv - (lt - solver->l) * v;
            auto [un, dun] = solver->solve(u0.values, solver->inv_rho.asDiagonal() * rhs);
            const double upd = (un - v).norm(), scale = un.norm();
            v = std::move(un);
            dv = std::move(dun);
            if (scale == 0.0 || upd <= o.inner_tol * scale) {
                ok = true;
                break;
            }
            if (it >= 1 && prev > 0.0) {
                const double q = upd / prev;
                worst = std::max(worst, q);
                if (q >= 1.0)
                    break;
            }
            prev = upd;
        }
        r.inner_iterations += it + 1;
        if (!ok) {
            step *= 0.5;
            ++r.halvings;
            if (step < o.min_theta_step)
                throw DivergenceError("solve_varcoef: continuity step underflow at theta = " + std::to_string(theta0));
            continue;
        }
        theta0 = theta;
        r.thetas.push_back(theta);
        r.contractions.push_back(worst);
        c0 = ct;
        solver = std::make_unique<detail::FrozenSolver>(c0, mesh);
        u = std::move(v);
        du = std::move(dv);
    }

    const double dt = t_end / steps;
    for (int j = 0; j <= steps; ++j) {
        const double t = j == steps ? t_end : j * dt;
        r.trajectory.times.push_back(t);
        r.trajectory.states.push_back(j == 0 ? u0.values : Vec(mesh.interpolate(u, t)));
    }
    return r;
}

// ---------------------------------------------------------------------------
// patched norms and the localized estimate

struct PatchedNorms {
    const Partition& part;
    BesovParams bp;
    DyadicFilterBank odd;
    std::vector<Vec> phis; // phi_k replicated over components

    PatchedNorms(const Partition& p, BesovParams b) : part(p), bp(b), odd(p.grid, Extension::odd_reflection)
    {
        bp.q = 1.0;
        for (int k = 0; k < p.count(); ++k)
            phis.push_back(p.phi(k).values.replicate(p.grid.d, 1));
    }

    // sum_k ||phi_k u||_{B^s}
    double operator()(const Vec& u, double shift = 0.0) const
    {
        double acc = 0.0;
        const BesovParams b = bp.with_s(bp.s + shift);
        for (const auto& phi : phis) {
            Vec w = phi.cwiseProduct(u);
            if (w.cwiseAbs().maxCoeff() > 0.0)
                acc += besov_norm(VectorField(part.grid, w), b, odd);
        }
        return acc;
    }
};

struct PatchReport {
    double lhs = 0.0;         // sup ||u||_phi + int (||du/dt||_phi + mu_* ||u||_{s+2,phi})
    double data = 0.0;        // ||u0||_phi + int ||f||_phi
    double ratio = 0.0;       // lhs / data, the measured constant with the exponential factor bounded by 1
    double exponent = 0.0;    // mu_*^{-1} delta^{-2} rho_*^{-2} zeta*^2 ||(lambda, mu)||^2 T
    double constant = 0.0;    // smallest single C with ratio <= C exp(C exponent)
    double equivalence_lo = 0.0; // range of ||u||_phi / ||u|| over the samples
    double equivalence_hi = 0.0;
};

inline PatchReport patch_estimate(const CoefficientFields& c, const Partition& part, const Trajectory& tr,
                                  const VectorField* f = nullptr, std::optional<BesovParams> besov = std::nullopt)
{
    const Grid& g = c.grid();
    BesovParams bp = besov.value_or(BesovParams{g.d / 2.0 - 1.0, 2.0, 1.0, g.d});
    bp.validate();
    PatchedNorms pn(part, bp);
    DyadicFilterBank odd(g, Extension::odd_reflection);
    const double mu_star = c.mu_over_rho_inf();
    PatchReport r;
    r.equivalence_lo = std::numeric_limits<double>::infinity();
    const size_t m = tr.states.size();
    double fnorm = f ? pn(f->values) : 0.0;
    double sup = 0.0, diff = 0.0, top = 0.0;
    for (size_t i = 0; i < m; ++i) {
        const double pv = pn(tr.states[i]);
        sup = std::max(sup, pv);
        const double plain = besov_norm(VectorField(g, tr.states[i]), bp, odd);
        if (plain > 0.0) {
            r.equivalence_lo = std::min(r.equivalence_lo, pv / plain);
            r.equivalence_hi = std::max(r.equivalence_hi, pv / plain);
        }
        if (i + 1 < m) {
            const double dt = tr.times[i + 1] - tr.times[i];
            diff += pn(tr.states[i + 1] - tr.states[i]);
            top += dt * mu_star * pn(tr.states[i], 2.0);
            r.data += dt * fnorm;
        }
    }
    if (!std::isfinite(r.equivalence_lo))
        r.equivalence_lo = 0.0;
    r.data += pn(tr.states.front());
    r.lhs = sup + diff + top;
    BesovParams crit{g.d / bp.p, bp.p, 1.0, g.d};
    DyadicFilterBank even(g, Extension::even_reflection);
    const double coef = besov_norm(c.lam, crit, even) + besov_norm(c.mu, crit, even);
    const double z = c.zeta_star(), rs = c.rho_inf();
    r.exponent = coef * coef * z * z / (mu_star * part.delta * part.delta * rs * rs) * tr.times.back();
    if (r.data > 0.0) {
        r.ratio = r.lhs / r.data;
        double lo = 0.0, hi = std::max(1.0, r.ratio);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (mid * std::exp(mid * r.exponent) >= r.ratio ? hi : lo) = mid;
        }
        r.constant = hi;
    }
    return r;
}

} // namespace cnslab
