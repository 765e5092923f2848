#pragma once

#include "lagrangian.hpp"
#include "lincns.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cnslab {

// Barotropic laws: mu(rho), lambda(rho) affine, P(rho) = k (rho^gamma - 1) / gamma so that
// P(1) = 0 and P'(1) = k. The laws are only evaluated for densities in [rho_min, rho_max].
struct FluidLaw {
    double mu = 1.0;
    double lambda = 0.0;
    double mu_slope = 0.0;
    double lambda_slope = 0.0;
    double pressure_slope = 1.0;
    double gamma = 1.4;
    double rho_min = 0.2;
    double rho_max = 5.0;

    double mu_of(double rho) const { return mu + mu_slope * (rho - 1.0); }
    double lambda_of(double rho) const { return lambda + lambda_slope * (rho - 1.0); }
    double pressure(double rho) const
    {
        return std::abs(gamma) < 1e-12 ? pressure_slope * std::log(rho)
                                       : pressure_slope * (std::pow(rho, gamma) - 1.0) / gamma;
    }
    double dpressure(double rho) const { return pressure_slope * std::pow(rho, gamma - 1.0); }

    void validate() const
    {
        if (!(mu > 0.0) || !(lambda + 2.0 * mu > 0.0))
            throw std::invalid_argument("fluid: need mu > 0 and lambda + 2 mu > 0");
        if (!(rho_min > 0.0) || !(rho_max > rho_min) || rho_min >= 1.0 || rho_max <= 1.0)
            throw std::invalid_argument("fluid: density window must contain 1 inside (0, inf)");
        for (double r : {rho_min, rho_max})
            if (!(mu_of(r) > 0.0) || !(lambda_of(r) + 2.0 * mu_of(r) > 0.0))
                throw std::invalid_argument("fluid: viscosity laws lose ellipticity inside the density window");
        if (!(pressure_slope >= 0.0))
            throw std::invalid_argument("fluid: P'(1) must be >= 0");
    }

    void check_range(const Vec& rho) const
    {
        if (!(rho.minCoeff() >= rho_min) || !(rho.maxCoeff() <= rho_max))
            throw std::invalid_argument("fluid: density left the window [" + std::to_string(rho_min) + ", " +
                                        std::to_string(rho_max) + "] of the constitutive laws");
    }

    LinCNSCoefficients linear() const { return {mu, mu + lambda, pressure_slope}; }

    // time and velocity rescaled so that P'(1) = 1
    double time_scale() const { return std::sqrt(pressure_slope); }
    FluidLaw normalized() const
    {
        const double c = time_scale();
        if (!(c > 0.0))
            throw std::invalid_argument("fluid: normalization needs P'(1) > 0");
        FluidLaw n = *this;
        n.mu /= c;
        n.lambda /= c;
        n.mu_slope /= c;
        n.lambda_slope /= c;
        n.pressure_slope = 1.0;
        return n;
    }
};

struct SolverConfig {
    double alpha = 1e-3;
    double radius = 0.0;          // ball radius; 0 picks 2 C alpha (global) or alpha (local)
    double horizon = 4.0;
    int steps = 64;
    double epsilon_du = 0.1;
    double c_weight = -1.0;       // < 0 picks half the spectral bound
    int max_picard = 30;
    double contraction_tol = 1e-10;
    int divergence_patience = 3;

    void validate() const
    {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("solver: alpha must be in (0, 1)");
        if (radius < 0.0 || radius >= 1.0)
            throw std::invalid_argument("solver: R must be in (0, 1)");
        if (!(horizon > 0.0))
            throw std::invalid_argument("solver: T must be > 0");
        if (steps < 8)
            throw std::invalid_argument("solver: steps must be >= 8");
        if (!(epsilon_du > 0.0) || !(contraction_tol > 0.0) || max_picard < 1)
            throw std::invalid_argument("solver: bad iteration controls");
    }
};

// ---------------------------------------------------------------------------
// nonlinear right-hand sides

struct NonlinearRHS {
    ScalarField f;
    VectorField g;
    std::vector<std::string> names;
    std::vector<ScalarField> f_terms;
    std::vector<VectorField> g_terms;
    std::vector<double> term_norms; // filled by measure_terms, in the order of names
};

// norms for right-hand sides: scalar terms in B^{d/p} (even), vector terms in B^{d/p-1} (odd)
struct RhsNorms {
    BesovParams scalar, vector;
    DyadicFilterBank even, odd;

    explicit RhsNorms(const Grid& g, double p = 2.0)
        : scalar{g.d / p, p, 1.0, g.d}, vector{g.d / p - 1.0, p, 1.0, g.d}, even(g, Extension::even_reflection),
          odd(g, Extension::odd_reflection)
    {
    }

    double operator()(const ScalarField& f) const { return besov_norm(f, scalar, even); }
    double operator()(const VectorField& v) const { return besov_norm(v, vector, odd); }
};

inline void measure_terms(NonlinearRHS& r, const RhsNorms& nrm)
{
    r.term_norms.clear();
    for (const auto& f : r.f_terms)
        r.term_norms.push_back(nrm(f));
    for (const auto& g : r.g_terms)
        r.term_norms.push_back(nrm(g));
}

namespace detail {

inline Vec map_values(const Vec& x, const std::function<double(double)>& fn) { return x.unaryExpr(fn); }

// 2 div(mu(rho) D_A(v) adj^T - mu_ref D(v)) + div(lam(rho) div_A v adj^T - lam_ref div v Id)
inline VectorField viscous_commutator(const FlowMap& flow, const VectorField& v, const Vec& mu, const Vec& lam,
                                      const Vec& mu_ref, const Vec& lam_ref, VectorField* lambda_part = nullptr)
{
    const Grid& g = v.grid;
    const int d = g.d;
    auto tw = twisted_ops(flow, v);
    TensorField adjt = tensor_transpose(flow.adj);
    TensorField da = tensor_product(tw.deformation, adjt);
    TensorField dv = sym_gradient(v);
    ScalarField divv = divergence(v);
    TensorField visc(g), bulk(g);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            visc.at(i, j) = 2.0 * (mu.cwiseProduct(da.at(i, j)) - mu_ref.cwiseProduct(dv.at(i, j)));
            bulk.at(i, j) = lam.cwiseProduct(tw.divergence.values).cwiseProduct(adjt.at(i, j));
            if (i == j)
                bulk.at(i, j) -= lam_ref.cwiseProduct(divv.values);
        }
    VectorField out = tensor_divergence(visc);
    VectorField lp = tensor_divergence(bulk);
    if (lambda_part) {
        *lambda_part = lp;
        return out;
    }
    out.values += lp.values;
    return out;
}

} // namespace detail

// f = (1-J) db + Dv:(Id - adj) - b Dv:adj,
// g = -a0 dv + [viscous] + [lambda] + (1 - Pi(b)) grad b + Pi(b) (Id - adj^T) grad b
// in units with P'(1) = 1
inline NonlinearRHS assemble_global_rhs(const ScalarField& b, const ScalarField& db, const VectorField& v,
                                        const VectorField& dv, const ScalarField& a0, const FlowMap& flow,
                                        const FluidLaw& law)
{
    const Grid& g = b.grid;
    const int n = g.size();
    law.check_range(b.values.array() + 1.0);
    NonlinearRHS r;
    r.names = {"f1", "f2", "f3", "g1", "g2", "g3", "g4", "g5"};
    TensorField jac = jacobian(v);
    TensorField id_minus_adj = identity_tensor(g);
    id_minus_adj.values -= flow.adj.values;
    ScalarField f1(g, (Vec::Ones(n) - flow.j.values).cwiseProduct(db.values));
    ScalarField f2 = tensor_contract(jac, id_minus_adj);
    ScalarField f3(g, -b.values.cwiseProduct(tensor_contract(jac, flow.adj).values));
    r.f = ScalarField(g, f1.values + f2.values + f3.values);
    r.f_terms = {f1, f2, f3};

    const Vec rho = b.values.array() + 1.0;
    Vec mu = detail::map_values(rho, [&](double x) { return law.mu_of(x); });
    Vec lam = detail::map_values(rho, [&](double x) { return law.lambda_of(x); });
    VectorField g3(g);
    VectorField g1(g, -(a0.values.replicate(g.d, 1).cwiseProduct(dv.values)));
    VectorField g2 = detail::viscous_commutator(flow, v, mu, lam, Vec::Constant(n, law.mu), Vec::Constant(n, law.lambda),
                                                &g3);
    VectorField gb = gradient(b, Ghost::reflect);
    Vec pi = detail::map_values(rho, [&](double x) { return law.dpressure(x); });
    VectorField g4(g, (Vec::Ones(n) - pi).replicate(g.d, 1).cwiseProduct(gb.values));
    TensorField id_minus_adjt = tensor_transpose(id_minus_adj);
    VectorField g5 = tensor_apply(id_minus_adjt, gb);
    g5.values = pi.replicate(g.d, 1).cwiseProduct(g5.values);
    r.g = VectorField(g, g1.values + g2.values + g3.values + g4.values + g5.values);
    r.g_terms = {g1, g2, g3, g4, g5};
    return r;
}

enum class LocalMode { small_density_variation, general_density };

// small variation: h1..h4 against the constant Lame operator;
// general density: the same commutators against mu(rho0), lambda(rho0) and no h1
inline NonlinearRHS assemble_local_rhs(const ScalarField& b, const VectorField& v, const VectorField& dv,
                                       const ScalarField& rho0, const FlowMap& flow, const FluidLaw& law, LocalMode mode)
{
    const Grid& g = b.grid;
    const int n = g.size();
    const Vec rho = b.values.array() + 1.0;
    law.check_range(rho);
    NonlinearRHS r;
    Vec mu = detail::map_values(rho, [&](double x) { return law.mu_of(x); });
    Vec lam = detail::map_values(rho, [&](double x) { return law.lambda_of(x); });
    Vec mu_ref = Vec::Constant(n, law.mu), lam_ref = Vec::Constant(n, law.lambda);
    if (mode == LocalMode::general_density) {
        mu_ref = detail::map_values(rho0.values, [&](double x) { return law.mu_of(x); });
        lam_ref = detail::map_values(rho0.values, [&](double x) { return law.lambda_of(x); });
    }
    VectorField h3(g);
    VectorField h2 = detail::viscous_commutator(flow, v, mu, lam, mu_ref, lam_ref, &h3);
    ScalarField p(g, detail::map_values(rho, [&](double x) { return law.pressure(x); }));
    VectorField h4 = tensor_apply(tensor_transpose(flow.adj), gradient(p, Ghost::reflect));
    h4.values = -h4.values;
    r.f = ScalarField(g);
    if (mode == LocalMode::small_density_variation) {
        const Vec a0 = rho0.values.array() - 1.0;
        VectorField h1(g, -(a0.replicate(g.d, 1).cwiseProduct(dv.values)));
        r.names = {"h1", "h2", "h3", "h4"};
        r.g_terms = {h1, h2, h3, h4};
    } else {
        r.names = {"h2", "h3", "h4"};
        r.g_terms = {h2, h3, h4};
    }
    r.g = VectorField(g);
    for (const auto& t : r.g_terms)
        r.g.values += t.values;
    return r;
}

// ---------------------------------------------------------------------------
// reports

struct IterationRecord {
    int iteration = 0;
    double norm = 0.0;                  // L^2 surrogate of the E_p (global) or F_p (local) norm
    double update = 0.0;                // same norm of the change
    std::optional<double> contraction;  // update ratio, from iteration 2 on
    double du_integral = 0.0;
    double min_density = 0.0;
};

struct IterationReport {
    std::vector<IterationRecord> records;
    bool converged = false;
    int iterations = 0;
    double radius = 0.0;
    bool stayed_in_ball = true;
    std::optional<double> decay_rate;        // solver time units
    std::optional<double> globalbound_constant;
    double spectral_bound = 0.0;
    double c_weight = 0.0;
    double horizon = 0.0;
    double density_identity_error = 0.0;  // max |rho J - rho0| / rho0
    double mass_error = 0.0;              // max |int rho J - int rho0| / int rho0
    double min_density = 0.0;
    double flow_identity_error = 0.0;     // max |DX A - Id|
    double max_contraction() const
    {
        double m = 0.0;
        for (const auto& r : records)
            if (r.contraction && r.iteration >= 2)
                m = std::max(m, *r.contraction);
        return m;
    }
};

struct LagrangianSolution {
    Grid grid;
    FluidLaw law;                    // in solver units
    double time_scale = 1.0;         // physical time = solver time / time_scale
    std::vector<double> times;
    std::vector<Vec> states;         // [a; u] (global) or u (local)
    std::vector<ScalarField> density; // rho0 / J
    ScalarField rho0;
    TrajectoryStore store;
    IterationReport report;

    Vec velocity(size_t i) const { return states[i].tail(grid.d * grid.size()); }
};

namespace detail {

inline void check_flow_identities(const ScalarField& rho0, const std::vector<ScalarField>& density,
                                  const std::vector<FlowMap>& flows, IterationReport& rep)
{
    const Grid& g = rho0.grid;
    const Vec w = g.weights(Ghost::reflect);
    const double mass0 = w.dot(rho0.values);
    const TensorField id = identity_tensor(g);
    rep.density_identity_error = rep.mass_error = rep.flow_identity_error = 0.0;
    rep.min_density = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < flows.size(); ++i) {
        Vec back = density[i].values.cwiseProduct(flows[i].j.values);
        rep.density_identity_error =
            std::max(rep.density_identity_error, ((back - rho0.values).cwiseQuotient(rho0.values)).cwiseAbs().maxCoeff());
        rep.mass_error = std::max(rep.mass_error, std::abs(w.dot(back) - mass0) / mass0);
        TensorField p = tensor_product(flows[i].dx, flows[i].a);
        rep.flow_identity_error = std::max(rep.flow_identity_error, (p.values - id.values).cwiseAbs().maxCoeff());
        rep.min_density = std::min(rep.min_density, density[i].values.minCoeff());
    }
}

// derivative at the nodes from the equation: dx = F - A x
inline std::vector<Vec> node_derivative(const SpMat& a, const std::vector<Vec>& states, const std::vector<Vec>& forcing)
{
    std::vector<Vec> out(states.size());
    for (size_t i = 0; i < states.size(); ++i)
        out[i] = (forcing.empty() ? Vec::Zero(states[i].size()) : forcing[i]) - a * states[i];
    return out;
}

inline std::vector<Vec> midpoint_average(const std::vector<Vec>& nodes)
{
    std::vector<Vec> mid;
    for (size_t i = 0; i + 1 < nodes.size(); ++i)
        mid.push_back(0.5 * (nodes[i] + nodes[i + 1]));
    return mid;
}

} // namespace detail

// ---------------------------------------------------------------------------
// global small-data iteration

struct GlobalData {
    ScalarField a0;
    VectorField u0;
};

// ||a0||_{B^{d/p}} + ||u0||_{B^{d/p-1}}
inline double global_data_norm(const StateNorms& sn, const GlobalData& data)
{
    return sn.a(data.a0.values) + sn.u(data.u0.values);
}

inline std::vector<FlowMap> flows_of(const TrajectoryStore& store)
{
    std::vector<FlowMap> flows;
    for (double t : store.times())
        flows.push_back(advance_flow(store, t));
    return flows;
}

// discrete L^2 surrogate of the E_p / F_p norms of e^{ct} x: sup + L^1 of time
// differences + L^1 of the top-order part (top x)
inline double surrogate_norm(const Grid& g, const std::vector<double>& times, const std::vector<Vec>& states,
                             double c_weight, const SpMat& top)
{
    double sup = 0.0, diff = 0.0, high = 0.0;
    for (size_t i = 0; i < states.size(); ++i) {
        const double w = std::exp(c_weight * times[i]);
        sup = std::max(sup, w * l2(g, states[i]));
        if (i + 1 < states.size()) {
            const double dt = times[i + 1] - times[i];
            diff += l2(g, std::exp(c_weight * times[i + 1]) * states[i + 1] - w * states[i]);
            high += dt * w * l2(g, top * states[i]);
        }
    }
    return sup + diff + high;
}

// E_p norm of e^{ct} x over a sampled trajectory
inline double ep_norm(const StateNorms& sn, double mu, const std::vector<double>& times, const std::vector<Vec>& states,
                      double c_weight)
{
    Trajectory tr{times, states};
    return measure_ep(sn, mu, tr, {}, c_weight).lhs;
}

inline LagrangianSolution picard_global(const GlobalData& data, const FluidLaw& physical, const SolverConfig& cfg,
                                        const std::vector<Vec>* seed = nullptr)
{
    cfg.validate();
    physical.validate();
    const Grid& g = data.a0.grid;
    const int n = g.size(), dn = g.d * n;
    const FluidLaw law = physical.normalized();
    const CoupledOperator op = assemble_coupled(g, physical.linear());
    const StateNorms sn(g);
    const CriticalNorm crit(g);

    check_mean_free(op, data.a0.values, "initial density perturbation");
    const double data_norm = global_data_norm(sn, data);
    if (data_norm > cfg.alpha)
        throw std::invalid_argument("global: data norm " + std::to_string(data_norm) + " exceeds alpha " +
                                    std::to_string(cfg.alpha));

    LagrangianSolution sol;
    sol.grid = g;
    sol.law = law;
    sol.time_scale = physical.time_scale();
    sol.rho0 = ScalarField(g, data.a0.values.array() + 1.0);
    IterationReport& rep = sol.report;
    rep.spectral_bound = spectral_bound(op).c;
    rep.c_weight = cfg.c_weight >= 0.0 ? cfg.c_weight : 0.5 * std::max(rep.spectral_bound, 0.0);
    rep.horizon = cfg.horizon;

    const double dt = cfg.horizon / cfg.steps;
    for (int k = 0; k <= cfg.steps; ++k)
        sol.times.push_back(k == cfg.steps ? cfg.horizon : k * dt);
    const ExpIntegrator integ(op.full, dt);
    SpMat top(2 * dn, n + dn);
    {
        Triplets t;
        add_block(t, op.grad, 0, 0);
        add_block(t, op.lame.matrix(), dn, n);
        top.setFromTriplets(t.begin(), t.end());
    }
    Vec x0(n + dn);
    x0 << data.a0.values, data.u0.values;

    std::vector<Vec> states, deriv;
    if (seed) {
        if (static_cast<int>(seed->size()) != cfg.steps + 1)
            throw std::invalid_argument("global: seed needs one state per time sample");
        states = *seed;
        deriv.resize(states.size());
        for (size_t i = 0; i + 1 < states.size(); ++i)
            deriv[i] = (states[i + 1] - states[i]) / dt;
        deriv.back() = deriv[deriv.size() - 2];
    } else {
        states.assign(cfg.steps + 1, Vec::Zero(n + dn));
        deriv = states;
    }

    double prev_update = -1.0;
    int bad = 0;
    for (int it = 1; it <= cfg.max_picard; ++it) {
        std::vector<Vec> vel;
        for (const auto& s : states)
            vel.push_back(s.tail(dn));
        TrajectoryStore store = TrajectoryStore::from_states(g, sol.times, vel);
        auto small = smallness_monitor(store, crit, cfg.epsilon_du);
        if (!small.passes)
            throw DivergenceError("global: int ||Dv|| = " + std::to_string(small.integral) + " exceeds epsilon " +
                                  std::to_string(cfg.epsilon_du) + " at iteration " + std::to_string(it));
        std::vector<FlowMap> flows = flows_of(store);
        std::vector<Vec> forcing(states.size());
        for (size_t i = 0; i < states.size(); ++i) {
            ScalarField b(g, states[i].head(n)), db(g, deriv[i].head(n));
            VectorField v(g, Vec(states[i].tail(dn))), dv(g, Vec(deriv[i].tail(dn)));
            NonlinearRHS rhs = assemble_global_rhs(b, db, v, dv, data.a0, flows[i], law);
            // the a-row of A carries P div; the mean of div v is moved to the forcing
            const Vec divv = divergence(v).values;
            const double m = op.mean_weights.dot(divv) / op.mean_weights.sum();
            Vec fx(n + dn);
            fx << rhs.f.values.array() - m, rhs.g.values;
            forcing[i] = std::move(fx);
        }
        Trajectory tr = solve_cauchy(integ, x0, detail::midpoint_average(forcing), cfg.steps);
        std::vector<Vec> next = tr.states;
        std::vector<Vec> delta(next.size());
        for (size_t i = 0; i < next.size(); ++i)
            delta[i] = next[i] - states[i];

        IterationRecord rec;
        rec.iteration = it;
        rec.norm = surrogate_norm(g, sol.times, next, rep.c_weight, top);
        rec.update = surrogate_norm(g, sol.times, delta, rep.c_weight, top);
        rec.du_integral = small.integral;
        if (it >= 2 && prev_update > 0.0)
            rec.contraction = rec.update / prev_update;
        states = std::move(next);
        deriv = detail::node_derivative(op.full.matrix(), states, forcing);
        rep.records.push_back(rec);
        rep.iterations = it;
        const bool done = rec.update <= cfg.contraction_tol * std::max(rec.norm, 1e-300) || rec.norm == 0.0;
        if (done) {
            rep.converged = true;
            break;
        }
        if (rec.contraction && *rec.contraction >= 1.0) {
            if (++bad >= cfg.divergence_patience)
                throw DivergenceError("global: Picard map not contracting (factor " +
                                      std::to_string(*rec.contraction) + ")");
        } else {
            bad = 0;
        }
        prev_update = rec.update;
    }

    std::vector<Vec> vel;
    for (const auto& s : states)
        vel.push_back(s.tail(dn));
    sol.store = TrajectoryStore::from_states(g, sol.times, vel);
    std::vector<FlowMap> flows = flows_of(sol.store);
    for (const auto& f : flows)
        sol.density.push_back(density_from_flow(sol.rho0, f));
    detail::check_flow_identities(sol.rho0, sol.density, flows, rep);
    for (auto& r : rep.records)
        r.min_density = rep.min_density;
    sol.states = std::move(states);

    rep.radius = cfg.radius > 0.0 ? cfg.radius : 0.0;
    if (data_norm > 0.0) {
        const double lhs = ep_norm(sn, op.coeffs.mu, sol.times, sol.states, rep.c_weight);
        rep.globalbound_constant = lhs / data_norm;
        if (cfg.radius <= 0.0)
            rep.radius = 2.0 * *rep.globalbound_constant * cfg.alpha;
        rep.stayed_in_ball = lhs <= rep.radius * (1.0 + 1e-12);
        Trajectory tr{sol.times, sol.states};
        rep.decay_rate = decay_measure(g, tr).rate;
    }
    return sol;
}

// ---------------------------------------------------------------------------
// local iteration

struct LocalData {
    ScalarField rho0;
    VectorField u0;
};

inline LagrangianSolution picard_local(const LocalData& data, const FluidLaw& law, const SolverConfig& cfg,
                                       LocalMode mode)
{
    cfg.validate();
    law.validate();
    const Grid& g = data.rho0.grid;
    if (!(data.rho0.values.minCoeff() > 0.0))
        throw std::invalid_argument("local: inf rho0 must be > 0");
    law.check_range(data.rho0.values);
    const CriticalNorm crit(g);

    if (mode == LocalMode::small_density_variation) {
        ScalarField a0(g, data.rho0.values.array() - 1.0);
        if (crit(a0) > cfg.alpha)
            throw std::invalid_argument("local: ||rho0 - 1|| exceeds alpha for the small-variation mode");
    }
    LinearOperator op = mode == LocalMode::small_density_variation
                            ? assemble_lame(g, {law.mu, law.mu + law.lambda})
                            : assemble_varcoef_lame(g, data.rho0.values,
                                                    data.rho0.values.unaryExpr([&](double r) { return law.mu_of(r); }),
                                                    data.rho0.values.unaryExpr([&](double r) { return law.lambda_of(r); }));
    const Vec inv_rho = data.rho0.values.cwiseInverse().replicate(g.d, 1);

    LagrangianSolution sol;
    sol.grid = g;
    sol.law = law;
    sol.rho0 = data.rho0;
    IterationReport& rep = sol.report;
    const double radius = cfg.radius > 0.0 ? cfg.radius : cfg.alpha;
    rep.radius = radius;

    // horizon: halve T until the free solution satisfies int ||grad u_L|| <= R / 2
    double t_end = cfg.horizon;
    Trajectory free;
    while (true) {
        if (t_end < 1e-6)
            throw DegeneracyError("local: horizon underflow, cannot establish int ||grad u_L|| <= R/2");
        free = solve_cauchy(op, data.u0.values, std::vector<Vec>{}, t_end, cfg.steps);
        TrajectoryStore s = TrajectoryStore::from_states(g, free.times, free.states);
        if (du_integral(s, crit) <= 0.5 * radius)
            break;
        t_end *= 0.5;
    }
    rep.horizon = t_end;
    sol.times = free.times;
    const ExpIntegrator integ(op, t_end / cfg.steps);

    std::vector<Vec> states = free.states;
    std::vector<Vec> deriv = detail::node_derivative(op.matrix(), states, {});
    double prev_update = -1.0;
    int bad = 0;
    for (int it = 1; it <= cfg.max_picard; ++it) {
        TrajectoryStore store = TrajectoryStore::from_states(g, sol.times, states);
        auto small = smallness_monitor(store, crit, cfg.epsilon_du);
        if (!small.passes)
            throw DivergenceError("local: int ||Dv|| exceeds epsilon at iteration " + std::to_string(it));
        std::vector<FlowMap> flows = flows_of(store);
        std::vector<Vec> forcing(states.size());
        double min_rho = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < states.size(); ++i) {
            ScalarField rho = density_from_flow(data.rho0, flows[i]);
            min_rho = std::min(min_rho, rho.values.minCoeff());
            ScalarField b(g, rho.values.array() - 1.0);
            VectorField v(g, states[i]), dv(g, deriv[i]);
            NonlinearRHS rhs = assemble_local_rhs(b, v, dv, data.rho0, flows[i], law, mode);
            forcing[i] = mode == LocalMode::general_density ? Vec(inv_rho.cwiseProduct(rhs.g.values)) : rhs.g.values;
        }
        if (!(min_rho > 0.0))
            throw DegeneracyError("local: density lost positivity");
        Trajectory tr = solve_cauchy(integ, data.u0.values, detail::midpoint_average(forcing), cfg.steps);
        std::vector<Vec> delta(tr.states.size());
        for (size_t i = 0; i < delta.size(); ++i)
            delta[i] = tr.states[i] - states[i];
        IterationRecord rec;
        rec.iteration = it;
        rec.norm = surrogate_norm(g, sol.times, tr.states, 0.0, op.matrix());
        rec.update = surrogate_norm(g, sol.times, delta, 0.0, op.matrix());
        rec.du_integral = small.integral;
        rec.min_density = min_rho;
        if (it >= 2 && prev_update > 0.0)
            rec.contraction = rec.update / prev_update;
        states = tr.states;
        deriv = detail::node_derivative(op.matrix(), states, forcing);
        rep.records.push_back(rec);
        rep.iterations = it;
        if (rec.update <= cfg.contraction_tol * std::max(rec.norm, 1e-300) || rec.norm == 0.0) {
            rep.converged = true;
            break;
        }
        if (rec.contraction && *rec.contraction >= 1.0) {
            if (++bad >= cfg.divergence_patience)
                throw DivergenceError("local: Picard map not contracting (factor " +
                                      std::to_string(*rec.contraction) + ")");
        } else {
            bad = 0;
        }
        prev_update = rec.update;
    }

    sol.store = TrajectoryStore::from_states(g, sol.times, states);
    std::vector<FlowMap> flows = flows_of(sol.store);
    for (const auto& f : flows)
        sol.density.push_back(density_from_flow(sol.rho0, f));
    detail::check_flow_identities(sol.rho0, sol.density, flows, rep);
    sol.states = std::move(states);
    return sol;
}

// ---------------------------------------------------------------------------
// Eulerian residual

namespace detail {

// div(2 mu sym Du) + grad(lam div u) with zero-ghost stencils
inline VectorField stress_divergence(const VectorField& v, const Vec& mu, const Vec& lam)
{
    const Grid& g = v.grid;
    TensorField s = sym_gradient(v);
    ScalarField dv = divergence(v);
    for (int i = 0; i < g.d; ++i)
        for (int j = 0; j < g.d; ++j) {
            s.at(i, j) = 2.0 * mu.cwiseProduct(s.at(i, j));
            if (i == j)
                s.at(i, j) += lam.cwiseProduct(dv.values);
        }
    return tensor_divergence(s);
}

} // namespace detail

// Space-time L^1 norm of the Eulerian residuals of mass and momentum, with the
// Lagrangian fields pulled back through the flow; central time differences at
// interior samples. The viscous stress is split like the solver: the reference
// Lame matrix plus the stencil difference of the density-dependent part.
// velocity_scale corrupts u for sensitivity probes.
inline double eulerian_residual(const LagrangianSolution& sol, double velocity_scale = 1.0)
{
    const Grid& g = sol.grid;
    const int n = g.size(), d = g.d;
    const size_t m = sol.times.size();
    if (m < 3)
        throw std::invalid_argument("eulerian residual: need at least 3 samples");
    std::vector<ScalarField> rho(m);
    std::vector<VectorField> u(m), mom(m);
    for (size_t k = 0; k < m; ++k) {
        FlowMap flow = advance_flow(sol.store, sol.times[k]);
        EulerianMap map = invert_flow(flow);
        rho[k] = to_eulerian(map, sol.density[k]);
        u[k] = to_eulerian(map, VectorField(g, Vec(velocity_scale * sol.velocity(k))));
        mom[k] = VectorField(g, rho[k].values.replicate(d, 1).cwiseProduct(u[k].values));
    }
    const FluidLaw& law = sol.law;
    const Vec mu_ref = Vec::Constant(n, law.mu), lam_ref = Vec::Constant(n, law.lambda);
    const SpMat lame = varcoef_lame_matrix(g, mu_ref, lam_ref);
    const double cell = g.cell_volume();
    double total = 0.0;
    for (size_t k = 1; k + 1 < m; ++k) {
        const double dt2 = sol.times[k + 1] - sol.times[k - 1];
        const ScalarField& r = rho[k];
        const VectorField& v = u[k];
        Vec rc = (rho[k + 1].values - rho[k - 1].values) / dt2 + divergence(mom[k]).values;
        TensorField flux(g);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                flux.at(i, j) = mom[k].comp(i).cwiseProduct(v.comp(j));
        Vec mu = r.values.unaryExpr([&](double x) { return law.mu_of(x); });
        Vec lam = r.values.unaryExpr([&](double x) { return law.lambda_of(x); });
        ScalarField p(g, r.values.unaryExpr([&](double x) { return law.pressure(x); }));
        Vec rm = (mom[k + 1].values - mom[k - 1].values) / dt2 + tensor_divergence(flux).values + lame * v.values -
                 detail::stress_divergence(v, mu, lam).values + detail::stress_divergence(v, mu_ref, lam_ref).values +
                 gradient(p, Ghost::reflect).values;
        const double step = 0.5 * dt2;
        total += step * cell * (rc.cwiseAbs().sum() + rm.cwiseAbs().sum());
    }
    return total;
}

} // namespace cnslab
