#pragma once

#include "config.hpp"
#include "report.hpp"

#include <cnslab/solver.hpp>
#include <cnslab/varcoef.hpp>

#include <array>
#include <random>

namespace cnslab::cli {

inline const std::vector<std::string>& kinds()
{
    static const std::vector<std::string> k{"lame_spectrum", "linear_decay",  "global_small", "local_wellposed",
                                            "varcoef_solve", "besov_check", "symbol_check"};
    return k;
}

struct Scenario {
    std::string name;
    std::string kind;
    std::uint64_t seed = 0;
    int n = 16;
    int dim = 2;
    double length = 1.0;
    double p = 2.0;
    std::string output_dir = "out";
    std::vector<Format> formats{Format::csv, Format::json};

    // lame_spectrum, linear_decay
    double mu = 1.0;
    double mu_prime = 0.0;
    std::vector<double> angles{0.0, 0.5, 1.0, 1.4};
    std::vector<double> radii{1.0, 10.0, 100.0, 1000.0};

    // global_small, local_wellposed
    FluidLaw law;
    SolverConfig solver;
    double data_fraction = 0.5;   // data norm as a fraction of alpha
    LocalMode mode = LocalMode::general_density;
    bool eulerian = false;

    // data
    double amplitude = 1.0;
    int modes = 3;
    double bump_amplitude = 0.5;
    double bump_radius = 0.3;
    double velocity_level = 0.5;  // B^{d/p-1} norm of u0 in local runs

    // varcoef_solve
    double rho_bump = 0.3;
    double mu_bump = 0.2;
    double lambda_base = 0.5;
    double lambda_bump = -0.3;
    bool select_delta = true;
    double epsilon = 0.05;
    bool patch = false;

    // besov_check
    double s = 0.0;

    // symbol_check
    int samples = 1000;

    double horizon = 1.0;
    int steps = 32;
};

namespace detail {

inline void require(const Config& c, const std::vector<std::string>& keys, const std::string& kind)
{
    for (const auto& k : keys)
        if (!c.has(k))
            c.fail(k, "required for kind " + kind);
}

} // namespace detail

inline Scenario parse_scenario(const Config& c)
{
    Scenario sc;
    detail::require(c, {"name", "kind", "grid.n"}, "any");
    sc.name = c.string("name");
    if (sc.name.empty() || sc.name.find_first_of("/\\ ") != std::string::npos)
        c.fail("name", "must be a non-empty file-name-safe string");
    sc.kind = c.string("kind");
    if (std::find(kinds().begin(), kinds().end(), sc.kind) == kinds().end())
        c.fail("kind", "unknown kind '" + sc.kind + "'");
    const double seed = c.number("seed", 0.0);
    if (seed < 0.0 || seed != std::floor(seed) || seed > 9007199254740992.0)
        c.fail("seed", "must be a non-negative integer");
    sc.seed = static_cast<std::uint64_t>(seed);

    sc.n = c.integer("grid.n");
    if (sc.n < 4 || sc.n > 256)
        c.fail("grid.n", "must be in [4, 256]");
    sc.dim = c.integer("grid.dim", 2);
    if (sc.dim != 2 && sc.dim != 3)
        c.fail("grid.dim", "must be 2 or 3");
    sc.length = c.number("grid.length", 1.0);
    if (!(sc.length > 0.0))
        c.fail("grid.length", "must be > 0");
    sc.p = c.number("besov.p", 2.0);
    if (!(sc.p > 1.0))
        c.fail("besov.p", "p must be in (1, inf) (Besov admissibility of the maximal regularity setting)");
    sc.s = c.number("besov.s", sc.dim / sc.p - 1.0);

    sc.output_dir = c.string("output.dir", "out");
    if (c.has("output.formats")) {
        sc.formats.clear();
        for (const auto& f : c.list("output.formats")) {
            if (f == "csv")
                sc.formats.push_back(Format::csv);
            else if (f == "json")
                sc.formats.push_back(Format::json);
            else
                c.fail("output.formats", "unknown format '" + f + "'");
        }
    }

    sc.horizon = c.number("solver.horizon", sc.kind == "global_small" || sc.kind == "linear_decay" ? 4.0 : 1.0);
    if (!(sc.horizon > 0.0))
        c.fail("solver.horizon", "must be > 0");
    sc.steps = c.integer("solver.steps", sc.kind == "global_small" || sc.kind == "linear_decay" ? 64 : 32);
    if (sc.steps < 16)
        c.fail("solver.steps", "must be >= 16");

    sc.amplitude = c.number("data.amplitude", 1.0);
    sc.modes = c.integer("data.modes", 3);
    if (sc.modes < 1)
        c.fail("data.modes", "must be >= 1");

    if (sc.kind == "lame_spectrum" || sc.kind == "linear_decay") {
        detail::require(c, {"coefficients.mu"}, sc.kind);
        sc.mu = c.number("coefficients.mu");
        sc.mu_prime = c.number("coefficients.mu_prime", 0.0);
        if (!(sc.mu > 0.0) || !(sc.mu + sc.mu_prime > 0.0))
            c.fail("coefficients", "need mu > 0 and mu + mu_prime > 0");
        if (c.has("scan.angles"))
            sc.angles = c.numbers("scan.angles");
        if (c.has("scan.radii"))
            sc.radii = c.numbers("scan.radii");
        sc.law.pressure_slope = c.number("coefficients.pressure_slope", 1.0);
        if (!(sc.law.pressure_slope > 0.0))
            c.fail("coefficients.pressure_slope", "must be > 0");
    }

    if (sc.kind == "global_small" || sc.kind == "local_wellposed") {
        detail::require(c, {"coefficients.mu", "coefficients.lambda", "solver.alpha"}, sc.kind);
        sc.law.mu = c.number("coefficients.mu");
        sc.law.lambda = c.number("coefficients.lambda");
        sc.law.mu_slope = c.number("coefficients.mu_slope", 0.0);
        sc.law.lambda_slope = c.number("coefficients.lambda_slope", 0.0);
        sc.law.pressure_slope = c.number("coefficients.pressure_slope", 1.0);
        sc.law.gamma = c.number("coefficients.gamma", 1.4);
        try {
            sc.law.validate();
        } catch (const std::invalid_argument& e) {
            c.fail("coefficients", e.what());
        }
        sc.solver.alpha = c.number("solver.alpha");
        sc.solver.radius = c.number("solver.radius", 0.0);
        sc.solver.horizon = sc.horizon;
        sc.solver.steps = sc.steps;
        sc.solver.epsilon_du = c.number("solver.epsilon_du", 0.1);
        sc.solver.max_picard = c.integer("solver.max_picard", 30);
        sc.solver.contraction_tol = c.number("solver.tolerance", 1e-10);
        try {
            sc.solver.validate();
        } catch (const std::invalid_argument& e) {
            c.fail("solver", e.what());
        }
        sc.data_fraction = c.number("data.fraction", 0.5);
        if (!(sc.data_fraction >= 0.0))
            c.fail("data.fraction", "must be >= 0");
        sc.eulerian = c.boolean("solver.eulerian", false);
        const std::string mode = c.string("solver.mode", "general");
        if (mode == "general")
            sc.mode = LocalMode::general_density;
        else if (mode == "small")
            sc.mode = LocalMode::small_density_variation;
        else
            c.fail("solver.mode", "must be \"general\" or \"small\"");
        sc.bump_amplitude = c.number("data.bump_amplitude", 0.5);
        sc.bump_radius = c.number("data.bump_radius", 0.3);
        sc.velocity_level = c.number("data.velocity_level", 0.5);
        if (sc.kind == "local_wellposed") {
            detail::require(c, {"data.bump_amplitude"}, sc.kind);
            if (!(sc.bump_amplitude > -1.0))
                c.fail("data.bump_amplitude", "must be > -1 so that rho0 stays positive");
            if (!(sc.bump_radius > 0.0))
                c.fail("data.bump_radius", "must be > 0");
        }
    }

    if (sc.kind == "varcoef_solve") {
        sc.rho_bump = c.number("coefficients.rho_bump", 0.3);
        sc.mu_bump = c.number("coefficients.mu_bump", 0.2);
        sc.lambda_base = c.number("coefficients.lambda", 0.5);
        sc.lambda_bump = c.number("coefficients.lambda_bump", -0.3);
        sc.bump_radius = c.number("data.bump_radius", 0.3);
        sc.select_delta = c.boolean("solver.select_delta", true);
        sc.epsilon = c.number("solver.epsilon", 0.05);
        if (!(sc.epsilon > 0.0 && sc.epsilon < 1.0))
            c.fail("solver.epsilon", "must be in (0, 1)");
        sc.patch = c.boolean("solver.patch_estimate", false);
    }

    if (sc.kind == "symbol_check") {
        sc.samples = c.integer("symbol.samples", 1000);
        if (sc.samples < 1)
            c.fail("symbol.samples", "must be >= 1");
    }

    auto extra = c.unused();
    if (!extra.empty())
        c.fail(extra.front(), "unknown key");
    return sc;
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(Config::load(path)); }

namespace detail {

inline Grid grid_of(const Scenario& sc) { return Grid::square(sc.n, sc.length, sc.dim); }

inline ScalarField bump_field(const Grid& g, double base, double amp, double radius)
{
    ScalarField f(g);
    for (int n = 0; n < g.size(); ++n) {
        double r2 = 0.0;
        for (int a = 0; a < g.d; ++a)
            r2 += std::pow(g.x(n, a) - 0.5 * g.lengths[a], 2);
        const double r = std::sqrt(r2) / radius;
        f.values[n] = base + (r < 1.0 ? amp * std::pow(std::cos(0.5 * M_PI * r), 4) : 0.0);
    }
    return f;
}

inline unsigned seed32(std::uint64_t s) { return static_cast<unsigned>(s ^ (s >> 32)); }

inline void identity_checks(RunReport& r, const IterationReport& it)
{
    r.summary["density_identity_error"] = it.density_identity_error;
    r.summary["mass_error"] = it.mass_error;
    r.summary["flow_identity_error"] = it.flow_identity_error;
    r.summary["min_density"] = it.min_density;
    r.check("density_identity", it.density_identity_error, "<=", 1e-14);
    r.check("mass_conservation", it.mass_error, "<=", 1e-13);
    r.check("flow_identity", it.flow_identity_error, "<=", 1e-10);
    r.check("min_density_positive", it.min_density, ">", 0.0);
}

inline void solution_rows(RunReport& r, const LagrangianSolution& sol)
{
    r.columns = {"time", "velocity_l2", "density_min", "density_max", "contraction"};
    const double q = sol.report.max_contraction();
    for (size_t i = 0; i < sol.times.size(); ++i) {
        const Vec v = sol.velocity(i);
        r.rows.push_back({sol.times[i] / sol.time_scale, l2(sol.grid, v), sol.density[i].values.minCoeff(),
                          sol.density[i].values.maxCoeff(), q});
    }
}

inline RunReport run_lame_spectrum(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const LinearOperator l = assemble_lame(g, {sc.mu, sc.mu_prime});
    const SectorReport rep = sectoriality_scan(l, sc.angles, sc.radii);
    r.summary["spectral_abscissa"] = rep.spectral_abscissa;
    r.summary["sector_angle"] = rep.sector_angle;
    r.summary["sector_sup_bound"] = rep.sup_bound;
    r.summary["excluded_points"] = static_cast<double>(rep.excluded.size());

    const CoupledOperator op = assemble_coupled(g, {1.0, 0.0, 1.0});
    const VectorField u0(g, Vec(random_smooth_state(op, seed32(sc.seed), sc.amplitude, sc.modes).u.values));
    const HeatResult h = heat_maxreg_solve(l, sc.mu, u0, nullptr, sc.horizon, sc.steps);
    const BesovParams bp{g.d / sc.p - 1.0, sc.p, 1.0, g.d};
    const DyadicFilterBank odd(g, Extension::odd_reflection);
    r.columns = {"time", "velocity_besov"};
    for (size_t i = 0; i < h.trajectory.times.size(); ++i)
        r.rows.push_back({h.trajectory.times[i], velocity_besov(g, h.trajectory.states[i], bp, odd)});
    const double ratio = h.constants.ratio.value_or(std::numeric_limits<double>::quiet_NaN());
    r.summary["maxreg_constant"] = ratio;
    r.check("spectral_abscissa_positive", rep.spectral_abscissa, ">", 0.0);
    r.check("sector_bound_finite", rep.sup_bound, "<", std::numeric_limits<double>::infinity());
    r.check("maxreg_constant_finite", ratio, "<", std::numeric_limits<double>::infinity());
    return r;
}

inline RunReport run_linear_decay(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const CoupledOperator op = assemble_coupled(g, {sc.mu, sc.mu_prime, sc.law.pressure_slope});
    const SpectralBound sb = spectral_bound(op);
    const LinCNSState init = random_smooth_state(op, seed32(sc.seed), sc.amplitude, sc.modes);
    const LinCNSResult res = solve_lcns(op, init, nullptr, sc.horizon, sc.steps, Strategy::duhamel);
    const StateNorms sn(g, BesovParams{g.d / sc.p - 1.0, sc.p, 1.0, g.d});
    r.columns = {"time", "density_norm", "velocity_norm", "state_norm"};
    const int n = g.size();
    for (size_t i = 0; i < res.trajectory.times.size(); ++i) {
        const Vec& x = res.trajectory.states[i];
        const double a = sn.a(x.head(n)), u = sn.u(x.tail(g.d * n));
        r.rows.push_back({res.trajectory.times[i], a, u, a + u});
    }
    const DecayFit fit = decay_measure(g, res.trajectory, sn.bp);
    r.summary["spectral_bound"] = sb.c;
    r.summary["decay_rate"] = fit.rate;
    r.summary["decay_constant"] = fit.constant;
    r.check("spectral_bound_positive", sb.c, ">", 0.0);
    r.check("decay_rate_vs_bound", fit.rate, ">=", 0.9 * sb.c);
    return r;
}

inline GlobalData scaled_global_data(const Grid& g, const FluidLaw& law, double level, unsigned seed, int modes)
{
    const CoupledOperator op = assemble_coupled(g, law.linear());
    const LinCNSState s = random_smooth_state(op, seed, 1.0, modes);
    const StateNorms sn(g);
    const double k = level / (sn.a(s.a.values) + sn.u(s.u.values));
    return {ScalarField(g, k * s.a.values), VectorField(g, Vec(k * s.u.values))};
}

inline RunReport run_global_small(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const GlobalData data =
        scaled_global_data(g, sc.law, sc.data_fraction * sc.solver.alpha, seed32(sc.seed), sc.modes);
    const LagrangianSolution sol = picard_global(data, sc.law, sc.solver);
    const IterationReport& it = sol.report;
    solution_rows(r, sol);
    r.summary["iterations"] = it.iterations;
    r.summary["max_contraction"] = it.max_contraction();
    r.summary["spectral_bound"] = it.spectral_bound;
    r.summary["decay_rate"] = it.decay_rate.value_or(std::numeric_limits<double>::quiet_NaN());
    r.summary["globalbound_constant"] = it.globalbound_constant.value_or(std::numeric_limits<double>::quiet_NaN());
    r.summary["radius"] = it.radius;
    r.summary["stayed_in_ball"] = it.stayed_in_ball ? 1.0 : 0.0;
    r.check("converged", it.converged ? 1.0 : 0.0, "==", 1.0);
    r.check("contraction_from_iteration_2", it.max_contraction(), "<=", 0.5);
    if (it.decay_rate)
        r.check("decay_rate_vs_bound", *it.decay_rate, ">=", 0.8 * it.spectral_bound);
    identity_checks(r, it);
    if (sc.eulerian) {
        r.summary["eulerian_residual"] = eulerian_residual(sol);
    }
    return r;
}

inline RunReport run_local_wellposed(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const ScalarField rho0 = bump_field(g, 1.0, sc.bump_amplitude, sc.bump_radius * sc.length);
    const CoupledOperator op = assemble_coupled(g, sc.law.linear());
    const Vec u = random_smooth_state(op, seed32(sc.seed), 1.0, sc.modes).u.values;
    const DyadicFilterBank odd(g, Extension::odd_reflection);
    const double un = besov_norm(VectorField(g, u), BesovParams{g.d / 2.0 - 1.0, 2.0, 1.0, g.d}, odd);
    const LocalData data{rho0, VectorField(g, Vec(sc.velocity_level / un * u))};
    const LagrangianSolution sol = picard_local(data, sc.law, sc.solver, sc.mode);
    const IterationReport& it = sol.report;
    solution_rows(r, sol);
    r.summary["iterations"] = it.iterations;
    r.summary["horizon"] = it.horizon;
    r.summary["max_contraction"] = it.max_contraction();
    r.summary["radius"] = it.radius;
    r.summary["stayed_in_ball"] = it.stayed_in_ball ? 1.0 : 0.0;
    r.check("converged", it.converged ? 1.0 : 0.0, "==", 1.0);
    identity_checks(r, it);
    return r;
}

inline RunReport run_varcoef_solve(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const double rad = sc.bump_radius * sc.length;
    const CoefficientFields c{bump_field(g, 1.0, sc.rho_bump, rad), bump_field(g, 1.0, sc.mu_bump, rad),
                              bump_field(g, sc.lambda_base, sc.lambda_bump, rad)};
    c.validate();
    const CoupledOperator op = assemble_coupled(g, {1.0, 1.0, 1.0});
    const VectorField u0 = random_smooth_state(op, seed32(sc.seed), sc.amplitude, sc.modes).u;
    const VectorField f = random_smooth_state(op, seed32(sc.seed) + 1, 0.5 * sc.amplitude, sc.modes).u;
    const VarcoefResult d = solve_varcoef(c, f, u0, sc.horizon, sc.steps, VarcoefMethod::direct);
    const VarcoefResult k = solve_varcoef(c, f, u0, sc.horizon, sc.steps, VarcoefMethod::continuity);
    r.columns = {"time", "velocity_l2", "method_difference"};
    double diff = 0.0, scale = 0.0;
    for (size_t i = 0; i < d.trajectory.times.size(); ++i) {
        const double e = (d.trajectory.states[i] - k.trajectory.states[i]).norm();
        diff = std::max(diff, e);
        scale = std::max(scale, d.trajectory.states[i].norm());
        r.rows.push_back({d.trajectory.times[i], l2(g, d.trajectory.states[i]), e});
    }
    const double rel = scale > 0.0 ? diff / scale : 0.0;
    r.summary["method_difference"] = rel;
    r.summary["continuity_steps"] = static_cast<double>(k.thetas.size());
    r.summary["inner_iterations"] = k.inner_iterations;
    r.summary["theta_halvings"] = k.halvings;
    double worst = 0.0;
    for (double q : k.contractions)
        worst = std::max(worst, q);
    r.summary["inner_contraction"] = worst;
    r.check("continuity_matches_direct", rel, "<=", 1e-6);
    if (sc.select_delta) {
        const DeltaReport dr = choose_delta(c, sc.epsilon, sc.p);
        r.summary["delta"] = dr.delta;
        r.summary["delta_margin"] = dr.worst.back();
        r.check("delta_margin", dr.worst.back(), "<=", sc.epsilon);
        if (sc.patch) {
            const PatchReport pr = patch_estimate(c, build_partition(g, dr.delta), d.trajectory, &f);
            r.summary["patch_ratio"] = pr.ratio;
            r.summary["patch_exponent"] = pr.exponent;
            r.summary["patch_constant"] = pr.constant;
            r.summary["patch_equivalence_lo"] = pr.equivalence_lo;
            r.summary["patch_equivalence_hi"] = pr.equivalence_hi;
            r.check("patch_ratio_finite", pr.ratio, "<", std::numeric_limits<double>::infinity());
        }
    }
    return r;
}

inline RunReport run_besov_check(const Scenario& sc, RunReport r)
{
    const Grid g = grid_of(sc);
    const BesovParams bp{sc.s, sc.p, 1.0, g.d};
    const DyadicFilterBank even(g, Extension::even_reflection);
    const CoupledOperator op = assemble_coupled(g, {1.0, 0.0, 1.0});
    const ScalarField u = random_smooth_state(op, seed32(sc.seed), sc.amplitude, sc.modes).a;
    const ScalarField v = random_smooth_state(op, seed32(sc.seed) + 1, sc.amplitude, sc.modes).a;
    const std::vector<Vec> blocks = lp_blocks(u, even);
    Vec sum = Vec::Zero(blocks.front().size());
    for (const auto& b : blocks)
        sum += b;
    const double recon = (even.restrict_to_box(sum) - u.values).cwiseAbs().maxCoeff() /
                         std::max(1.0, u.values.cwiseAbs().maxCoeff());
    const EstimateRatio prod = verify_product_estimate(u, v, sc.s, bp, even);
    const EstimateRatio comp =
        verify_composition_estimate([](double z) { return std::sin(z) + z * z; }, v, bp, even);
    r.summary["reconstruction_residual"] = recon;
    r.summary["product_ratio"] = prod.ratio;
    r.summary["composition_ratio"] = comp.ratio;
    r.summary["norm"] = besov_norm(u, bp, even);
    r.check("reconstruction", recon, "<=", 1e-10);
    r.check("product_ratio_finite", prod.ratio, "<", std::numeric_limits<double>::infinity());
    r.check("composition_ratio_finite", comp.ratio, "<", std::numeric_limits<double>::infinity());
    return r;
}

inline RunReport run_symbol_check(const Scenario& sc, RunReport r)
{
    std::mt19937_64 gen(sc.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd;
    int violations = 0;
    double identity = 0.0, lower = std::numeric_limits<double>::infinity(), upper = lower;
    for (int t = 0; t < sc.samples; ++t) {
        const int d = 2 + t % 2;
        const double mu = 0.05 + 5.0 * u(gen);
        const double delta = 0.01 + 0.98 * u(gen);
        const double re = -delta * mu + 10.0 * u(gen) * u(gen);
        const LameCoefficients c{mu, cplx(re, 10.0 * nd(gen))};
        std::vector<double> xi(d);
        double r2 = 0.0;
        for (double& x : xi) {
            x = nd(gen);
            r2 += x * x;
        }
        const double scale = std::exp(4.0 * (u(gen) - 0.5));
        for (double& x : xi)
            x *= scale / std::sqrt(r2);
        const SymbolReport rep = symbol_bounds_check(c, {xi}, delta);
        violations += rep.violations;
        lower = std::min(lower, rep.lower_margin);
        upper = std::min(upper, rep.upper_margin);
        if (d == 2) {
            const cplx det = symbol_det({xi, delta}, c);
            const cplx exact = c.mu * (c.mu + c.z) * std::pow(scale, 4);
            identity = std::max(identity, std::abs(det - exact) / std::abs(exact));
        }
    }
    r.summary["samples"] = sc.samples;
    r.summary["violations"] = violations;
    r.summary["lower_margin"] = lower;
    r.summary["upper_margin"] = upper;
    r.summary["d2_identity_error"] = identity;
    r.check("bound_violations", violations, "==", 0.0);
    r.check("d2_determinant_identity", identity, "<=", 1e-12);
    return r;
}

} // namespace detail

inline RunReport run_scenario(const Scenario& sc)
{
    RunReport r;
    r.scenario = sc.name;
    r.kind = sc.kind;
    r.seed = sc.seed;
    r.summary["grid_n"] = sc.n;
    r.summary["grid_dim"] = sc.dim;
    if (sc.kind == "lame_spectrum")
        return detail::run_lame_spectrum(sc, std::move(r));
    if (sc.kind == "linear_decay")
        return detail::run_linear_decay(sc, std::move(r));
    if (sc.kind == "global_small")
        return detail::run_global_small(sc, std::move(r));
    if (sc.kind == "local_wellposed")
        return detail::run_local_wellposed(sc, std::move(r));
    if (sc.kind == "varcoef_solve")
        return detail::run_varcoef_solve(sc, std::move(r));
    if (sc.kind == "besov_check")
        return detail::run_besov_check(sc, std::move(r));
    if (sc.kind == "symbol_check")
        return detail::run_symbol_check(sc, std::move(r));
    throw std::invalid_argument("unknown kind " + sc.kind);
}

inline std::vector<std::string> golden_keys(const std::string& kind)
{
    if (kind == "lame_spectrum")
        return {"spectral_abscissa", "sector_sup_bound", "maxreg_constant"};
    if (kind == "linear_decay")
        return {"spectral_bound", "decay_rate"};
    if (kind == "global_small")
        return {"iterations", "spectral_bound", "decay_rate", "globalbound_constant"};
    if (kind == "local_wellposed")
        return {"iterations", "horizon", "min_density"};
    if (kind == "varcoef_solve")
        return {"delta", "inner_iterations"};
    if (kind == "besov_check")
        return {"norm", "product_ratio", "composition_ratio"};
    if (kind == "symbol_check")
        return {"violations", "lower_margin", "upper_margin"};
    return {};
}

// frozen values a report is compared against; tolerances are relative
inline void apply_goldens(RunReport& r, const nlohmann::ordered_json& golden)
{
    for (const auto& [key, g] : golden.at("values").items()) {
        auto it = r.summary.find(key);
        if (it == r.summary.end())
            throw std::invalid_argument("golden " + key + " is not a summary field of " + r.scenario);
        const double ref = g.at("value").get<double>(), tol = g.at("rel_tol").get<double>();
        const double got = it->second;
        const bool pass = std::abs(got - ref) <= tol * std::max(std::abs(ref), 1e-300) || got == ref;
        r.goldens[key] = {ref, tol, got, pass};
    }
}

inline nlohmann::ordered_json make_golden(const RunReport& r, const std::vector<std::string>& keys, double rel_tol)
{
    nlohmann::ordered_json j;
    j["scenario"] = r.scenario;
    j["schema"] = kSchema;
    nlohmann::ordered_json v = nlohmann::ordered_json::object();
    for (const auto& k : keys) {
        auto it = r.summary.find(k);
        if (it != r.summary.end() && std::isfinite(it->second))
            v[k] = {{"value", it->second}, {"rel_tol", rel_tol}};
    }
    j["values"] = std::move(v);
    return j;
}

} // namespace cnslab::cli
