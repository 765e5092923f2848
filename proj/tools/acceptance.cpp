#include "scenarios.hpp"

#include <cnslab/runtime.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace cnslab;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string fmt(const char* f, auto... xs)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, xs...);
    return buf;
}

double spread(const std::vector<double>& v)
{
    return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
}

double sym_ratio(double a, double b) { return std::max(a / b, b / a); }

FluidLaw fluid()
{
    FluidLaw law;
    law.mu = 1.0;
    law.lambda = 0.5;
    law.mu_slope = 0.3;
    law.lambda_slope = -0.2;
    law.pressure_slope = 1.0;
    law.gamma = 1.4;
    return law;
}

VectorField lame_velocity(const Grid& g, double amp)
{
    VectorField u(g);
    for (int n = 0; n < g.size(); ++n) {
        const double x = g.x(n, 0), y = g.x(n, 1);
        u.comp(0)[n] = amp * std::sin(M_PI * x) * std::sin(2 * M_PI * y);
        u.comp(1)[n] = amp * std::sin(2 * M_PI * x) * std::sin(M_PI * y) * (1.0 + x);
    }
    return u;
}

ScalarField smooth_random(const Grid& g, std::mt19937& gen, int kmax = 4)
{
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    std::vector<std::array<double, 3>> terms;
    for (int k1 = 0; k1 <= kmax; ++k1)
        for (int k2 = 0; k2 <= kmax; ++k2)
            terms.push_back({double(k1), double(k2), c(gen) / (1.0 + k1 * k1 + k2 * k2)});
    return sample(g, [&](auto x) {
        double v = 0.0;
        for (auto& t : terms)
            v += t[2] * std::cos(M_PI * t[0] * x[0]) * std::cos(M_PI * t[1] * x[1]);
        return v;
    });
}

struct IdentityLog {
    double density = 0.0, mass = 0.0, flow = 0.0;
    int runs = 0;
    void add(const IterationReport& r)
    {
        density = std::max(density, r.density_identity_error);
        mass = std::max(mass, r.mass_error);
        flow = std::max(flow, r.flow_identity_error);
        ++runs;
    }
};

Outcome ac1()
{
    Timer t;
    cli::Scenario sc;
    sc.name = "ac1";
    sc.kind = "symbol_check";
    sc.seed = 12;
    sc.samples = 1000;
    const cli::RunReport r = cli::run_scenario(sc);
    const double s = t.seconds();
    const double viol = r.summary.at("violations"), id = r.summary.at("d2_identity_error");
    return {viol == 0.0 && id <= 1e-12 && s < 1.0,
            fmt("1000 samples d in {2,3}: violations %g (need 0), d=2 identity rel err %.2e (<= 1e-12), %.3fs (< 1s)",
                viol, id, s),
            s};
}

Outcome ac2()
{
    Timer t;
    const std::vector<double> ratios{-0.5, 0.0, 1.0, 5.0};
    std::vector<double> c[2];
    for (int k = 0; k < 2; ++k) {
        const Grid g = Grid::square(16 << k);
        const VectorField u0 = lame_velocity(g, 1.0);
        const Vec force = lame_velocity(g, 2.0).values;
        for (double m : ratios) {
            auto r = heat_maxreg_solve(assemble_lame(g, {1.0, m}), 1.0, u0,
                                       [&](double s) -> Vec { return std::exp(-s) * force; }, 1.0, 64);
            c[k].push_back(r.constants.ratio.value_or(0.0));
        }
    }
    double dims = 0.0;
    for (size_t i = 0; i < ratios.size(); ++i)
        dims = std::max(dims, sym_ratio(c[0][i], c[1][i]));
    const double s = t.seconds();
    const double over = spread(c[0]);
    return {over <= 3.0 && dims <= 2.0 && s < 60.0,
            fmt("C_meas over mu'/mu in {-0.5,0,1,5} on 16^2: %.3f..%.3f, spread %.3f (<= 3); worst 16^2/32^2 ratio %.3f "
                "(<= 2); %.1fs (< 60s)",
                *std::min_element(c[0].begin(), c[0].end()), *std::max_element(c[0].begin(), c[0].end()), over, dims,
                s),
            s};
}

Outcome ac3()
{
    Timer t;
    std::ostringstream d;
    bool ok = true;
    for (int n : {16, 32}) {
        const Grid g = Grid::square(n);
        const CoupledOperator a = assemble_coupled(g, {1.0, 0.0, 1.0});
        const SpectralBound sb = spectral_bound(a);
        const LinCNSState init = random_smooth_state(a, 11);
        const LinCNSResult r = solve_lcns(a, init, nullptr, 12.0, 96, Strategy::duhamel);
        const DecayFit fit = decay_measure(g, r.trajectory);
        ok = ok && sb.c > 0.0 && fit.rate >= 0.9 * sb.c;
        d << fmt("%d^2: c = %.4g, fitted rate %.4g (>= 0.9c = %.4g); ", n, sb.c, fit.rate, 0.9 * sb.c);
    }
    const double s = t.seconds();
    d << fmt("%.1fs (< 120s)", s);
    return {ok && s < 120.0, d.str(), s};
}

Outcome ac4()
{
    Timer t;
    const Grid g = Grid::square(12);
    std::mt19937 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const double mu = 0.5 + u(gen), mp = -0.4 * mu + 2.0 * u(gen), ps = 0.5 + u(gen);
        const CoupledOperator a = assemble_coupled(g, {mu, mp, ps});
        const LinCNSState init = random_smooth_state(a, 100 + k);
        Forcing f;
        if (k % 2) {
            const Vec x = random_smooth_state(a, 200 + k, 0.5).pack();
            f = [x](double s) -> Vec { return std::cos(3.0 * s) * x; };
        }
        // midpoint-sampled forcing makes Duhamel second order in dt; refine it onto the same nodes
        const int refine = f ? 32 : 1;
        const auto dr = solve_lcns(a, init, f, 1.0, 32 * refine, Strategy::duhamel);
        const auto kr = solve_lcns(a, init, f, 1.0, 32, Strategy::kshift);
        double diff = 0.0, scale = 0.0;
        for (size_t i = 0; i < kr.trajectory.states.size(); ++i) {
            const Vec& x = dr.trajectory.states[i * refine];
            diff = std::max(diff, (x - kr.trajectory.states[i]).cwiseAbs().maxCoeff());
            scale = std::max(scale, x.cwiseAbs().maxCoeff());
        }
        worst = std::max(worst, diff / scale);
    }
    const double s = t.seconds();
    return {worst <= 1e-6 && s < 120.0,
            fmt("20 random instances on 12^2 (10 with cos(3t) forcing, Duhamel on 32x finer steps): worst relative discrepancy %.2e (<= 1e-6); %.1fs (< 120s)",
                worst, s),
            s};
}

Outcome ac6()
{
    Timer t;
    double c[2];
    double integral[2];
    for (int k = 0; k < 2; ++k) {
        const Grid g({16 << k, 16 << k}, {1.0, 1.0});
        const CriticalNorm nrm(g);
        auto history = [&](double amp) {
            TrajectoryStore s(g);
            for (int i = 0; i <= 16; ++i) {
                const double tt = i / 16.0;
                VectorField u(g);
                for (int n = 0; n < g.size(); ++n) {
                    const double x = g.x(n, 0), y = g.x(n, 1), a = amp * std::exp(-tt);
                    u.comp(0)[n] = a * std::sin(M_PI * x) * std::sin(M_PI * y) * std::cos(M_PI * y + tt);
                    u.comp(1)[n] = a * std::sin(2 * M_PI * x) * std::sin(M_PI * y) * (1.0 + 0.5 * x);
                }
                s.append(tt, u);
            }
            return s;
        };
        const double unit = du_integral(history(1.0), nrm);
        const TrajectoryStore s = history(0.08 / unit);
        const NeumannReport r = neumann_bounds_check(s, nrm, 1.0);
        c[k] = r.constant;
        integral[k] = r.rhs;
    }
    const double s = t.seconds();
    const bool ok = integral[0] <= 0.1 && integral[1] <= 0.1 && c[0] <= 4.0 && c[1] <= 4.0 && sym_ratio(c[0], c[1]) <= 2.0;
    return {ok,
            fmt("int ||Du|| = %.3g / %.3g (<= 0.1); C_emp 16^2 %.3f, 32^2 %.3f (<= 4), ratio %.3f (<= 2); %.1fs", integral[0],
                integral[1], c[0], c[1], sym_ratio(c[0], c[1]), s),
            s};
}

Outcome ac7(IdentityLog& ids)
{
    Timer t;
    SolverConfig cfg;
    cfg.alpha = 1e-3;
    cfg.horizon = 4.0;
    cfg.steps = 64;
    const FluidLaw law = fluid();
    double constant[2] = {0.0, 0.0};
    std::ostringstream d;
    bool ok = true;
    for (int k = 0; k < 2; ++k) {
        const Grid g = Grid::square(16 << k);
        const GlobalData data = cli::detail::scaled_global_data(g, law, 0.5e-3, 7, 3);
        const LagrangianSolution sol = picard_global(data, law, cfg);
        const IterationReport& r = sol.report;
        ids.add(r);
        constant[k] = r.globalbound_constant.value_or(0.0);
        if (k == 0) {
            const double rate = r.decay_rate.value_or(0.0);
            ok = ok && r.converged && r.max_contraction() <= 0.5 && rate >= 0.8 * r.spectral_bound;
            d << fmt("16^2: converged %s in %d, max contraction from it. 2 %.2e (<= 0.5), decay %.4g (>= 0.8c = %.4g); ",
                     r.converged ? "yes" : "no", r.iterations, r.max_contraction(), rate, 0.8 * r.spectral_bound);
        } else {
            ok = ok && r.converged;
        }
    }
    const double s = t.seconds();
    const double ratio = sym_ratio(constant[0], constant[1]);
    ok = ok && ratio <= 2.0 && s < 600.0;
    d << fmt("bound constant 16^2 %.3f, 32^2 %.3f, ratio %.3f (<= 2); %.1fs (< 600s)", constant[0], constant[1], ratio, s);
    return {ok, d.str(), s};
}

Outcome ac8(IdentityLog& ids)
{
    Timer t;
    const Grid g = Grid::square(16);
    const FluidLaw law = fluid();
    const ScalarField rho0 = cli::detail::bump_field(g, 1.0, 0.5, 0.3);
    const CoupledOperator op = assemble_coupled(g, law.linear());
    const Vec u = random_smooth_state(op, 11).u.values;
    const double un = StateNorms(g).u(u);
    SolverConfig cfg;
    cfg.alpha = 0.5;
    cfg.radius = 0.1;
    cfg.horizon = 1.0;
    cfg.steps = 32;
    const LagrangianSolution sol =
        picard_local({rho0, VectorField(g, Vec(0.5 / un * u))}, law, cfg, LocalMode::general_density);
    const IterationReport& r = sol.report;
    ids.add(r);

    const CoefficientFields c{cli::detail::bump_field(g, 1.0, 0.3, 0.3), cli::detail::bump_field(g, 1.0, 0.2, 0.3),
                              cli::detail::bump_field(g, 0.5, -0.3, 0.3)};
    const VectorField u0 = random_smooth_state(op, 9).u, f = random_smooth_state(op, 4, 0.5).u;
    const VarcoefResult dr = solve_varcoef(c, f, u0, 1.0, 32, VarcoefMethod::direct);
    const VarcoefResult kr = solve_varcoef(c, f, u0, 1.0, 32, VarcoefMethod::continuity);
    double diff = 0.0, scale = 0.0;
    for (size_t i = 0; i < dr.trajectory.states.size(); ++i) {
        diff = std::max(diff, (dr.trajectory.states[i] - kr.trajectory.states[i]).norm());
        scale = std::max(scale, dr.trajectory.states[i].norm());
    }
    const double s = t.seconds();
    const bool ok = r.converged && r.min_density > 0.0 && diff / scale <= 1e-6 && s < 600.0;
    return {ok,
            fmt("rho0 = 1 + 0.5 bump on 16^2: converged %s in %d on T = %.4g, min rho %.4f (> 0); continuity vs direct "
                "%.2e (<= 1e-6); %.1fs (< 600s)",
                r.converged ? "yes" : "no", r.iterations, r.horizon, r.min_density, diff / scale, s),
            s};
}

Outcome ac9(IdentityLog& ids)
{
    Timer t;
    SolverConfig cfg;
    cfg.alpha = 1e-3;
    cfg.horizon = 1.0;
    const FluidLaw law = fluid();
    double res[2] = {0.0, 0.0}, corrupted = 0.0;
    for (int k = 0; k < 2; ++k) {
        const Grid g = Grid::square(16 << k);
        cfg.steps = 256 << k;
        const GlobalData data = cli::detail::scaled_global_data(g, law, 0.5e-3, 7, 3);
        const LagrangianSolution sol = picard_global(data, law, cfg);
        ids.add(sol.report);
        res[k] = eulerian_residual(sol);
        if (k == 1)
            corrupted = eulerian_residual(sol, 1.1);
    }
    const double s = t.seconds();
    const double drop = res[0] / res[1], infl = corrupted / res[1];
    return {drop >= 2.0 && infl >= 10.0,
            fmt("residual 16^2/256 steps %.3e, 32^2/512 steps %.3e, drop %.2fx (>= 2); 10%% corruption on 32^2 %.3e, "
                "%.1fx (>= 10); %.1fs",
                res[0], res[1], drop, corrupted, infl, s),
            s};
}

Outcome ac5(const IdentityLog& ids)
{
    const bool ok = ids.runs > 0 && ids.density <= 1e-14 && ids.mass <= 1e-13 && ids.flow <= 1e-10;
    return {ok,
            fmt("%d nonlinear runs: max |rho J - rho0|/rho0 %.2e (<= 1e-14), mass %.2e (<= 1e-13), |DX A - Id| %.2e "
                "(<= 1e-10)",
                ids.runs, ids.density, ids.mass, ids.flow),
            0.0};
}

Outcome ac10()
{
    Timer t;
    double prod[2] = {0.0, 0.0}, comp[2] = {0.0, 0.0}, recon = 0.0;
    for (int k = 0; k < 2; ++k) {
        const Grid g = Grid::square(32 << k);
        const DyadicFilterBank bank(g);
        const BesovParams bp{0.0, 2.0, 1.0, 2};
        std::mt19937 gen(21);
        for (int i = 0; i < 20; ++i) {
            const ScalarField u = smooth_random(g, gen), v = smooth_random(g, gen);
            prod[k] = std::max(prod[k], verify_product_estimate(u, v, 0.0, bp, bank).ratio);
            if (i == 0) {
                const std::vector<Vec> blocks = lp_blocks(u, bank);
                Vec sum = Vec::Zero(blocks.front().size());
                for (const auto& b : blocks)
                    sum += b;
                recon = std::max(recon, (bank.restrict_to_box(sum) - u.values).cwiseAbs().maxCoeff() /
                                            u.values.cwiseAbs().maxCoeff());
            }
        }
        const ScalarField z =
            sample(g, [](auto x) { return 0.05 * std::cos(M_PI * x[0]) * std::cos(2 * M_PI * x[1]); });
        comp[k] = verify_composition_estimate([](double v) { return std::pow(1.0 + v, 1.4) - 1.0; }, z, bp, bank).ratio;
    }
    double interp = 0.0;
    for (double a : {0.3, 7.0, 250.0})
        for (double theta : {0.25, 0.5, 0.8}) {
            Mat m = Mat::Zero(2, 2);
            m(0, 0) = a;
            m(1, 1) = 2.0 * a;
            const LinearOperator op(SpMat(m.sparseView()));
            Vec e = Vec::Zero(2);
            e[0] = 2.0;
            const double exact = std::pow(a, theta) * std::tgamma(1.0 - theta) * 2.0;
            interp = std::max(interp, std::abs(InterpolationNorm(op, theta).seminorm(e) - exact) / exact);
        }
    const double s = t.seconds();
    const double pr = sym_ratio(prod[0], prod[1]), cr = sym_ratio(comp[0], comp[1]);
    return {pr <= 2.0 && cr <= 2.0 && recon <= 1e-10 && interp <= 0.01,
            fmt("product constant 32/64 ratio %.3f, composition %.3f (<= 2); LP reconstruction %.2e (<= 1e-10); "
                "interpolation vs Gamma(1-theta) oracle %.2e (<= 1%%); %.1fs",
                pr, cr, recon, interp, s),
            s};
}

Outcome ac11()
{
    Timer t;
    const Grid g = Grid::square(32);
    const Partition a = build_partition(g, 0.25), b = build_partition(g, 0.125);
    const double residual = std::max(a.unity_residual, b.unity_residual);
    const double grad = b.grad_sup / a.grad_sup;
    auto field = [&](auto fn) {
        ScalarField f(g);
        for (int n = 0; n < g.size(); ++n)
            f.values[n] = fn(g.x(n, 0), g.x(n, 1));
        return f;
    };
    const CoefficientFields c{field([](double x, double) { return 1.0 + 0.03 * std::sin(2.0 * M_PI * x); }),
                              field([](double, double y) { return 1.0 + 0.03 * std::cos(2.0 * M_PI * y); }),
                              field([](double x, double y) { return 0.03 * std::sin(2.0 * M_PI * (x + y)); })};
    double delta = 0.0, margin = 0.0;
    std::string err;
    try {
        const DeltaReport r = choose_delta(c);
        delta = r.delta;
        margin = r.worst.back();
    } catch (const std::exception& e) {
        err = e.what();
    }
    const double s = t.seconds();
    return {residual <= 1e-12 && std::abs(grad - 2.0) <= 0.4 && err.empty(),
            fmt("unity residual %.2e (<= 1e-12); grad sup ratio across delta halving %.3f (2 +- 20%%); choose_delta on "
                "32^2 %s delta %.4g, margin %.4f (<= 0.05); %.1fs",
                residual, grad, err.empty() ? "terminated at" : ("failed: " + err).c_str(), delta, margin, s),
            s};
}

} // namespace

int main(int argc, char** argv)
{
    pin_blas_environment(argv);
    std::vector<int> only;
    for (int i = 1; i < argc; ++i)
        only.push_back(std::atoi(argv[i]));
    auto wanted = [&](int k) { return only.empty() || std::find(only.begin(), only.end(), k) != only.end(); };

    const char* names[] = {"",
                           "symbol ellipticity",
                           "Lame maximal-regularity uniformity",
                           "linearized spectral bound and decay",
                           "strategy equivalence",
                           "Lagrangian identities",
                           "Neumann smallness bounds",
                           "global small-data contraction",
                           "local well-posedness, general density",
                           "Eulerian-Lagrangian equivalence",
                           "Besov layer",
                           "partition layer"};
    IdentityLog ids;
    std::vector<std::pair<int, Outcome>> results;
    auto run = [&](int k, auto fn) {
        if (!wanted(k))
            return;
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what(), 0.0};
        }
        std::cout << "AC" << k << " " << (o.pass ? "PASS" : "FAIL") << " " << names[k] << ": " << o.detail << std::endl;
        results.emplace_back(k, o);
    };
    run(1, ac1);
    run(2, ac2);
    run(3, ac3);
    run(4, ac4);
    run(6, ac6);
    run(7, [&] { return ac7(ids); });
    run(8, [&] { return ac8(ids); });
    run(9, [&] { return ac9(ids); });
    run(5, [&] { return ac5(ids); });
    run(10, ac10);
    run(11, ac11);

    int failed = 0;
    for (const auto& [k, o] : results)
        failed += o.pass ? 0 : 1;
    std::cout << (failed ? "FAILED " : "ALL PASSED ") << results.size() - failed << "/" << results.size() << std::endl;
    return failed ? 1 : 0;
}
