#include <cnslab/lincns.hpp>
#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

using namespace cnslab;

namespace {

const Grid& grid16()
{
    static const Grid g({16, 16}, {1.0, 1.0});
    return g;
}

const CoupledOperator& op16()
{
    static const CoupledOperator a = assemble_coupled(grid16(), {1.0, 0.0, 1.0});
    return a;
}

double max_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

double traj_discrepancy(const Trajectory& x, const Trajectory& y)
{
    double diff = 0.0, scale = 0.0;
    for (size_t i = 0; i < x.states.size(); ++i) {
        diff = std::max(diff, max_abs(x.states[i] - y.states[i]));
        scale = std::max(scale, max_abs(x.states[i]));
    }
    return diff / scale;
}

} // namespace

TEST(LinCNS, BlockDefinition)
{
    const auto& a = op16();
    const Grid& g = grid16();
    const int n = g.size();
    ScalarField s = sample(g, [](auto x) { return std::cos(M_PI * x[0]) * std::cos(2 * M_PI * x[1]); });
    s.values = a.project(s.values);
    LinCNSState st(s, VectorField(g));
    Vec y = a.apply(st.pack());
    EXPECT_EQ(max_abs(y.head(n)), 0.0);
    EXPECT_LE(max_abs(y.tail(2 * n) - gradient(s).values), 1e-12);

    LinCNSState sv(g);
    sv.u.comp(0) = sample(g, [](auto x) { return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]); }).values;
    sv.u.comp(1) = sample(g, [](auto x) { return std::sin(2 * M_PI * x[0]) * std::sin(M_PI * x[1]); }).values;
    y = a.apply(sv.pack());
    EXPECT_LE(max_abs(y.head(n) - a.project(divergence(sv.u).values)), 1e-12);
    EXPECT_LE(max_abs(y.tail(2 * n) - a.lame.apply(sv.u.values)), 1e-12);
}

TEST(LinCNS, GradientDivergenceSkewAdjoint)
{
    // -div is the transpose of the reflective gradient away from the boundary layer;
    // the pairing defect there shrinks with h
    std::vector<double> defect;
    for (int m : {16, 32, 64}) {
        Grid g({m, m}, {1.0, 1.0});
        ScalarField a = sample(g, [](auto x) { return std::cos(M_PI * x[0]) * std::exp(x[1]); });
        VectorField u(g);
        u.comp(0) = sample(g, [](auto x) { return std::sin(M_PI * x[0]) * std::sin(3 * x[1]); }).values;
        u.comp(1) = sample(g, [](auto x) { return x[0] * std::sin(2 * M_PI * x[1]); }).values;
        const double h2 = g.cell_volume();
        defect.push_back(std::abs(h2 * gradient(a).values.dot(u.values) + h2 * a.values.dot(divergence(u).values)));
        SpMat diff = SpMat(gradient_matrix(g).transpose()) + divergence_matrix(g);
        for (int k = 0; k < diff.outerSize(); ++k)
            for (SpMat::InnerIterator it(diff, k); it; ++it)
                if (std::abs(it.value()) > 1e-12) {
                    auto c = g.coords(static_cast<int>(it.row()));
                    bool edge = false;
                    for (int ax = 0; ax < 2; ++ax)
                        edge = edge || c[ax] == 0 || c[ax] == m - 1;
                    EXPECT_TRUE(edge);
                }
    }
    EXPECT_LT(defect[1], 0.6 * defect[0]);
    EXPECT_LT(defect[2], 0.6 * defect[1]);
}

TEST(LinCNS, NullVectorsOfConstantDensity)
{
    const auto& a = op16();
    const int n = grid16().size();
    Vec one = Vec::Zero(3 * n);
    one.head(n).setOnes();
    EXPECT_LE(max_abs(a.apply(one)), 1e-12);
    Vec w = Vec::Zero(3 * n);
    w.head(n) = a.mean_weights;
    Vec left = a.full.matrix().transpose() * w;
    EXPECT_LE(max_abs(left), 1e-12 * a.mean_weights.maxCoeff());
}

TEST(LinCNS, SpectralBoundPositive)
{
    auto sb = spectral_bound(op16());
    EXPECT_TRUE(sb.positive);
    EXPECT_GT(sb.c, 0.0);
    EXPECT_LE(sb.dropped, 1e-9);
    // c is at most the smallest Lame eigenvalue attached to the coupled subspace
    EXPECT_LT(sb.c, op16().lame.eigenvalues().real().minCoeff());
}

TEST(LinCNS, AblationRemovesDecayOfDensity)
{
    auto dec = assemble_coupled(grid16(), {1.0, 0.0, 1.0}, false);
    const CVec& ev = dec.full.eigenvalues();
    const int n = grid16().size();
    int zeros = 0;
    for (auto v : ev)
        if (std::abs(v) <= 1e-9)
            ++zeros;
    EXPECT_EQ(zeros, n);
    auto sb = spectral_bound(dec);
    EXPECT_FALSE(sb.positive);
    EXPECT_LE(std::abs(sb.c), 1e-9);
}

TEST(LinCNS, NormalizationRescalesTime)
{
    LinCNSCoefficients c{2.0, 1.0, 4.0};
    auto nrm = c.normalized();
    EXPECT_DOUBLE_EQ(nrm.mu, 1.0);
    EXPECT_DOUBLE_EQ(nrm.mu_prime, 0.5);
    EXPECT_DOUBLE_EQ(nrm.pressure_slope, 1.0);
    EXPECT_DOUBLE_EQ(c.time_scale(), 2.0);
    EXPECT_THROW(assemble_coupled(grid16(), {1.0, 0.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(assemble_coupled(grid16(), {1.0, -2.0, 1.0}), std::invalid_argument);
}

TEST(LinCNS, CoercivityProbe)
{
    for (double mp : {0.0, 1.0, -0.5}) {
        auto a = assemble_coupled(Grid({10, 10}, {1.0, 1.0}), {1.0, mp, 1.0});
        double c = coercivity_probe(a, 1000, 7);
        EXPECT_GE(c, std::min(1.0, 1.0 + mp) - 1e-10) << "mu' " << mp;
    }
}

TEST(LinCNS, ImaginaryAxisResolventBounded)
{
    std::vector<double> worst;
    for (int m : {8, 12}) {
        auto a = assemble_coupled(Grid({m, m}, {1.0, 1.0}), {1.0, 0.0, 1.0});
        double w = 0.0;
        for (auto [s, v] : imaginary_axis_resolvent(a, -3, 6)) {
            EXPECT_TRUE(std::isfinite(v)) << s;
            w = std::max(w, v);
        }
        worst.push_back(w);
    }
    EXPECT_LE(worst[1], 2.0 * worst[0]);
}

TEST(LinCNS, ZeroDataZeroTrajectory)
{
    LinCNSState zero(grid16());
    for (auto st : {Strategy::duhamel, Strategy::kshift}) {
        auto r = solve_lcns(op16(), zero, nullptr, 1.0, 16, st);
        for (const auto& x : r.trajectory.states)
            EXPECT_EQ(max_abs(x), 0.0);
    }
}

TEST(LinCNS, StrategiesAgreeOnRandomData)
{
    for (unsigned seed : {1u, 2u}) {
        auto init = random_smooth_state(op16(), seed);
        auto d = solve_lcns(op16(), init, nullptr, 1.0, 64, Strategy::duhamel);
        auto k = solve_lcns(op16(), init, nullptr, 1.0, 64, Strategy::kshift);
        ASSERT_TRUE(k.kshift.has_value());
        EXPECT_GT(k.kshift->k, 0.0);
        EXPECT_LE(traj_discrepancy(d.trajectory, k.trajectory), 1e-6) << "seed " << seed;
    }
}

TEST(LinCNS, StrategiesAgreeWithConstantForcing)
{
    const auto& a = op16();
    auto init = random_smooth_state(a, 5, 0.5);
    auto fx = random_smooth_state(a, 6).pack();
    Forcing f = [fx](double) { return fx; };
    auto d = solve_lcns(a, init, f, 1.0, 64, Strategy::duhamel);
    auto k = solve_lcns(a, init, f, 1.0, 64, Strategy::kshift);
    EXPECT_LE(traj_discrepancy(d.trajectory, k.trajectory), 1e-6);
}

TEST(LinCNS, ForcingMustBeMeanFree)
{
    const auto& a = op16();
    LinCNSState init(grid16());
    Vec fx = Vec::Zero(a.dimension());
    fx.head(grid16().size()).setOnes();
    Forcing f = [fx](double) { return fx; };
    EXPECT_THROW(solve_lcns(a, init, f, 1.0, 16, Strategy::duhamel), std::invalid_argument);
    init.a.values.setOnes();
    EXPECT_THROW(solve_lcns(a, init, nullptr, 1.0, 16, Strategy::kshift), std::invalid_argument);
}

TEST(LinCNS, KShiftTooSmallKDoublesThenFails)
{
    KShiftOptions o;
    o.k = 1e-3;
    o.max_doublings = 0;
    auto a = assemble_coupled(Grid({6, 6}, {1.0, 1.0}), {1.0, 0.0, 1.0});
    auto init = random_smooth_state(a, 3);
    EXPECT_THROW(solve_lcns(a, init, nullptr, 8.0, 16, Strategy::kshift, o), DivergenceError);
    o.max_doublings = 14;
    auto r = solve_lcns(a, init, nullptr, 8.0, 16, Strategy::kshift, o);
    EXPECT_GT(r.kshift->doublings, 0);
    auto d = solve_lcns(a, init, nullptr, 8.0, 16, Strategy::duhamel);
    EXPECT_LE(traj_discrepancy(d.trajectory, r.trajectory), 1e-6);
}

TEST(LinCNS, EigenmodeDecaysExactlyAndFits)
{
    const auto& a = op16();
    Eigen::EigenSolver<Mat> es(a.full.dense());
    const CVec ev = es.eigenvalues();
    auto sb = spectral_bound(a);
    // slowest real decaying mode away from the null mode
    Eigen::Index pick = -1;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev[i].imag()) < 1e-12 && ev[i].real() > 1e-6 && (pick < 0 || ev[i].real() < ev[pick].real()))
            pick = i;
    ASSERT_GE(pick, 0);
    const double lam = ev[pick].real();
    EXPECT_GE(lam, sb.c - 1e-9);
    Vec v = es.eigenvectors().col(pick).real();
    v.head(grid16().size()) = a.project(v.head(grid16().size()));
    v /= max_abs(v);
    auto st = LinCNSState::unpack(grid16(), v);
    auto r = solve_lcns(a, st, nullptr, 2.0, 64, Strategy::duhamel);
    for (size_t i = 0; i < r.trajectory.states.size(); ++i) {
        const double t = r.trajectory.times[i];
        EXPECT_LE(max_abs(r.trajectory.states[i] - std::exp(-lam * t) * v), 1e-8 * std::exp(-lam * t));
    }
    auto fit = decay_measure(grid16(), r.trajectory);
    EXPECT_NEAR(fit.rate, lam, 0.01 * lam);
}

TEST(LinCNS, DecayFitDegenerateOnZero)
{
    auto r = solve_lcns(op16(), LinCNSState(grid16()), nullptr, 1.0, 16, Strategy::duhamel);
    EXPECT_THROW(decay_measure(grid16(), r.trajectory), DegeneracyError);
    Trajectory shortt;
    shortt.times = {0.0};
    shortt.states = {Vec::Zero(3)};
    EXPECT_THROW(decay_measure(grid16(), shortt), std::invalid_argument);
}

TEST(LinCNS, RandomDataDecaysAtSpectralRate)
{
    const auto& a = op16();
    auto sb = spectral_bound(a);
    auto init = random_smooth_state(a, 11);
    auto r = solve_lcns(a, init, nullptr, 12.0, 96, Strategy::duhamel);
    auto fit = decay_measure(grid16(), r.trajectory);
    EXPECT_GE(fit.rate, 0.9 * sb.c);
}

TEST(LinCNS, MeanOfDensityConserved)
{
    const auto& a = op16();
    auto init = random_smooth_state(a, 4);
    auto fx = random_smooth_state(a, 8).pack();
    Forcing f = [fx](double t) { return Vec(std::cos(3 * t) * fx); };
    for (auto st : {Strategy::duhamel, Strategy::kshift}) {
        auto r = solve_lcns(a, init, f, 1.0, 32, st);
        for (const auto& x : r.trajectory.states) {
            const Vec ax = x.head(grid16().size());
            EXPECT_LE(std::abs(a.mean_weights.dot(ax) / a.mean_weights.sum()), 1e-11 * std::max(1.0, max_abs(ax)));
        }
    }
}

TEST(LinCNS, EpMeasureFinite)
{
    const auto& a = op16();
    auto init = random_smooth_state(a, 9);
    auto r = solve_lcns(a, init, nullptr, 1.0, 32, Strategy::duhamel);
    StateNorms sn(grid16());
    auto m = measure_ep(sn, a.coeffs.mu, r.trajectory, {}, 0.5 * spectral_bound(a).c);
    ASSERT_TRUE(m.ratio.has_value());
    EXPECT_GE(*m.ratio, 1.0);
    EXPECT_LT(*m.ratio, 100.0);
    EXPECT_DOUBLE_EQ(m.data, sn.state(init.pack()));
}
