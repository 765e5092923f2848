#include <cnslab/semigroup.hpp>
#include <gtest/gtest.h>

#include <random>

using namespace cnslab;

namespace {

SpMat diag_matrix(const std::vector<double>& d)
{
    SpMat m(d.size(), d.size());
    for (size_t i = 0; i < d.size(); ++i)
        m.insert(i, i) = d[i];
    m.makeCompressed();
    return m;
}

// upwinded convection-diffusion on a small grid: nonsymmetric, sectorial
LinearOperator convection_diffusion(int n)
{
    Grid g = Grid::square(n);
    SpMat a = -laplacian_matrix(g) + 3.0 * diff1_matrix(g, 0, Ghost::zero);
    return LinearOperator(a);
}

Vec random_vec(int n, unsigned seed)
{
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    Vec v(n);
    for (auto& x : v)
        x = nd(gen);
    return v;
}

} // namespace

TEST(Semigroup, ResolventInvertsShiftedOperator)
{
    auto a = convection_diffusion(8);
    for (cplx lam : {cplx(1.0, 0.0), cplx(0.0, 3.0), cplx(-2.0, 5.0)}) {
        CVec x = random_vec(a.dimension(), 1).cast<cplx>();
        CVec y = a.matrix().cast<cplx>() * x + lam * x;
        CVec back = resolvent_solve(a, lam, y);
        EXPECT_LE((back - x).norm(), 1e-9 * x.norm());
    }
}

TEST(Semigroup, ResolventIdentity)
{
    auto a = convection_diffusion(8);
    cplx l(2.0, 1.0), m(0.5, -4.0);
    CVec x = random_vec(a.dimension(), 2).cast<cplx>();
    Resolvent rl(a, l), rm(a, m);
    CVec lhs = rl.solve(x) - rm.solve(x);
    CVec rhs = (m - l) * rl.solve(rm.solve(x));
    EXPECT_LE((lhs - rhs).norm(), 1e-8 * lhs.norm());
}

TEST(Semigroup, AdjointSolveMatchesDense)
{
    auto a = convection_diffusion(6);
    cplx l(1.0, 2.0);
    Resolvent r(a, l);
    CVec b = random_vec(a.dimension(), 3).cast<cplx>();
    CMat m = a.dense().cast<cplx>() + l * CMat::Identity(a.dimension(), a.dimension());
    CVec ref = m.adjoint().partialPivLu().solve(b);
    EXPECT_LE((r.solve_adjoint(b) - ref).norm(), 1e-10 * ref.norm());
}

TEST(Semigroup, SectorScanIdentity)
{
    LinearOperator id(diag_matrix({1.0, 1.0, 1.0}), SymmetryHint::self_adjoint);
    std::vector<double> angles{0.0, 0.5, 1.0, 1.5};
    std::vector<double> radii{0.1, 1.0, 10.0, 100.0};
    auto rep = sectoriality_scan(id, angles, radii);
    for (size_t i = 0; i < angles.size(); ++i)
        for (size_t k = 0; k < radii.size(); ++k) {
            cplx lam = std::polar(radii[k], angles[i]);
            EXPECT_NEAR(rep.bounds(i, k), std::abs(lam) / std::abs(lam + 1.0), 1e-6);
            EXPECT_LT(rep.bounds(i, k), 1.0);
        }
    EXPECT_NEAR(rep.spectral_abscissa, 1.0, 1e-14);
}

TEST(Semigroup, SectorScanDiagonalClosedForm)
{
    LinearOperator a(diag_matrix({1.0, 2.0, 5.0}));
    std::vector<double> angles{0.0, 0.7, 1.4, M_PI / 2};
    std::vector<double> radii{0.25, 1.0, 4.0, 16.0};
    auto rep = sectoriality_scan(a, angles, radii);
    double sup = 0.0;
    for (size_t i = 0; i < angles.size(); ++i)
        for (size_t k = 0; k < radii.size(); ++k) {
            cplx lam = std::polar(radii[k], angles[i]);
            double exact = 0.0;
            for (double ak : {1.0, 2.0, 5.0})
                exact = std::max(exact, std::abs(lam) / std::abs(lam + ak));
            EXPECT_NEAR(rep.bounds(i, k), exact, 1e-6 * exact);
            sup = std::max(sup, exact);
        }
    EXPECT_NEAR(rep.sup_bound, sup, 1e-6 * sup);
    EXPECT_GE(rep.sector_angle, 1.4);
}

TEST(Semigroup, SectorScanDirichletLaplacian)
{
    Grid g = Grid::square(16);
    LinearOperator a(SpMat(-laplacian_matrix(g)), SymmetryHint::self_adjoint);
    auto rep = sectoriality_scan(a, {0.0}, {0.1, 1.0, 10.0, 100.0, 1000.0});
    EXPECT_LE(rep.sup_bound, 1.0);
    EXPECT_NEAR(rep.spectral_abscissa, 2.0 * 4.0 / (g.spacing[0] * g.spacing[0]) * std::pow(std::sin(M_PI / 34), 2), 1e-9);
}

TEST(Semigroup, SectorScanFlagsSpectrum)
{
    LinearOperator a(diag_matrix({1.0, 2.0}));
    auto rep = sectoriality_scan(a, {M_PI}, {1.0, 3.0});
    ASSERT_EQ(rep.excluded.size(), 1u);
    EXPECT_DOUBLE_EQ(rep.excluded[0].second, 1.0);
    EXPECT_THROW(sectoriality_scan(a, {0.0}, {0.0}), std::invalid_argument);
}

TEST(Semigroup, PropagateBasics)
{
    LinearOperator a(diag_matrix({0.5, 1.0, 3.0}));
    Vec x(3);
    x << 1.0, -2.0, 0.5;
    EXPECT_EQ(propagate(a, x, 0.0), x);
    Vec y = propagate(a, x, 1.0);
    EXPECT_NEAR(y[0], std::exp(-0.5), 1e-14);
    EXPECT_NEAR(y[1], -2.0 * std::exp(-1.0), 1e-14);
    EXPECT_NEAR(y[2], 0.5 * std::exp(-3.0), 1e-14);
    EXPECT_THROW(propagate(a, x, -1.0), std::invalid_argument);
}

TEST(Semigroup, SemigroupLawDenseSpectralKrylov)
{
    auto a = convection_diffusion(10);
    Vec x = random_vec(a.dimension(), 4);
    Vec two = propagate(a, propagate(a, x, 0.01), 0.02);
    Vec one = propagate(a, x, 0.03);
    EXPECT_LE((two - one).norm(), 1e-8 * one.norm());

    Grid g = Grid::square(10);
    LinearOperator s(SpMat(-laplacian_matrix(g)), SymmetryHint::self_adjoint);
    Vec ys = propagate(s, propagate(s, x, 0.01), 0.02);
    EXPECT_LE((ys - propagate(s, x, 0.03)).norm(), 1e-8 * ys.norm());

    Vec yk = krylov_expmv([&](const Vec& v) -> Vec { return -(a.matrix() * v); }, x, 0.03);
    EXPECT_LE((yk - one).norm(), 1e-8 * one.norm());
}

TEST(Semigroup, WeightedSelfAdjointSpectralPath)
{
    // A = W^{-1} S with S symmetric positive definite
    Grid g = Grid::square(6);
    SpMat s = -laplacian_matrix(g);
    Vec w = Vec::LinSpaced(g.size(), 1.0, 2.0);
    SpMat a = w.cwiseInverse().asDiagonal() * s;
    LinearOperator sa(a, SymmetryHint::self_adjoint, w), ge(a);
    Vec x = random_vec(g.size(), 9);
    EXPECT_LE((propagate(sa, x, 0.02) - propagate(ge, x, 0.02)).norm(), 1e-10 * x.norm());
}

TEST(Semigroup, IntegratorModesAgree)
{
    auto a = convection_diffusion(8);
    const double dt = 0.01;
    Vec x = random_vec(a.dimension(), 5), f = random_vec(a.dimension(), 6);
    ExpIntegrator dense(a, dt), kry(a, dt, ExpIntegrator::Mode::krylov);
    EXPECT_EQ(dense.mode(), ExpIntegrator::Mode::dense);
    Vec yd = dense.step(x, &f), yk = kry.step(x, &f);
    EXPECT_LE((yd - yk).norm(), 1e-8 * yd.norm());

    Grid g = Grid::square(8);
    LinearOperator s(SpMat(-laplacian_matrix(g)), SymmetryHint::self_adjoint);
    ExpIntegrator spec(s, dt), dn(s, dt, ExpIntegrator::Mode::dense);
    EXPECT_LE((spec.step(x, &f) - dn.step(x, &f)).norm(), 1e-10 * x.norm());
}

TEST(Semigroup, CauchyHomogeneousMatchesPropagate)
{
    auto a = convection_diffusion(8);
    Vec x = random_vec(a.dimension(), 7);
    auto tr = solve_cauchy(a, x, std::vector<Vec>{}, 0.2, 16);
    ASSERT_EQ(tr.states.size(), 17u);
    EXPECT_EQ(tr.states[0], x);
    for (int n = 1; n <= 16; ++n)
        EXPECT_LE((tr.states[n] - propagate(a, x, tr.times[n])).norm(), 1e-9 * x.norm());
    EXPECT_THROW(solve_cauchy(a, x, std::vector<Vec>{}, 1.0, 4), std::invalid_argument);
}

TEST(Semigroup, CauchyZeroOperatorConstantForcing)
{
    LinearOperator z(diag_matrix({0.0, 0.0}));
    Vec x0(2), c(2);
    x0 << 1.0, 2.0;
    c << 0.5, -1.0;
    auto tr = solve_cauchy(z, x0, [&](double) { return c; }, 2.0, 8);
    for (size_t n = 0; n < tr.states.size(); ++n)
        EXPECT_LE((tr.states[n] - (x0 + tr.times[n] * c)).norm(), 1e-14);
}

TEST(Semigroup, CauchyScalarSecondOrder)
{
    LinearOperator a(diag_matrix({1.0}));
    Vec x0 = Vec::Constant(1, 0.3);
    double err[2];
    for (int r = 0; r < 2; ++r) {
        int steps = 32 << r;
        auto tr = solve_cauchy(a, x0, [](double t) { return Vec::Constant(1, std::exp(-t)); }, 2.0, steps);
        double e = 0.0;
        for (size_t n = 0; n < tr.states.size(); ++n) {
            double t = tr.times[n];
            e = std::max(e, std::abs(tr.states[n][0] - (0.3 + t) * std::exp(-t)));
        }
        err[r] = e;
    }
    EXPECT_LT(err[0], 1e-3);
    EXPECT_NEAR(err[0] / err[1], 4.0, 0.4);
}

TEST(Semigroup, InterpolationNormScalarOracles)
{
    LinearOperator id(diag_matrix({1.0, 1.0}), SymmetryHint::self_adjoint);
    Vec x(2);
    x << 3.0, 4.0;
    double v = interpolation_norm(id, x, 0.5);
    EXPECT_NEAR(v - 5.0, std::sqrt(M_PI) * 5.0, 0.01 * std::sqrt(M_PI) * 5.0);
    EXPECT_EQ(interpolation_norm(id, Vec::Zero(2), 0.5), 0.0);

    for (double a : {0.3, 7.0, 250.0})
        for (double theta : {0.25, 0.5, 0.8}) {
            LinearOperator d(diag_matrix({a, 2.0 * a}));
            Vec e = Vec::Zero(2);
            e[0] = 2.0;
            double semi = InterpolationNorm(d, theta).seminorm(e);
            double exact = std::pow(a, theta) * std::tgamma(1.0 - theta) * 2.0;
            EXPECT_NEAR(semi, exact, 0.01 * exact) << a << " " << theta;
        }
    LinearOperator d(diag_matrix({1.0, 3.0}));
    Vec y = random_vec(2, 3);
    InterpolationNorm in(d, 0.4);
    EXPECT_NEAR(in.norm(-3.0 * y), 3.0 * in.norm(y), 1e-12 * in.norm(y));
    EXPECT_THROW(interpolation_norm(LinearOperator(diag_matrix({-1.0, 1.0})), y, 0.5), std::domain_error);
}

// pulse of unit mass at t = 0: u jumps to ~1 and decays, so ||u'|| ~ 2 - e^{-aT}
// and ||au|| ~ 1 - e^{-aT}; the exact constant is 3 - 2e^{-aT}
TEST(Semigroup, MaxRegScalarPulse)
{
    const double t_end = 6.0;
    for (double a : {1.0, 10.0, 100.0}) {
        const int steps = 60000;
        const double dt = t_end / steps;
        LinearOperator op(diag_matrix({a}), SymmetryHint::self_adjoint);
        auto pulse = [dt](double t) { return Vec::Constant(1, t < dt ? 1.0 / dt : 0.0); };
        double k = maxreg_constant(op, 0.5, {pulse}, t_end, steps);
        EXPECT_NEAR(k, 3.0 - 2.0 * std::exp(-a * t_end), 0.02) << a;
    }
}

TEST(Semigroup, MaxRegEigenvectorPulseRateIndependent)
{
    const double t_end = 6.0;
    const int steps = 30000;
    const double dt = t_end / steps;
    LinearOperator op(diag_matrix({1.0, 10.0, 100.0}), SymmetryHint::self_adjoint);
    std::vector<double> ks;
    for (int k = 0; k < 3; ++k) {
        auto pulse = [=](double t) {
            Vec v = Vec::Zero(3);
            v[k] = t < dt ? 1.0 / dt : 0.0;
            return v;
        };
        ks.push_back(maxreg_constant(op, 0.5, {pulse}, t_end, steps));
    }
    double lo = *std::min_element(ks.begin(), ks.end()), hi = *std::max_element(ks.begin(), ks.end());
    EXPECT_LE(hi / lo, 1.1);
    EXPECT_EQ(maxreg_constant(op, 0.5, {[](double) { return Vec::Zero(3).eval(); }}, t_end, 64), 0.0);
}
