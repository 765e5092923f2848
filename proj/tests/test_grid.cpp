#include <cnslab/grid.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cnslab;

namespace {

VectorField field2(const Grid& g, double (*fx)(double, double), double (*fy)(double, double))
{
    VectorField u(g);
    for (int n = 0; n < g.size(); ++n) {
        u.comp(0)[n] = fx(g.x(n, 0), g.x(n, 1));
        u.comp(1)[n] = fy(g.x(n, 0), g.x(n, 1));
    }
    return u;
}

bool interior(const Grid& g, int n, int margin)
{
    auto c = g.coords(n);
    for (int a = 0; a < g.d; ++a)
        if (c[a] < margin || c[a] >= g.dims[a] - margin)
            return false;
    return true;
}

Vec random_vec(int n, unsigned seed)
{
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist;
    Vec v(n);
    for (auto& x : v)
        x = dist(gen);
    return v;
}

} // namespace

TEST(Grid, SpacingAndValidation)
{
    Grid g({8, 16}, {1.0, 2.0});
    EXPECT_DOUBLE_EQ(g.spacing[0], 1.0 / 9.0);
    EXPECT_DOUBLE_EQ(g.spacing[1], 2.0 / 17.0);
    EXPECT_EQ(g.size(), 128);
    EXPECT_THROW(Grid({3, 8}, {1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(Grid({8, 8}, {1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(Grid({8}, {1.0}), std::invalid_argument);
    EXPECT_TRUE(g.on_face(g.index(0, 3), 0, 0));
    EXPECT_TRUE(g.on_face(g.index(7, 3), 0, 1));
    EXPECT_FALSE(g.on_face(g.index(3, 3), 0, 0));
}

TEST(Grid, DivergenceOfLinearField)
{
    Grid g = Grid::square(12);
    auto u = field2(g, [](double x, double) { return x; }, [](double, double y) { return y; });
    ScalarField div = divergence(u);
    for (int n = 0; n < g.size(); ++n)
        if (interior(g, n, 1)) {
            EXPECT_NEAR(div.values[n], 2.0, 1e-12);
        }
}

TEST(Grid, SymGradientOfSwapField)
{
    Grid g = Grid::square(8);
    auto u = field2(g, [](double, double y) { return y; }, [](double x, double) { return x; });
    TensorField s = sym_gradient(u);
    for (int n = 0; n < g.size(); ++n) {
        if (!interior(g, n, 1))
            continue;
        EXPECT_NEAR(s.at(0, 0)[n], 0.0, 1e-12);
        EXPECT_NEAR(s.at(1, 1)[n], 0.0, 1e-12);
        EXPECT_NEAR(s.at(0, 1)[n], 1.0, 1e-12);
        EXPECT_NEAR(s.at(1, 0)[n], 1.0, 1e-12);
    }
}

TEST(Grid, LaplacianEigenmodeConvergesAtSecondOrder)
{
    const double l1 = 1.0, l2 = 1.5;
    double err[2];
    for (int r = 0; r < 2; ++r) {
        int n = 16 << r;
        Grid g({n, n}, {l1, l2});
        auto f = sample(g, [&](auto x) { return std::sin(M_PI * x[0] / l1) * std::sin(M_PI * x[1] / l2); });
        const double lam = M_PI * M_PI / (l1 * l1) + M_PI * M_PI / (l2 * l2);
        Vec e = laplacian(f).values + lam * f.values;
        err[r] = e.cwiseAbs().maxCoeff();
    }
    EXPECT_GE(std::log2(err[0] / err[1]), 1.9);
}

TEST(Grid, GradientAndDivergenceConvergeAtSecondOrder)
{
    double eg[2], ed[2];
    for (int r = 0; r < 2; ++r) {
        Grid g = Grid::square(32 << r);
        auto p = sample(g, [](auto x) { return std::exp(x[0]) * std::cos(2.0 * x[1]); });
        VectorField gp = gradient(p);
        double m = 0.0;
        for (int n = 0; n < g.size(); ++n) {
            if (!interior(g, n, 1))
                continue;
            double x = g.x(n, 0), y = g.x(n, 1);
            m = std::max(m, std::abs(gp.comp(0)[n] - std::exp(x) * std::cos(2 * y)));
            m = std::max(m, std::abs(gp.comp(1)[n] + 2 * std::exp(x) * std::sin(2 * y)));
        }
        eg[r] = m;

        // Dirichlet velocity: zero ghosts are exact, so the whole grid converges
        auto u = field2(
            g, [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y) * y; },
            [](double x, double y) { return std::sin(2 * M_PI * x) * std::sin(M_PI * y); });
        ScalarField du = divergence(u);
        double md = 0.0;
        for (int n = 0; n < g.size(); ++n) {
            double x = g.x(n, 0), y = g.x(n, 1);
            double exact = M_PI * std::cos(M_PI * x) * std::sin(M_PI * y) * y
                + std::sin(2 * M_PI * x) * M_PI * std::cos(M_PI * y);
            md = std::max(md, std::abs(du.values[n] - exact));
        }
        ed[r] = md;
    }
    EXPECT_GE(std::log2(eg[0] / eg[1]), 1.9);
    EXPECT_GE(std::log2(ed[0] / ed[1]), 1.9);
}

TEST(Grid, LaplacianIsFaceDivergenceOfFaceGradient)
{
    for (const Grid& g : {Grid({9, 6}, {1.0, 0.7}), Grid({5, 6, 7}, {1.0, 2.0, 0.5})}) {
        Vec u = random_vec(g.size(), 3);
        Vec sum = Vec::Zero(g.size());
        for (int a = 0; a < g.d; ++a)
            sum += face_divergence(g, face_gradient(g, u, a), a);
        Vec lap = laplacian(ScalarField(g, u)).values;
        EXPECT_LE((sum - lap).cwiseAbs().maxCoeff(), 1e-10 * lap.cwiseAbs().maxCoeff());
    }
}

TEST(Grid, SparseMatricesMatchStencils)
{
    Grid g({6, 7, 5}, {1.0, 1.3, 0.9});
    Vec u = random_vec(g.size(), 5);
    for (int a = 0; a < 3; ++a)
        for (Ghost gh : {Ghost::zero, Ghost::reflect})
            EXPECT_LE((diff1_matrix(g, a, gh) * u - diff1(g, u, a, gh)).norm(), 1e-12 * u.norm() / g.spacing[a]);
    EXPECT_LE((laplacian_matrix(g) * u - laplacian(ScalarField(g, u)).values).norm(), 1e-9 * u.norm());
    Vec v = random_vec(3 * g.size(), 6);
    EXPECT_LE((divergence_matrix(g) * v - divergence(VectorField(g, v)).values).norm(), 1e-10 * v.norm());
}

TEST(Grid, DiffOpRejectsKindMismatch)
{
    Grid g = Grid::square(6);
    EXPECT_THROW(diff_op(DiffKind::gradient, VectorField(g)), std::invalid_argument);
    EXPECT_THROW(diff_op(DiffKind::divergence, ScalarField(g)), std::invalid_argument);
    EXPECT_THROW(diff_op(DiffKind::jacobian, ScalarField(g)), std::invalid_argument);
    EXPECT_THROW(diff_op(DiffKind::laplacian, TensorField(g)), std::invalid_argument);
    EXPECT_TRUE(std::holds_alternative<TensorField>(diff_op(DiffKind::sym_gradient, VectorField(g))));
    EXPECT_TRUE(std::holds_alternative<VectorField>(diff_op(DiffKind::gradient, ScalarField(g))));
}

TEST(Grid, MeanOfConstantAndOddMode)
{
    Grid g({10, 14}, {1.0, 2.0});
    ScalarField c(g, Vec::Constant(g.size(), 3.0));
    auto [m, p] = mean_and_project(c);
    EXPECT_NEAR(m, 3.0, 1e-14);
    EXPECT_LE(p.values.cwiseAbs().maxCoeff(), 1e-14);

    // antisymmetric about the box center, so every trapezoid sum cancels
    auto s = sample(g, [](auto x) { return std::sin(2 * M_PI * x[0]) * std::cos(M_PI * x[1] / 2.0); });
    auto [ms, ps] = mean_and_project(s);
    EXPECT_NEAR(ms, 0.0, 1e-13);
    EXPECT_LE((ps.values - s.values).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Grid, ProjectionIsIdempotent)
{
    Grid g = Grid::square(16);
    ScalarField f(g, random_vec(g.size(), 11));
    auto p1 = mean_and_project(f).second;
    auto [m2, p2] = mean_and_project(p1);
    EXPECT_LE(std::abs(mean(p1)), 1e-13 * p1.values.cwiseAbs().maxCoeff());
    EXPECT_LE((p2.values - p1.values).cwiseAbs().maxCoeff(), 4e-16 * p1.values.cwiseAbs().maxCoeff());
}

TEST(Grid, DirichletGhostsOnFourByFour)
{
    Grid g = Grid::square(4);
    VectorField ones(g, Vec::Ones(2 * g.size()));
    EXPECT_EQ(enforce_dirichlet(ones).values, ones.values);
    VectorField zero(g);
    EXPECT_EQ(divergence(enforce_dirichlet(zero)).values, Vec::Zero(g.size()));

    // hand stencil: a column of ones sees 0 beyond each face, so d/dx is +1/(2h) on
    // the first column, -1/(2h) on the last and 0 in between; same along y
    ScalarField div = divergence(enforce_dirichlet(ones));
    const double q = 1.0 / (2.0 * g.spacing[0]);
    const double col[4] = {q, 0.0, 0.0, -q};
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i)
            EXPECT_NEAR(div.values[g.index(i, j)], col[i] + col[j], 1e-12);
}

// Reflective scalar ghosts against zero-ghost velocity: the pairing defect is a pure
// boundary sum. It vanishes when p has no mass on the boundary layer and is first
// order in h for smooth data, since u on the first node is O(h).
TEST(Grid, SummationByPartsDefectIsBoundarySum)
{
    double defect[2];
    for (int r = 0; r < 2; ++r) {
        Grid g = Grid::square(16 << r);
        auto p = sample(g, [](auto x) { return std::exp(x[0]) * std::cos(x[1]); });
        p = mean_and_project(p).second;
        auto u = field2(
            g, [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); },
            [](double x, double y) { return std::sin(M_PI * x) * std::sin(2 * M_PI * y); });
        const double w = g.cell_volume();
        double lhs = w * (gradient(p).values.dot(u.values) + p.values.dot(divergence(u).values));

        double boundary = 0.0;
        for (int n = 0; n < g.size(); ++n)
            for (int a = 0; a < 2; ++a) {
                double s = 0.5 / g.spacing[a];
                if (g.on_face(n, a, 0))
                    boundary -= s * p.values[n] * u.comp(a)[n];
                if (g.on_face(n, a, 1))
                    boundary += s * p.values[n] * u.comp(a)[n];
            }
        EXPECT_NEAR(lhs, w * boundary, 1e-12);
        defect[r] = std::abs(lhs) / (l2(g, p.values) * l2(g, u.values));
    }
    EXPECT_GT(defect[0] / defect[1], 1.8);
    EXPECT_LT(defect[0] / defect[1], 2.2);

    Grid g = Grid::square(16);
    auto p = sample(g, [](auto x) {
        double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5);
        return r2 < 0.1 ? std::pow(0.1 - r2, 3) : 0.0;
    });
    VectorField u(g, random_vec(2 * g.size(), 2));
    EXPECT_NEAR(gradient(p).values.dot(u.values) + p.values.dot(divergence(u).values), 0.0, 1e-12);
}
