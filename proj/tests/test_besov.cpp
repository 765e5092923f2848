#include <cnslab/besov.hpp>
#include <gtest/gtest.h>

#include <random>

using namespace cnslab;

namespace {

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

// sin mode whose odd extension is a single lattice frequency at radius 8
ScalarField radius_eight_mode(const Grid& g)
{
    return sample(g, [&](auto x) {
        return std::sin(6 * M_PI * x[0] / g.lengths[0]) * std::sin(8 * M_PI * x[1] / g.lengths[1]);
    });
}

} // namespace

TEST(Besov, PartitionOfUnityAndSupport)
{
    for (Grid g : {Grid::square(16), Grid({12, 20}, {1.0, 2.5}), Grid::square(6, 1.0, 3)}) {
        DyadicFilterBank bank(g);
        Vec sum = Vec::Zero(bank.extended_size());
        for (int j = -1; j <= bank.jmax(); ++j) {
            sum += bank.weight(j);
            for (int i = 0; i < bank.extended_size(); ++i) {
                if (j >= 0 && bank.weight(j)[i] > 0.0) {
                    EXPECT_GE(bank.radius()[i], std::ldexp(1.0, j - 1));
                    EXPECT_LE(bank.radius()[i], std::ldexp(1.0, j + 1));
                }
            }
        }
        EXPECT_LE((sum.array() - 1.0).abs().maxCoeff(), 1e-12);
    }
}

TEST(Besov, SingleModeLandsInOneBlock)
{
    Grid g = Grid::square(30, 1.25);
    DyadicFilterBank bank(g, Extension::odd_reflection);
    auto f = radius_eight_mode(g);
    auto blocks = lp_blocks(f, bank);
    for (int j = -1; j <= bank.jmax(); ++j) {
        double m = blocks[j + 1].cwiseAbs().maxCoeff();
        if (j == 3)
            EXPECT_NEAR((bank.restrict_to_box(blocks[j + 1]) - f.values).cwiseAbs().maxCoeff(), 0.0, 1e-10);
        else
            EXPECT_LT(m, 1e-10) << "block " << j;
    }
}

TEST(Besov, SingleModeNormIsDyadicWeight)
{
    Grid g = Grid::square(30, 1.25);
    DyadicFilterBank bank(g, Extension::odd_reflection);
    for (double p : {1.0, 2.0, 4.0}) {
        auto f = radius_eight_mode(g);
        f.values /= lp_norm_box(g, {f.values}, p);
        for (double s : {-0.5, 0.0, 0.75}) {
            EXPECT_NEAR(besov_norm(f, {s, p, 1.0, 2}, bank), std::pow(2.0, 3 * s), 1e-10);
        }
    }
}

TEST(Besov, ZeroFieldAndReconstruction)
{
    Grid g = Grid::square(16);
    DyadicFilterBank bank(g);
    for (const auto& b : lp_blocks(ScalarField(g), bank))
        EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);

    std::mt19937 gen(7);
    std::normal_distribution<double> nd;
    for (Extension e : {Extension::even_reflection, Extension::odd_reflection, Extension::zero_pad}) {
        DyadicFilterBank bk(g, e);
        Vec v(g.size());
        for (auto& x : v)
            x = nd(gen);
        auto blocks = lp_blocks(v, bk);
        Vec sum = Vec::Zero(bk.extended_size());
        for (auto& b : blocks)
            sum += b;
        Vec ext = bk.extend(v);
        EXPECT_LE((sum - ext).norm(), 1e-10 * ext.norm());
    }
}

TEST(Besov, TwoSeparatedModes)
{
    Grid g = Grid::square(31, 1.0);
    DyadicFilterBank bank(g, Extension::odd_reflection);
    auto f = sample(g, [](auto x) {
        return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) + std::sin(16 * M_PI * x[0]) * std::sin(12 * M_PI * x[1]);
    });
    // radii sqrt(2) and 20: blocks 0, 1 and 4, 5
    auto blocks = lp_blocks(f, bank);
    int nonzero = 0;
    Vec sum = Vec::Zero(bank.extended_size());
    for (auto& b : blocks) {
        if (b.cwiseAbs().maxCoeff() > 1e-10)
            ++nonzero;
        sum += b;
    }
    EXPECT_LE(nonzero, 4);
    EXPECT_LE((bank.restrict_to_box(sum) - f.values).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(blocks[0].cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(blocks[3].cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(blocks[4].cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Besov, HomogeneityTriangleAndMonotonicity)
{
    Grid g = Grid::square(16);
    DyadicFilterBank bank(g);
    std::mt19937 gen(3);
    BesovParams bp{0.0, 2.0, 1.0, 2};
    for (int t = 0; t < 10; ++t) {
        auto f = smooth_random(g, gen), h = smooth_random(g, gen);
        double nf = besov_norm(f, bp, bank);
        EXPECT_NEAR(besov_norm(ScalarField(g, -2.5 * f.values), bp, bank), 2.5 * nf, 1e-12 * nf);
        double nsum = besov_norm(ScalarField(g, f.values + h.values), bp, bank);
        EXPECT_LE(nsum, nf + besov_norm(h, bp, bank) + 1e-10);
    }
    DyadicFilterBank odd(Grid::square(30, 1.25), Extension::odd_reflection);
    auto m = radius_eight_mode(odd.grid());
    double prev = 0.0;
    for (double s = -1.0; s <= 2.0; s += 0.25) {
        double v = besov_norm(m, bp.with_s(s), odd);
        EXPECT_GT(v, prev);
        prev = v;
    }
    EXPECT_THROW(besov_norm(m, {0.0, 0.5, 1.0, 2}, odd), std::invalid_argument);
    EXPECT_THROW(besov_norm(m, {0.0, 2.0, 0.5, 2}, odd), std::invalid_argument);
}

TEST(Besov, NonFiniteFieldIsDataError)
{
    Grid g = Grid::square(8);
    ScalarField f(g);
    f.values[5] = std::nan("");
    EXPECT_THROW(lp_blocks(f, DyadicFilterBank(g)), DataError);
}

TEST(Besov, ExtensionModesAgreeForInteriorBumps)
{
    Grid g = Grid::square(32);
    DyadicFilterBank even(g, Extension::even_reflection), pad(g, Extension::zero_pad);
    BesovParams bp{0.0, 2.0, 1.0, 2};
    for (double cx : {0.4, 0.5, 0.6}) {
        auto f = sample(g, [&](auto x) {
            double r2 = (x[0] - cx) * (x[0] - cx) + (x[1] - 0.5) * (x[1] - 0.5);
            return r2 < 0.09 ? std::pow(1.0 - r2 / 0.09, 4) : 0.0;
        });
        double a = besov_norm(f, bp, even), b = besov_norm(f, bp, pad);
        EXPECT_LE(std::max(a / b, b / a), 4.0);
    }
}

// f_l(x) = l u0(l x) on a box l times smaller: every lattice frequency doubles, so the
// B^{d/p-1}_{p,1} norm is unchanged up to the profile of the filters
TEST(Besov, CriticalScalingInvariance)
{
    const int n = 32;
    Grid g1 = Grid::square(n, 1.0), g2 = Grid::square(n, 0.5);
    DyadicFilterBank b1(g1), b2(g2);
    BesovParams bp{0.0, 2.0, 1.0, 2};
    std::mt19937 gen(9);
    for (int t = 0; t < 5; ++t) {
        auto u0 = smooth_random(g1, gen);
        ScalarField fl(g2, 2.0 * u0.values);
        double r = besov_norm(fl, bp, b2) / besov_norm(u0, bp, b1);
        EXPECT_GE(r, 1.0 / 3.0);
        EXPECT_LE(r, 3.0);
    }
}

TEST(Besov, ProductEstimate)
{
    Grid g = Grid::square(32);
    DyadicFilterBank bank(g);
    BesovParams bp{0.0, 2.0, 1.0, 2};
    std::mt19937 gen(1);
    auto u = smooth_random(g, gen);
    ScalarField one(g, Vec::Ones(g.size()));
    auto r = verify_product_estimate(u, one, 0.0, bp, bank);
    EXPECT_NEAR(r.ratio, 1.0 / besov_norm(one, bp.with_s(1.0), bank), 1e-12);

    auto low = sample(g, [](auto x) { return std::cos(M_PI * x[0]) * std::cos(M_PI * x[1]); });
    auto rl = verify_product_estimate(low, low, 0.5, bp, bank);
    EXPECT_TRUE(std::isfinite(rl.ratio));
    EXPECT_GT(rl.ratio, 0.0);

    EXPECT_THROW(verify_product_estimate(u, u, 1.5, bp, bank), std::invalid_argument);
    EXPECT_THROW(verify_product_estimate(u, u, -1.0, bp, bank), std::invalid_argument);
}

TEST(Besov, ProductConstantGridStable)
{
    double worst[2] = {0.0, 0.0};
    for (int r = 0; r < 2; ++r) {
        Grid g = Grid::square(32 << r);
        DyadicFilterBank bank(g);
        BesovParams bp{0.0, 2.0, 1.0, 2};
        std::mt19937 gen(21);
        for (int t = 0; t < 20; ++t) {
            auto u = smooth_random(g, gen), v = smooth_random(g, gen);
            worst[r] = std::max(worst[r], verify_product_estimate(u, v, 0.0, bp, bank).ratio);
        }
    }
    EXPECT_LE(std::max(worst[0] / worst[1], worst[1] / worst[0]), 2.0);
}

TEST(Besov, CompositionEstimate)
{
    Grid g = Grid::square(32);
    DyadicFilterBank bank(g);
    BesovParams bp{0.0, 2.0, 1.0, 2};
    auto z = sample(g, [](auto x) { return 0.1 * std::cos(M_PI * x[0]) * std::cos(2 * M_PI * x[1]); });
    auto id = verify_composition_estimate([](double v) { return v; }, z, bp, bank);
    EXPECT_NEAR(id.lhs, besov_norm(z, bp.with_s(1.0), bank), 1e-14);
    EXPECT_LE(id.ratio, 1.0);

    auto sq = verify_composition_estimate([](double v) { return v * v; }, z, bp, bank);
    ScalarField z2(g, z.values.cwiseProduct(z.values));
    EXPECT_NEAR(sq.lhs, besov_norm(z2, bp.with_s(1.0), bank), 1e-14);

    EXPECT_THROW(verify_composition_estimate([](double v) { return 1.0 + v; }, z, bp, bank), std::invalid_argument);

    double ratio[2];
    for (int r = 0; r < 2; ++r) {
        Grid gr = Grid::square(32 << r);
        DyadicFilterBank bk(gr);
        auto zr = sample(gr, [](auto x) { return 0.05 * std::cos(M_PI * x[0]) * std::cos(2 * M_PI * x[1]); });
        auto k = [](double v) { return std::pow(1.0 + v, 1.4) - 1.0; };
        ratio[r] = verify_composition_estimate(k, zr, bp, bk).ratio;
    }
    EXPECT_LE(std::max(ratio[0] / ratio[1], ratio[1] / ratio[0]), 2.0);
}
