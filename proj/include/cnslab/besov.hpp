#pragma once

#include "grid.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cnslab {

enum class Extension { even_reflection, odd_reflection, zero_pad };

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BesovParams {
    double s = 0.0;
    double p = 2.0;
    double q = 1.0;
    int d = 2;

    void validate() const
    {
        if (!(p >= 1.0) || !(q >= 1.0))
            throw std::invalid_argument("besov: p and q must be >= 1");
    }

    // -1 + 1/p < s < 1/p: no boundary traces
    bool trace_free() const { return s > -1.0 + 1.0 / p && s < 1.0 / p; }

    double critical() const { return d / p; }

    BesovParams with_s(double s2) const { return {s2, p, q, d}; }
};

namespace detail {

// complex n-dimensional DFT over a tensor grid stored x-fastest
inline void fft_nd(std::vector<std::complex<double>>& data, const std::array<int, 3>& m, int d, bool inverse)
{
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> line, out;
    int stride = 1;
    const int total = m[0] * m[1] * m[2];
    for (int a = 0; a < d; ++a) {
        const int n = m[a];
        line.resize(n);
        out.resize(n);
        for (int start = 0; start < total; ++start) {
            if ((start / stride) % n != 0)
                continue;
            for (int k = 0; k < n; ++k)
                line[k] = data[start + k * stride];
            if (inverse)
                fft.inv(out.data(), line.data(), n);
            else
                fft.fwd(out.data(), line.data(), n);
            for (int k = 0; k < n; ++k)
                data[start + k * stride] = out[k];
        }
        stride *= n;
    }
}

} // namespace detail

// Smooth dyadic partition of the extended lattice. Frequencies are measured in
// half-waves per unit length, xi_a = k_a / L_a, so a mode sin(pi m x / L) sits at m.
// Profiles are raised cosines in log2|xi|: phi_j = cos^2(pi/2 (log2|xi| - j)) on
// [2^{j-1}, 2^{j+1}], and chi (block -1) is 1 - sum_{j>=0} phi_j.
class DyadicFilterBank {
public:
    DyadicFilterBank() = default;

    explicit DyadicFilterBank(const Grid& g, Extension ext = Extension::even_reflection)
        : grid_(g), ext_(ext)
    {
        for (int a = 0; a < 3; ++a)
            m_[a] = a < g.d ? 2 * (g.dims[a] + 1) : 1;
        const int total = m_[0] * m_[1] * m_[2];
        radius_.resize(total);
        double rmax = 0.0;
        for (int idx = 0; idx < total; ++idx) {
            int rest = idx;
            double r2 = 0.0;
            for (int a = 0; a < g.d; ++a) {
                int k = rest % m_[a];
                rest /= m_[a];
                if (k > m_[a] / 2)
                    k -= m_[a];
                double xi = k / g.lengths[a];
                r2 += xi * xi;
            }
            radius_[idx] = std::sqrt(r2);
            rmax = std::max(rmax, radius_[idx]);
        }
        jmax_ = std::max(0, static_cast<int>(std::ceil(std::log2(rmax))));
        weights_.assign(jmax_ + 2, Vec::Zero(total));
        for (int idx = 0; idx < total; ++idx) {
            double r = radius_[idx];
            if (r <= 0.5) {
                weights_[0][idx] = 1.0;
                continue;
            }
            double t = std::log2(r);
            int j = static_cast<int>(std::floor(t));
            double c = std::cos(0.5 * M_PI * (t - j));
            // block j gets cos^2, block j+1 gets sin^2
            if (j >= -1 && j <= jmax_)
                weights_[j + 1][idx] += c * c;
            if (j + 1 >= -1 && j + 1 <= jmax_)
                weights_[j + 2][idx] += 1.0 - c * c;
        }
    }

    const Grid& grid() const { return grid_; }
    Extension extension() const { return ext_; }
    int jmax() const { return jmax_; }
    int block_count() const { return jmax_ + 2; }
    const std::array<int, 3>& extended_dims() const { return m_; }
    int extended_size() const { return m_[0] * m_[1] * m_[2]; }
    const Vec& weight(int j) const { return weights_.at(j + 1); }
    const Vec& radius() const { return radius_; }

    // values on the 2(n+1)-periodic lattice; node i of the box sits at index i+1
    Vec extend(const Eigen::Ref<const Vec>& values) const
    {
        const int total = extended_size();
        Vec e(total);
        for (int idx = 0; idx < total; ++idx) {
            int rest = idx;
            int node = 0, mul = 1;
            double sign = 1.0;
            bool zero = false;
            for (int a = 0; a < grid_.d; ++a) {
                const int n = grid_.dims[a];
                int k = rest % m_[a];
                rest /= m_[a];
                int i;
                if (k >= 1 && k <= n) {
                    i = k - 1;
                } else if (k > n + 1) {
                    i = m_[a] - k - 1;
                    if (ext_ == Extension::odd_reflection)
                        sign = -sign;
                    if (ext_ == Extension::zero_pad)
                        zero = true;
                } else {
                    // k == 0 or k == n + 1: the boundary itself
                    i = k == 0 ? 0 : n - 1;
                    if (ext_ != Extension::even_reflection)
                        zero = true;
                }
                node += i * mul;
                mul *= n;
            }
            e[idx] = zero ? 0.0 : sign * values[node];
        }
        return e;
    }

    Vec restrict_to_box(const Vec& ext) const
    {
        Vec out(grid_.size());
        for (int node = 0; node < grid_.size(); ++node) {
            auto c = grid_.coords(node);
            int idx = 0, mul = 1;
            for (int a = 0; a < grid_.d; ++a) {
                idx += (c[a] + 1) * mul;
                mul *= m_[a];
            }
            out[node] = ext[idx];
        }
        return out;
    }

    std::vector<std::complex<double>> spectrum(const Eigen::Ref<const Vec>& values) const
    {
        for (Eigen::Index i = 0; i < values.size(); ++i)
            if (!std::isfinite(values[i]))
                throw DataError("besov: field has non-finite values");
        Vec e = extend(values);
        std::vector<std::complex<double>> c(e.size());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            c[i] = e[i];
        detail::fft_nd(c, m_, grid_.d, false);
        return c;
    }

    // block j of a precomputed spectrum, back on the extended lattice
    Vec block(const std::vector<std::complex<double>>& spec, int j) const
    {
        const Vec& w = weight(j);
        std::vector<std::complex<double>> c(spec.size());
        bool any = false;
        for (size_t i = 0; i < spec.size(); ++i) {
            c[i] = w[i] * spec[i];
            any = any || w[i] != 0.0;
        }
        Vec out = Vec::Zero(c.size());
        if (!any)
            return out;
        detail::fft_nd(c, m_, grid_.d, true);
        for (size_t i = 0; i < c.size(); ++i)
            out[i] = c[i].real();
        return out;
    }

private:
    Grid grid_;
    Extension ext_ = Extension::even_reflection;
    std::array<int, 3> m_{1, 1, 1};
    int jmax_ = 0;
    Vec radius_;
    std::vector<Vec> weights_;
};

// Band-limited pieces of the extended field, j = -1..jmax in order.
inline std::vector<Vec> lp_blocks(const Eigen::Ref<const Vec>& values, const DyadicFilterBank& bank)
{
    auto spec = bank.spectrum(values);
    std::vector<Vec> out;
    for (int j = -1; j <= bank.jmax(); ++j)
        out.push_back(bank.block(spec, j));
    return out;
}

inline std::vector<Vec> lp_blocks(const ScalarField& f, const DyadicFilterBank& bank)
{
    return lp_blocks(f.values, bank);
}

// L^p over the box nodes of a pointwise Euclidean magnitude across components
inline double lp_norm_box(const Grid& g, const std::vector<Vec>& box_comps, double p)
{
    const int n = g.size();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        double m2 = 0.0;
        for (const auto& c : box_comps)
            m2 += c[i] * c[i];
        double m = std::sqrt(m2);
        if (std::isinf(p))
            acc = std::max(acc, m);
        else
            acc += std::pow(m, p);
    }
    if (std::isinf(p))
        return acc;
    return std::pow(g.cell_volume() * acc, 1.0 / p);
}

// Per-block L^p norms of a multi-component field, j = -1..jmax.
inline Vec block_norms(const std::vector<Eigen::Ref<const Vec>>& comps, double p, const DyadicFilterBank& bank)
{
    const Grid& g = bank.grid();
    std::vector<std::vector<std::complex<double>>> specs;
    for (const auto& c : comps)
        specs.push_back(bank.spectrum(c));
    Vec out(bank.block_count());
    for (int j = -1; j <= bank.jmax(); ++j) {
        std::vector<Vec> pieces;
        for (const auto& s : specs)
            pieces.push_back(bank.restrict_to_box(bank.block(s, j)));
        out[j + 1] = lp_norm_box(g, pieces, p);
    }
    return out;
}

inline double besov_from_blocks(const Vec& norms, const BesovParams& bp)
{
    double acc = 0.0;
    for (Eigen::Index k = 0; k < norms.size(); ++k) {
        const int j = static_cast<int>(k) - 1;
        double v = std::pow(2.0, j * bp.s) * norms[k];
        if (std::isinf(bp.q))
            acc = std::max(acc, v);
        else
            acc += std::pow(v, bp.q);
    }
    return std::isinf(bp.q) ? acc : std::pow(acc, 1.0 / bp.q);
}

inline double besov_norm(const std::vector<Eigen::Ref<const Vec>>& comps, const BesovParams& bp,
                         const DyadicFilterBank& bank)
{
    bp.validate();
    return besov_from_blocks(block_norms(comps, bp.p, bank), bp);
}

inline double besov_norm(const ScalarField& f, const BesovParams& bp, const DyadicFilterBank& bank)
{
    return besov_norm({f.values}, bp, bank);
}

inline double besov_norm(const VectorField& u, const BesovParams& bp, const DyadicFilterBank& bank)
{
    std::vector<Eigen::Ref<const Vec>> comps;
    for (int c = 0; c < u.grid.d; ++c)
        comps.emplace_back(u.comp(c));
    return besov_norm(comps, bp, bank);
}

inline double besov_norm(const TensorField& t, const BesovParams& bp, const DyadicFilterBank& bank)
{
    std::vector<Eigen::Ref<const Vec>> comps;
    for (int i = 0; i < t.grid.d; ++i)
        for (int j = 0; j < t.grid.d; ++j)
            comps.emplace_back(t.at(i, j));
    return besov_norm(comps, bp, bank);
}

struct EstimateRatio {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
};

// ||uv||_{B^s_{p,1}} against ||u||_{B^s_{p,1}} ||v||_{B^{d/p}_{p,1}}
inline EstimateRatio verify_product_estimate(const ScalarField& u, const ScalarField& v, double s,
                                             const BesovParams& bp, const DyadicFilterBank& bank)
{
    const double dp = bp.d / bp.p;
    const double dpp = std::isinf(bp.p) ? bp.d : bp.d * (1.0 - 1.0 / bp.p);
    if (!(s > -std::min(dp, dpp)) || s > dp)
        throw std::invalid_argument("product estimate: s outside (-min(d/p, d/p'), d/p]");
    BesovParams b1{s, bp.p, 1.0, bp.d};
    BesovParams bc{dp, bp.p, 1.0, bp.d};
    ScalarField uv(u.grid, u.values.cwiseProduct(v.values));
    EstimateRatio r;
    r.lhs = besov_norm(uv, b1, bank);
    r.rhs = besov_norm(u, b1, bank) * besov_norm(v, bc, bank);
    r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    return r;
}

// ||K(z)||_{B^{d/p}_{p,1}} against (1 + ||z||)^k ||z||, k = ceil(d/p), all norms B^{d/p}_{p,1}
inline EstimateRatio verify_composition_estimate(const std::function<double(double)>& k_fn, const ScalarField& z,
                                                 const BesovParams& bp, const DyadicFilterBank& bank)
{
    if (std::abs(k_fn(0.0)) > 1e-12)
        throw std::invalid_argument("composition estimate: K(0) must vanish");
    BesovParams bc{bp.d / bp.p, bp.p, 1.0, bp.d};
    ScalarField kz(z.grid, z.values.unaryExpr(k_fn));
    const int k = static_cast<int>(std::ceil(bp.d / bp.p));
    const double zn = besov_norm(z, bc, bank);
    EstimateRatio r;
    r.lhs = besov_norm(kz, bc, bank);
    r.rhs = std::pow(1.0 + zn, k) * zn;
    r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    return r;
}

} // namespace cnslab
