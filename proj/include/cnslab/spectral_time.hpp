#pragma once

#include "linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace cnslab {

// Piecewise polynomial time mesh: elements with Chebyshev-Lobatto nodes of a fixed
// degree, sharing end nodes. The first uniform element is split geometrically toward
// t = 0 so that a decay rate r_max is resolved there.
class TimeMesh {
public:
    TimeMesh() = default;

    TimeMesh(double t_end, double r_max, int uniform, int degree) : degree_(degree)
    {
        if (!(t_end > 0.0) || uniform < 1 || degree < 2)
            throw std::invalid_argument("time mesh: bad parameters");
        ref_ = chebyshev_lobatto(degree).nodes;
        const double h = t_end / uniform;
        const double finest = r_max > 0.0 ? std::min(h, 1.0 / (4.0 * r_max)) : h;
        std::vector<double> edges{0.0};
        int k = 0;
        while (h * std::ldexp(1.0, -k) > finest)
            ++k;
        for (int j = k; j >= 1; --j)
            edges.push_back(h * std::ldexp(1.0, -j));
        for (int e = 1; e <= uniform; ++e)
            edges.push_back(e == uniform ? t_end : e * h);
        for (size_t e = 0; e + 1 < edges.size(); ++e) {
            double len = edges[e + 1] - edges[e];
            int ty = -1;
            for (size_t q = 0; q < type_length_.size(); ++q)
                if (std::abs(type_length_[q] - len) <= 1e-14 * len)
                    ty = static_cast<int>(q);
            if (ty < 0) {
                ty = static_cast<int>(type_length_.size());
                type_length_.push_back(len);
            }
            starts_.push_back(edges[e]);
            lengths_.push_back(len);
            type_.push_back(ty);
        }
        t_.push_back(0.0);
        for (int e = 0; e < elements(); ++e)
            for (int i = 1; i <= degree_; ++i)
                t_.push_back(starts_[e] + ref_[i] * lengths_[e]);
        t_.back() = edges.back();
    }

    int degree() const { return degree_; }
    int elements() const { return static_cast<int>(starts_.size()); }
    int nodes() const { return static_cast<int>(t_.size()); }
    int node(int e, int i) const { return e * degree_ + i; }
    double time(int n) const { return t_[n]; }
    const std::vector<double>& times() const { return t_; }
    double start(int e) const { return starts_[e]; }
    double length(int e) const { return lengths_[e]; }
    int type(int e) const { return type_[e]; }
    int types() const { return static_cast<int>(type_length_.size()); }
    double type_length(int q) const { return type_length_[q]; }
    const Vec& reference() const { return ref_; }
    double end() const { return t_.back(); }

    // element containing t and the Lagrange weights of its nodes
    std::pair<int, Vec> locate(double t) const
    {
        int e = 0;
        while (e + 1 < elements() && t > starts_[e] + lengths_[e])
            ++e;
        double s = (t - starts_[e]) / lengths_[e];
        return {e, lagrange_basis(ref_, std::clamp(s, 0.0, 1.0))};
    }

    // values at t of a mesh function stored column-wise (rows x nodes)
    Vec interpolate(const Mat& f, double t) const
    {
        auto [e, w] = locate(t);
        Vec out = Vec::Zero(f.rows());
        for (int i = 0; i <= degree_; ++i)
            out += w[i] * f.col(node(e, i));
        return out;
    }

private:
    int degree_ = 0;
    Vec ref_;
    std::vector<double> t_, starts_, lengths_, type_length_;
    std::vector<int> type_;
};

// Exact convolution y(t) = int_0^t e^{-r (t - s)} h(s) ds per rate, for h the
// piecewise Lagrange interpolant of its nodal values. Within an element of length D,
//   y_i = e^{-r s_i D} y_0 + sum_j W_ij(r D) h_j,  W_ij = D int_0^{s_i} e^{-rD(s_i - v)} l_j(v) dv.
class ModalConvolution {
public:
    ModalConvolution() = default;

    ModalConvolution(const TimeMesh& mesh, const Vec& rates) : mesh_(mesh), rates_(rates)
    {
        const int p = mesh.degree(), m = static_cast<int>(rates.size()), q = mesh.types();
        w_.assign(static_cast<size_t>(m) * q, Mat());
        decay_.assign(static_cast<size_t>(m) * q, Vec());
        const Quadrature gl = gauss_legendre(16, 0.0, 1.0);
        const Vec& ref = mesh.reference();
        for (int k = 0; k < m; ++k)
            for (int ty = 0; ty < q; ++ty) {
                const double len = mesh.type_length(ty);
                const double x = rates[k] * len;
                Mat w = Mat::Zero(p + 1, p + 1);
                Vec dec(p + 1);
                for (int i = 0; i <= p; ++i) {
                    const double s = ref[i];
                    dec[i] = std::exp(-x * s);
                    if (s == 0.0)
                        continue;
                    // integrate over v in [0, s], split geometrically toward v = s
                    double lo_w = 0.0;
                    double hi_w = x > 0.0 ? std::min(s, 1.0 / x) : s;
                    while (true) {
                        for (Eigen::Index g = 0; g < gl.nodes.size(); ++g) {
                            double wv = lo_w + (hi_w - lo_w) * gl.nodes[g];
                            double weight = (hi_w - lo_w) * gl.weights[g] * std::exp(-x * wv);
                            w.row(i) += weight * lagrange_basis(ref, s - wv).transpose();
                        }
                        if (hi_w >= s || x * hi_w > 60.0)
                            break;
                        lo_w = hi_w;
                        hi_w = std::min(s, 2.0 * hi_w);
                    }
                }
                w_[k * q + ty] = len * w;
                decay_[k * q + ty] = dec;
            }
    }

    const TimeMesh& mesh() const { return mesh_; }
    const Vec& rates() const { return rates_; }

    // rows are modes (one rate each), columns mesh nodes; zero initial value.
    // With shared, every row uses the first rate.
    Mat apply(const Mat& h, bool shared = false) const
    {
        const int m = static_cast<int>(h.rows()), p = mesh_.degree(), q = mesh_.types();
        if ((!shared && m != static_cast<int>(rates_.size())) || h.cols() != mesh_.nodes())
            throw std::invalid_argument("modal convolution: shape mismatch");
        Mat y = Mat::Zero(m, mesh_.nodes());
        for (int k = 0; k < m; ++k) {
            const int kr = shared ? 0 : k;
            double y0 = 0.0;
            for (int e = 0; e < mesh_.elements(); ++e) {
                const Mat& w = w_[kr * q + mesh_.type(e)];
                const Vec& dec = decay_[kr * q + mesh_.type(e)];
                const int n0 = mesh_.node(e, 0);
                for (int i = 1; i <= p; ++i) {
                    double acc = dec[i] * y0;
                    for (int j = 0; j <= p; ++j)
                        acc += w(i, j) * h(k, n0 + j);
                    y(k, n0 + i) = acc;
                }
                y0 = y(k, n0 + p);
            }
        }
        return y;
    }

private:
    TimeMesh mesh_;
    Vec rates_;
    std::vector<Mat> w_;
    std::vector<Vec> decay_;
};

} // namespace cnslab
