#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <lapacke.h>

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace cnslab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// an iteration that stopped contracting
class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// lost invertibility or resolution: flow maps, horizons, partitions
class DegeneracyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Eigenvalues of a general real matrix (LAPACK dgeev, no vectors).
inline CVec dense_eigenvalues(Mat a)
{
    const int n = static_cast<int>(a.rows());
    Vec wr(n), wi(n);
    int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, wr.data(), wi.data(),
                             nullptr, 1, nullptr, 1);
    if (info != 0)
        throw NumericalError("dgeev failed, info=" + std::to_string(info));
    CVec out(n);
    for (int i = 0; i < n; ++i)
        out[i] = {wr[i], wi[i]};
    return out;
}

struct SymEig {
    Vec values;
    Mat vectors;
};

// Symmetric eigendecomposition (LAPACK dsyevd), ascending eigenvalues.
inline SymEig sym_eig(const Mat& s)
{
    const int n = static_cast<int>(s.rows());
    SymEig r{Vec(n), 0.5 * (s + s.transpose())};
    int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, r.vectors.data(), n, r.values.data());
    if (info != 0)
        throw NumericalError("dsyevd failed, info=" + std::to_string(info));
    return r;
}

// e^Z and optionally phi1(Z) = sum Z^k/(k+1)!, by Taylor expansion on Z/2^s
// followed by the doubling rules E(2Y) = E(Y)^2, phi1(2Y) = (E(Y) + I) phi1(Y) / 2.
inline void expm_phi1(const Mat& z, Mat& e, Mat* phi)
{
    const Eigen::Index n = z.rows();
    const double norm1 = z.cwiseAbs().colwise().sum().maxCoeff();
    int s = 0;
    if (norm1 > 0.5)
        s = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
    const Mat y = z / std::ldexp(1.0, s);
    const Mat id = Mat::Identity(n, n);

    // phi1(Y) = sum_{k=0}^{m} Y^k/(k+1)!, Paterson-Stockmeyer with blocks of 4.
    constexpr int m = 15;
    std::vector<double> c(m + 1);
    double f = 1.0;
    for (int k = 0; k <= m; ++k) {
        f *= (k + 1);
        c[k] = 1.0 / f;
    }
    Mat y2 = y * y;
    Mat y3 = y2 * y;
    Mat y4 = y2 * y2;
    auto block = [&](int j) {
        Mat b = c[4 * j] * id + c[4 * j + 1] * y + c[4 * j + 2] * y2;
        b += c[4 * j + 3] * y3;
        return b;
    };
    Mat p = block(3);
    for (int j = 2; j >= 0; --j) {
        Mat t = y4 * p;
        p = t + block(j);
    }
    Mat ph = std::move(p);
    e = id + y * ph;
    for (int i = 0; i < s; ++i) {
        if (phi) {
            Mat t = e * ph;
            ph = 0.5 * (t + ph);
        }
        Mat t = e * e;
        e = std::move(t);
    }
    if (phi)
        *phi = std::move(ph);
}

inline Mat expm(const Mat& z)
{
    Mat e;
    expm_phi1(z, e, nullptr);
    return e;
}

struct Quadrature {
    Vec nodes;
    Vec weights;
};

// Gauss-Legendre rule on [a, b] (Golub-Welsch).
inline Quadrature gauss_legendre(int n, double a = -1.0, double b = 1.0)
{
    Mat j = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        double beta = k / std::sqrt(4.0 * k * k - 1.0);
        j(k, k - 1) = beta;
        j(k - 1, k) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(j);
    Quadrature q{Vec(n), Vec(n)};
    for (int k = 0; k < n; ++k) {
        q.nodes[k] = 0.5 * (a + b) + 0.5 * (b - a) * es.eigenvalues()[k];
        q.weights[k] = (b - a) * es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
    }
    return q;
}

// Chebyshev-Lobatto points on [0, 1] in increasing order, with Clenshaw-Curtis weights.
inline Quadrature chebyshev_lobatto(int p)
{
    Quadrature q{Vec(p + 1), Vec::Zero(p + 1)};
    for (int i = 0; i <= p; ++i)
        q.nodes[i] = 0.5 * (1.0 - std::cos(M_PI * i / p));
    for (int i = 0; i <= p; ++i) {
        double th = M_PI * i / p;
        double w = 1.0;
        for (int k = 1; k <= p / 2; ++k) {
            double bk = (2 * k == p) ? 1.0 : 2.0;
            w -= bk * std::cos(2.0 * k * th) / (4.0 * k * k - 1.0);
        }
        double ci = (i == 0 || i == p) ? 1.0 : 2.0;
        q.weights[i] = 0.5 * ci * w / p;
    }
    return q;
}

// Lagrange basis values at x for nodes xs (barycentric form).
inline Vec lagrange_basis(const Vec& xs, double x)
{
    const Eigen::Index n = xs.size();
    Vec l(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double v = 1.0;
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != j)
                v *= (x - xs[k]) / (xs[j] - xs[k]);
        l[j] = v;
    }
    return l;
}

} // namespace cnslab
