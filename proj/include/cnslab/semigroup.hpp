#pragma once

#include "grid.hpp"

#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <vector>

namespace cnslab {

using cplx = std::complex<double>;
using SpMatC = Eigen::SparseMatrix<cplx>;

enum class SymmetryHint { general, self_adjoint };

inline constexpr int dense_limit = 4096;
inline constexpr int eigen_limit = 8192;

// Spectral data of an operator that is self-adjoint for <x, y>_W = x^T diag(W) y:
// A = Q diag(values) Qinv with Q W-orthonormal.
struct SpectralData {
    Vec values;
    Mat q;
    Mat qinv;
};

// Assembled finite-dimensional operator. With hint self_adjoint, diag(weight) * A must be
// symmetric (weight empty means the identity); the spectral path is then exact.
class LinearOperator {
public:
    LinearOperator() = default;

    explicit LinearOperator(SpMat a, SymmetryHint hint = SymmetryHint::general, Vec weight = {})
        : a_(std::move(a)), hint_(hint), weight_(std::move(weight)), cache_(std::make_shared<Cache>())
    {
        if (a_.rows() != a_.cols())
            throw std::invalid_argument("operator: matrix must be square");
        a_.makeCompressed();
    }

    int dimension() const { return static_cast<int>(a_.rows()); }
    const SpMat& matrix() const { return a_; }
    SymmetryHint symmetry_hint() const { return hint_; }
    const Vec& weight() const { return weight_; }
    Vec apply(const Vec& x) const { return a_ * x; }
    Mat dense() const { return Mat(a_); }

    const SpectralData& spectral() const
    {
        if (hint_ != SymmetryHint::self_adjoint)
            throw std::logic_error("operator: spectral path needs a self-adjoint operator");
        std::call_once(cache_->spec_once, [&] {
            Mat s = dense();
            if (weight_.size() == 0) {
                auto e = sym_eig(s);
                cache_->spec = {e.values, e.vectors, e.vectors.transpose()};
            } else {
                Vec r = weight_.cwiseSqrt(), ri = r.cwiseInverse();
                Mat sym = r.asDiagonal() * s * ri.asDiagonal();
                auto e = sym_eig(sym);
                cache_->spec = {e.values, ri.asDiagonal() * e.vectors, e.vectors.transpose() * r.asDiagonal()};
            }
        });
        return cache_->spec;
    }

    // full spectrum, dense eigensolve; cached
    const CVec& eigenvalues() const
    {
        std::call_once(cache_->eig_once, [&] {
            if (hint_ == SymmetryHint::self_adjoint) {
                cache_->eig = spectral().values.cast<cplx>();
            } else {
                if (dimension() > eigen_limit)
                    throw std::length_error("operator: dense eigensolve limited to dimension 8192");
                cache_->eig = dense_eigenvalues(dense());
            }
        });
        return cache_->eig;
    }

    double spectral_abscissa() const
    {
        if (dimension() > eigen_limit)
            return smallest_by_inverse_iteration();
        return eigenvalues().real().minCoeff();
    }

    // dense e^{-tA}, cached per t
    const Mat& dense_exp(double t) const
    {
        std::lock_guard<std::mutex> lock(cache_->exp_mutex);
        auto it = cache_->exp.find(t);
        if (it != cache_->exp.end())
            return it->second;
        Mat e;
        expm_phi1(-t * dense(), e, nullptr);
        return cache_->exp.emplace(t, std::move(e)).first->second;
    }

    SpMatC shifted(cplx lambda, bool adjoint = false) const
    {
        SpMatC m = adjoint ? SpMatC(a_.transpose().cast<cplx>()) : SpMatC(a_.cast<cplx>());
        SpMatC id(m.rows(), m.cols());
        id.setIdentity();
        return m + (adjoint ? std::conj(lambda) : lambda) * id;
    }

private:
    double smallest_by_inverse_iteration() const
    {
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        Eigen::SparseMatrix<double> m(a_);
        lu.compute(m);
        if (lu.info() != Eigen::Success)
            return 0.0;
        std::mt19937 gen(17);
        std::normal_distribution<double> nd;
        Vec x(dimension());
        for (auto& v : x)
            v = nd(gen);
        double est = 0.0;
        for (int it = 0; it < 200; ++it) {
            x.normalize();
            Vec y = lu.solve(x);
            double rq = x.dot(y);
            x = y;
            if (it > 0 && std::abs(rq - est) <= 1e-10 * std::abs(rq))
                break;
            est = rq;
        }
        return est != 0.0 ? 1.0 / est : 0.0;
    }

    struct Cache {
        std::once_flag spec_once, eig_once;
        SpectralData spec;
        CVec eig;
        std::mutex exp_mutex;
        std::map<double, Mat> exp;
    };

    SpMat a_;
    SymmetryHint hint_ = SymmetryHint::general;
    Vec weight_;
    std::shared_ptr<Cache> cache_;
};

// (lambda + A)^{-1}, one factorization per lambda
class Resolvent {
public:
    Resolvent(const LinearOperator& a, cplx lambda) : lambda_(lambda)
    {
        lu_.compute(a.shifted(lambda));
        ok_ = lu_.info() == Eigen::Success;
    }

    bool ok() const { return ok_; }
    CVec solve(const CVec& b) const { return lu_.solve(b); }
    CVec solve_adjoint(const CVec& b) const { return lu_.adjoint().solve(b); }
    cplx lambda() const { return lambda_; }

private:
    cplx lambda_;
    mutable Eigen::SparseLU<SpMatC> lu_;
    bool ok_ = false;
};

inline CVec resolvent_solve(const LinearOperator& a, cplx lambda, const CVec& b)
{
    Resolvent r(a, lambda);
    if (!r.ok())
        throw NumericalError("resolvent: factorization failed");
    return r.solve(b);
}

// ---------------------------------------------------------------------------
// Krylov exponential action

// e^{tB} v for B given by its action, Arnoldi with local error control.
inline Vec krylov_expmv(const std::function<Vec(const Vec&)>& b, const Vec& v, double t, double tol = 1e-9,
                        int m = 40)
{
    Vec w = v;
    const double vnorm = v.norm();
    if (vnorm == 0.0 || t == 0.0)
        return w;
    double tnow = 0.0, tau = t;
    const int n = static_cast<int>(v.size());
    m = std::min(m, n);
    int guard = 0;
    while (tnow < t) {
        if (++guard > 100000)
            throw NumericalError("krylov: step size underflow");
        const double beta = w.norm();
        if (beta == 0.0)
            break;
        Mat vb = Mat::Zero(n, m + 1);
        Mat h = Mat::Zero(m + 1, m);
        vb.col(0) = w / beta;
        int mm = m;
        double hnext = 0.0;
        for (int j = 0; j < m; ++j) {
            Vec p = b(vb.col(j));
            for (int i = 0; i <= j; ++i) {
                h(i, j) = vb.col(i).dot(p);
                p -= h(i, j) * vb.col(i);
            }
            // one reorthogonalization pass
            for (int i = 0; i <= j; ++i) {
                double c = vb.col(i).dot(p);
                h(i, j) += c;
                p -= c * vb.col(i);
            }
            double hn = p.norm();
            h(j + 1, j) = hn;
            if (hn <= 1e-12 * h.topLeftCorner(j + 1, j + 1).norm()) {
                mm = j + 1;
                hnext = 0.0;
                break;
            }
            vb.col(j + 1) = p / hn;
            hnext = hn;
        }
        tau = std::min(tau, t - tnow);
        for (;;) {
            Mat hm = h.topLeftCorner(mm, mm) * tau;
            Mat e, ph;
            expm_phi1(hm, e, &ph);
            double err = beta * hnext * tau * std::abs(ph(mm - 1, 0));
            if (hnext == 0.0 || err <= tol * beta * tau / t) {
                w = beta * (vb.leftCols(mm) * e.col(0));
                tnow += tau;
                if (err < 0.1 * tol * beta * tau / t)
                    tau *= 1.5;
                break;
            }
            tau *= 0.5;
            if (tau < 1e-14 * t)
                throw NumericalError("krylov: step size underflow");
        }
    }
    return w;
}

// ---------------------------------------------------------------------------
// propagation

inline Vec propagate(const LinearOperator& a, const Vec& x0, double t)
{
    if (t < 0.0)
        throw std::invalid_argument("propagate: t must be >= 0");
    if (t == 0.0)
        return x0;
    if (a.symmetry_hint() == SymmetryHint::self_adjoint && a.dimension() <= eigen_limit) {
        const auto& s = a.spectral();
        Vec c = s.qinv * x0;
        c.array() *= (-t * s.values.array()).exp();
        return s.q * c;
    }
    if (a.dimension() <= dense_limit)
        return a.dense_exp(t) * x0;
    return krylov_expmv([&](const Vec& y) -> Vec { return -(a.matrix() * y); }, x0, t);
}

// One step of the exponential integrator x -> e^{-dt A} x + dt phi1(-dt A) f.
// The forcing is held constant over the step, so the update is exact for
// piecewise-constant forcing.
class ExpIntegrator {
public:
    enum class Mode { spectral, dense, krylov };

    ExpIntegrator() = default;

    ExpIntegrator(const LinearOperator& a, double dt, std::optional<Mode> force = std::nullopt) : a_(a), dt_(dt)
    {
        Mode pick = Mode::krylov;
        if (a.symmetry_hint() == SymmetryHint::self_adjoint && a.dimension() <= eigen_limit)
            pick = Mode::spectral;
        else if (a.dimension() <= dense_limit)
            pick = Mode::dense;
        if (force)
            pick = *force;
        if (pick == Mode::spectral) {
            mode_ = Mode::spectral;
            const auto& s = a.spectral();
            decay_ = (-dt * s.values.array()).exp();
            phi_ = Vec(s.values.size());
            for (Eigen::Index i = 0; i < phi_.size(); ++i) {
                double z = dt * s.values[i];
                phi_[i] = std::abs(z) < 1e-8 ? dt * (1.0 - 0.5 * z) : dt * (-std::expm1(-z)) / z;
            }
        } else if (pick == Mode::dense) {
            mode_ = Mode::dense;
            Mat z = -dt * a.dense();
            expm_phi1(z, e_, &p_);
            p_ *= dt;
        } else {
            mode_ = Mode::krylov;
        }
    }

    Mode mode() const { return mode_; }
    double dt() const { return dt_; }
    const LinearOperator& op() const { return a_; }

    Vec step(const Vec& x, const Vec* f) const
    {
        switch (mode_) {
        case Mode::spectral: {
            const auto& s = a_.spectral();
            Vec c = (s.qinv * x).cwiseProduct(decay_);
            if (f)
                c += (s.qinv * *f).cwiseProduct(phi_);
            return s.q * c;
        }
        case Mode::dense: {
            Vec y = e_ * x;
            if (f)
                y.noalias() += p_ * *f;
            return y;
        }
        case Mode::krylov:
        default: {
            if (!f)
                return krylov_expmv([&](const Vec& y) -> Vec { return -(a_.matrix() * y); }, x, dt_);
            // augmented generator [[-A, f], [0, 0]] acting on (x, 1)
            const Eigen::Index n = x.size();
            Vec aug(n + 1);
            aug << x, 1.0;
            const Vec& ff = *f;
            auto b = [&](const Vec& y) -> Vec {
                Vec r(n + 1);
                r.head(n) = -(a_.matrix() * y.head(n)) + y[n] * ff;
                r[n] = 0.0;
                return r;
            };
            return krylov_expmv(b, aug, dt_).head(n);
        }
        }
    }

private:
    LinearOperator a_;
    double dt_ = 0.0;
    Mode mode_ = Mode::dense;
    Mat e_, p_;
    Vec decay_, phi_;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
};

// Duhamel formula by the exponential integrator with forcing sampled at step midpoints
// (forcing[n] at t = (n + 1/2) dt); an empty forcing list means f = 0.
inline Trajectory solve_cauchy(const ExpIntegrator& integ, const Vec& x0, const std::vector<Vec>& forcing, int steps)
{
    if (steps < 8)
        throw std::invalid_argument("solve_cauchy: steps must be >= 8");
    if (!forcing.empty() && static_cast<int>(forcing.size()) != steps)
        throw std::invalid_argument("solve_cauchy: one forcing sample per step required");
    Trajectory tr;
    tr.times.reserve(steps + 1);
    tr.states.reserve(steps + 1);
    tr.times.push_back(0.0);
    tr.states.push_back(x0);
    for (int n = 0; n < steps; ++n) {
        tr.states.push_back(integ.step(tr.states.back(), forcing.empty() ? nullptr : &forcing[n]));
        tr.times.push_back((n + 1) * integ.dt());
    }
    return tr;
}

inline Trajectory solve_cauchy(const LinearOperator& a, const Vec& x0, const std::vector<Vec>& forcing, double t_end,
                               int steps)
{
    if (steps < 8)
        throw std::invalid_argument("solve_cauchy: steps must be >= 8");
    return solve_cauchy(ExpIntegrator(a, t_end / steps), x0, forcing, steps);
}

inline Trajectory solve_cauchy(const LinearOperator& a, const Vec& x0, const std::function<Vec(double)>& f,
                               double t_end, int steps)
{
    if (steps < 8)
        throw std::invalid_argument("solve_cauchy: steps must be >= 8");
    const double dt = t_end / steps;
    std::vector<Vec> samples;
    if (f)
        for (int n = 0; n < steps; ++n)
            samples.push_back(f((n + 0.5) * dt));
    return solve_cauchy(ExpIntegrator(a, dt), x0, samples, steps);
}

// ---------------------------------------------------------------------------
// interpolation norms

// Weighted Euclidean base norm; an empty weight is the plain Euclidean norm.
inline double base_norm(const Vec& x, const Vec& weight)
{
    if (weight.size() == 0)
        return x.norm();
    return std::sqrt((weight.array() * x.array().square()).sum());
}

struct InterpolationGrid {
    std::vector<double> t;
    double dlog = 0.0;
};

// 64 points per decade over 8 decades centred at 1/c
inline InterpolationGrid interpolation_grid(double abscissa)
{
    InterpolationGrid g;
    const double tc = 1.0 / abscissa;
    g.dlog = std::log(10.0) / 64.0;
    for (int k = 0; k <= 512; ++k)
        g.t.push_back(tc * std::pow(10.0, (k - 256) / 64.0));
    return g;
}

// integral of t^{1-theta} h(t) dt/t given h on the grid; trapezoid in log t plus the
// small-t tail, where h is flat to leading order
inline double interpolation_quadrature(const InterpolationGrid& g, const std::vector<double>& h, double theta)
{
    double acc = 0.0;
    for (size_t k = 0; k < g.t.size(); ++k) {
        double w = (k == 0 || k + 1 == g.t.size()) ? 0.5 : 1.0;
        acc += w * std::pow(g.t[k], 1.0 - theta) * h[k];
    }
    acc *= g.dlog;
    acc += std::pow(g.t.front(), 1.0 - theta) / (1.0 - theta) * h.front();
    return acc;
}

// Precomputed data for repeated [x]_{theta,1} evaluations on one operator.
class InterpolationNorm {
public:
    InterpolationNorm(const LinearOperator& a, double theta, Vec weight = {})
        : a_(a), theta_(theta), weight_(std::move(weight))
    {
        if (!(theta > 0.0 && theta < 1.0))
            throw std::invalid_argument("interpolation norm: theta must lie in (0, 1)");
        abscissa_ = a.spectral_abscissa();
        if (!(abscissa_ > 0.0))
            throw std::domain_error("interpolation norm: spectral abscissa must be positive");
        grid_ = interpolation_grid(abscissa_);
        // the same weights as interpolation_quadrature, precomputed
        qw_.resize(grid_.t.size());
        for (size_t k = 0; k < grid_.t.size(); ++k) {
            double w = (k == 0 || k + 1 == grid_.t.size()) ? 0.5 : 1.0;
            qw_[k] = w * grid_.dlog * std::pow(grid_.t[k], 1.0 - theta_);
        }
        qw_tail_ = std::pow(grid_.t.front(), 1.0 - theta_) / (1.0 - theta_);
        if (a.symmetry_hint() == SymmetryHint::self_adjoint && a.dimension() <= eigen_limit) {
            // coefficient norms are exact when the base weight is a multiple of the
            // operator weight (Q is then orthogonal up to that factor)
            const Vec& w = a.weight();
            Vec wb = weight_.size() ? weight_ : Vec::Ones(a.dimension());
            Vec wa = w.size() ? w : Vec::Ones(a.dimension());
            double r = wb[0] / wa[0];
            coef_ = ((wb - r * wa).cwiseAbs().maxCoeff() <= 1e-14 * wb.cwiseAbs().maxCoeff());
            coef_scale_ = std::sqrt(r);
            if (coef_) {
                // |A T(t_k) x|^2 = sum_i lambda_i^2 e^{-2 t_k lambda_i} c_i^2
                const Vec& lam = a.spectral().values;
                decay2_.resize(grid_.t.size(), lam.size());
                for (size_t k = 0; k < grid_.t.size(); ++k)
                    decay2_.row(k) = (lam.array().square() * (-2.0 * grid_.t[k] * lam.array()).exp()).matrix().transpose();
            }
        }
    }

    double abscissa() const { return abscissa_; }

    double seminorm(const Vec& x) const
    {
        std::vector<double> h(grid_.t.size());
        if (a_.symmetry_hint() == SymmetryHint::self_adjoint && a_.dimension() <= eigen_limit) {
            const auto& s = a_.spectral();
            Vec c = s.qinv * x;
            if (coef_) {
                Vec h2 = decay2_ * c.cwiseAbs2();
                for (size_t k = 0; k < h.size(); ++k)
                    h[k] = coef_scale_ * std::sqrt(std::max(h2[k], 0.0));
            } else {
                for (size_t k = 0; k < grid_.t.size(); ++k) {
                    Vec y = c.cwiseProduct((s.values.array() * (-grid_.t[k] * s.values.array()).exp()).matrix());
                    h[k] = base_norm(s.q * y, weight_);
                }
            }
        } else {
            Vec y = propagate(a_, x, grid_.t[0]);
            for (size_t k = 0; k < grid_.t.size(); ++k) {
                if (k > 0)
                    y = step(y, grid_.t[k] - grid_.t[k - 1]);
                h[k] = base_norm(a_.apply(y), weight_);
            }
        }
        double acc = 0.0;
        for (size_t k = 0; k < h.size(); ++k)
            acc += qw_[k] * h[k];
        return acc + qw_tail_ * h.front();
    }

    double norm(const Vec& x) const { return base_norm(x, weight_) + seminorm(x); }

private:
    Vec step(const Vec& y, double dt) const
    {
        if (a_.dimension() <= 256) {
            Mat e;
            expm_phi1(-dt * a_.dense(), e, nullptr);
            return e * y;
        }
        return krylov_expmv([&](const Vec& v) -> Vec { return -(a_.matrix() * v); }, y, dt, 1e-10);
    }

    LinearOperator a_;
    double theta_;
    Vec weight_;
    double abscissa_ = 0.0;
    InterpolationGrid grid_;
    bool coef_ = false;
    double coef_scale_ = 1.0;
    Mat decay2_;
    std::vector<double> qw_;
    double qw_tail_ = 0.0;
};

// ||x|| + int_0^inf ||t^{1-theta} A T(t) x|| dt/t
inline double interpolation_norm(const LinearOperator& a, const Vec& x, double theta, const Vec& weight = {})
{
    return InterpolationNorm(a, theta, weight).norm(x);
}

// ---------------------------------------------------------------------------
// resolvent scans

struct SectorReport {
    std::vector<double> angles_tested;
    std::vector<double> radii;
    Mat bounds;          // rows: angles, cols: radii; NaN where excluded
    double sup_bound = 0.0;
    double spectral_abscissa = 0.0;
    double sector_angle = 0.0;
    std::vector<std::pair<double, double>> excluded; // (angle, radius) next to the spectrum
};

// ||lambda (lambda + A)^{-1}||_2: exact SVD for small operators, otherwise power
// iteration on R^H R
inline std::optional<double> scaled_resolvent_norm(const LinearOperator& a, cplx lambda, int max_iter = 20,
                                                   double stall = 1e-6)
{
    if (a.dimension() <= 200) {
        CMat m = a.dense().cast<cplx>() + lambda * CMat::Identity(a.dimension(), a.dimension());
        Eigen::JacobiSVD<CMat> svd(m);
        double smin = svd.singularValues().minCoeff();
        if (!(smin > 1e-14 * svd.singularValues().maxCoeff()))
            return std::nullopt;
        return std::abs(lambda) / smin;
    }
    Resolvent r(a, lambda);
    if (!r.ok())
        return std::nullopt;
    std::mt19937 gen(5);
    std::normal_distribution<double> nd;
    CVec x(a.dimension());
    for (auto& v : x)
        v = cplx(nd(gen), nd(gen));
    x.normalize();
    double est = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        CVec y = r.solve(x);
        CVec z = r.solve_adjoint(y);
        if (!z.allFinite())
            return std::nullopt;
        double s = std::sqrt(std::abs(x.dot(z)));
        double zn = z.norm();
        if (zn == 0.0)
            return 0.0;
        x = z / zn;
        if (it > 0 && std::abs(s - est) <= stall * s) {
            est = s;
            break;
        }
        est = s;
    }
    double v = std::abs(lambda) * est;
    if (!std::isfinite(v) || v > 1e14)
        return std::nullopt;
    return v;
}

// lambda = r e^{i angle}; angle 0 is the positive real axis
inline SectorReport sectoriality_scan(const LinearOperator& a, const std::vector<double>& angles,
                                      const std::vector<double>& radii)
{
    for (double r : radii)
        if (!(r > 0.0))
            throw std::invalid_argument("sectoriality_scan: radii must be > 0");
    SectorReport rep;
    rep.angles_tested = angles;
    rep.radii = radii;
    rep.bounds = Mat::Constant(angles.size(), radii.size(), std::nan(""));
    rep.spectral_abscissa = a.spectral_abscissa();
    std::vector<double> per_angle(angles.size(), 0.0);
    for (size_t i = 0; i < angles.size(); ++i)
        for (size_t k = 0; k < radii.size(); ++k) {
            auto v = scaled_resolvent_norm(a, std::polar(radii[k], angles[i]));
            if (!v) {
                rep.excluded.emplace_back(angles[i], radii[k]);
                continue;
            }
            rep.bounds(i, k) = *v;
            per_angle[i] = std::max(per_angle[i], *v);
            rep.sup_bound = std::max(rep.sup_bound, *v);
        }
    double real_axis = 0.0;
    for (size_t i = 0; i < angles.size(); ++i)
        if (std::abs(angles[i]) < 1e-12)
            real_axis = per_angle[i];
    if (real_axis > 0.0)
        for (size_t i = 0; i < angles.size(); ++i)
            if (per_angle[i] <= 2.0 * real_axis)
                rep.sector_angle = std::max(rep.sector_angle, std::abs(angles[i]));
    return rep;
}

// ---------------------------------------------------------------------------
// maximal regularity

// Empirical maximal L^1 regularity constant in the interpolation norm: for each trial
// forcing, zero initial data,
//   K_f = (sum ||u_{n+1} - u_n|| + dt sum ||A u_n||) / (dt sum ||f(t_n)||)
// with left-endpoint sums. Trials with zero forcing are skipped.
inline double maxreg_constant(const LinearOperator& a, double theta,
                              const std::vector<std::function<Vec(double)>>& trials, double t_end, int steps = 64,
                              const Vec& weight = {})
{
    InterpolationNorm in(a, theta, weight);
    const double dt = t_end / steps;
    ExpIntegrator integ(a, dt);
    double best = 0.0;
    for (const auto& f : trials) {
        double fn = 0.0;
        std::vector<Vec> mid;
        for (int n = 0; n < steps; ++n) {
            fn += dt * in.norm(f(n * dt));
            mid.push_back(f((n + 0.5) * dt));
        }
        if (fn == 0.0)
            continue;
        auto tr = solve_cauchy(integ, Vec::Zero(a.dimension()), mid, steps);
        double un = 0.0;
        for (int n = 0; n < steps; ++n) {
            un += in.norm(tr.states[n + 1] - tr.states[n]);
            un += dt * in.norm(a.apply(tr.states[n]));
        }
        best = std::max(best, un / fn);
    }
    return best;
}

} // namespace cnslab
