#pragma once

#include "besov.hpp"
#include "grid.hpp"
#include "linalg.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cnslab {

inline constexpr double flow_degeneracy_floor = 0.1;

// ---------------------------------------------------------------------------
// nodewise small-matrix algebra; matrices row-major in std::array<double, 9>

using Mat3 = std::array<double, 9>;

inline Mat3 tensor_at(const TensorField& t, int node)
{
    Mat3 m{};
    const int d = t.grid.d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            m[i * d + j] = t.at(i, j)[node];
    return m;
}

inline void tensor_set(TensorField& t, int node, const Mat3& m)
{
    const int d = t.grid.d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            t.at(i, j)[node] = m[i * d + j];
}

inline double small_det(const Mat3& m, int d)
{
    if (d == 1)
        return m[0];
    if (d == 2)
        return m[0] * m[3] - m[1] * m[2];
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

// transpose of the cofactor matrix: closed forms for d = 2, 3
inline Mat3 small_adjugate(const Mat3& m, int d)
{
    Mat3 a{};
    if (d == 2) {
        a[0] = m[3];
        a[1] = -m[1];
        a[2] = -m[2];
        a[3] = m[0];
    } else if (d == 3) {
        a[0] = m[4] * m[8] - m[5] * m[7];
        a[1] = m[2] * m[7] - m[1] * m[8];
        a[2] = m[1] * m[5] - m[2] * m[4];
        a[3] = m[5] * m[6] - m[3] * m[8];
        a[4] = m[0] * m[8] - m[2] * m[6];
        a[5] = m[2] * m[3] - m[0] * m[5];
        a[6] = m[3] * m[7] - m[4] * m[6];
        a[7] = m[1] * m[6] - m[0] * m[7];
        a[8] = m[0] * m[4] - m[1] * m[3];
    } else {
        throw std::invalid_argument("adjugate: d must be 2 or 3");
    }
    return a;
}

// cofactor expansion by minors, any d <= 3
inline Mat3 adjugate_by_cofactors(const Mat3& m, int d)
{
    Mat3 a{};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Mat3 minor{};
            int r = 0;
            for (int ii = 0; ii < d; ++ii) {
                if (ii == i)
                    continue;
                int c = 0;
                for (int jj = 0; jj < d; ++jj) {
                    if (jj == j)
                        continue;
                    minor[r * (d - 1) + c] = m[ii * d + jj];
                    ++c;
                }
                ++r;
            }
            const double cof = ((i + j) % 2 == 0 ? 1.0 : -1.0) * small_det(minor, d - 1);
            a[j * d + i] = cof;
        }
    return a;
}

inline Mat3 small_mul(const Mat3& x, const Mat3& y, int d)
{
    Mat3 z{};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0.0;
            for (int k = 0; k < d; ++k)
                s += x[i * d + k] * y[k * d + j];
            z[i * d + j] = s;
        }
    return z;
}

inline Mat3 small_transpose(const Mat3& x, int d)
{
    Mat3 z{};
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            z[i * d + j] = x[j * d + i];
    return z;
}

inline TensorField identity_tensor(const Grid& g)
{
    TensorField t(g);
    for (int i = 0; i < g.d; ++i)
        t.at(i, i).setOnes();
    return t;
}

// nodewise product of tensor fields
inline TensorField tensor_product(const TensorField& x, const TensorField& y)
{
    TensorField z(x.grid);
    const int d = x.grid.d;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                z.at(i, j) += x.at(i, k).cwiseProduct(y.at(k, j));
    return z;
}

inline TensorField tensor_transpose(const TensorField& x)
{
    TensorField z(x.grid);
    for (int i = 0; i < x.grid.d; ++i)
        for (int j = 0; j < x.grid.d; ++j)
            z.at(i, j) = x.at(j, i);
    return z;
}

// nodewise trace(x y)
inline ScalarField tensor_contract(const TensorField& x, const TensorField& y)
{
    ScalarField s(x.grid);
    for (int i = 0; i < x.grid.d; ++i)
        for (int k = 0; k < x.grid.d; ++k)
            s.values += x.at(i, k).cwiseProduct(y.at(k, i));
    return s;
}

// nodewise x v
inline VectorField tensor_apply(const TensorField& x, const VectorField& v)
{
    VectorField out(x.grid);
    for (int i = 0; i < x.grid.d; ++i)
        for (int k = 0; k < x.grid.d; ++k)
            out.comp(i) += x.at(i, k).cwiseProduct(v.comp(k));
    return out;
}

// ---------------------------------------------------------------------------
// flow maps

struct FlowMap {
    VectorField x;      // positions X(t, y)
    TensorField dx;     // DX
    ScalarField j;      // det DX
    TensorField adj;    // adj(DX)
    TensorField a;      // DX^{-1}
    double min_j = 1.0;
};

inline FlowMap identity_flow(const Grid& g)
{
    FlowMap f;
    f.x = VectorField(g);
    for (int c = 0; c < g.d; ++c)
        for (int n = 0; n < g.size(); ++n)
            f.x.comp(c)[n] = g.x(n, c);
    f.dx = identity_tensor(g);
    f.j = ScalarField(g, Vec::Ones(g.size()));
    f.adj = identity_tensor(g);
    f.a = identity_tensor(g);
    return f;
}

// X = y + xi, DX = Id + theta; J, adj, A nodewise
inline FlowMap flow_from_integrals(const VectorField& xi, const TensorField& theta)
{
    const Grid& g = xi.grid;
    const int d = g.d;
    FlowMap f = identity_flow(g);
    f.x.values += xi.values;
    f.dx.values += theta.values;
    f.min_j = std::numeric_limits<double>::infinity();
    for (int n = 0; n < g.size(); ++n) {
        Mat3 m = tensor_at(f.dx, n);
        const double det = small_det(m, d);
        f.min_j = std::min(f.min_j, det);
        if (!(det > flow_degeneracy_floor))
            throw DegeneracyError("flow: Jacobian " + std::to_string(det) + " at node " + std::to_string(n) +
                                  " below the degeneracy floor 0.1");
        Mat3 adj = small_adjugate(m, d);
        Mat3 inv{};
        for (int k = 0; k < d * d; ++k)
            inv[k] = adj[k] / det;
        f.j.values[n] = det;
        tensor_set(f.adj, n, adj);
        tensor_set(f.a, n, inv);
    }
    return f;
}

// Velocity history with trapezoid time integrals of u and Du.
class TrajectoryStore {
public:
    TrajectoryStore() = default;
    explicit TrajectoryStore(const Grid& g) : grid_(g) {}

    const Grid& grid() const { return grid_; }
    const std::vector<double>& times() const { return times_; }
    const VectorField& velocity(size_t i) const { return velocity_[i]; }
    const TensorField& jacobian_at(size_t i) const { return du_[i]; }
    const VectorField& displacement(size_t i) const { return xi_[i]; }
    const TensorField& cumulative_jacobian(size_t i) const { return theta_[i]; }
    size_t size() const { return times_.size(); }
    double end() const { return times_.empty() ? 0.0 : times_.back(); }

    void append(double t, const VectorField& u)
    {
        if (u.grid != grid_)
            throw std::invalid_argument("trajectory store: grid mismatch");
        if (times_.empty() ? t != 0.0 : !(t > times_.back()))
            throw std::invalid_argument("trajectory store: times must increase strictly from 0");
        TensorField du = jacobian(u);
        if (times_.empty()) {
            xi_.emplace_back(grid_);
            theta_.emplace_back(grid_);
        } else {
            const double h = 0.5 * (t - times_.back());
            VectorField xi(grid_, xi_.back().values + h * (velocity_.back().values + u.values));
            TensorField th(grid_);
            th.values = theta_.back().values + h * (du_.back().values + du.values);
            xi_.push_back(std::move(xi));
            theta_.push_back(std::move(th));
        }
        times_.push_back(t);
        velocity_.push_back(u);
        du_.push_back(std::move(du));
    }

    static TrajectoryStore from_states(const Grid& g, const std::vector<double>& times, const std::vector<Vec>& u)
    {
        TrajectoryStore s(g);
        for (size_t i = 0; i < times.size(); ++i)
            s.append(times[i], VectorField(g, u[i]));
        return s;
    }

    // integrals at time t, linear between samples (exact for the trapezoid rule)
    std::pair<VectorField, TensorField> integrals(double t) const
    {
        if (times_.empty() || t < 0.0 || t > times_.back() * (1.0 + 1e-14))
            throw std::out_of_range("trajectory store: t outside the stored range");
        size_t i = 0;
        while (i + 1 < times_.size() && times_[i + 1] < t)
            ++i;
        if (i + 1 == times_.size() || times_[i] == t)
            return {xi_[i], theta_[i]};
        const double dt = t - times_[i];
        const double w = dt / (times_[i + 1] - times_[i]);
        // trapezoid on [t_i, t] with the linearly interpolated endpoint velocity
        VectorField um(grid_, (1 - w) * velocity_[i].values + w * velocity_[i + 1].values);
        TensorField dm(grid_);
        dm.values = (1 - w) * du_[i].values + w * du_[i + 1].values;
        VectorField xi(grid_, xi_[i].values + 0.5 * dt * (velocity_[i].values + um.values));
        TensorField th(grid_);
        th.values = theta_[i].values + 0.5 * dt * (du_[i].values + dm.values);
        return {xi, th};
    }

private:
    Grid grid_;
    std::vector<double> times_;
    std::vector<VectorField> velocity_, xi_;
    std::vector<TensorField> du_, theta_;
};

inline FlowMap advance_flow(const TrajectoryStore& store, double t)
{
    auto [xi, theta] = store.integrals(t);
    return flow_from_integrals(xi, theta);
}

inline ScalarField density_from_flow(const ScalarField& rho0, const FlowMap& flow)
{
    if (!(flow.min_j > flow_degeneracy_floor))
        throw DegeneracyError("density: degenerate flow");
    return ScalarField(rho0.grid, rho0.values.cwiseQuotient(flow.j.values));
}

struct TwistedOps {
    TensorField deformation; // D_A(z) = sym(Dz A)
    ScalarField divergence;  // div_A z = tr(Dz A)
};

inline TwistedOps twisted_ops(const TensorField& a, const VectorField& z)
{
    TensorField dz = jacobian(z);
    TensorField m = tensor_product(dz, a);
    TwistedOps r;
    r.deformation = TensorField(z.grid);
    r.divergence = ScalarField(z.grid);
    for (int i = 0; i < z.grid.d; ++i) {
        for (int j = 0; j < z.grid.d; ++j)
            r.deformation.at(i, j) = 0.5 * (m.at(i, j) + m.at(j, i));
        r.divergence.values += m.at(i, i);
    }
    return r;
}

inline TwistedOps twisted_ops(const FlowMap& flow, const VectorField& z) { return twisted_ops(flow.a, z); }

// ---------------------------------------------------------------------------
// smallness and Neumann bounds

// B^{d/p} norms of derivative-level fields use the even-reflection bank
struct CriticalNorm {
    BesovParams bp;
    DyadicFilterBank even;

    explicit CriticalNorm(const Grid& g, std::optional<BesovParams> b = std::nullopt)
        : bp(b.value_or(BesovParams{0.0, 2.0, 1.0, g.d})), even(g, Extension::even_reflection)
    {
        bp.q = 1.0;
        bp.s = bp.d / bp.p;
        bp.validate();
    }

    double operator()(const ScalarField& f) const { return besov_norm(f, bp, even); }
    double operator()(const TensorField& t) const { return besov_norm(t, bp, even); }
};

// int_0^t ||Du||_{B^{d/p}} by the trapezoid rule on the stored samples
inline double du_integral(const TrajectoryStore& store, const CriticalNorm& nrm, double t_end = -1.0)
{
    if (t_end < 0.0)
        t_end = store.end();
    double acc = 0.0, prev = 0.0;
    for (size_t i = 0; i < store.size() && store.times()[i] <= t_end * (1.0 + 1e-14); ++i) {
        double cur = nrm(store.jacobian_at(i));
        if (i > 0)
            acc += 0.5 * (store.times()[i] - store.times()[i - 1]) * (prev + cur);
        prev = cur;
    }
    return acc;
}

struct SmallnessReport {
    double integral = 0.0;
    double epsilon = 0.1;
    bool passes = true;
    double overshoot = 0.0;
};

inline SmallnessReport smallness_monitor(const TrajectoryStore& store, const CriticalNorm& nrm, double epsilon = 0.1)
{
    SmallnessReport r;
    r.epsilon = epsilon;
    r.integral = du_integral(store, nrm);
    r.passes = r.integral <= epsilon;
    r.overshoot = std::max(0.0, r.integral - epsilon);
    return r;
}

struct NeumannReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double constant = 0.0;
    bool passes = true;
};

// sup_t (||1-J|| + ||A-Id|| + ||adj-Id||) against int ||Du||, all in B^{d/p}
inline NeumannReport neumann_bounds_check(const TrajectoryStore& store, const CriticalNorm& nrm, double t,
                                          double ceiling = 4.0)
{
    NeumannReport r;
    const Grid& g = store.grid();
    const TensorField id = identity_tensor(g);
    for (size_t i = 0; i < store.size() && store.times()[i] <= t * (1.0 + 1e-14); ++i) {
        FlowMap f = advance_flow(store, store.times()[i]);
        TensorField da(g), dadj(g);
        da.values = f.a.values - id.values;
        dadj.values = f.adj.values - id.values;
        ScalarField dj(g, Vec::Ones(g.size()) - f.j.values);
        r.lhs = std::max(r.lhs, nrm(dj) + nrm(da) + nrm(dadj));
    }
    r.rhs = du_integral(store, nrm, t);
    r.constant = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    r.passes = r.constant <= ceiling;
    return r;
}

// difference form: sup_t of ||A2-A1|| + ||adj2-adj1|| + ||J2-J1|| + ||1/J2-1/J1|| against int ||D(v2-v1)||
inline NeumannReport neumann_difference_check(const TrajectoryStore& s1, const TrajectoryStore& s2,
                                              const CriticalNorm& nrm, double t, double ceiling = 4.0)
{
    if (s1.times() != s2.times())
        throw std::invalid_argument("neumann difference: histories must share the time grid");
    const Grid& g = s1.grid();
    NeumannReport r;
    TrajectoryStore diff(g);
    for (size_t i = 0; i < s1.size(); ++i) {
        const double ti = s1.times()[i];
        diff.append(ti, VectorField(g, s2.velocity(i).values - s1.velocity(i).values));
        if (ti > t * (1.0 + 1e-14))
            continue;
        FlowMap f1 = advance_flow(s1, ti), f2 = advance_flow(s2, ti);
        TensorField da(g), dadj(g);
        da.values = f2.a.values - f1.a.values;
        dadj.values = f2.adj.values - f1.adj.values;
        ScalarField dj(g, f2.j.values - f1.j.values);
        ScalarField dji(g, f2.j.values.cwiseInverse() - f1.j.values.cwiseInverse());
        r.lhs = std::max(r.lhs, nrm(da) + nrm(dadj) + nrm(dj) + nrm(dji));
    }
    r.rhs = du_integral(diff, nrm, t);
    r.constant = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    r.passes = r.lhs == 0.0 || r.constant <= ceiling;
    return r;
}

// ---------------------------------------------------------------------------
// Eulerian conversion

// multilinear interpolation of nodal data at a physical point. even: reflective
// extension (constant across the half cell at the wall); otherwise the field vanishes
// on the boundary, as for Dirichlet velocities.
inline double interpolate_at(const Grid& g, const Eigen::Ref<const Vec>& f, const std::array<double, 3>& x, bool even)
{
    std::array<int, 3> i0{}, i1{};
    std::array<double, 3> w{};
    std::array<bool, 3> wall0{}, wall1{};
    for (int a = 0; a < g.d; ++a) {
        const double len = g.lengths[a];
        double p = std::fmod(x[a], 2.0 * len);
        if (p < 0.0)
            p += 2.0 * len;
        if (p > len)
            p = 2.0 * len - p;
        const int m = g.dims[a];
        const double s = p / g.spacing[a] - 1.0; // node index coordinate
        if (s < 0.0) {
            i0[a] = i1[a] = 0;
            wall0[a] = !even;
            w[a] = s + 1.0;
        } else if (s >= m - 1) {
            i0[a] = i1[a] = m - 1;
            wall1[a] = !even;
            w[a] = s - (m - 1);
        } else {
            i0[a] = static_cast<int>(std::floor(s));
            i1[a] = i0[a] + 1;
            w[a] = s - i0[a];
        }
    }
    double acc = 0.0;
    const int corners = 1 << g.d;
    for (int c = 0; c < corners; ++c) {
        double weight = 1.0;
        std::array<int, 3> idx{0, 0, 0};
        bool zero = false;
        for (int a = 0; a < g.d; ++a) {
            const bool hi = (c >> a) & 1;
            weight *= hi ? w[a] : 1.0 - w[a];
            idx[a] = hi ? i1[a] : i0[a];
            if ((!hi && wall0[a]) || (hi && wall1[a]))
                zero = true;
        }
        if (weight == 0.0 || zero)
            continue;
        int node = 0;
        for (int a = g.d - 1; a >= 0; --a)
            node = node * g.dims[a] + idx[a];
        acc += weight * f[node];
    }
    return acc;
}

struct EulerianMap {
    std::vector<std::array<double, 3>> preimage; // y with X(y) = x for every node x
    int max_iterations = 0;
    bool left_box = false;
};

// invert y -> y + xi(y) at the grid nodes by damped fixed point y <- x - xi(y); the
// displacement vanishes on the wall unless rigid (then extended evenly)
inline EulerianMap invert_flow(const VectorField& xi, bool rigid = false, double tol = 1e-10, int max_iter = 100)
{
    const Grid& g = xi.grid;
    EulerianMap m;
    m.preimage.resize(g.size());
    const double damping = 0.8;
    double scale = 0.0;
    for (int a = 0; a < g.d; ++a)
        scale = std::max(scale, g.lengths[a]);
    for (int n = 0; n < g.size(); ++n) {
        std::array<double, 3> x{0, 0, 0}, y{0, 0, 0};
        for (int a = 0; a < g.d; ++a)
            x[a] = y[a] = g.x(n, a);
        int it = 0;
        for (;; ++it) {
            double res = 0.0;
            std::array<double, 3> r{0, 0, 0};
            for (int a = 0; a < g.d; ++a) {
                r[a] = y[a] + interpolate_at(g, xi.comp(a), y, rigid) - x[a];
                res = std::max(res, std::abs(r[a]));
            }
            if (res <= tol * scale)
                break;
            if (it >= max_iter)
                throw DegeneracyError("to_eulerian: inverse flow iteration stalled at node " + std::to_string(n));
            for (int a = 0; a < g.d; ++a)
                y[a] -= damping * r[a];
        }
        for (int a = 0; a < g.d; ++a)
            if (y[a] < 0.0 || y[a] > g.lengths[a])
                m.left_box = true;
        m.max_iterations = std::max(m.max_iterations, it);
        m.preimage[n] = y;
    }
    return m;
}

inline EulerianMap invert_flow(const FlowMap& flow, double tol = 1e-10, int max_iter = 100)
{
    const Grid& g = flow.x.grid;
    VectorField xi(g, flow.x.values - identity_flow(g).x.values);
    return invert_flow(xi, false, tol, max_iter);
}

inline ScalarField to_eulerian(const EulerianMap& m, const ScalarField& f, bool even = true)
{
    ScalarField out(f.grid);
    for (int n = 0; n < f.grid.size(); ++n)
        out.values[n] = interpolate_at(f.grid, f.values, m.preimage[n], even);
    return out;
}

inline VectorField to_eulerian(const EulerianMap& m, const VectorField& u)
{
    VectorField out(u.grid);
    for (int c = 0; c < u.grid.d; ++c)
        for (int n = 0; n < u.grid.size(); ++n)
            out.comp(c)[n] = interpolate_at(u.grid, u.comp(c), m.preimage[n], false);
    return out;
}

inline ScalarField to_eulerian(const FlowMap& flow, const ScalarField& f, bool even = true)
{
    return to_eulerian(invert_flow(flow), f, even);
}

inline VectorField to_eulerian(const FlowMap& flow, const VectorField& u) { return to_eulerian(invert_flow(flow), u); }

// Eulerian field sampled along X: the Lagrangian view of f
inline ScalarField sample_along_flow(const FlowMap& flow, const ScalarField& f, bool even = true)
{
    const Grid& g = f.grid;
    ScalarField out(g);
    for (int n = 0; n < g.size(); ++n) {
        std::array<double, 3> x{0, 0, 0};
        for (int a = 0; a < g.d; ++a)
            x[a] = flow.x.comp(a)[n];
        out.values[n] = interpolate_at(g, f.values, x, even);
    }
    return out;
}

} // namespace cnslab
