#pragma once

#include "linalg.hpp"

#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace cnslab {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// Ghost policy for the layer just outside the interior nodes.
// zero: Dirichlet (velocity-type fields, fluxes built from them).
// reflect: the ghost copies the adjacent interior value (density-type scalars).
enum class Ghost { zero, reflect };

struct Grid {
    int d = 2;
    std::array<int, 3> dims{1, 1, 1};
    std::array<double, 3> lengths{1.0, 1.0, 1.0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    Grid() = default;

    Grid(std::vector<int> n, std::vector<double> len)
    {
        if (n.size() != len.size() || n.size() < 2 || n.size() > 3)
            throw std::invalid_argument("grid: dimension must be 2 or 3");
        d = static_cast<int>(n.size());
        for (int a = 0; a < d; ++a) {
            if (n[a] < 4)
                throw std::invalid_argument("grid: dims must be >= 4");
            if (!(len[a] > 0.0))
                throw std::invalid_argument("grid: lengths must be > 0");
            dims[a] = n[a];
            lengths[a] = len[a];
            spacing[a] = len[a] / (n[a] + 1);
        }
    }

    static Grid square(int n, double len = 1.0, int dim = 2)
    {
        return Grid(std::vector<int>(dim, n), std::vector<double>(dim, len));
    }

    int size() const { return dims[0] * dims[1] * dims[2]; }

    int stride(int axis) const
    {
        int s = 1;
        for (int a = 0; a < axis; ++a)
            s *= dims[a];
        return s;
    }

    std::array<int, 3> coords(int node) const
    {
        return {node % dims[0], (node / dims[0]) % dims[1], node / (dims[0] * dims[1])};
    }

    int index(int i, int j, int k = 0) const { return i + dims[0] * (j + dims[1] * k); }

    double x(int node, int axis) const { return (coords(node)[axis] + 1) * spacing[axis]; }

    // boundary mask: node touches the low (side 0) or high (side 1) face of the axis
    bool on_face(int node, int axis, int side) const
    {
        int c = coords(node)[axis];
        return side == 0 ? c == 0 : c == dims[axis] - 1;
    }

    double cell_volume() const
    {
        double v = 1.0;
        for (int a = 0; a < d; ++a)
            v *= spacing[a];
        return v;
    }

    double volume() const
    {
        double v = 1.0;
        for (int a = 0; a < d; ++a)
            v *= lengths[a];
        return v;
    }

    bool operator==(const Grid& o) const { return d == o.d && dims == o.dims && lengths == o.lengths; }
    bool operator!=(const Grid& o) const { return !(*this == o); }

    // Trapezoid weights on [0, L] with boundary values implied by the ghost policy:
    // zero ghosts give weight h at every interior node, reflective ghosts put 1.5h at
    // the two end nodes.
    Vec weights(Ghost g = Ghost::reflect) const
    {
        Vec w = Vec::Constant(size(), 1.0);
        for (int node = 0; node < size(); ++node) {
            auto c = coords(node);
            for (int a = 0; a < d; ++a) {
                double wa = spacing[a];
                if (g == Ghost::reflect && (c[a] == 0 || c[a] == dims[a] - 1))
                    wa *= 1.5;
                w[node] *= wa;
            }
        }
        return w;
    }
};

struct ScalarField {
    Grid grid;
    Vec values;

    ScalarField() = default;
    explicit ScalarField(const Grid& g) : grid(g), values(Vec::Zero(g.size())) {}
    ScalarField(const Grid& g, Vec v) : grid(g), values(std::move(v))
    {
        if (values.size() != g.size())
            throw std::invalid_argument("scalar field: value count must equal node count");
    }
};

// Components stored one after another: component c occupies [c*N, (c+1)*N).
struct VectorField {
    Grid grid;
    Vec values;

    VectorField() = default;
    explicit VectorField(const Grid& g) : grid(g), values(Vec::Zero(g.d * g.size())) {}
    VectorField(const Grid& g, Vec v) : grid(g), values(std::move(v))
    {
        if (values.size() != g.d * g.size())
            throw std::invalid_argument("vector field: value count must equal d*N");
    }

    auto comp(int c) { return values.segment(c * grid.size(), grid.size()); }
    auto comp(int c) const { return values.segment(c * grid.size(), grid.size()); }
};

// Entry (i, j) stored at block i*d + j.
struct TensorField {
    Grid grid;
    Vec values;

    TensorField() = default;
    explicit TensorField(const Grid& g) : grid(g), values(Vec::Zero(g.d * g.d * g.size())) {}

    auto at(int i, int j) { return values.segment((i * grid.d + j) * grid.size(), grid.size()); }
    auto at(int i, int j) const { return values.segment((i * grid.d + j) * grid.size(), grid.size()); }
};

template <class Fn>
ScalarField sample(const Grid& g, Fn&& f)
{
    ScalarField s(g);
    for (int n = 0; n < g.size(); ++n) {
        std::array<double, 3> x{0.0, 0.0, 0.0};
        for (int a = 0; a < g.d; ++a)
            x[a] = g.x(n, a);
        s.values[n] = f(x);
    }
    return s;
}

// ---------------------------------------------------------------------------
// stencils on raw node vectors

// centered first derivative along axis
inline Vec diff1(const Grid& g, const Eigen::Ref<const Vec>& u, int axis, Ghost ghost)
{
    const int n = g.dims[axis], st = g.stride(axis);
    const double inv = 0.5 / g.spacing[axis];
    Vec out(g.size());
    for (int node = 0; node < g.size(); ++node) {
        int c = g.coords(node)[axis];
        double up = c + 1 < n ? u[node + st] : (ghost == Ghost::reflect ? u[node] : 0.0);
        double dn = c > 0 ? u[node - st] : (ghost == Ghost::reflect ? u[node] : 0.0);
        out[node] = (up - dn) * inv;
    }
    return out;
}

// compact second difference along axis with zero ghosts
inline Vec diff2(const Grid& g, const Eigen::Ref<const Vec>& u, int axis)
{
    const int n = g.dims[axis], st = g.stride(axis);
    const double inv = 1.0 / (g.spacing[axis] * g.spacing[axis]);
    Vec out(g.size());
    for (int node = 0; node < g.size(); ++node) {
        int c = g.coords(node)[axis];
        double up = c + 1 < n ? u[node + st] : 0.0;
        double dn = c > 0 ? u[node - st] : 0.0;
        out[node] = (up - 2.0 * u[node] + dn) * inv;
    }
    return out;
}

// Face-based pair: forward differences onto the n+1 faces of an axis (zero ghosts),
// and backward differences back onto nodes. face_divergence(face_gradient(u)) is the
// compact Laplacian, stencil for stencil.
inline int face_count(const Grid& g, int axis) { return g.size() / g.dims[axis] * (g.dims[axis] + 1); }

inline Vec face_gradient(const Grid& g, const Eigen::Ref<const Vec>& u, int axis)
{
    const int n = g.dims[axis], st = g.stride(axis);
    Vec q(face_count(g, axis));
    const double inv = 1.0 / g.spacing[axis];
    // face f of a line sits between nodes f-1 and f
    for (int node = 0; node < g.size(); ++node) {
        auto c = g.coords(node);
        int line = node - c[axis] * st;
        int base = (line % st) + (line / st / n) * st * (n + 1);
        double left = c[axis] > 0 ? u[node - st] : 0.0;
        q[base + c[axis] * st] = (u[node] - left) * inv;
        if (c[axis] == n - 1)
            q[base + n * st] = (0.0 - u[node]) * inv;
    }
    return q;
}

inline Vec face_divergence(const Grid& g, const Eigen::Ref<const Vec>& q, int axis)
{
    const int n = g.dims[axis], st = g.stride(axis);
    Vec out(g.size());
    const double inv = 1.0 / g.spacing[axis];
    for (int node = 0; node < g.size(); ++node) {
        auto c = g.coords(node);
        int line = node - c[axis] * st;
        int base = (line % st) + (line / st / n) * st * (n + 1);
        out[node] = (q[base + (c[axis] + 1) * st] - q[base + c[axis] * st]) * inv;
    }
    return out;
}

// ---------------------------------------------------------------------------
// field operators

inline VectorField gradient(const ScalarField& p, Ghost ghost = Ghost::reflect)
{
    VectorField g(p.grid);
    for (int a = 0; a < p.grid.d; ++a)
        g.comp(a) = diff1(p.grid, p.values, a, ghost);
    return g;
}

inline ScalarField divergence(const VectorField& u)
{
    ScalarField s(u.grid);
    for (int a = 0; a < u.grid.d; ++a)
        s.values += diff1(u.grid, u.comp(a), a, Ghost::zero);
    return s;
}

inline ScalarField laplacian(const ScalarField& p)
{
    ScalarField s(p.grid);
    for (int a = 0; a < p.grid.d; ++a)
        s.values += diff2(p.grid, p.values, a);
    return s;
}

inline VectorField laplacian(const VectorField& u)
{
    VectorField out(u.grid);
    for (int c = 0; c < u.grid.d; ++c)
        for (int a = 0; a < u.grid.d; ++a)
            out.comp(c) += diff2(u.grid, u.comp(c), a);
    return out;
}

// J_ij = d_j u_i
inline TensorField jacobian(const VectorField& u, Ghost ghost = Ghost::zero)
{
    TensorField t(u.grid);
    for (int i = 0; i < u.grid.d; ++i)
        for (int j = 0; j < u.grid.d; ++j)
            t.at(i, j) = diff1(u.grid, u.comp(i), j, ghost);
    return t;
}

inline TensorField sym_gradient(const VectorField& u)
{
    TensorField j = jacobian(u);
    TensorField s(u.grid);
    for (int a = 0; a < u.grid.d; ++a)
        for (int b = 0; b < u.grid.d; ++b)
            s.at(a, b) = 0.5 * (j.at(a, b) + j.at(b, a));
    return s;
}

// (div T)_i = sum_j d_j T_ij, zero ghosts (adjoint of the centered jacobian)
inline VectorField tensor_divergence(const TensorField& t)
{
    VectorField out(t.grid);
    for (int i = 0; i < t.grid.d; ++i)
        for (int j = 0; j < t.grid.d; ++j)
            out.comp(i) += diff1(t.grid, t.at(i, j), j, Ghost::zero);
    return out;
}

enum class DiffKind { gradient, divergence, laplacian, sym_gradient, jacobian };

using AnyField = std::variant<ScalarField, VectorField, TensorField>;

inline AnyField diff_op(DiffKind kind, const AnyField& f)
{
    const bool scalar = std::holds_alternative<ScalarField>(f);
    const bool vector = std::holds_alternative<VectorField>(f);
    switch (kind) {
    case DiffKind::gradient:
        if (!scalar)
            throw std::invalid_argument("diff_op: gradient needs a scalar field");
        return gradient(std::get<ScalarField>(f));
    case DiffKind::divergence:
        if (!vector)
            throw std::invalid_argument("diff_op: divergence needs a vector field");
        return divergence(std::get<VectorField>(f));
    case DiffKind::laplacian:
        if (scalar)
            return laplacian(std::get<ScalarField>(f));
        if (vector)
            return laplacian(std::get<VectorField>(f));
        throw std::invalid_argument("diff_op: laplacian needs a scalar or vector field");
    case DiffKind::sym_gradient:
        if (!vector)
            throw std::invalid_argument("diff_op: sym_gradient needs a vector field");
        return sym_gradient(std::get<VectorField>(f));
    case DiffKind::jacobian:
        if (!vector)
            throw std::invalid_argument("diff_op: jacobian needs a vector field");
        return jacobian(std::get<VectorField>(f));
    }
    throw std::invalid_argument("diff_op: unknown kind");
}

// ---------------------------------------------------------------------------
// mean-free projection

inline double mean(const ScalarField& f, Ghost ghost = Ghost::reflect)
{
    Vec w = f.grid.weights(ghost);
    return w.dot(f.values) / w.sum();
}

inline std::pair<double, ScalarField> mean_and_project(const ScalarField& f)
{
    double m = mean(f);
    ScalarField p(f.grid, f.values.array() - m);
    // a second pass removes the rounding left by the first
    double r = mean(p);
    p.values.array() -= r;
    return {m, p};
}

// Dirichlet velocity data is stored on interior nodes only; every stencil applied to
// a velocity-type field already uses zero ghosts, so enforcement is the identity on
// the stored values.
inline VectorField enforce_dirichlet(const VectorField& u) { return u; }

// ---------------------------------------------------------------------------
// sparse assembly

inline SpMat diff1_matrix(const Grid& g, int axis, Ghost ghost)
{
    const int n = g.dims[axis], st = g.stride(axis);
    const double inv = 0.5 / g.spacing[axis];
    Triplets t;
    for (int node = 0; node < g.size(); ++node) {
        int c = g.coords(node)[axis];
        if (c + 1 < n)
            t.emplace_back(node, node + st, inv);
        else if (ghost == Ghost::reflect)
            t.emplace_back(node, node, inv);
        if (c > 0)
            t.emplace_back(node, node - st, -inv);
        else if (ghost == Ghost::reflect)
            t.emplace_back(node, node, -inv);
    }
    SpMat m(g.size(), g.size());
    m.setFromTriplets(t.begin(), t.end());
    m.prune(0.0);
    return m;
}

inline SpMat laplacian_matrix(const Grid& g)
{
    Triplets t;
    for (int node = 0; node < g.size(); ++node) {
        auto c = g.coords(node);
        for (int a = 0; a < g.d; ++a) {
            const int st = g.stride(a);
            const double inv = 1.0 / (g.spacing[a] * g.spacing[a]);
            t.emplace_back(node, node, -2.0 * inv);
            if (c[a] + 1 < g.dims[a])
                t.emplace_back(node, node + st, inv);
            if (c[a] > 0)
                t.emplace_back(node, node - st, inv);
        }
    }
    SpMat m(g.size(), g.size());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// block helpers for vector unknowns
inline void add_block(Triplets& t, const SpMat& b, int row0, int col0, double s = 1.0)
{
    for (int k = 0; k < b.outerSize(); ++k)
        for (SpMat::InnerIterator it(b, k); it; ++it)
            t.emplace_back(row0 + it.row(), col0 + it.col(), s * it.value());
}

// dN x N
inline SpMat gradient_matrix(const Grid& g, Ghost ghost = Ghost::reflect)
{
    Triplets t;
    for (int a = 0; a < g.d; ++a)
        add_block(t, diff1_matrix(g, a, ghost), a * g.size(), 0);
    SpMat m(g.d * g.size(), g.size());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// N x dN
inline SpMat divergence_matrix(const Grid& g)
{
    Triplets t;
    for (int a = 0; a < g.d; ++a)
        add_block(t, diff1_matrix(g, a, Ghost::zero), 0, a * g.size());
    SpMat m(g.size(), g.d * g.size());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline SpMat vector_laplacian_matrix(const Grid& g)
{
    SpMat l = laplacian_matrix(g);
    Triplets t;
    for (int a = 0; a < g.d; ++a)
        add_block(t, l, a * g.size(), a * g.size());
    SpMat m(g.d * g.size(), g.d * g.size());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline double l2(const Grid& g, const Vec& v)
{
    return std::sqrt(g.cell_volume() * v.squaredNorm());
}

} // namespace cnslab
