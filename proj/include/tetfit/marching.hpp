#pragma once

#include <array>

#include "mesh.hpp"
#include "tetgrid.hpp"

namespace tetfit
{
    /// Tet-local edges in canonical order; a configuration refers to edges by
    /// their position in this list.
    inline constexpr std::array<std::array<int, 2>, 6> kTetEdges = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

    enum class TetCase
    {
        empty,
        one_triangle,
        two_triangles,
    };

    struct TetConfiguration
    {
        TetCase kind = TetCase::empty;
        int num_triangles = 0;
        // Each triangle lists three tet-local edge indices, wound so the normal
        // of a positively oriented tet points toward the positive vertices.
        std::array<std::array<int, 3>, 2> triangles {};
        // Bit e set when tet edge e changes sign.
        unsigned crossed_edges = 0;
    };

    /// Surface configuration for the sign pattern `inside[i] = s_i < 0`.
    const TetConfiguration & classify_tet(const std::array<bool, 4> & inside);

    /// Zero of the linear interpolant along [p_a, p_b]. Requires the two
    /// endpoint signs to differ, which also rules out s_a == s_b.
    template <typename Scalar>
    Vector3<Scalar> edge_crossing(const Vector3<Scalar> & p_a, const Vector3<Scalar> & p_b, Scalar s_a, Scalar s_b)
    {
        return (p_a * s_b - p_b * s_a) / (s_b - s_a);
    }

    /// Partial derivatives of edge_crossing. The position blocks are scalar
    /// multiples of the identity.
    template <typename Scalar>
    struct CrossingJacobian
    {
        Scalar d_pa;
        Scalar d_pb;
        Vector3<Scalar> d_sa;
        Vector3<Scalar> d_sb;
    };

    template <typename Scalar>
    CrossingJacobian<Scalar> edge_crossing_jacobian(const Vector3<Scalar> & p_a, const Vector3<Scalar> & p_b, Scalar s_a, Scalar s_b)
    {
        const Scalar denom = s_a - s_b;
        const Scalar t     = s_a / denom;
        const Vector3<Scalar> span = p_b - p_a;
        return {Scalar(1) - t, t, span * (-s_b / (denom * denom)), span * (s_a / (denom * denom))};
    }

    /// Per-grid-vertex gradients.
    struct Cotangents
    {
        MatX3 d_position;
        VecX d_sdf;

        static Cotangents zeros(Index vertices)
        {
            return {MatX3::Zero(vertices, 3), VecX::Zero(vertices)};
        }
    };

    /// Extracts the zero level set. One output vertex per sign-changing grid
    /// edge; tets are visited in index order. Zero-area triangles (a crossing
    /// landing on an SDF == 0 vertex) are kept.
    TriangleMesh marching_tetrahedra(const TetGrid & grid);

    /// Pulls d(loss)/d(mesh positions) back to grid positions and SDF values.
    Cotangents marching_tetrahedra_vjp(const TetGrid & grid, const TriangleMesh & mesh, const MatX3 & d_mesh_positions);

    /// Marching cubes on a (resolution+1)^3 lattice over [0,1]^3, x fastest.
    TriangleMesh marching_cubes(const VecX & values, int resolution);
}
