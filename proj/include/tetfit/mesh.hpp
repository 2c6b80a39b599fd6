#pragma once

#include <array>
#include <vector>

#include "types.hpp"

namespace tetfit
{
    /// Indexed triangle mesh. Meshes produced by marching tetrahedra also
    /// record, per vertex, the sorted grid edge the vertex was born on; meshes
    /// from any other source leave `provenance` empty.
    struct TriangleMesh
    {
        MatX3 positions;
        MatX3i triangles;
        std::vector<std::array<Index, 2>> provenance;

        Index num_vertices() const { return positions.rows(); }
        Index num_triangles() const { return triangles.rows(); }
        bool empty() const { return triangles.rows() == 0; }

        Vec3 vertex(Index v) const { return positions.row(v).transpose(); }
    };

    // Unnormalized face normal: twice the area times the unit normal.
    Vec3 face_area_vector(const TriangleMesh & mesh, Index f);
    double triangle_area(const TriangleMesh & mesh, Index f);
    double surface_area(const TriangleMesh & mesh);

    // Volume enclosed by a closed mesh (divergence theorem); positive for
    // outward-facing winding.
    double enclosed_volume(const TriangleMesh & mesh);

    struct TopologyReport
    {
        Index vertices   = 0;  // referenced by at least one triangle
        Index edges      = 0;
        Index faces      = 0;
        Index boundary_edges     = 0;  // used by one triangle
        Index nonmanifold_edges  = 0;  // used by three or more, or twice with equal direction
        Index nonmanifold_vertices = 0;  // triangle fan around the vertex is not a single disk
        Index components = 0;

        Index euler_characteristic() const { return vertices - edges + faces; }
        bool closed_manifold() const { return faces > 0 && boundary_edges == 0 && nonmanifold_edges == 0 && nonmanifold_vertices == 0; }
    };

    TopologyReport analyze_topology(const TriangleMesh & mesh);

    /// Drops triangles with area <= `min_area` and vertices no triangle uses.
    TriangleMesh remove_degenerate_triangles(const TriangleMesh & mesh, double min_area = 1e-14);

    // Basic closed fixtures (outward winding).
    TriangleMesh make_box_mesh(const Vec3 & center, const Vec3 & half_extents, int splits_per_edge = 1);
    TriangleMesh make_tetrahedron_mesh();
    TriangleMesh make_icosahedron_mesh();
}
