#pragma once

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "mesh.hpp"
#include "tetgrid.hpp"

namespace tetfit
{
    /// Which tets to split and where the new vertices go.
    ///
    /// Vertex numbering of the refined grid: the old vertices used by selected
    /// tets keep their relative order (kept_vertices[new id] = old id), then one
    /// midpoint per selected edge in edge_midpoints key order.
    struct SubdivisionPlan
    {
        std::vector<TetId> selected;  // ascending
        std::vector<Index> kept_vertices;
        std::map<std::pair<Index, Index>, VertexId> edge_midpoints;  // sorted old-id pair -> new id
        Index source_vertices = 0;
        Index source_tets     = 0;

        Index num_output_vertices() const { return Index(kept_vertices.size() + edge_midpoints.size()); }
    };

    /// Surface tets plus every tet sharing a vertex with one.
    SubdivisionPlan plan_subdivision(const TetGrid & grid);

    /// Plan for an explicit tet selection (duplicates are ignored).
    SubdivisionPlan plan_subdivision(const TetGrid & grid, std::vector<TetId> selected);

    /// Splits every selected tet into 8 (edge midpoints, Bey's red refinement)
    /// and drops the rest. Midpoint positions and SDFs are endpoint means. The
    /// current deformation is baked into the new rest positions, deformations
    /// restart at zero and the clamp radius halves with the cell size.
    TetGrid subdivide_volume(const TetGrid & grid, const SubdivisionPlan & plan);

    /// Carries a per-vertex field through a plan: kept vertices copy, midpoints average.
    VecX prolong_vertex_values(const SubdivisionPlan & plan, const VecX & values);

    /// Per-vertex smoothness for Loop subdivision, each in [0, 1].
    ///
    /// The even-vertex update is v <- (1 - a) v + a * mean(1-ring) with the
    /// effective weight a chosen by odds ratio against the classic Loop weight
    /// w(n) = n * beta(n):  a / (1 - a) = alpha / (1 - alpha) * w / (1 - w).
    /// alpha = 1/2 is classic Loop at any valence; alpha = 0 keeps vertices fixed.
    struct AlphaField
    {
        VecX alpha;

        static AlphaField constant(Index n, double value) { return {VecX::Constant(n, value)}; }
    };

    /// Loop's even-vertex coefficient beta(n).
    double loop_beta(Index valence);

    /// Effective blend weight for a vertex of the given valence, and its
    /// derivative with respect to alpha.
    std::pair<double, double> loop_effective_weight(double alpha, Index valence);

    /// Everything the backward pass needs from one forward iteration.
    struct LoopLevel
    {
        MatX3 positions_in;
        VecX alpha_in;
        std::vector<std::array<Index, 2>> edges;     // odd vertex k is edges[k], new id = n_in + k
        std::vector<std::array<Index, 2>> opposite;  // the two vertices across each edge
        std::vector<Index> ring_start;               // CSR 1-ring of each input vertex
        std::vector<Index> ring;
    };

    struct LoopTape
    {
        std::vector<LoopLevel> levels;
        Index output_vertices = 0;
    };

    /// Loop subdivision with per-vertex alpha. Odd vertices take alpha as the
    /// mean of their edge endpoints. Requires a closed 2-manifold.
    TriangleMesh loop_subdivide(const TriangleMesh & mesh, const AlphaField & alphas, int iterations, LoopTape * tape = nullptr);

    struct LoopCotangents
    {
        MatX3 d_positions;
        VecX d_alpha;
    };

    /// Pulls a cotangent on the output positions back to the input positions and alphas.
    LoopCotangents loop_subdivide_vjp(const LoopTape & tape, const MatX3 & d_output);
}
