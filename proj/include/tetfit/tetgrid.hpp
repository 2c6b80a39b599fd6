#pragma once

#include <vector>

#include <Eigen/Core>

#include "types.hpp"

namespace tetfit
{
    enum class GridScheme
    {
        six_tet,  // Kuhn split of every cube cell into 6 tets around the main diagonal
        bcc,      // body-centered cubic lattice, boundary closed with face-center vertices
    };

    /// Deformable tetrahedral grid over the unit cube.
    ///
    /// Vertex v sits at rest_positions.row(v) + deformations.row(v) and carries
    /// the signed distance sdf[v] (negative inside). Deformations are always
    /// stored clamped to [-clamp_radius, clamp_radius] per axis; write them
    /// through set_deformation()/apply_deformation() to keep that invariant.
    struct TetGrid
    {
        MatX3 rest_positions;
        MatX3 deformations;
        VecX sdf;
        MatX4i tets;
        int level           = 0;
        int base_resolution = 1;
        double clamp_radius = 0.0;
        GridScheme scheme   = GridScheme::six_tet;

        Index num_vertices() const { return rest_positions.rows(); }
        Index num_tets() const { return tets.rows(); }

        Vec3 position(Index v) const { return (rest_positions.row(v) + deformations.row(v)).transpose(); }
        MatX3 positions() const { return rest_positions + deformations; }

        // Edge length of the cubic cells at the current subdivision level.
        double cell_size() const;
    };

    // sign(0) is treated as positive everywhere in the library.
    inline bool is_inside(double s) { return s < 0.0; }

    /// Largest per-axis clamp for which no tet of a fresh grid can invert,
    /// scaled by a 0.9 safety factor: h/6 for the Kuhn split, h/8 for BCC
    /// (its boundary tets are the binding ones).
    double default_clamp_radius(GridScheme scheme, double cell);

    TetGrid build_grid(int resolution, GridScheme scheme = GridScheme::six_tet);

    template <typename Scalar>
    Scalar barycentric_blend(const Eigen::Matrix<Scalar, 4, 1> & values, const Eigen::Matrix<Scalar, 4, 1> & weights)
    {
        return values.dot(weights);
    }

    /// Linear interpolation of the SDF inside a tet. Weights must lie on the
    /// probability simplex (non-negative, sum 1 within 1e-9).
    double interpolate(const TetGrid & grid, TetId tet, const Eigen::Vector4d & weights);

    /// Tets whose four vertex signs are not all equal.
    std::vector<TetId> surface_tets(const TetGrid & grid);

    bool is_surface_tet(const TetGrid & grid, Index tet);

    /// deformation <- clamp(deformation + deltas).
    TetGrid apply_deformation(TetGrid grid, const MatX3 & deltas);

    /// deformation <- clamp(values); the absolute-write form used by optimizers.
    void set_deformation(TetGrid & grid, const MatX3 & values);

    /// Signed volume of a tet, using deformed positions unless `at_rest` is set.
    double signed_volume(const TetGrid & grid, Index tet, bool at_rest = false);
}
