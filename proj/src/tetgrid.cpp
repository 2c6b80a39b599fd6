#include "tetfit/tetgrid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace tetfit
{
    namespace
    {
        double det3(const Vec3 & a, const Vec3 & b, const Vec3 & c)
        {
            return a.dot(b.cross(c));
        }

        void orient_positive(const MatX3 & positions, MatX4i & tets)
        {
            for (Index t = 0; t < tets.rows(); ++t)
            {
                const Vec3 p0 = positions.row(tets(t, 0)).transpose();
                const Vec3 p1 = positions.row(tets(t, 1)).transpose();
                const Vec3 p2 = positions.row(tets(t, 2)).transpose();
                const Vec3 p3 = positions.row(tets(t, 3)).transpose();
                if (det3(p1 - p0, p2 - p0, p3 - p0) < 0.0)
                {
                    std::swap(tets(t, 2), tets(t, 3));
                }
            }
        }

        TetGrid build_six_tet(int n)
        {
            const Index side = n + 1;
            auto vid = [side](Index i, Index j, Index k) { return i + side * (j + side * k); };

            TetGrid grid;
            grid.rest_positions.resize(side * side * side, 3);
            for (Index k = 0; k < side; ++k)
            {
                for (Index j = 0; j < side; ++j)
                {
                    for (Index i = 0; i < side; ++i)
                    {
                        grid.rest_positions.row(vid(i, j, k)) << double(i) / n, double(j) / n, double(k) / n;
                    }
                }
            }

            // Each tet follows a monotone lattice path 000 -> 111, one axis per step.
            static constexpr std::array<std::array<int, 3>, 6> kPaths = {{
                {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
            }};

            grid.tets.resize(Index(6) * n * n * n, 4);
            Index t = 0;
            for (Index k = 0; k < n; ++k)
            {
                for (Index j = 0; j < n; ++j)
                {
                    for (Index i = 0; i < n; ++i)
                    {
                        for (const auto & path : kPaths)
                        {
                            std::array<Index, 3> c = {i, j, k};
                            grid.tets(t, 0) = vid(c[0], c[1], c[2]);
                            for (int step = 0; step < 3; ++step)
                            {
                                c[path[step]] += 1;
                                grid.tets(t, step + 1) = vid(c[0], c[1], c[2]);
                            }
                            ++t;
                        }
                    }
                }
            }
            return grid;
        }

        TetGrid build_bcc(int n)
        {
            const Index side    = n + 1;
            const Index corners = side * side * side;
            const Index centers = Index(n) * n * n;
            auto corner = [side](Index i, Index j, Index k) { return i + side * (j + side * k); };
            auto center = [n, corners](Index i, Index j, Index k) { return corners + i + n * (j + Index(n) * k); };

            std::vector<Vec3> extra;
            std::vector<std::array<Index, 4>> tets;

            // The four edges of the face of cell (i,j,k) orthogonal to `axis`,
            // at offset 0 or 1 along that axis.
            auto face_edges = [&](Index i, Index j, Index k, int axis, int offset) {
                std::array<std::array<Index, 3>, 4> quad;
                const int u = (axis + 1) % 3;
                const int v = (axis + 2) % 3;
                static constexpr std::array<std::array<int, 2>, 4> kCycle = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
                for (int q = 0; q < 4; ++q)
                {
                    std::array<Index, 3> c = {i, j, k};
                    c[axis] += offset;
                    c[u] += kCycle[q][0];
                    c[v] += kCycle[q][1];
                    quad[q] = c;
                }
                std::array<std::array<Index, 2>, 4> edges;
                for (int q = 0; q < 4; ++q)
                {
                    const auto & a = quad[q];
                    const auto & b = quad[(q + 1) % 4];
                    edges[q] = {corner(a[0], a[1], a[2]), corner(b[0], b[1], b[2])};
                }
                return edges;
            };

            for (Index k = 0; k < n; ++k)
            {
                for (Index j = 0; j < n; ++j)
                {
                    for (Index i = 0; i < n; ++i)
                    {
                        const std::array<Index, 3> cell = {i, j, k};
                        for (int axis = 0; axis < 3; ++axis)
                        {
                            // Interior faces are owned by the lower cell.
                            if (cell[axis] + 1 < n)
                            {
                                std::array<Index, 3> nb = cell;
                                nb[axis] += 1;
                                for (const auto & e : face_edges(i, j, k, axis, 1))
                                {
                                    tets.push_back({center(i, j, k), center(nb[0], nb[1], nb[2]), e[0], e[1]});
                                }
                            }
                            for (int offset : {0, 1})
                            {
                                const bool boundary = (offset == 0 && cell[axis] == 0) || (offset == 1 && cell[axis] == n - 1);
                                if (!boundary)
                                {
                                    continue;
                                }
                                Vec3 fc = (Vec3(double(i), double(j), double(k)) + Vec3::Constant(0.5)) / n;
                                fc[axis] = double(cell[axis] + offset) / n;
                                const Index fid = corners + centers + Index(extra.size());
                                extra.push_back(fc);
                                for (const auto & e : face_edges(i, j, k, axis, offset))
                                {
                                    tets.push_back({center(i, j, k), fid, e[0], e[1]});
                                }
                            }
                        }
                    }
                }
            }

            TetGrid grid;
            grid.rest_positions.resize(corners + centers + Index(extra.size()), 3);
            for (Index kk = 0; kk < side; ++kk)
            {
                for (Index jj = 0; jj < side; ++jj)
                {
                    for (Index ii = 0; ii < side; ++ii)
                    {
                        grid.rest_positions.row(corner(ii, jj, kk)) << double(ii) / n, double(jj) / n, double(kk) / n;
                    }
                }
            }
            for (Index kk = 0; kk < n; ++kk)
            {
                for (Index jj = 0; jj < n; ++jj)
                {
                    for (Index ii = 0; ii < n; ++ii)
                    {
                        grid.rest_positions.row(center(ii, jj, kk)) << (ii + 0.5) / n, (jj + 0.5) / n, (kk + 0.5) / n;
                    }
                }
            }
            for (std::size_t e = 0; e < extra.size(); ++e)
            {
                grid.rest_positions.row(corners + centers + Index(e)) = extra[e].transpose();
            }
            grid.tets.resize(Index(tets.size()), 4);
            for (std::size_t t = 0; t < tets.size(); ++t)
            {
                for (int c = 0; c < 4; ++c)
                {
                    grid.tets(Index(t), c) = tets[t][c];
                }
            }
            return grid;
        }
    }

    double TetGrid::cell_size() const
    {
        return 1.0 / (double(base_resolution) * std::ldexp(1.0, level));
    }

    double default_clamp_radius(GridScheme scheme, double cell)
    {
        const double bound = scheme == GridScheme::six_tet ? cell / 6.0 : cell / 8.0;
        return 0.9 * bound;
    }

    TetGrid build_grid(int resolution, GridScheme scheme)
    {
        if (resolution < 1)
        {
            throw Error(ErrorCode::invalid_argument, "grid resolution must be >= 1, got " + std::to_string(resolution));
        }
        TetGrid grid = scheme == GridScheme::six_tet ? build_six_tet(resolution) : build_bcc(resolution);
        orient_positive(grid.rest_positions, grid.tets);
        grid.deformations    = MatX3::Zero(grid.rest_positions.rows(), 3);
        grid.sdf             = VecX::Ones(grid.rest_positions.rows());
        grid.level           = 0;
        grid.base_resolution = resolution;
        grid.scheme          = scheme;
        grid.clamp_radius    = default_clamp_radius(scheme, 1.0 / resolution);
        return grid;
    }

    double interpolate(const TetGrid & grid, TetId tet, const Eigen::Vector4d & weights)
    {
        if (tet.value < 0 || tet.value >= grid.num_tets())
        {
            throw Error(ErrorCode::invalid_argument, "tet id out of range");
        }
        if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
        {
            throw Error(ErrorCode::invalid_argument, "barycentric weights must be non-negative and sum to 1");
        }
        Eigen::Vector4d values;
        for (int c = 0; c < 4; ++c)
        {
            values[c] = grid.sdf[grid.tets(tet.value, c)];
        }
        return barycentric_blend<double>(values, weights);
    }

    bool is_surface_tet(const TetGrid & grid, Index tet)
    {
        const bool first = is_inside(grid.sdf[grid.tets(tet, 0)]);
        for (int c = 1; c < 4; ++c)
        {
            if (is_inside(grid.sdf[grid.tets(tet, c)]) != first)
            {
                return true;
            }
        }
        return false;
    }

    std::vector<TetId> surface_tets(const TetGrid & grid)
    {
        std::vector<TetId> out;
        for (Index t = 0; t < grid.num_tets(); ++t)
        {
            if (is_surface_tet(grid, t))
            {
                out.emplace_back(t);
            }
        }
        return out;
    }

    void set_deformation(TetGrid & grid, const MatX3 & values)
    {
        if (values.rows() != grid.num_vertices())
        {
            throw Error(ErrorCode::invalid_argument, "deformation rows " + std::to_string(values.rows()) + " != vertex count " + std::to_string(grid.num_vertices()));
        }
        grid.deformations = values.cwiseMax(-grid.clamp_radius).cwiseMin(grid.clamp_radius);
    }

    TetGrid apply_deformation(TetGrid grid, const MatX3 & deltas)
    {
        if (deltas.rows() != grid.num_vertices())
        {
            throw Error(ErrorCode::invalid_argument, "delta rows " + std::to_string(deltas.rows()) + " != vertex count " + std::to_string(grid.num_vertices()));
        }
        const MatX3 target = grid.deformations + deltas;
        set_deformation(grid, target);
        return grid;
    }

    double signed_volume(const TetGrid & grid, Index tet, bool at_rest)
    {
        auto p = [&](int c) -> Vec3 {
            const Index v = grid.tets(tet, c);
            return at_rest ? Vec3(grid.rest_positions.row(v).transpose()) : grid.position(v);
        };
        const Vec3 p0 = p(0);
        return det3(p(1) - p0, p(2) - p0, p(3) - p0) / 6.0;
    }
}
