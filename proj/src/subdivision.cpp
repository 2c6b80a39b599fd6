#include "tetfit/subdivision.hpp"

#include <algorithm>
#include <numbers>
#include <unordered_map>

#include <Eigen/Geometry>

namespace tetfit
{
    namespace
    {
        // Local slots: 0..3 are the parent corners, 4..9 the midpoints of these edges.
        constexpr std::array<std::array<int, 2>, 6> kLocalEdges = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

        // Four corner children and four from the inner octahedron cut along x02-x13.
        constexpr int kChildren[8][4] = {
            {0, 4, 5, 6},
            {4, 1, 7, 8},
            {5, 7, 2, 9},
            {6, 8, 9, 3},
            {4, 5, 6, 8},
            {4, 5, 7, 8},
            {5, 6, 8, 9},
            {5, 7, 8, 9},
        };

        // Children of a positive parent that come out negative in slot order.
        std::array<bool, 8> reference_flips()
        {
            std::array<Vec3, 10> p;
            p[0] = Vec3::Zero();
            p[1] = Vec3::UnitX();
            p[2] = Vec3::UnitY();
            p[3] = Vec3::UnitZ();
            for (int e = 0; e < 6; ++e)
            {
                p[4 + e] = 0.5 * (p[kLocalEdges[e][0]] + p[kLocalEdges[e][1]]);
            }
            std::array<bool, 8> flips {};
            for (int c = 0; c < 8; ++c)
            {
                const Vec3 a = p[kChildren[c][0]];
                flips[c] = (p[kChildren[c][1]] - a).dot((p[kChildren[c][2]] - a).cross(p[kChildren[c][3]] - a)) < 0.0;
            }
            return flips;
        }

        std::pair<Index, Index> sorted_pair(Index a, Index b)
        {
            return a < b ? std::pair {a, b} : std::pair {b, a};
        }

        void check_plan(const TetGrid & grid, const SubdivisionPlan & plan)
        {
            if (plan.source_vertices != grid.num_vertices() || plan.source_tets != grid.num_tets())
            {
                throw Error(ErrorCode::invalid_argument, "subdivision plan was built for a different grid");
            }
            if (plan.selected.empty())
            {
                throw Error(ErrorCode::no_surface, "nothing selected for subdivision (the grid carries no surface)");
            }
        }
    }

    SubdivisionPlan plan_subdivision(const TetGrid & grid)
    {
        const std::vector<TetId> surface = surface_tets(grid);
        std::vector<char> touched(static_cast<std::size_t>(grid.num_vertices()), 0);
        for (TetId t : surface)
        {
            for (int c = 0; c < 4; ++c)
            {
                touched[grid.tets(t.value, c)] = 1;
            }
        }
        std::vector<TetId> selected;
        for (Index t = 0; t < grid.num_tets(); ++t)
        {
            for (int c = 0; c < 4; ++c)
            {
                if (touched[grid.tets(t, c)])
                {
                    selected.emplace_back(t);
                    break;
                }
            }
        }
        return plan_subdivision(grid, std::move(selected));
    }

    SubdivisionPlan plan_subdivision(const TetGrid & grid, std::vector<TetId> selected)
    {
        std::sort(selected.begin(), selected.end(), [](TetId a, TetId b) { return a.value < b.value; });
        selected.erase(std::unique(selected.begin(), selected.end(), [](TetId a, TetId b) { return a.value == b.value; }), selected.end());
        SubdivisionPlan plan;
        plan.source_vertices = grid.num_vertices();
        plan.source_tets     = grid.num_tets();
        std::vector<char> used(static_cast<std::size_t>(grid.num_vertices()), 0);
        for (TetId t : selected)
        {
            if (t.value < 0 || t.value >= grid.num_tets())
            {
                throw Error(ErrorCode::invalid_argument, "selected tet id out of range");
            }
            for (int c = 0; c < 4; ++c)
            {
                used[grid.tets(t.value, c)] = 1;
            }
            for (const auto & e : kLocalEdges)
            {
                plan.edge_midpoints.emplace(sorted_pair(grid.tets(t.value, e[0]), grid.tets(t.value, e[1])), VertexId {});
            }
        }
        for (Index v = 0; v < grid.num_vertices(); ++v)
        {
            if (used[v])
            {
                plan.kept_vertices.push_back(v);
            }
        }
        Index next = Index(plan.kept_vertices.size());
        for (auto & [edge, id] : plan.edge_midpoints)
        {
            id = VertexId {next++};
        }
        plan.selected = std::move(selected);
        return plan;
    }

    VecX prolong_vertex_values(const SubdivisionPlan & plan, const VecX & values)
    {
        if (values.size() != plan.source_vertices)
        {
            throw Error(ErrorCode::invalid_argument, "per-vertex field does not match the plan's source grid");
        }
        VecX out(plan.num_output_vertices());
        for (std::size_t i = 0; i < plan.kept_vertices.size(); ++i)
        {
            out[Index(i)] = values[plan.kept_vertices[i]];
        }
        for (const auto & [edge, id] : plan.edge_midpoints)
        {
            out[id.value] = 0.5 * (values[edge.first] + values[edge.second]);
        }
        return out;
    }

    TetGrid subdivide_volume(const TetGrid & grid, const SubdivisionPlan & plan)
    {
        check_plan(grid, plan);
        static const std::array<bool, 8> flips = reference_flips();

        std::vector<Index> new_id(static_cast<std::size_t>(grid.num_vertices()), -1);
        for (std::size_t i = 0; i < plan.kept_vertices.size(); ++i)
        {
            new_id[plan.kept_vertices[i]] = Index(i);
        }

        TetGrid out;
        const Index nv     = plan.num_output_vertices();
        const MatX3 deformed = grid.positions();
        out.rest_positions.resize(nv, 3);
        out.sdf.resize(nv);
        for (std::size_t i = 0; i < plan.kept_vertices.size(); ++i)
        {
            out.rest_positions.row(Index(i)) = deformed.row(plan.kept_vertices[i]);
            out.sdf[Index(i)]                = grid.sdf[plan.kept_vertices[i]];
        }
        for (const auto & [edge, id] : plan.edge_midpoints)
        {
            out.rest_positions.row(id.value) = 0.5 * (deformed.row(edge.first) + deformed.row(edge.second));
            out.sdf[id.value]                = 0.5 * (grid.sdf[edge.first] + grid.sdf[edge.second]);
        }

        out.tets.resize(Index(plan.selected.size()) * 8, 4);
        Index row = 0;
        for (TetId t : plan.selected)
        {
            std::array<Index, 10> slot;
            for (int c = 0; c < 4; ++c)
            {
                slot[c] = new_id[grid.tets(t.value, c)];
            }
            for (int e = 0; e < 6; ++e)
            {
                const Index a = grid.tets(t.value, kLocalEdges[e][0]);
                const Index b = grid.tets(t.value, kLocalEdges[e][1]);
                slot[4 + e]   = plan.edge_midpoints.at(sorted_pair(a, b)).value;
            }
            for (int c = 0; c < 8; ++c)
            {
                for (int k = 0; k < 4; ++k)
                {
                    out.tets(row, k) = slot[kChildren[c][k]];
                }
                if (flips[c])
                {
                    std::swap(out.tets(row, 2), out.tets(row, 3));
                }
                ++row;
            }
        }

        out.deformations    = MatX3::Zero(nv, 3);
        out.level           = grid.level + 1;
        out.base_resolution = grid.base_resolution;
        out.scheme          = grid.scheme;
        out.clamp_radius    = 0.5 * grid.clamp_radius;
        return out;
    }

    double loop_beta(Index valence)
    {
        if (valence < 3)
        {
            throw Error(ErrorCode::invalid_argument, "Loop subdivision needs valence >= 3");
        }
        const double n = double(valence);
        const double c = 0.375 + 0.25 * std::cos(2.0 * std::numbers::pi / n);
        return (0.625 - c * c) / n;
    }

    std::pair<double, double> loop_effective_weight(double alpha, Index valence)
    {
        const double w     = double(valence) * loop_beta(valence);
        const double denom = alpha * w + (1.0 - alpha) * (1.0 - w);
        return {alpha * w / denom, w * (1.0 - w) / (denom * denom)};
    }

    TriangleMesh loop_subdivide(const TriangleMesh & mesh, const AlphaField & alphas, int iterations, LoopTape * tape)
    {
        if (iterations < 0)
        {
            throw Error(ErrorCode::invalid_argument, "iterations must be >= 0");
        }
        if (alphas.alpha.size() != mesh.num_vertices())
        {
            throw Error(ErrorCode::invalid_argument, "alpha field needs one value per mesh vertex");
        }
        if ((alphas.alpha.array() < 0.0).any() || (alphas.alpha.array() > 1.0).any() || !alphas.alpha.allFinite())
        {
            throw Error(ErrorCode::invalid_argument, "alpha values must lie in [0, 1]");
        }
        if (!analyze_topology(mesh).closed_manifold())
        {
            throw Error(ErrorCode::invalid_argument, "Loop subdivision needs a closed 2-manifold mesh");
        }
        if (tape)
        {
            tape->levels.clear();
        }

        MatX3 positions = mesh.positions;
        MatX3i triangles = mesh.triangles;
        VecX alpha       = alphas.alpha;
        for (int it = 0; it < iterations; ++it)
        {
            const Index n_in = positions.rows();
            LoopLevel level;

            // Edges in first-seen order.
            std::unordered_map<std::uint64_t, Index> edge_ids;
            edge_ids.reserve(static_cast<std::size_t>(triangles.rows() * 2));
            MatX3i face_edges(triangles.rows(), 3);  // edge k of a face joins corners k and k+1
            for (Index f = 0; f < triangles.rows(); ++f)
            {
                for (int k = 0; k < 3; ++k)
                {
                    const Index a = triangles(f, k), b = triangles(f, (k + 1) % 3), c = triangles(f, (k + 2) % 3);
                    const auto [lo, hi] = sorted_pair(a, b);
                    const std::uint64_t key = (std::uint64_t(lo) << 32) | std::uint64_t(hi);
                    auto [slot, fresh] = edge_ids.try_emplace(key, Index(level.edges.size()));
                    if (fresh)
                    {
                        level.edges.push_back({lo, hi});
                        level.opposite.push_back({c, -1});
                    }
                    else
                    {
                        level.opposite[slot->second][1] = c;
                    }
                    face_edges(f, k) = slot->second;
                }
            }

            std::vector<std::vector<Index>> ring(static_cast<std::size_t>(n_in));
            for (const auto & e : level.edges)
            {
                ring[e[0]].push_back(e[1]);
                ring[e[1]].push_back(e[0]);
            }
            level.ring_start.assign(static_cast<std::size_t>(n_in) + 1, 0);
            for (Index v = 0; v < n_in; ++v)
            {
                level.ring_start[v + 1] = level.ring_start[v] + Index(ring[v].size());
                level.ring.insert(level.ring.end(), ring[v].begin(), ring[v].end());
            }

            const Index n_edges = Index(level.edges.size());
            MatX3 next(n_in + n_edges, 3);
            VecX next_alpha(n_in + n_edges);
            for (Index v = 0; v < n_in; ++v)
            {
                const Index valence = Index(ring[v].size());
                Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
                for (Index u : ring[v])
                {
                    mean += positions.row(u);
                }
                mean /= double(valence);
                const double a = loop_effective_weight(alpha[v], valence).first;
                next.row(v)   = (1.0 - a) * positions.row(v) + a * mean;
                next_alpha[v] = alpha[v];
            }
            for (Index e = 0; e < n_edges; ++e)
            {
                const auto & ab = level.edges[e];
                const auto & cd = level.opposite[e];
                next.row(n_in + e) = 0.375 * (positions.row(ab[0]) + positions.row(ab[1])) + 0.125 * (positions.row(cd[0]) + positions.row(cd[1]));
                next_alpha[n_in + e] = 0.5 * (alpha[ab[0]] + alpha[ab[1]]);
            }

            MatX3i next_tris(triangles.rows() * 4, 3);
            for (Index f = 0; f < triangles.rows(); ++f)
            {
                const Index a = triangles(f, 0), b = triangles(f, 1), c = triangles(f, 2);
                const Index ab = n_in + face_edges(f, 0), bc = n_in + face_edges(f, 1), ca = n_in + face_edges(f, 2);
                next_tris.row(4 * f + 0) << a, ab, ca;
                next_tris.row(4 * f + 1) << ab, b, bc;
                next_tris.row(4 * f + 2) << ca, bc, c;
                next_tris.row(4 * f + 3) << ab, bc, ca;
            }

            if (tape)
            {
                level.positions_in = positions;
                level.alpha_in     = alpha;
                tape->levels.push_back(std::move(level));
            }
            positions = std::move(next);
            triangles = std::move(next_tris);
            alpha     = std::move(next_alpha);
        }
        if (tape)
        {
            tape->output_vertices = positions.rows();
        }

        TriangleMesh out;
        out.positions = std::move(positions);
        out.triangles = std::move(triangles);
        return out;
    }

    LoopCotangents loop_subdivide_vjp(const LoopTape & tape, const MatX3 & d_output)
    {
        if (d_output.rows() != tape.output_vertices)
        {
            throw Error(ErrorCode::invalid_argument, "cotangent rows do not match the recorded Loop output");
        }
        MatX3 d_pos = d_output;
        VecX d_alpha = VecX::Zero(d_output.rows());
        for (auto it = tape.levels.rbegin(); it != tape.levels.rend(); ++it)
        {
            const LoopLevel & level = *it;
            const Index n_in        = level.positions_in.rows();
            const Index n_edges     = Index(level.edges.size());
            if (d_pos.rows() != n_in + n_edges)
            {
                throw Error(ErrorCode::invalid_argument, "Loop tape is inconsistent");
            }
            MatX3 d_in = MatX3::Zero(n_in, 3);
            VecX d_alpha_in = VecX::Zero(n_in);
            for (Index v = 0; v < n_in; ++v)
            {
                const Index begin = level.ring_start[v], end = level.ring_start[v + 1];
                const Index valence = end - begin;
                const auto [a, da] = loop_effective_weight(level.alpha_in[v], valence);
                Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
                for (Index k = begin; k < end; ++k)
                {
                    mean += level.positions_in.row(level.ring[k]);
                }
                mean /= double(valence);
                d_in.row(v) += (1.0 - a) * d_pos.row(v);
                for (Index k = begin; k < end; ++k)
                {
                    d_in.row(level.ring[k]) += (a / double(valence)) * d_pos.row(v);
                }
                d_alpha_in[v] += d_alpha[v] + da * d_pos.row(v).dot(mean - level.positions_in.row(v));
            }
            for (Index e = 0; e < n_edges; ++e)
            {
                const auto & ab = level.edges[e];
                const auto & cd = level.opposite[e];
                const Eigen::RowVector3d g = d_pos.row(n_in + e);
                d_in.row(ab[0]) += 0.375 * g;
                d_in.row(ab[1]) += 0.375 * g;
                d_in.row(cd[0]) += 0.125 * g;
                d_in.row(cd[1]) += 0.125 * g;
                d_alpha_in[ab[0]] += 0.5 * d_alpha[n_in + e];
                d_alpha_in[ab[1]] += 0.5 * d_alpha[n_in + e];
            }
            d_pos   = std::move(d_in);
            d_alpha = std::move(d_alpha_in);
        }
        return {d_pos, d_alpha};
    }
}
