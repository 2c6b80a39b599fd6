#include "tetfit/marching.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>

#include <Eigen/Geometry>

#include "tetfit/mc_tables.hpp"
#include "tetfit/parallel.hpp"

namespace tetfit
{
    namespace
    {
        int edge_index(int a, int b)
        {
            for (int e = 0; e < 6; ++e)
            {
                if ((kTetEdges[e][0] == a && kTetEdges[e][1] == b) || (kTetEdges[e][0] == b && kTetEdges[e][1] == a))
                {
                    return e;
                }
            }
            return -1;
        }

        // Orientation is decided once on the reference tet (origin + unit axes),
        // which any positively oriented tet maps onto with a positive-determinant
        // affine map.
        std::array<TetConfiguration, 16> build_configurations()
        {
            const std::array<Vec3, 4> ref = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
            std::array<TetConfiguration, 16> table {};
            for (unsigned code = 0; code < 16; ++code)
            {
                std::array<int, 4> value {};
                std::vector<int> in;
                std::vector<int> out;
                for (int v = 0; v < 4; ++v)
                {
                    const bool inside = (code >> v) & 1u;
                    value[v]          = inside ? -1 : 1;
                    (inside ? in : out).push_back(v);
                }
                TetConfiguration & cfg = table[code];
                for (int e = 0; e < 6; ++e)
                {
                    if (value[kTetEdges[e][0]] != value[kTetEdges[e][1]])
                    {
                        cfg.crossed_edges |= 1u << e;
                    }
                }

                std::vector<std::array<int, 3>> tris;
                if (in.size() == 1 || out.size() == 1)
                {
                    const int apex = in.size() == 1 ? in[0] : out[0];
                    std::array<int, 3> tri {};
                    int n = 0;
                    for (int v = 0; v < 4; ++v)
                    {
                        if (v != apex)
                        {
                            tri[n++] = edge_index(apex, v);
                        }
                    }
                    tris.push_back(tri);
                    cfg.kind = TetCase::one_triangle;
                }
                else if (in.size() == 2)
                {
                    const int a = in[0], b = in[1], c = out[0], d = out[1];
                    const int ac = edge_index(a, c), ad = edge_index(a, d), bd = edge_index(b, d), bc = edge_index(b, c);
                    tris.push_back({ac, ad, bd});
                    tris.push_back({ac, bd, bc});
                    cfg.kind = TetCase::two_triangles;
                }

                const Vec3 gradient(value[1] - value[0], value[2] - value[0], value[3] - value[0]);
                for (auto & tri : tris)
                {
                    auto mid = [&](int e) -> Vec3 { return 0.5 * (ref[kTetEdges[e][0]] + ref[kTetEdges[e][1]]); };
                    const Vec3 normal = (mid(tri[1]) - mid(tri[0])).cross(mid(tri[2]) - mid(tri[0]));
                    if (normal.dot(gradient) < 0.0)
                    {
                        std::swap(tri[1], tri[2]);
                    }
                }
                cfg.num_triangles = int(tris.size());
                for (std::size_t i = 0; i < tris.size(); ++i)
                {
                    cfg.triangles[i] = tris[i];
                }
            }
            return table;
        }

        const std::array<TetConfiguration, 16> & configurations()
        {
            static const std::array<TetConfiguration, 16> table = build_configurations();
            return table;
        }

        std::uint64_t edge_key(Index a, Index b)
        {
            return (std::uint64_t(std::min(a, b)) << 32) | std::uint64_t(std::max(a, b));
        }

        Vec3 crossing_on_edge(const TetGrid & grid, Index a, Index b)
        {
            assert(is_inside(grid.sdf[a]) != is_inside(grid.sdf[b]));
            return edge_crossing<double>(grid.position(a), grid.position(b), grid.sdf[a], grid.sdf[b]);
        }
    }

    const TetConfiguration & classify_tet(const std::array<bool, 4> & inside)
    {
        unsigned code = 0;
        for (int v = 0; v < 4; ++v)
        {
            code |= inside[v] ? (1u << v) : 0u;
        }
        return configurations()[code];
    }

    TriangleMesh marching_tetrahedra(const TetGrid & grid)
    {
        const Index tets = grid.num_tets();
        std::vector<std::uint8_t> codes(static_cast<std::size_t>(tets));
        parallel_for(tets, [&](Index begin, Index end) {
            for (Index t = begin; t < end; ++t)
            {
                unsigned code = 0;
                for (int v = 0; v < 4; ++v)
                {
                    code |= is_inside(grid.sdf[grid.tets(t, v)]) ? (1u << v) : 0u;
                }
                codes[t] = std::uint8_t(code);
            }
        });

        const auto & table = configurations();
        std::unordered_map<std::uint64_t, Index> vertex_of_edge;
        std::vector<std::array<Index, 2>> provenance;
        std::vector<std::array<Index, 3>> triangles;
        for (Index t = 0; t < tets; ++t)
        {
            const TetConfiguration & cfg = table[codes[t]];
            if (cfg.num_triangles == 0)
            {
                continue;
            }
            std::array<Index, 6> local {};
            for (int e = 0; e < 6; ++e)
            {
                if (!((cfg.crossed_edges >> e) & 1u))
                {
                    continue;
                }
                const Index a = grid.tets(t, kTetEdges[e][0]);
                const Index b = grid.tets(t, kTetEdges[e][1]);
                auto [it, inserted] = vertex_of_edge.emplace(edge_key(a, b), Index(provenance.size()));
                if (inserted)
                {
                    provenance.push_back({std::min(a, b), std::max(a, b)});
                }
                local[e] = it->second;
            }
            for (int i = 0; i < cfg.num_triangles; ++i)
            {
                triangles.push_back({local[cfg.triangles[i][0]], local[cfg.triangles[i][1]], local[cfg.triangles[i][2]]});
            }
        }

        TriangleMesh mesh;
        mesh.provenance = std::move(provenance);
        mesh.positions.resize(Index(mesh.provenance.size()), 3);
        parallel_for(mesh.positions.rows(), [&](Index begin, Index end) {
            for (Index v = begin; v < end; ++v)
            {
                const auto & [a, b]  = mesh.provenance[v];
                mesh.positions.row(v) = crossing_on_edge(grid, a, b).transpose();
            }
        });
        mesh.triangles.resize(Index(triangles.size()), 3);
        for (std::size_t f = 0; f < triangles.size(); ++f)
        {
            mesh.triangles.row(Index(f)) << triangles[f][0], triangles[f][1], triangles[f][2];
        }
        return mesh;
    }

    Cotangents marching_tetrahedra_vjp(const TetGrid & grid, const TriangleMesh & mesh, const MatX3 & d_mesh_positions)
    {
        const Index n = mesh.num_vertices();
        if (Index(mesh.provenance.size()) != n)
        {
            throw Error(ErrorCode::invalid_argument, "mesh carries no marching-tetrahedra provenance");
        }
        if (d_mesh_positions.rows() != n)
        {
            throw Error(ErrorCode::invalid_argument, "cotangent rows " + std::to_string(d_mesh_positions.rows()) + " != mesh vertices " + std::to_string(n));
        }

        struct Contribution
        {
            Vec3 d_pa, d_pb;
            double d_sa, d_sb;
        };
        std::vector<Contribution> parts(static_cast<std::size_t>(n));
        std::vector<char> bad(static_cast<std::size_t>(n), 0);
        parallel_for(n, [&](Index begin, Index end) {
            for (Index v = begin; v < end; ++v)
            {
                const auto & [a, b] = mesh.provenance[v];
                if (a < 0 || b >= grid.num_vertices() || a >= b || is_inside(grid.sdf[a]) == is_inside(grid.sdf[b]))
                {
                    bad[v] = 1;
                    continue;
                }
                const Vec3 pa = grid.position(a);
                const Vec3 pb = grid.position(b);
                const double sa = grid.sdf[a];
                const double sb = grid.sdf[b];
                const Vec3 x    = edge_crossing<double>(pa, pb, sa, sb);
                if ((x - mesh.vertex(v)).norm() > 1e-9 * (1.0 + x.norm()))
                {
                    bad[v] = 1;
                    continue;
                }
                const auto jac = edge_crossing_jacobian<double>(pa, pb, sa, sb);
                const Vec3 g   = d_mesh_positions.row(v).transpose();
                parts[v]       = {jac.d_pa * g, jac.d_pb * g, jac.d_sa.dot(g), jac.d_sb.dot(g)};
            }
        });

        Cotangents out = Cotangents::zeros(grid.num_vertices());
        for (Index v = 0; v < n; ++v)
        {
            if (bad[v])
            {
                throw Error(ErrorCode::invalid_argument, "mesh vertex " + std::to_string(v) + " does not match its grid edge");
            }
            const auto & [a, b] = mesh.provenance[v];
            out.d_position.row(a) += parts[v].d_pa.transpose();
            out.d_position.row(b) += parts[v].d_pb.transpose();
            out.d_sdf[a] += parts[v].d_sa;
            out.d_sdf[b] += parts[v].d_sb;
        }
        return out;
    }

    TriangleMesh marching_cubes(const VecX & values, int resolution)
    {
        if (resolution < 1)
        {
            throw Error(ErrorCode::invalid_argument, "lattice resolution must be >= 1");
        }
        const Index side = resolution + 1;
        if (values.size() != side * side * side)
        {
            throw Error(ErrorCode::invalid_argument, "lattice expects " + std::to_string(side * side * side) + " values, got " + std::to_string(values.size()));
        }
        auto id = [side](Index i, Index j, Index k) { return i + side * (j + side * k); };
        auto point = [resolution, side](Index v) -> Vec3 {
            return Vec3(double(v % side), double((v / side) % side), double(v / (side * side))) / double(resolution);
        };

        std::unordered_map<std::uint64_t, Index> vertex_of_edge;
        std::vector<std::array<Index, 2>> edges;
        std::vector<std::array<Index, 3>> triangles;
        for (Index k = 0; k < resolution; ++k)
        {
            for (Index j = 0; j < resolution; ++j)
            {
                for (Index i = 0; i < resolution; ++i)
                {
                    std::array<Index, 8> corner {};
                    unsigned code = 0;
                    for (int c = 0; c < 8; ++c)
                    {
                        const auto & o = detail::kCubeCorner[c];
                        corner[c]      = id(i + o[0], j + o[1], k + o[2]);
                        code |= is_inside(values[corner[c]]) ? (1u << c) : 0u;
                    }
                    const auto & row = detail::kTriTable[code];
                    for (int t = 0; row[t] != -1; t += 3)
                    {
                        std::array<Index, 3> tri {};
                        for (int c = 0; c < 3; ++c)
                        {
                            const auto & e = detail::kCubeEdge[row[t + c]];
                            const Index a  = corner[e[0]];
                            const Index b  = corner[e[1]];
                            auto [it, inserted] = vertex_of_edge.emplace(edge_key(a, b), Index(edges.size()));
                            if (inserted)
                            {
                                edges.push_back({std::min(a, b), std::max(a, b)});
                            }
                            tri[c] = it->second;
                        }
                        // The table winds triangles toward the inside corners.
                        triangles.push_back({tri[0], tri[2], tri[1]});
                    }
                }
            }
        }

        TriangleMesh mesh;
        mesh.positions.resize(Index(edges.size()), 3);
        for (std::size_t v = 0; v < edges.size(); ++v)
        {
            const auto & [a, b] = edges[v];
            mesh.positions.row(Index(v)) = edge_crossing<double>(point(a), point(b), values[a], values[b]).transpose();
        }
        mesh.triangles.resize(Index(triangles.size()), 3);
        for (std::size_t f = 0; f < triangles.size(); ++f)
        {
            mesh.triangles.row(Index(f)) << triangles[f][0], triangles[f][1], triangles[f][2];
        }
        return mesh;
    }
}
