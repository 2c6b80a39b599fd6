#include "tetfit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <Eigen/Geometry>

namespace tetfit
{
    namespace
    {
        struct DisjointSets
        {
            std::vector<Index> parent;

            explicit DisjointSets(Index n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), Index {0}); }

            Index find(Index x)
            {
                while (parent[x] != x)
                {
                    parent[x] = parent[parent[x]];
                    x         = parent[x];
                }
                return x;
            }

            void unite(Index a, Index b) { parent[find(a)] = find(b); }
        };
    }

    Vec3 face_area_vector(const TriangleMesh & mesh, Index f)
    {
        const Vec3 a = mesh.vertex(mesh.triangles(f, 0));
        const Vec3 b = mesh.vertex(mesh.triangles(f, 1));
        const Vec3 c = mesh.vertex(mesh.triangles(f, 2));
        return (b - a).cross(c - a);
    }

    double triangle_area(const TriangleMesh & mesh, Index f)
    {
        return 0.5 * face_area_vector(mesh, f).norm();
    }

    double surface_area(const TriangleMesh & mesh)
    {
        double total = 0.0;
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            total += triangle_area(mesh, f);
        }
        return total;
    }

    double enclosed_volume(const TriangleMesh & mesh)
    {
        double total = 0.0;
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            const Vec3 a = mesh.vertex(mesh.triangles(f, 0));
            const Vec3 b = mesh.vertex(mesh.triangles(f, 1));
            const Vec3 c = mesh.vertex(mesh.triangles(f, 2));
            total += a.dot(b.cross(c));
        }
        return total / 6.0;
    }

    TopologyReport analyze_topology(const TriangleMesh & mesh)
    {
        TopologyReport report;
        report.faces = mesh.num_triangles();
        if (report.faces == 0)
        {
            return report;
        }

        // Directed half-edge counts keyed on the undirected pair.
        std::map<std::pair<Index, Index>, std::pair<int, int>> edges;
        std::vector<char> used(static_cast<std::size_t>(mesh.num_vertices()), 0);
        DisjointSets components(mesh.num_vertices());
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            for (int c = 0; c < 3; ++c)
            {
                const Index a = mesh.triangles(f, c);
                const Index b = mesh.triangles(f, (c + 1) % 3);
                used[a]       = 1;
                auto & entry  = edges[{std::min(a, b), std::max(a, b)}];
                (a < b ? entry.first : entry.second) += 1;
                components.unite(a, b);
            }
        }

        report.edges = Index(edges.size());
        for (const auto & [key, count] : edges)
        {
            const int total = count.first + count.second;
            if (total == 1)
            {
                ++report.boundary_edges;
            }
            else if (total != 2 || count.first != 1)
            {
                ++report.nonmanifold_edges;
            }
        }

        // Vertex link: the edges opposite v in its incident triangles must form
        // one connected chain.
        std::vector<std::vector<std::pair<Index, Index>>> links(static_cast<std::size_t>(mesh.num_vertices()));
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            for (int c = 0; c < 3; ++c)
            {
                links[mesh.triangles(f, c)].emplace_back(mesh.triangles(f, (c + 1) % 3), mesh.triangles(f, (c + 2) % 3));
            }
        }
        for (Index v = 0; v < mesh.num_vertices(); ++v)
        {
            if (!used[v])
            {
                continue;
            }
            ++report.vertices;
            std::unordered_map<Index, Index> local;
            for (const auto & [a, b] : links[v])
            {
                local.emplace(a, Index(local.size()));
                local.emplace(b, Index(local.size()));
            }
            DisjointSets ring(Index(local.size()));
            for (const auto & [a, b] : links[v])
            {
                ring.unite(local[a], local[b]);
            }
            Index roots = 0;
            for (Index i = 0; i < Index(local.size()); ++i)
            {
                roots += ring.find(i) == i ? 1 : 0;
            }
            if (roots != 1)
            {
                ++report.nonmanifold_vertices;
            }
        }

        for (Index v = 0; v < mesh.num_vertices(); ++v)
        {
            if (used[v] && components.find(v) == v)
            {
                ++report.components;
            }
        }
        return report;
    }

    TriangleMesh remove_degenerate_triangles(const TriangleMesh & mesh, double min_area)
    {
        std::vector<Index> keep;
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            if (triangle_area(mesh, f) > min_area)
            {
                keep.push_back(f);
            }
        }
        std::vector<Index> remap(static_cast<std::size_t>(mesh.num_vertices()), -1);
        Index next = 0;
        for (Index f : keep)
        {
            for (int c = 0; c < 3; ++c)
            {
                Index & slot = remap[mesh.triangles(f, c)];
                if (slot < 0)
                {
                    slot = next++;
                }
            }
        }

        TriangleMesh out;
        out.positions.resize(next, 3);
        out.triangles.resize(Index(keep.size()), 3);
        if (!mesh.provenance.empty())
        {
            out.provenance.resize(static_cast<std::size_t>(next));
        }
        for (Index v = 0; v < mesh.num_vertices(); ++v)
        {
            if (remap[v] >= 0)
            {
                out.positions.row(remap[v]) = mesh.positions.row(v);
                if (!mesh.provenance.empty())
                {
                    out.provenance[remap[v]] = mesh.provenance[v];
                }
            }
        }
        for (std::size_t i = 0; i < keep.size(); ++i)
        {
            for (int c = 0; c < 3; ++c)
            {
                out.triangles(Index(i), c) = remap[mesh.triangles(keep[i], c)];
            }
        }
        return out;
    }

    TriangleMesh make_box_mesh(const Vec3 & center, const Vec3 & half_extents, int splits_per_edge)
    {
        const int s = std::max(1, splits_per_edge);
        std::map<std::array<int, 3>, Index> ids;
        std::vector<Vec3> points;
        std::vector<std::array<Index, 3>> tris;

        auto vertex = [&](std::array<int, 3> c) {
            auto [it, inserted] = ids.emplace(c, Index(points.size()));
            if (inserted)
            {
                Vec3 p;
                for (int a = 0; a < 3; ++a)
                {
                    p[a] = center[a] + half_extents[a] * (2.0 * c[a] / s - 1.0);
                }
                points.push_back(p);
            }
            return it->second;
        };

        for (int axis = 0; axis < 3; ++axis)
        {
            const int u = (axis + 1) % 3;
            const int v = (axis + 2) % 3;
            for (int side : {0, 1})
            {
                for (int i = 0; i < s; ++i)
                {
                    for (int j = 0; j < s; ++j)
                    {
                        std::array<Index, 4> q;
                        static constexpr std::array<std::array<int, 2>, 4> kCycle = {{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
                        for (int k = 0; k < 4; ++k)
                        {
                            std::array<int, 3> c {};
                            c[axis] = side * s;
                            c[u]    = i + kCycle[k][0];
                            c[v]    = j + kCycle[k][1];
                            q[k]    = vertex(c);
                        }
                        // (u, v, axis) is right-handed, so the cycle faces +axis.
                        if (side == 1)
                        {
                            tris.push_back({q[0], q[1], q[2]});
                            tris.push_back({q[0], q[2], q[3]});
                        }
                        else
                        {
                            tris.push_back({q[0], q[2], q[1]});
                            tris.push_back({q[0], q[3], q[2]});
                        }
                    }
                }
            }
        }

        TriangleMesh mesh;
        mesh.positions.resize(Index(points.size()), 3);
        for (std::size_t i = 0; i < points.size(); ++i)
        {
            mesh.positions.row(Index(i)) = points[i].transpose();
        }
        mesh.triangles.resize(Index(tris.size()), 3);
        for (std::size_t i = 0; i < tris.size(); ++i)
        {
            mesh.triangles.row(Index(i)) << tris[i][0], tris[i][1], tris[i][2];
        }
        return mesh;
    }

    TriangleMesh make_tetrahedron_mesh()
    {
        TriangleMesh mesh;
        mesh.positions.resize(4, 3);
        mesh.positions << 1, 1, 1,
                          1, -1, -1,
                          -1, 1, -1,
                          -1, -1, 1;
        mesh.triangles.resize(4, 3);
        mesh.triangles << 0, 1, 2,
                          0, 3, 1,
                          0, 2, 3,
                          1, 3, 2;
        return mesh;
    }

    TriangleMesh make_icosahedron_mesh()
    {
        const double t = (1.0 + std::sqrt(5.0)) / 2.0;
        TriangleMesh mesh;
        mesh.positions.resize(12, 3);
        mesh.positions << -1, t, 0,
                          1, t, 0,
                          -1, -t, 0,
                          1, -t, 0,
                          0, -1, t,
                          0, 1, t,
                          0, -1, -t,
                          0, 1, -t,
                          t, 0, -1,
                          t, 0, 1,
                          -t, 0, -1,
                          -t, 0, 1;
        mesh.triangles.resize(20, 3);
        mesh.triangles << 0, 11, 5,
                          0, 5, 1,
                          0, 1, 7,
                          0, 7, 10,
                          0, 10, 11,
                          1, 5, 9,
                          5, 11, 4,
                          11, 10, 2,
                          10, 7, 6,
                          7, 1, 8,
                          3, 9, 4,
                          3, 4, 2,
                          3, 2, 6,
                          3, 6, 8,
                          3, 8, 9,
                          4, 9, 5,
                          2, 4, 11,
                          6, 2, 10,
                          8, 6, 7,
                          9, 8, 1;
        return mesh;
    }
}
