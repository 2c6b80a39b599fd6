#include "tetfit/sdfield.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "tetfit/parallel.hpp"
#include "tetfit/random.hpp"

namespace tetfit
{
    namespace
    {
        void require_positive(double value, const char * what)
        {
            if (!(value > 0.0) || !std::isfinite(value))
            {
                throw Error(ErrorCode::invalid_argument, std::string(what) + " must be positive and finite");
            }
        }

        std::vector<double> parse_numbers(const std::string & body, std::size_t expected, const std::string & token)
        {
            std::vector<double> out;
            std::stringstream ss(body);
            std::string item;
            while (std::getline(ss, item, ','))
            {
                try
                {
                    std::size_t used = 0;
                    out.push_back(std::stod(item, &used));
                    if (used != item.size())
                    {
                        throw std::invalid_argument(item);
                    }
                }
                catch (const std::exception &)
                {
                    throw Error(ErrorCode::invalid_argument, "bad number '" + item + "' in shape token '" + token + "'");
                }
            }
            if (out.size() != expected)
            {
                throw Error(ErrorCode::invalid_argument, "shape token '" + token + "' needs " + std::to_string(expected) + " numbers, got " + std::to_string(out.size()));
            }
            return out;
        }

        AnalyticSdf parse_primitive(const std::string & token)
        {
            const auto colon = token.find(':');
            if (colon == std::string::npos)
            {
                throw Error(ErrorCode::invalid_argument, "shape token '" + token + "' lacks 'kind:' prefix");
            }
            const std::string kind = token.substr(0, colon);
            const std::string body = token.substr(colon + 1);
            if (kind == "sphere")
            {
                const auto v = parse_numbers(body, 4, token);
                return AnalyticSdf::sphere(Vec3(v[0], v[1], v[2]), v[3]);
            }
            if (kind == "torus")
            {
                const auto v = parse_numbers(body, 5, token);
                return AnalyticSdf::torus(Vec3(v[0], v[1], v[2]), v[3], v[4]);
            }
            if (kind == "box")
            {
                const auto v = parse_numbers(body, 6, token);
                return AnalyticSdf::box(Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5]));
            }
            throw Error(ErrorCode::invalid_argument, "unknown shape kind '" + kind + "' in token '" + token + "'");
        }

        std::string format_number(double x)
        {
            std::ostringstream os;
            os.precision(17);
            os << x;
            return os.str();
        }

        bool ray_hits_triangle(const Vec3 & origin, const Vec3 & dir, const Vec3 & a, const Vec3 & b, const Vec3 & c)
        {
            const Vec3 e1 = b - a, e2 = c - a;
            const Vec3 h  = dir.cross(e2);
            const double det = e1.dot(h);
            if (std::abs(det) < 1e-300)
            {
                return false;
            }
            const double inv = 1.0 / det;
            const Vec3 s     = origin - a;
            const double u   = inv * s.dot(h);
            if (u < 0.0 || u > 1.0)
            {
                return false;
            }
            const Vec3 q   = s.cross(e1);
            const double v = inv * dir.dot(q);
            if (v < 0.0 || u + v > 1.0)
            {
                return false;
            }
            return inv * e2.dot(q) > 0.0;
        }

        Vec3 project(const Vec3 & p, int axis)
        {
            return Vec3(p[(axis + 1) % 3], p[(axis + 2) % 3], 0.0);
        }
    }

    AnalyticSdf AnalyticSdf::sphere(const Vec3 & center, double radius)
    {
        require_positive(radius, "sphere radius");
        AnalyticSdf s;
        s.kind   = Kind::sphere;
        s.center = center;
        s.radius = radius;
        return s;
    }

    AnalyticSdf AnalyticSdf::torus(const Vec3 & center, double major, double minor)
    {
        require_positive(major, "torus major radius");
        require_positive(minor, "torus minor radius");
        AnalyticSdf s;
        s.kind   = Kind::torus;
        s.center = center;
        s.major  = major;
        s.radius = minor;
        return s;
    }

    AnalyticSdf AnalyticSdf::box(const Vec3 & center, const Vec3 & half_extents)
    {
        for (int a = 0; a < 3; ++a)
        {
            require_positive(half_extents[a], "box half extent");
        }
        AnalyticSdf s;
        s.kind         = Kind::box;
        s.center       = center;
        s.half_extents = half_extents;
        return s;
    }

    AnalyticSdf AnalyticSdf::unite(const AnalyticSdf & a, const AnalyticSdf & b)
    {
        AnalyticSdf s;
        s.kind = Kind::union_of;
        s.lhs  = std::make_shared<const AnalyticSdf>(a);
        s.rhs  = std::make_shared<const AnalyticSdf>(b);
        return s;
    }

    AnalyticSdf AnalyticSdf::intersect(const AnalyticSdf & a, const AnalyticSdf & b)
    {
        AnalyticSdf s = unite(a, b);
        s.kind        = Kind::intersection_of;
        return s;
    }

    AnalyticSdf parse_shape(const std::string & text)
    {
        if (text.empty())
        {
            throw Error(ErrorCode::invalid_argument, "empty shape string");
        }
        for (char op : {'|', '&'})
        {
            const auto pos = text.find(op);
            if (pos != std::string::npos)
            {
                const AnalyticSdf a = parse_shape(text.substr(0, pos));
                const AnalyticSdf b = parse_shape(text.substr(pos + 1));
                return op == '|' ? AnalyticSdf::unite(a, b) : AnalyticSdf::intersect(a, b);
            }
        }
        return parse_primitive(text);
    }

    std::string format_shape(const AnalyticSdf & sdf)
    {
        auto vec = [](const Vec3 & v) { return format_number(v.x()) + "," + format_number(v.y()) + "," + format_number(v.z()); };
        switch (sdf.kind)
        {
            case AnalyticSdf::Kind::sphere: return "sphere:" + vec(sdf.center) + "," + format_number(sdf.radius);
            case AnalyticSdf::Kind::torus: return "torus:" + vec(sdf.center) + "," + format_number(sdf.major) + "," + format_number(sdf.radius);
            case AnalyticSdf::Kind::box: return "box:" + vec(sdf.center) + "," + vec(sdf.half_extents);
            case AnalyticSdf::Kind::union_of: return format_shape(*sdf.lhs) + "|" + format_shape(*sdf.rhs);
            case AnalyticSdf::Kind::intersection_of: return format_shape(*sdf.lhs) + "&" + format_shape(*sdf.rhs);
        }
        return {};
    }

    PointSample sample_analytic_surface(const AnalyticSdf & sdf, Index n, std::uint64_t seed)
    {
        if (!sdf.is_primitive())
        {
            throw Error(ErrorCode::invalid_argument, "surface sampling supports primitive shapes only");
        }
        if (n < 1)
        {
            throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
        }
        constexpr double kTwoPi = 2.0 * std::numbers::pi;
        const CounterRng rng(seed, 0x5a5a);
        PointSample out;
        out.positions.resize(n, 3);
        out.normals.resize(n, 3);
        for (Index i = 0; i < n; ++i)
        {
            const std::uint64_t base = std::uint64_t(i) << 8;
            Vec3 normal;
            Vec3 point;
            switch (sdf.kind)
            {
                case AnalyticSdf::Kind::sphere:
                {
                    const double z   = 1.0 - 2.0 * rng.uniform(base);
                    const double phi = kTwoPi * rng.uniform(base + 1);
                    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
                    normal = Vec3(rho * std::cos(phi), rho * std::sin(phi), z);
                    point  = sdf.center + sdf.radius * normal;
                    break;
                }
                case AnalyticSdf::Kind::torus:
                {
                    // Area element is proportional to (R + r cos theta): rejection sample theta.
                    double theta = 0.0;
                    for (std::uint64_t attempt = 0;; ++attempt)
                    {
                        theta = kTwoPi * rng.uniform(base + 2 + 2 * attempt);
                        const double accept = rng.uniform(base + 3 + 2 * attempt) * (sdf.major + sdf.radius);
                        if (accept <= sdf.major + sdf.radius * std::cos(theta) || attempt > 100)
                        {
                            break;
                        }
                    }
                    const double phi = kTwoPi * rng.uniform(base + 1);
                    const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
                    normal = std::cos(theta) * radial + std::sin(theta) * Vec3::UnitZ();
                    point  = sdf.center + sdf.major * radial + sdf.radius * normal;
                    break;
                }
                case AnalyticSdf::Kind::box:
                {
                    const Vec3 & h = sdf.half_extents;
                    const std::array<double, 3> face_area = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
                    const double total = face_area[0] + face_area[1] + face_area[2];
                    double pick = rng.uniform(base) * total;
                    int axis = 0;
                    while (axis < 2 && pick >= face_area[axis])
                    {
                        pick -= face_area[axis];
                        ++axis;
                    }
                    const double side = rng.uniform(base + 1) < 0.5 ? -1.0 : 1.0;
                    Vec3 local;
                    for (int a = 0; a < 3; ++a)
                    {
                        local[a] = (2.0 * rng.uniform(base + 2 + a) - 1.0) * h[a];
                    }
                    local[axis] = side * h[axis];
                    normal = Vec3::Zero();
                    normal[axis] = side;
                    point  = sdf.center + local;
                    break;
                }
                default:
                    break;
            }
            out.positions.row(i) = point.transpose();
            out.normals.row(i)   = normal.transpose();
        }
        return out;
    }

    MeshSdf::MeshSdf(TriangleMesh mesh) : mesh_(std::move(mesh))
    {
        const TopologyReport topo = analyze_topology(mesh_);
        if (!topo.closed_manifold())
        {
            throw Error(ErrorCode::open_surface, "signed distance needs a closed 2-manifold mesh (" + std::to_string(topo.boundary_edges) + " boundary edges, " +
                                                     std::to_string(topo.nonmanifold_edges) + " non-manifold edges)");
        }
        nearest_ = TriangleIndex(mesh_);

        static const std::array<Vec3, 3> kDirections = {
            Vec3(1.0, 2.718281828e-5, 3.141592654e-5),
            Vec3(1.414213562e-5, 1.0, 1.732050808e-5),
            Vec3(2.236067977e-5, 1.618033989e-5, 1.0),
        };
        for (int axis = 0; axis < 3; ++axis)
        {
            RayBuckets & r = rays_[axis];
            r.axis         = axis;
            r.direction    = kDirections[axis].normalized();
            Vec3 lo        = Vec3::Constant(std::numeric_limits<double>::infinity());
            Vec3 hi        = -lo;
            for (Index v = 0; v < mesh_.num_vertices(); ++v)
            {
                const Vec3 q = project(mesh_.vertex(v), axis);
                lo = lo.cwiseMin(q);
                hi = hi.cwiseMax(q);
            }
            r.grid = BucketGrid(lo, hi, std::max<Index>(1, mesh_.num_triangles()));
            std::vector<std::vector<Index>> lists(static_cast<std::size_t>(r.grid.cell_count()));
            for (Index f = 0; f < mesh_.num_triangles(); ++f)
            {
                Vec3 tlo = Vec3::Constant(std::numeric_limits<double>::infinity());
                Vec3 thi = -tlo;
                for (int c = 0; c < 3; ++c)
                {
                    const Vec3 q = project(mesh_.vertex(mesh_.triangles(f, c)), axis);
                    tlo = tlo.cwiseMin(q);
                    thi = thi.cwiseMax(q);
                }
                const auto c0 = r.grid.cell_of(tlo);
                const auto c1 = r.grid.cell_of(thi);
                for (Index j = c0[1]; j <= c1[1]; ++j)
                    for (Index i = c0[0]; i <= c1[0]; ++i)
                        lists[r.grid.flat({i, j, 0})].push_back(f);
            }
            r.start.assign(lists.size() + 1, 0);
            for (std::size_t c = 0; c < lists.size(); ++c)
            {
                r.start[c + 1] = r.start[c] + Index(lists[c].size());
                r.items.insert(r.items.end(), lists[c].begin(), lists[c].end());
            }
        }
    }

    int MeshSdf::parity(const RayBuckets & rays, const Vec3 & p) const
    {
        const int axis = rays.axis;
        // Farthest the ray can travel while still inside the mesh slab.
        double slab_hi = -std::numeric_limits<double>::infinity();
        for (Index v = 0; v < mesh_.num_vertices(); ++v)
        {
            slab_hi = std::max(slab_hi, mesh_.positions(v, axis));
        }
        const double travel = (slab_hi - p[axis]) / rays.direction[axis];
        if (travel < 0.0)
        {
            return 0;
        }
        const Vec3 a = project(p, axis);
        const Vec3 b = project(p + travel * rays.direction, axis);
        const auto c0 = rays.grid.cell_of(a.cwiseMin(b));
        const auto c1 = rays.grid.cell_of(a.cwiseMax(b));
        std::vector<Index> candidates;
        for (Index j = c0[1]; j <= c1[1]; ++j)
        {
            for (Index i = c0[0]; i <= c1[0]; ++i)
            {
                const Index f = rays.grid.flat({i, j, 0});
                candidates.insert(candidates.end(), rays.items.begin() + rays.start[f], rays.items.begin() + rays.start[f + 1]);
            }
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
        int hits = 0;
        for (Index f : candidates)
        {
            hits += ray_hits_triangle(p, rays.direction, mesh_.vertex(mesh_.triangles(f, 0)), mesh_.vertex(mesh_.triangles(f, 1)), mesh_.vertex(mesh_.triangles(f, 2))) ? 1 : 0;
        }
        return hits & 1;
    }

    bool MeshSdf::inside(const Vec3 & p) const
    {
        int votes = 0;
        for (const auto & r : rays_)
        {
            votes += parity(r, p);
        }
        return votes >= 2;
    }

    double MeshSdf::unsigned_distance(const Vec3 & p) const
    {
        return std::sqrt(nearest_.nearest(p).squared_distance);
    }

    MeshSdf::Query MeshSdf::query(const Vec3 & p) const
    {
        const auto hit = nearest_.nearest(p);
        Query q;
        q.face    = hit.face;
        q.closest = hit.point;
        q.weights = hit.weights;
        q.sign    = inside(p) ? -1.0 : 1.0;
        q.value   = q.sign * std::sqrt(hit.squared_distance);
        return q;
    }

    double mesh_sdf(const TriangleMesh & mesh, const Vec3 & p)
    {
        return MeshSdf(mesh)(p);
    }

    ScalarPatch sdf_patch(const MeshSdf & sdf, const Vec3 & center, int n, double extent)
    {
        if (n < 2)
        {
            throw Error(ErrorCode::invalid_argument, "patch lattice needs n >= 2");
        }
        require_positive(extent, "patch extent");
        ScalarPatch patch;
        patch.n       = n;
        patch.origin  = center - Vec3::Constant(extent);
        patch.spacing = 2.0 * extent / double(n - 1);
        const Index count = Index(n) * n * n;
        patch.values.resize(count);
        parallel_for(count, [&](Index begin, Index end) {
            for (Index i = begin; i < end; ++i)
            {
                patch.values[i] = sdf(patch.point(i));
            }
        }, 64);
        return patch;
    }

    ScalarPatch sdf_patch(const TriangleMesh & mesh, const Vec3 & center, int n, double extent)
    {
        return sdf_patch(MeshSdf(mesh), center, n, extent);
    }

    MatX3 sdf_patch_vjp(const MeshSdf & sdf, const ScalarPatch & patch, const VecX & d_values)
    {
        const Index count = Index(patch.n) * patch.n * patch.n;
        if (d_values.size() != count || patch.values.size() != count)
        {
            throw Error(ErrorCode::invalid_argument, "patch cotangent size mismatch");
        }
        const TriangleMesh & mesh = sdf.mesh();
        struct Part
        {
            Index face;
            Vec3 weights;
            Vec3 direction;  // d(value) / d(translation of the closest point)
        };
        std::vector<Part> parts(static_cast<std::size_t>(count));
        parallel_for(count, [&](Index begin, Index end) {
            for (Index i = begin; i < end; ++i)
            {
                const Vec3 p = patch.point(i);
                const auto q = sdf.query(p);
                const Vec3 offset = p - q.closest;
                const double d    = offset.norm();
                Vec3 dir;
                if (d > 1e-12)
                {
                    dir = q.sign * offset / d;
                }
                else
                {
                    dir = face_area_vector(mesh, q.face).normalized();
                }
                parts[i] = {q.face, q.weights, -dir};
            }
        }, 64);

        MatX3 grad = MatX3::Zero(mesh.num_vertices(), 3);
        for (Index i = 0; i < count; ++i)
        {
            const Part & part = parts[i];
            for (int c = 0; c < 3; ++c)
            {
                grad.row(mesh.triangles(part.face, c)) += (d_values[i] * part.weights[c] * part.direction).transpose();
            }
        }
        return grad;
    }

    VecX angle_deficits(const TriangleMesh & mesh)
    {
        VecX deficit = VecX::Constant(mesh.num_vertices(), 2.0 * std::numbers::pi);
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            for (int c = 0; c < 3; ++c)
            {
                const Index v = mesh.triangles(f, c);
                const Vec3 a  = mesh.vertex(mesh.triangles(f, (c + 1) % 3)) - mesh.vertex(v);
                const Vec3 b  = mesh.vertex(mesh.triangles(f, (c + 2) % 3)) - mesh.vertex(v);
                deficit[v] -= std::atan2(a.cross(b).norm(), a.dot(b));
            }
        }
        return deficit;
    }

    std::vector<VertexId> high_curvature_vertices(const TriangleMesh & mesh, int k, std::uint64_t seed)
    {
        if (k < 1)
        {
            throw Error(ErrorCode::invalid_argument, "need k >= 1");
        }
        if (mesh.num_vertices() == 0)
        {
            throw Error(ErrorCode::empty_surface, "mesh has no vertices");
        }
        const VecX deficit = angle_deficits(mesh);
        std::vector<double> cdf(static_cast<std::size_t>(mesh.num_vertices()));
        double running = 0.0;
        for (Index v = 0; v < mesh.num_vertices(); ++v)
        {
            const double w = std::abs(deficit[v]);
            running += w > 1e-9 ? w : 0.0;
            cdf[v] = running;
        }
        const CounterRng rng(seed, 0xc0);
        std::vector<VertexId> out;
        out.reserve(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i)
        {
            const double u = rng.uniform(std::uint64_t(i));
            if (running <= 0.0)
            {
                // Developable mesh: nothing stands out, draw uniformly.
                out.emplace_back(std::min<Index>(mesh.num_vertices() - 1, Index(u * mesh.num_vertices())));
                continue;
            }
            const auto it = std::upper_bound(cdf.begin(), cdf.end(), u * running);
            out.emplace_back(std::min<Index>(Index(it - cdf.begin()), mesh.num_vertices() - 1));
        }
        return out;
    }
}
