#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mesh.hpp"
#include "point_sample.hpp"
#include "spatial.hpp"

namespace tetfit
{
    /// Closed-form signed distance fixtures. Primitives are exact distances;
    /// unions and intersections use min/max and are only bounds away from the
    /// surface.
    struct AnalyticSdf
    {
        enum class Kind
        {
            sphere,
            torus,  // ring in the xy-plane around `center`
            box,
            union_of,
            intersection_of,
        };

        Kind kind = Kind::sphere;
        Vec3 center = Vec3::Constant(0.5);
        double radius = 0.3;  // sphere radius, or torus minor (tube) radius
        double major  = 0.0;  // torus ring radius
        Vec3 half_extents = Vec3::Zero();
        std::shared_ptr<const AnalyticSdf> lhs, rhs;

        static AnalyticSdf sphere(const Vec3 & center, double radius);
        static AnalyticSdf torus(const Vec3 & center, double major, double minor);
        static AnalyticSdf box(const Vec3 & center, const Vec3 & half_extents);
        static AnalyticSdf unite(const AnalyticSdf & a, const AnalyticSdf & b);
        static AnalyticSdf intersect(const AnalyticSdf & a, const AnalyticSdf & b);

        bool is_primitive() const { return kind != Kind::union_of && kind != Kind::intersection_of; }
    };

    template <typename Scalar>
    Scalar eval_analytic(const AnalyticSdf & sdf, const Vector3<Scalar> & p)
    {
        using std::hypot;
        using std::max;
        using std::min;
        const Vector3<Scalar> q = p - sdf.center.template cast<Scalar>();
        switch (sdf.kind)
        {
            case AnalyticSdf::Kind::sphere:
                return q.norm() - Scalar(sdf.radius);
            case AnalyticSdf::Kind::torus:
            {
                const Scalar ring = hypot(q.x(), q.y()) - Scalar(sdf.major);
                return hypot(ring, q.z()) - Scalar(sdf.radius);
            }
            case AnalyticSdf::Kind::box:
            {
                const Vector3<Scalar> d = q.cwiseAbs() - sdf.half_extents.template cast<Scalar>();
                return d.cwiseMax(Scalar(0)).norm() + min(d.maxCoeff(), Scalar(0));
            }
            case AnalyticSdf::Kind::union_of:
                return min(eval_analytic(*sdf.lhs, p), eval_analytic(*sdf.rhs, p));
            case AnalyticSdf::Kind::intersection_of:
                return max(eval_analytic(*sdf.lhs, p), eval_analytic(*sdf.rhs, p));
        }
        return Scalar(0);
    }

    /// Parses `sphere:cx,cy,cz,r`, `torus:cx,cy,cz,R,r` or `box:cx,cy,cz,hx,hy,hz`;
    /// `a|b` is a union and `a&b` an intersection. Errors name the bad token.
    AnalyticSdf parse_shape(const std::string & text);
    std::string format_shape(const AnalyticSdf & sdf);

    /// Area-uniform samples of a primitive's surface with exact normals.
    PointSample sample_analytic_surface(const AnalyticSdf & sdf, Index n, std::uint64_t seed);

    /// Signed distance to a closed triangle mesh. Magnitude is the exact
    /// point-to-triangle-set distance; the sign is a majority vote of three
    /// jittered axis-aligned ray-parity tests.
    class MeshSdf
    {
    public:
        explicit MeshSdf(TriangleMesh mesh);

        struct Query
        {
            double value = 0.0;
            double sign  = 1.0;
            Index face   = -1;
            Vec3 closest = Vec3::Zero();
            Vec3 weights = Vec3::Zero();
        };

        Query query(const Vec3 & p) const;
        double operator()(const Vec3 & p) const { return query(p).value; }
        double unsigned_distance(const Vec3 & p) const;
        bool inside(const Vec3 & p) const;

        const TriangleMesh & mesh() const { return mesh_; }

    private:
        struct RayBuckets
        {
            int axis = 0;
            Vec3 direction;
            BucketGrid grid;  // z dimension collapsed to one cell
            std::vector<Index> start;
            std::vector<Index> items;
        };

        int parity(const RayBuckets & rays, const Vec3 & p) const;

        TriangleMesh mesh_;
        TriangleIndex nearest_;
        std::array<RayBuckets, 3> rays_;
    };

    double mesh_sdf(const TriangleMesh & mesh, const Vec3 & p);

    /// n^3 lattice of signed distances, x fastest.
    struct ScalarPatch
    {
        Vec3 origin = Vec3::Zero();
        double spacing = 0.0;
        int n = 0;
        VecX values;

        Vec3 point(int i, int j, int k) const { return origin + spacing * Vec3(double(i), double(j), double(k)); }
        Vec3 point(Index flat) const { return point(int(flat % n), int((flat / n) % n), int(flat / (Index(n) * n))); }
    };

    /// Samples the mesh SDF on an n^3 lattice spanning [center - extent, center + extent]^3.
    ScalarPatch sdf_patch(const MeshSdf & sdf, const Vec3 & center, int n, double extent);
    ScalarPatch sdf_patch(const TriangleMesh & mesh, const Vec3 & center, int n, double extent);

    /// Gradient of <d_values, patch values> w.r.t. the mesh vertex positions,
    /// holding each lattice point's closest triangle and sign fixed.
    MatX3 sdf_patch_vjp(const MeshSdf & sdf, const ScalarPatch & patch, const VecX & d_values);

    /// 2*pi minus the incident corner angles, per vertex.
    VecX angle_deficits(const TriangleMesh & mesh);

    /// k draws (with replacement) with probability proportional to |angle deficit|.
    std::vector<VertexId> high_curvature_vertices(const TriangleMesh & mesh, int k, std::uint64_t seed);
}
