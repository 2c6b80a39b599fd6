#pragma once

#include <algorithm>
#include <array>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mesh.hpp"
#include "types.hpp"

namespace tetfit
{
    template <typename Scalar>
    struct ClosestPoint
    {
        Vector3<Scalar> point;
        Vector3<Scalar> weights;  // barycentric weights of `point` w.r.t. (a, b, c)
    };

    /// Closest point on triangle (a, b, c) to p, by Voronoi-region case analysis.
    template <typename Scalar>
    ClosestPoint<Scalar> closest_point_on_triangle(const Vector3<Scalar> & p, const Vector3<Scalar> & a, const Vector3<Scalar> & b, const Vector3<Scalar> & c)
    {
        using V = Vector3<Scalar>;
        const V ab = b - a, ac = c - a, ap = p - a;
        const Scalar d1 = ab.dot(ap), d2 = ac.dot(ap);
        if (d1 <= 0 && d2 <= 0)
            return {a, V(1, 0, 0)};
        const V bp = p - b;
        const Scalar d3 = ab.dot(bp), d4 = ac.dot(bp);
        if (d3 >= 0 && d4 <= d3)
            return {b, V(0, 1, 0)};
        const Scalar vc = d1 * d4 - d3 * d2;
        if (vc <= 0 && d1 >= 0 && d3 <= 0)
        {
            const Scalar v = d1 / (d1 - d3);
            return {a + v * ab, V(1 - v, v, 0)};
        }
        const V cp = p - c;
        const Scalar d5 = ab.dot(cp), d6 = ac.dot(cp);
        if (d6 >= 0 && d5 <= d6)
            return {c, V(0, 0, 1)};
        const Scalar vb = d5 * d2 - d1 * d6;
        if (vb <= 0 && d2 >= 0 && d6 <= 0)
        {
            const Scalar w = d2 / (d2 - d6);
            return {a + w * ac, V(1 - w, 0, w)};
        }
        const Scalar va = d3 * d6 - d5 * d4;
        if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
        {
            const Scalar w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            return {b + w * (c - b), V(0, 1 - w, w)};
        }
        if (!(va + vb + vc > 0))
        {
            // Degenerate (collinear) triangle: best of the three edges.
            auto on_segment = [&](const V & x, const V & y) {
                const V xy = y - x;
                const Scalar len2 = xy.squaredNorm();
                const Scalar t = len2 > 0 ? std::clamp<Scalar>((p - x).dot(xy) / len2, 0, 1) : Scalar(0);
                return std::pair<V, Scalar> {x + t * xy, t};
            };
            const auto [pab, tab] = on_segment(a, b);
            const auto [pbc, tbc] = on_segment(b, c);
            const auto [pca, tca] = on_segment(c, a);
            const Scalar dab = (p - pab).squaredNorm(), dbc = (p - pbc).squaredNorm(), dca = (p - pca).squaredNorm();
            if (dab <= dbc && dab <= dca)
                return {pab, V(1 - tab, tab, 0)};
            if (dbc <= dca)
                return {pbc, V(0, 1 - tbc, tbc)};
            return {pca, V(tca, 0, 1 - tca)};
        }
        const Scalar denom = Scalar(1) / (va + vb + vc);
        const Scalar v = vb * denom, w = vc * denom;
        return {a + ab * v + ac * w, V(1 - v - w, v, w)};
    }

    /// Uniform bucket grid over an axis-aligned box; shared by the point and
    /// triangle indices.
    class BucketGrid
    {
    public:
        BucketGrid() = default;
        BucketGrid(const Vec3 & lo, const Vec3 & hi, Index target_cells);

        std::array<Index, 3> cell_of(const Vec3 & p) const;  // clamped into the grid
        Index flat(const std::array<Index, 3> & c) const { return c[0] + dims_[0] * (c[1] + dims_[1] * c[2]); }
        const std::array<Index, 3> & dims() const { return dims_; }
        Index cell_count() const { return dims_[0] * dims_[1] * dims_[2]; }
        const Vec3 & cell_size() const { return cell_; }
        const Vec3 & lo() const { return lo_; }
        const Vec3 & hi() const { return hi_; }
        Vec3 cell_lo(const std::array<Index, 3> & c) const;
        Vec3 cell_hi(const std::array<Index, 3> & c) const;

    private:
        Vec3 lo_ = Vec3::Zero(), hi_ = Vec3::Zero(), cell_ = Vec3::Ones();
        std::array<Index, 3> dims_ = {1, 1, 1};
    };

    /// Exact nearest-neighbour queries on a fixed point set. Ties go to the
    /// lowest index, so results equal a brute-force scan.
    class PointIndex
    {
    public:
        static constexpr Index kBruteForceLimit = 4096;

        PointIndex() = default;
        explicit PointIndex(MatX3 points);

        struct Hit
        {
            Index index = -1;
            double squared_distance = 0.0;
        };

        Hit nearest(const Vec3 & q) const;
        std::vector<Hit> nearest_all(const MatX3 & queries) const;

        // k nearest, closest first
        std::vector<Index> k_nearest(const Vec3 & q, Index k) const;

        const MatX3 & points() const { return points_; }
        Index size() const { return points_.rows(); }

    private:
        MatX3 points_;
        bool bucketed_ = false;
        BucketGrid grid_;
        std::vector<Index> cell_start_;
        std::vector<Index> cell_items_;
    };

    /// Closest-triangle queries on a fixed mesh.
    class TriangleIndex
    {
    public:
        TriangleIndex() = default;
        explicit TriangleIndex(const TriangleMesh & mesh);

        struct Hit
        {
            Index face = -1;
            Vec3 point = Vec3::Zero();
            Vec3 weights = Vec3::Zero();
            double squared_distance = 0.0;
        };

        Hit nearest(const Vec3 & q) const;

    private:
        MatX3 a_, b_, c_;
        BucketGrid grid_;
        std::vector<Index> cell_start_;
        std::vector<Index> cell_items_;
    };

    /// Distance from every vertex of `a` to the surface of `b`, maximum and mean.
    struct SurfaceDeviation
    {
        double max  = 0.0;
        double mean = 0.0;
    };
    SurfaceDeviation vertex_to_surface_deviation(const TriangleMesh & a, const TriangleMesh & b);
}
