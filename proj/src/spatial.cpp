#include "tetfit/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "tetfit/parallel.hpp"

namespace tetfit
{
    namespace
    {
        constexpr double kInf = std::numeric_limits<double>::infinity();

        double box_squared_distance(const Vec3 & q, const Vec3 & lo, const Vec3 & hi)
        {
            const Vec3 d = (lo - q).cwiseMax(q - hi).cwiseMax(0.0);
            return d.squaredNorm();
        }

        // Calls visit(cell) for every cell at Chebyshev distance exactly r from c.
        template <typename Visit>
        void for_ring(const BucketGrid & grid, const std::array<Index, 3> & c, Index r, Visit && visit)
        {
            const auto & dims = grid.dims();
            for (Index k = std::max<Index>(0, c[2] - r); k <= std::min(dims[2] - 1, c[2] + r); ++k)
            {
                for (Index j = std::max<Index>(0, c[1] - r); j <= std::min(dims[1] - 1, c[1] + r); ++j)
                {
                    const bool inner = std::abs(k - c[2]) < r && std::abs(j - c[1]) < r;
                    if (inner)
                    {
                        // Only the two x-extremes of this row lie on the ring.
                        for (Index i : {c[0] - r, c[0] + r})
                        {
                            if (i >= 0 && i < dims[0])
                            {
                                visit(std::array<Index, 3> {i, j, k});
                            }
                        }
                        continue;
                    }
                    for (Index i = std::max<Index>(0, c[0] - r); i <= std::min(dims[0] - 1, c[0] + r); ++i)
                    {
                        visit(std::array<Index, 3> {i, j, k});
                    }
                }
            }
        }

        // Squared lower bound on the distance from q to any cell outside ring r
        // around c = cell_of(q). q's projection onto the bounds lies in c, so the
        // gap to the bounds and the gap inside them add in quadrature. Axes that
        // cannot reach ring r + 1 are skipped.
        double beyond_ring_squared(const BucketGrid & grid, const std::array<Index, 3> & c, Index r, double outside2)
        {
            double gap = kInf;
            for (int k = 0; k < 3; ++k)
            {
                if (c[k] - r - 1 >= 0 || c[k] + r + 1 < grid.dims()[k])
                {
                    gap = std::min(gap, double(r) * grid.cell_size()[k]);
                }
            }
            return gap == kInf ? kInf : outside2 + gap * gap;
        }

        template <typename Fill>
        void build_buckets(Index cells, Index items, Fill && fill, std::vector<Index> & start, std::vector<Index> & out)
        {
            std::vector<std::vector<Index>> lists(static_cast<std::size_t>(cells));
            for (Index i = 0; i < items; ++i)
            {
                fill(i, lists);
            }
            start.assign(static_cast<std::size_t>(cells + 1), 0);
            for (Index c = 0; c < cells; ++c)
            {
                start[c + 1] = start[c] + Index(lists[c].size());
            }
            out.clear();
            out.reserve(static_cast<std::size_t>(start.back()));
            for (const auto & l : lists)
            {
                out.insert(out.end(), l.begin(), l.end());
            }
        }
    }

    BucketGrid::BucketGrid(const Vec3 & lo, const Vec3 & hi, Index target_cells)
        : lo_(lo), hi_(hi)
    {
        Vec3 extent = (hi - lo).cwiseMax(0.0);
        const double largest = std::max(extent.maxCoeff(), 1e-12);
        extent = extent.cwiseMax(1e-3 * largest);
        hi_ = lo_ + extent;
        const double side = std::cbrt(extent.prod() / double(std::max<Index>(1, target_cells)));
        for (int a = 0; a < 3; ++a)
        {
            dims_[a] = std::clamp<Index>(Index(std::lround(extent[a] / side)), 1, 256);
            cell_[a] = extent[a] / double(dims_[a]);
        }
    }

    std::array<Index, 3> BucketGrid::cell_of(const Vec3 & p) const
    {
        std::array<Index, 3> c {};
        for (int a = 0; a < 3; ++a)
        {
            const double t = std::floor((p[a] - lo_[a]) / cell_[a]);
            c[a] = std::isfinite(t) ? std::clamp<Index>(Index(std::clamp(t, -1.0, 1e9)), 0, dims_[a] - 1) : 0;
        }
        return c;
    }

    Vec3 BucketGrid::cell_lo(const std::array<Index, 3> & c) const
    {
        return lo_ + Vec3(double(c[0]), double(c[1]), double(c[2])).cwiseProduct(cell_);
    }

    Vec3 BucketGrid::cell_hi(const std::array<Index, 3> & c) const
    {
        return lo_ + Vec3(double(c[0] + 1), double(c[1] + 1), double(c[2] + 1)).cwiseProduct(cell_);
    }

    PointIndex::PointIndex(MatX3 points) : points_(std::move(points))
    {
        bucketed_ = points_.rows() > kBruteForceLimit;
        if (!bucketed_)
        {
            return;
        }
        const Vec3 lo = points_.colwise().minCoeff().transpose();
        const Vec3 hi = points_.colwise().maxCoeff().transpose();
        grid_ = BucketGrid(lo, hi, std::max<Index>(1, points_.rows() / 2));
        build_buckets(
            grid_.cell_count(), points_.rows(),
            [&](Index i, std::vector<std::vector<Index>> & lists) { lists[grid_.flat(grid_.cell_of(points_.row(i).transpose()))].push_back(i); },
            cell_start_, cell_items_);
    }

    PointIndex::Hit PointIndex::nearest(const Vec3 & q) const
    {
        Hit best {-1, kInf};
        auto consider = [&](Index i) {
            const double d2 = (points_.row(i).transpose() - q).squaredNorm();
            if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index))
            {
                best = {i, d2};
            }
        };
        if (!bucketed_)
        {
            for (Index i = 0; i < points_.rows(); ++i)
            {
                consider(i);
            }
            return best;
        }

        const auto c = grid_.cell_of(q);
        const double outside2 = box_squared_distance(q, grid_.lo(), grid_.hi());
        const Index max_ring = std::max({grid_.dims()[0], grid_.dims()[1], grid_.dims()[2]});
        for (Index r = 0; r <= max_ring; ++r)
        {
            for_ring(grid_, c, r, [&](const std::array<Index, 3> & cell) {
                if (box_squared_distance(q, grid_.cell_lo(cell), grid_.cell_hi(cell)) > best.squared_distance)
                {
                    return;
                }
                const Index f = grid_.flat(cell);
                for (Index s = cell_start_[f]; s < cell_start_[f + 1]; ++s)
                {
                    consider(cell_items_[s]);
                }
            });
            if (beyond_ring_squared(grid_, c, r, outside2) > best.squared_distance)
            {
                break;
            }
        }
        return best;
    }

    std::vector<PointIndex::Hit> PointIndex::nearest_all(const MatX3 & queries) const
    {
        std::vector<Hit> hits(static_cast<std::size_t>(queries.rows()));
        parallel_for(
            queries.rows(),
            [&](Index begin, Index end) {
                for (Index i = begin; i < end; ++i)
                {
                    hits[i] = nearest(queries.row(i).transpose());
                }
            },
            256);
        return hits;
    }

    std::vector<Index> PointIndex::k_nearest(const Vec3 & q, Index k) const
    {
        k = std::min(k, size());
        using Entry = std::pair<double, Index>;
        std::priority_queue<Entry> heap;  // worst on top
        auto consider = [&](Index i) {
            const Entry e {(points_.row(i).transpose() - q).squaredNorm(), i};
            if (Index(heap.size()) < k)
            {
                heap.push(e);
            }
            else if (e < heap.top())
            {
                heap.pop();
                heap.push(e);
            }
        };
        auto worst = [&]() { return Index(heap.size()) < k ? kInf : heap.top().first; };

        if (!bucketed_)
        {
            for (Index i = 0; i < points_.rows(); ++i)
            {
                consider(i);
            }
        }
        else
        {
            const auto c = grid_.cell_of(q);
            const double outside2 = box_squared_distance(q, grid_.lo(), grid_.hi());
            const Index max_ring = std::max({grid_.dims()[0], grid_.dims()[1], grid_.dims()[2]});
            for (Index r = 0; r <= max_ring; ++r)
            {
                for_ring(grid_, c, r, [&](const std::array<Index, 3> & cell) {
                    if (box_squared_distance(q, grid_.cell_lo(cell), grid_.cell_hi(cell)) > worst())
                    {
                        return;
                    }
                    const Index f = grid_.flat(cell);
                    for (Index s = cell_start_[f]; s < cell_start_[f + 1]; ++s)
                    {
                        consider(cell_items_[s]);
                    }
                });
                if (beyond_ring_squared(grid_, c, r, outside2) > worst())
                {
                    break;
                }
            }
        }
        std::vector<Index> out(heap.size());
        for (std::size_t i = out.size(); i-- > 0;)
        {
            out[i] = heap.top().second;
            heap.pop();
        }
        return out;
    }

    TriangleIndex::TriangleIndex(const TriangleMesh & mesh)
    {
        const Index f = mesh.num_triangles();
        a_.resize(f, 3);
        b_.resize(f, 3);
        c_.resize(f, 3);
        for (Index i = 0; i < f; ++i)
        {
            a_.row(i) = mesh.positions.row(mesh.triangles(i, 0));
            b_.row(i) = mesh.positions.row(mesh.triangles(i, 1));
            c_.row(i) = mesh.positions.row(mesh.triangles(i, 2));
        }
        if (f == 0)
        {
            return;
        }
        const Vec3 lo = a_.colwise().minCoeff().cwiseMin(b_.colwise().minCoeff()).cwiseMin(c_.colwise().minCoeff()).transpose();
        const Vec3 hi = a_.colwise().maxCoeff().cwiseMax(b_.colwise().maxCoeff()).cwiseMax(c_.colwise().maxCoeff()).transpose();
        grid_ = BucketGrid(lo, hi, std::max<Index>(1, f));
        build_buckets(
            grid_.cell_count(), f,
            [&](Index i, std::vector<std::vector<Index>> & lists) {
                const Vec3 tlo = a_.row(i).cwiseMin(b_.row(i)).cwiseMin(c_.row(i)).transpose();
                const Vec3 thi = a_.row(i).cwiseMax(b_.row(i)).cwiseMax(c_.row(i)).transpose();
                const auto c0 = grid_.cell_of(tlo);
                const auto c1 = grid_.cell_of(thi);
                for (Index k = c0[2]; k <= c1[2]; ++k)
                    for (Index j = c0[1]; j <= c1[1]; ++j)
                        for (Index ii = c0[0]; ii <= c1[0]; ++ii)
                            lists[grid_.flat({ii, j, k})].push_back(i);
            },
            cell_start_, cell_items_);
    }

    TriangleIndex::Hit TriangleIndex::nearest(const Vec3 & q) const
    {
        Hit best;
        best.squared_distance = kInf;
        if (a_.rows() == 0)
        {
            return best;
        }
        auto consider = [&](Index i) {
            const auto cp   = closest_point_on_triangle<double>(q, a_.row(i).transpose(), b_.row(i).transpose(), c_.row(i).transpose());
            const double d2 = (cp.point - q).squaredNorm();
            if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.face))
            {
                best = {i, cp.point, cp.weights, d2};
            }
        };
        const auto c = grid_.cell_of(q);
        const double outside2 = box_squared_distance(q, grid_.lo(), grid_.hi());
        const Index max_ring = std::max({grid_.dims()[0], grid_.dims()[1], grid_.dims()[2]});
        for (Index r = 0; r <= max_ring; ++r)
        {
            for_ring(grid_, c, r, [&](const std::array<Index, 3> & cell) {
                if (box_squared_distance(q, grid_.cell_lo(cell), grid_.cell_hi(cell)) > best.squared_distance)
                {
                    return;
                }
                const Index f = grid_.flat(cell);
                for (Index s = cell_start_[f]; s < cell_start_[f + 1]; ++s)
                {
                    consider(cell_items_[s]);
                }
            });
            if (beyond_ring_squared(grid_, c, r, outside2) > best.squared_distance)
            {
                break;
            }
        }
        return best;
    }

    SurfaceDeviation vertex_to_surface_deviation(const TriangleMesh & a, const TriangleMesh & b)
    {
        SurfaceDeviation out;
        if (a.num_vertices() == 0 || b.empty())
        {
            return out;
        }
        const TriangleIndex index(b);
        std::vector<double> d(static_cast<std::size_t>(a.num_vertices()));
        parallel_for(a.num_vertices(), [&](Index begin, Index end) {
            for (Index v = begin; v < end; ++v)
            {
                d[v] = std::sqrt(index.nearest(a.vertex(v)).squared_distance);
            }
        }, 256);
        for (double x : d)
        {
            out.max = std::max(out.max, x);
            out.mean += x;
        }
        out.mean /= double(d.size());
        return out;
    }
}
