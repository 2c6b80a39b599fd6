#include "tetfit/losses.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

#include "tetfit/parallel.hpp"
#include "tetfit/random.hpp"

namespace tetfit
{
    namespace
    {
        Vec3 corner(const TriangleMesh & mesh, Index f, int c)
        {
            return mesh.vertex(mesh.triangles(f, c));
        }

        void fill_from_provenance(const TriangleMesh & mesh, PointSample & s)
        {
            const Index n = Index(s.faces.size());
            s.positions.resize(n, 3);
            s.normals.resize(n, 3);
            parallel_for(n, [&](Index begin, Index end) {
                for (Index i = begin; i < end; ++i)
                {
                    const Index f = s.faces[i];
                    const Vec3 w  = s.barycentrics.row(i).transpose();
                    s.positions.row(i) = (w[0] * corner(mesh, f, 0) + w[1] * corner(mesh, f, 1) + w[2] * corner(mesh, f, 2)).transpose();
                    const Vec3 area = face_area_vector(mesh, f);
                    const double len = area.norm();
                    s.normals.row(i) = (len > 0.0 ? Vec3(area / len) : Vec3::Zero()).transpose();
                }
            });
        }

        double nearest_term(double squared, ChamferOrder order)
        {
            return order == ChamferOrder::l2 ? squared : std::sqrt(squared);
        }

        // Gradient of the per-pair term w.r.t. the query point.
        Eigen::RowVector3d nearest_grad(const Eigen::RowVector3d & diff, double squared, ChamferOrder order)
        {
            if (order == ChamferOrder::l2)
            {
                return 2.0 * diff;
            }
            const double d = std::sqrt(squared);
            return d > 0.0 ? Eigen::RowVector3d(diff / d) : Eigen::RowVector3d::Zero();
        }
    }

    PointSample sample_surface(const TriangleMesh & mesh, Index n, std::uint64_t seed)
    {
        if (n < 1)
        {
            throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
        }
        if (mesh.num_triangles() == 0)
        {
            throw Error(ErrorCode::empty_surface, "cannot sample an empty mesh");
        }
        std::vector<double> cdf(static_cast<std::size_t>(mesh.num_triangles()));
        double total = 0.0;
        for (Index f = 0; f < mesh.num_triangles(); ++f)
        {
            total += triangle_area(mesh, f);
            cdf[f] = total;
        }
        if (!(total > 0.0))
        {
            throw Error(ErrorCode::empty_surface, "mesh has zero surface area");
        }

        const CounterRng rng(seed, 0x5ab1e);
        PointSample s;
        s.faces.resize(static_cast<std::size_t>(n));
        s.barycentrics.resize(n, 3);
        for (Index i = 0; i < n; ++i)
        {
            const std::uint64_t base = std::uint64_t(i) * 3;
            const double pick        = rng.uniform(base) * total;
            Index f = Index(std::upper_bound(cdf.begin(), cdf.end(), pick) - cdf.begin());
            f       = std::min(f, mesh.num_triangles() - 1);
            // Never land on a zero-area face sitting at a cdf plateau.
            while (f > 0 && cdf[f] == cdf[f - 1])
            {
                --f;
            }
            const double r1 = std::sqrt(rng.uniform(base + 1));
            const double r2 = rng.uniform(base + 2);
            s.faces[i]      = f;
            s.barycentrics.row(i) << 1.0 - r1, r1 * (1.0 - r2), r1 * r2;
        }
        fill_from_provenance(mesh, s);
        return s;
    }

    PointSample resample(const TriangleMesh & mesh, const PointSample & provenance)
    {
        if (!provenance.has_provenance() || provenance.barycentrics.rows() != provenance.size())
        {
            throw Error(ErrorCode::invalid_argument, "sample carries no provenance");
        }
        for (Index f : provenance.faces)
        {
            if (f < 0 || f >= mesh.num_triangles())
            {
                throw Error(ErrorCode::invalid_argument, "sample provenance does not match the mesh");
            }
        }
        PointSample s;
        s.faces        = provenance.faces;
        s.barycentrics = provenance.barycentrics;
        fill_from_provenance(mesh, s);
        return s;
    }

    std::array<Vec3, 3> unit_normal_vjp(const Vec3 & a, const Vec3 & b, const Vec3 & c, const Vec3 & g)
    {
        const Vec3 e1 = b - a, e2 = c - a;
        const Vec3 area = e1.cross(e2);
        const double len = area.norm();
        if (!(len > 0.0))
        {
            return {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
        }
        const Vec3 n = area / len;
        const Vec3 g_area = (g - n * n.dot(g)) / len;
        const Vec3 g_b = e2.cross(g_area);
        const Vec3 g_c = g_area.cross(e1);
        return {-g_b - g_c, g_b, g_c};
    }

    MatX3 sample_surface_vjp(const TriangleMesh & mesh, const PointSample & sample, const MatX3 & d_positions, const MatX3 & d_normals)
    {
        if (!sample.has_provenance() || d_positions.rows() != sample.size())
        {
            throw Error(ErrorCode::invalid_argument, "sample cotangent does not match the sample");
        }
        const bool use_normals = d_normals.rows() > 0;
        if (use_normals && d_normals.rows() != sample.size())
        {
            throw Error(ErrorCode::invalid_argument, "normal cotangent does not match the sample");
        }
        MatX3 grad = MatX3::Zero(mesh.num_vertices(), 3);
        MatX3 face_normal_grad;
        if (use_normals)
        {
            face_normal_grad = MatX3::Zero(mesh.num_triangles(), 3);
        }
        for (Index i = 0; i < sample.size(); ++i)
        {
            const Index f = sample.faces[i];
            for (int c = 0; c < 3; ++c)
            {
                grad.row(mesh.triangles(f, c)) += sample.barycentrics(i, c) * d_positions.row(i);
            }
            if (use_normals)
            {
                face_normal_grad.row(f) += d_normals.row(i);
            }
        }
        if (use_normals)
        {
            for (Index f = 0; f < mesh.num_triangles(); ++f)
            {
                if (face_normal_grad.row(f).isZero())
                {
                    continue;
                }
                const auto g = unit_normal_vjp(corner(mesh, f, 0), corner(mesh, f, 1), corner(mesh, f, 2), face_normal_grad.row(f).transpose());
                for (int c = 0; c < 3; ++c)
                {
                    grad.row(mesh.triangles(f, c)) += g[c].transpose();
                }
            }
        }
        return grad;
    }

    ChamferResult chamfer(const MatX3 & p, const PointIndex & q_index, ChamferOrder order)
    {
        const MatX3 & q = q_index.points();
        if (p.rows() == 0 || q.rows() == 0)
        {
            throw Error(ErrorCode::invalid_argument, "chamfer needs two non-empty point sets");
        }
        const PointIndex p_index(p);
        const auto fwd = q_index.nearest_all(p);
        const auto bwd = p_index.nearest_all(q);

        ChamferResult r;
        r.d_p = MatX3::Zero(p.rows(), 3);
        r.d_q = MatX3::Zero(q.rows(), 3);
        r.p_to_q.resize(fwd.size());
        r.q_to_p.resize(bwd.size());
        const double wp = 1.0 / double(p.rows());
        const double wq = 1.0 / double(q.rows());
        for (Index i = 0; i < p.rows(); ++i)
        {
            const Index j = fwd[i].index;
            r.p_to_q[i]   = j;
            r.forward += nearest_term(fwd[i].squared_distance, order);
            const Eigen::RowVector3d g = wp * nearest_grad(p.row(i) - q.row(j), fwd[i].squared_distance, order);
            r.d_p.row(i) += g;
            r.d_q.row(j) -= g;
        }
        for (Index j = 0; j < q.rows(); ++j)
        {
            const Index i = bwd[j].index;
            r.q_to_p[j]   = i;
            r.backward += nearest_term(bwd[j].squared_distance, order);
            const Eigen::RowVector3d g = wq * nearest_grad(q.row(j) - p.row(i), bwd[j].squared_distance, order);
            r.d_q.row(j) += g;
            r.d_p.row(i) -= g;
        }
        r.forward *= wp;
        r.backward *= wq;
        r.value = r.forward + r.backward;
        return r;
    }

    ChamferResult chamfer(const MatX3 & p, const MatX3 & q, ChamferOrder order)
    {
        return chamfer(p, PointIndex(q), order);
    }

    ChamferResult chamfer(const PointSample & p, const PointSample & q, ChamferOrder order)
    {
        return chamfer(p.positions, q.positions, order);
    }

    NormalConsistency normal_consistency(const MatX3 & p_normals, const MatX3 & q_normals, const std::vector<Index> & p_to_q)
    {
        if (Index(p_to_q.size()) != p_normals.rows() || p_normals.rows() == 0)
        {
            throw Error(ErrorCode::invalid_argument, "normal consistency needs one correspondence per point");
        }
        NormalConsistency r;
        r.d_normals = MatX3::Zero(p_normals.rows(), 3);
        const double w = 1.0 / double(p_normals.rows());
        for (Index i = 0; i < p_normals.rows(); ++i)
        {
            const Index j = p_to_q[i];
            if (j < 0 || j >= q_normals.rows())
            {
                throw Error(ErrorCode::invalid_argument, "correspondence index out of range");
            }
            const double dot = p_normals.row(i).dot(q_normals.row(j));
            r.value += 1.0 - std::abs(dot);
            r.d_normals.row(i) = -w * (dot >= 0.0 ? 1.0 : -1.0) * q_normals.row(j);
        }
        r.value *= w;
        return r;
    }

    NormalConsistency normal_consistency(const PointSample & p, const PointSample & q)
    {
        if (!p.has_normals() || !q.has_normals())
        {
            throw Error(ErrorCode::invalid_argument, "normal consistency needs normals on both samples");
        }
        const auto hits = PointIndex(q.positions).nearest_all(p.positions);
        std::vector<Index> corr(hits.size());
        for (std::size_t i = 0; i < hits.size(); ++i)
        {
            corr[i] = hits[i].index;
        }
        return normal_consistency(p.normals, q.normals, corr);
    }

    SdfRegularization sdf_regularization(const TetGrid & grid, const SdfQuery & target)
    {
        const Index n = grid.num_vertices();
        VecX values(n);
        MatX3 grads(n, 3);
        parallel_for(n, [&](Index begin, Index end) {
            for (Index v = begin; v < end; ++v)
            {
                Vec3 g = Vec3::Zero();
                values[v] = target(grid.position(v), &g);
                grads.row(v) = g.transpose();
            }
        }, 256);
        SdfRegularization r = sdf_regularization(grid, values);
        for (Index v = 0; v < n; ++v)
        {
            r.d_positions.row(v) = -r.d_sdf[v] * grads.row(v);
        }
        return r;
    }

    SdfRegularization sdf_regularization(const TetGrid & grid, const VecX & target_values)
    {
        const Index n = grid.num_vertices();
        if (target_values.size() != n || n == 0)
        {
            throw Error(ErrorCode::invalid_argument, "target SDF needs one value per grid vertex");
        }
        SdfRegularization r;
        const VecX diff = grid.sdf - target_values;
        double sum = 0.0;
        for (Index v = 0; v < n; ++v)
        {
            sum += diff[v] * diff[v];
        }
        r.value       = sum / double(n);
        r.d_sdf       = (2.0 / double(n)) * diff;
        r.d_positions = MatX3::Zero(n, 3);
        return r;
    }

    DeformationRegularization deformation_regularization(const MatX3 & deformations)
    {
        DeformationRegularization r;
        const Index n = deformations.rows();
        r.d_deformations = MatX3::Zero(n, 3);
        if (n == 0)
        {
            return r;
        }
        const double w = 1.0 / double(n);
        for (Index v = 0; v < n; ++v)
        {
            const double smooth = std::sqrt(deformations.row(v).squaredNorm() + kDeformationEps * kDeformationEps);
            r.value += smooth - kDeformationEps;
            r.d_deformations.row(v) = (w / smooth) * deformations.row(v);
        }
        r.value *= w;
        return r;
    }

    DeformationRegularization deformation_regularization(const TetGrid & grid)
    {
        return deformation_regularization(grid.deformations);
    }

    LsganTerms lsgan_terms(double d_real, double d_fake)
    {
        if (!std::isfinite(d_real) || !std::isfinite(d_fake))
        {
            throw Error(ErrorCode::invalid_argument, "discriminator scores must be finite");
        }
        LsganTerms t;
        t.discriminator = 0.5 * ((d_real - 1.0) * (d_real - 1.0) + d_fake * d_fake);
        t.generator     = 0.5 * (d_fake - 1.0) * (d_fake - 1.0);
        return t;
    }

    void LossWeights::validate() const
    {
        for (double w : {cd, normal, gan, sdf, deform})
        {
            if (!(w >= 0.0) || !std::isfinite(w))
            {
                throw Error(ErrorCode::invalid_argument, "loss weights must be finite and non-negative");
            }
        }
    }

    LossReport total_loss(const LossTerms & terms, const LossWeights & weights)
    {
        weights.validate();
        LossReport r;
        r.terms   = terms;
        r.weights = weights;
        r.total   = weights.cd * terms.cd + weights.normal * terms.normal + weights.gan * terms.gan + weights.sdf * terms.sdf + weights.deform * terms.deform;
        return r;
    }
}
