#pragma once

#include <functional>
#include <vector>

#include "mesh.hpp"
#include "point_sample.hpp"
#include "spatial.hpp"
#include "tetgrid.hpp"

namespace tetfit
{
    /// Area-weighted surface samples with provenance. Zero-area triangles are
    /// never picked; normals follow the face winding.
    PointSample sample_surface(const TriangleMesh & mesh, Index n, std::uint64_t seed);

    /// Re-evaluates a sample's positions and normals on a mesh with the same
    /// triangle list (fixed provenance), e.g. after moving its vertices.
    PointSample resample(const TriangleMesh & mesh, const PointSample & provenance);

    /// Pulls cotangents on sample positions (and optionally normals) back to
    /// the mesh vertices. Pass an empty matrix to skip normals.
    MatX3 sample_surface_vjp(const TriangleMesh & mesh, const PointSample & sample, const MatX3 & d_positions, const MatX3 & d_normals);

    /// Gradient of <g, n> for the unit normal n of triangle (a, b, c), per corner.
    std::array<Vec3, 3> unit_normal_vjp(const Vec3 & a, const Vec3 & b, const Vec3 & c, const Vec3 & g);

    enum class ChamferOrder
    {
        l1,  // mean Euclidean nearest distance
        l2,  // mean squared nearest distance
    };

    /// Symmetric chamfer: mean over P of the nearest distance into Q plus the
    /// mean over Q of the nearest distance into P. Correspondences are held
    /// fixed in the gradients.
    struct ChamferResult
    {
        double value = 0.0;
        double forward = 0.0;   // P -> Q part
        double backward = 0.0;  // Q -> P part
        MatX3 d_p;
        MatX3 d_q;
        std::vector<Index> p_to_q;
        std::vector<Index> q_to_p;
    };

    ChamferResult chamfer(const MatX3 & p, const PointIndex & q, ChamferOrder order);
    ChamferResult chamfer(const MatX3 & p, const MatX3 & q, ChamferOrder order);
    ChamferResult chamfer(const PointSample & p, const PointSample & q, ChamferOrder order);

    /// Mean over p of 1 - |n_p . n_q| with q the nearest point of Q to p.
    struct NormalConsistency
    {
        double value = 0.0;
        MatX3 d_normals;  // w.r.t. the normals of P
    };

    NormalConsistency normal_consistency(const MatX3 & p_normals, const MatX3 & q_normals, const std::vector<Index> & p_to_q);
    NormalConsistency normal_consistency(const PointSample & p, const PointSample & q);

    /// Target signed distance with its spatial gradient (gradient may be left untouched
    /// when the pointer is null).
    using SdfQuery = std::function<double(const Vec3 &, Vec3 *)>;

    /// Mean squared difference between the grid SDF and the target at the deformed vertices.
    struct SdfRegularization
    {
        double value = 0.0;
        VecX d_sdf;
        MatX3 d_positions;  // through the target's dependence on vertex positions
    };

    SdfRegularization sdf_regularization(const TetGrid & grid, const SdfQuery & target);
    SdfRegularization sdf_regularization(const TetGrid & grid, const VecX & target_values);

    /// Mean over vertices of sqrt(|dv|^2 + eps^2) - eps.
    struct DeformationRegularization
    {
        double value = 0.0;
        MatX3 d_deformations;
    };

    constexpr double kDeformationEps = 1e-12;
    DeformationRegularization deformation_regularization(const MatX3 & deformations);
    DeformationRegularization deformation_regularization(const TetGrid & grid);

    struct LsganTerms
    {
        double discriminator = 0.0;
        double generator = 0.0;
    };

    /// Least-squares GAN objectives for discriminator scores on a real and a fake sample.
    LsganTerms lsgan_terms(double d_real, double d_fake);

    struct LossWeights
    {
        double cd      = 1.0;
        double normal  = 0.1;
        double gan     = 0.0;
        double sdf     = 0.2;
        double deform  = 0.05;

        void validate() const;
    };

    struct LossTerms
    {
        double cd     = 0.0;
        double normal = 0.0;
        double gan    = 0.0;
        double sdf    = 0.0;
        double deform = 0.0;
    };

    struct LossReport
    {
        LossTerms terms;
        LossWeights weights;
        double total = 0.0;
    };

    LossReport total_loss(const LossTerms & terms, const LossWeights & weights);
}
