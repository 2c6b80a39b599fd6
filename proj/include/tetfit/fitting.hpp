#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "losses.hpp"
#include "mesh.hpp"
#include "point_sample.hpp"
#include "sdfield.hpp"
#include "spatial.hpp"
#include "subdivision.hpp"
#include "tetgrid.hpp"

namespace tetfit
{
    struct Ablations
    {
        bool freeze_deformation    = false;
        bool disable_volume_subdiv = false;
        bool disable_surface_subdiv = false;
    };

    struct FitConfig
    {
        int base_resolution      = 32;
        GridScheme scheme        = GridScheme::six_tet;
        int iterations_per_level = 100;
        int levels               = 1;  // volume subdivisions
        int surface_subdiv_iters = 1;
        Index sample_count       = 5000;
        Index target_samples     = 20000;  // drawn from mesh targets
        int normal_neighbours    = 16;     // PCA normals for raw point clouds
        LossWeights weights;
        ChamferOrder chamfer_order = ChamferOrder::l1;
        double step_size         = 1e-3;  // SDF values, halved per level
        double deform_step_size  = 1e-4;
        double alpha_step_size   = 1e-2;
        double beta1             = 0.9;
        double beta2             = 0.999;
        double adam_eps          = 1e-8;
        std::uint64_t seed       = 0;
        Ablations ablations;

        void validate() const;
        int effective_levels() const { return ablations.disable_volume_subdiv ? 0 : levels; }
        int total_steps() const { return (levels + 1) * iterations_per_level; }
    };

    /// PCA normals from the k nearest neighbours (unoriented).
    MatX3 estimate_normals(const MatX3 & points, int k);

    /// What the fit is pulled towards: surface samples with normals, plus an
    /// exact signed distance when the target is a closed mesh.
    struct FitTarget
    {
        PointSample points;
        std::shared_ptr<const PointIndex> index;
        std::shared_ptr<const MeshSdf> mesh;

        static FitTarget from_points(PointSample points, int normal_neighbours = 16);
        static FitTarget from_mesh(const TriangleMesh & mesh, Index samples, std::uint64_t seed);

        /// Target distance at p. Mesh targets give the exact signed distance;
        /// point targets give the nearest-point distance carrying the sign of
        /// `current`. The spatial gradient goes to `gradient` when non-null.
        double signed_distance(const Vec3 & p, double current, Vec3 * gradient) const;
    };

    class Adam
    {
    public:
        void resize(Index n);
        void prolong(const SubdivisionPlan & plan, int components);
        // params -= step * mhat / (sqrt(vhat) + eps); t counts from 1
        void update(double * params, const double * grad, Index n, double step, double beta1, double beta2, double eps, long t);

        const VecX & first() const { return m_; }
        const VecX & second() const { return v_; }

    private:
        VecX m_, v_;
    };

    struct StepRecord
    {
        int iteration = 0;
        int level     = 0;
        LossReport report;
        Index mesh_vertices = 0;
        Index mesh_faces    = 0;
    };

    struct FitState
    {
        TetGrid grid;
        VecX alpha_raw;  // per grid vertex; alpha = sigmoid(raw)
        Adam sdf_moments, deform_moments, alpha_moments;
        long iteration = 0;
        std::vector<StepRecord> history;
    };

    /// One evaluation of the chained objective with its gradients.
    struct Objective
    {
        LossReport report;
        VecX d_sdf;
        MatX3 d_deformation;
        VecX d_alpha_raw;
        TriangleMesh extracted;  // MT output
        TriangleMesh surface;    // after optional Loop
        PointSample sample;
    };

    /// MT -> optional Loop -> sample -> losses, with gradients through every
    /// stage. With `provenance`, the samples reuse those triangles and weights
    /// instead of drawing new ones (for finite-difference checks).
    Objective evaluate_objective(const TetGrid & grid, const VecX & alpha_raw, const FitTarget & target, const FitConfig & config, std::uint64_t sample_seed,
                                 const PointSample * provenance = nullptr);

    FitState initialize(const FitTarget & target, const FitConfig & config);
    void step(FitState & state, const FitTarget & target, const FitConfig & config);
    void advance_level(FitState & state);

    /// Final surface of a state: MT, then Loop if enabled and possible.
    TriangleMesh extract_surface(const FitState & state, const FitConfig & config);

    struct FitResult
    {
        TriangleMesh mesh;
        std::vector<StepRecord> history;
        FitState state;
    };

    FitResult fit(const FitTarget & target, const FitConfig & config);

    /// Chamfer-L1 between a mesh and a primitive without nearest-neighbour
    /// sampling error: mean |SDF| over mesh samples plus the mean exact
    /// distance from shape samples to the mesh.
    double analytic_chamfer_l1(const TriangleMesh & mesh, const AnalyticSdf & shape, Index samples, std::uint64_t seed);

    struct BenchRow
    {
        std::string method;  // "mc", "mt" or "fit"
        Index budget    = 0;
        Index vertices  = 0;  // SDF queries actually used
        int resolution  = 0;
        double chamfer_l1 = 0.0;
    };

    /// Largest BCC resolution whose vertex count fits the budget.
    int bcc_resolution_for_budget(Index budget);
    Index bcc_vertex_count(int resolution);

    /// MC on a lattice and MT on a BCC grid, both with at most `budget` SDF
    /// queries, scored by analytic_chamfer_l1. With a fit config, also fits a
    /// grid of the MT resolution to surface samples of the shape.
    std::vector<BenchRow> oracle_bench(const AnalyticSdf & shape, const std::vector<Index> & budgets, Index eval_samples = 20000, std::uint64_t seed = 0,
                                       const std::optional<FitConfig> & fit_config = std::nullopt);
}
