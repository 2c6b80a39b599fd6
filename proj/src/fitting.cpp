#include "tetfit/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "tetfit/marching.hpp"
#include "tetfit/parallel.hpp"
#include "tetfit/random.hpp"

namespace tetfit
{
    namespace
    {
        double sigmoid(double x)
        {
            return 1.0 / (1.0 + std::exp(-x));
        }

        std::vector<std::vector<Index>> vertex_neighbours(const TetGrid & grid)
        {
            std::vector<std::vector<Index>> adj(static_cast<std::size_t>(grid.num_vertices()));
            for (Index t = 0; t < grid.num_tets(); ++t)
            {
                for (int i = 0; i < 4; ++i)
                {
                    for (int j = i + 1; j < 4; ++j)
                    {
                        adj[grid.tets(t, i)].push_back(grid.tets(t, j));
                        adj[grid.tets(t, j)].push_back(grid.tets(t, i));
                    }
                }
            }
            for (auto & list : adj)
            {
                std::sort(list.begin(), list.end());
                list.erase(std::unique(list.begin(), list.end()), list.end());
            }
            return adj;
        }

        // Signed field for a point cloud. The outside is flooded from the grid
        // boundary through vertices more than `barrier` from the points; every
        // target normal is then oriented towards that region, and vertices the
        // flood missed take their sign from the nearest point's oriented normal.
        // Returns an empty vector when the flood reaches everything or nothing.
        VecX flood_signed_distance(const TetGrid & grid, const FitTarget & target, const VecX & unsigned_dist, double barrier)
        {
            const Index n = grid.num_vertices();
            std::vector<char> outside(static_cast<std::size_t>(n), 0);
            std::deque<Index> queue;
            for (Index v = 0; v < n; ++v)
            {
                const Vec3 p    = grid.rest_positions.row(v).transpose();
                const bool edge = (p.array() <= 1e-12).any() || (p.array() >= 1.0 - 1e-12).any();
                if (edge && unsigned_dist[v] > barrier)
                {
                    outside[v] = 1;
                    queue.push_back(v);
                }
            }
            const auto adj = vertex_neighbours(grid);
            while (!queue.empty())
            {
                const Index v = queue.front();
                queue.pop_front();
                for (Index u : adj[v])
                {
                    if (!outside[u] && unsigned_dist[u] > barrier)
                    {
                        outside[u] = 1;
                        queue.push_back(u);
                    }
                }
            }
            std::vector<Index> outer;
            for (Index v = 0; v < n; ++v)
            {
                if (outside[v])
                {
                    outer.push_back(v);
                }
            }
            if (outer.empty() || Index(outer.size()) == n)
            {
                return {};
            }
            MatX3 outer_pts(Index(outer.size()), 3);
            for (std::size_t i = 0; i < outer.size(); ++i)
            {
                outer_pts.row(Index(i)) = grid.rest_positions.row(outer[i]);
            }
            const PointIndex outer_index(outer_pts);

            const MatX3 & pts = target.points.positions;
            MatX3 oriented(pts.rows(), 3);
            const double reach = 1.5 * barrier;
            parallel_for(pts.rows(), [&](Index begin, Index end) {
                for (Index i = begin; i < end; ++i)
                {
                    const Vec3 p = pts.row(i).transpose();
                    const Vec3 nrm = target.points.normals.row(i).transpose();
                    const double up   = outer_index.nearest(Vec3(p + reach * nrm)).squared_distance;
                    const double down = outer_index.nearest(Vec3(p - reach * nrm)).squared_distance;
                    oriented.row(i) = (up <= down ? nrm : Vec3(-nrm)).transpose();
                }
            }, 256);

            VecX s(n);
            parallel_for(n, [&](Index begin, Index end) {
                for (Index v = begin; v < end; ++v)
                {
                    if (outside[v])
                    {
                        s[v] = unsigned_dist[v];
                        continue;
                    }
                    const Vec3 x = grid.rest_positions.row(v).transpose();
                    if (unsigned_dist[v] > 2.0 * barrier)
                    {
                        s[v] = -unsigned_dist[v];
                        continue;
                    }
                    const Index i = target.index->nearest(x).index;
                    const double side = (x - pts.row(i).transpose()).dot(oriented.row(i).transpose());
                    s[v] = side >= 0.0 ? unsigned_dist[v] : -unsigned_dist[v];
                }
            }, 256);
            return s;
        }

        void check_finite(const LossReport & r, long iteration)
        {
            if (std::isfinite(r.total))
            {
                return;
            }
            std::ostringstream os;
            os << "non-finite loss at iteration " << iteration << " (cd=" << r.terms.cd << " normal=" << r.terms.normal << " sdf=" << r.terms.sdf
               << " def=" << r.terms.deform << ")";
            throw Error(ErrorCode::diverged, os.str());
        }

        bool use_loop(const TriangleMesh & mesh, const FitConfig & config)
        {
            return config.surface_subdiv_iters > 0 && !config.ablations.disable_surface_subdiv && analyze_topology(mesh).closed_manifold();
        }

        AlphaField mesh_alpha(const TriangleMesh & mesh, const VecX & alpha_raw)
        {
            AlphaField a;
            a.alpha.resize(mesh.num_vertices());
            for (Index i = 0; i < mesh.num_vertices(); ++i)
            {
                const auto & e = mesh.provenance[i];
                a.alpha[i]     = sigmoid(0.5 * (alpha_raw[e[0]] + alpha_raw[e[1]]));
            }
            return a;
        }
    }

    void FitConfig::validate() const
    {
        auto fail = [](const std::string & what) { throw Error(ErrorCode::invalid_argument, what); };
        if (base_resolution < 1)
            fail("base_resolution must be >= 1");
        if (iterations_per_level < 1)
            fail("iterations_per_level must be >= 1");
        if (levels < 0)
            fail("levels must be >= 0");
        if (surface_subdiv_iters < 0)
            fail("surface_subdiv_iters must be >= 0");
        if (sample_count < 1 || target_samples < 1)
            fail("sample counts must be >= 1");
        if (normal_neighbours < 3)
            fail("normal_neighbours must be >= 3");
        if (!(step_size > 0.0) || !(deform_step_size > 0.0) || !(alpha_step_size > 0.0))
            fail("step sizes must be > 0");
        if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
            fail("beta1 and beta2 must lie in (0, 1)");
        if (!(adam_eps > 0.0))
            fail("adam_eps must be > 0");
        weights.validate();
    }

    MatX3 estimate_normals(const MatX3 & points, int k)
    {
        const PointIndex index(points);
        MatX3 normals(points.rows(), 3);
        parallel_for(points.rows(), [&](Index begin, Index end) {
            for (Index i = begin; i < end; ++i)
            {
                const auto nn = index.k_nearest(points.row(i).transpose(), k);
                Vec3 mean = Vec3::Zero();
                for (Index j : nn)
                {
                    mean += points.row(j).transpose();
                }
                mean /= double(nn.size());
                Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
                for (Index j : nn)
                {
                    const Vec3 d = points.row(j).transpose() - mean;
                    cov += d * d.transpose();
                }
                const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
                normals.row(i) = eig.eigenvectors().col(0).normalized().transpose();
            }
        }, 256);
        return normals;
    }

    FitTarget FitTarget::from_points(PointSample points, int normal_neighbours)
    {
        if (points.size() == 0)
        {
            throw Error(ErrorCode::invalid_argument, "target point cloud is empty");
        }
        if (!points.has_normals())
        {
            points.normals = estimate_normals(points.positions, normal_neighbours);
        }
        FitTarget t;
        t.index  = std::make_shared<const PointIndex>(points.positions);
        t.points = std::move(points);
        return t;
    }

    FitTarget FitTarget::from_mesh(const TriangleMesh & mesh, Index samples, std::uint64_t seed)
    {
        if (mesh.num_triangles() == 0)
        {
            throw Error(ErrorCode::invalid_argument, "target mesh is empty");
        }
        FitTarget t;
        t.mesh   = std::make_shared<const MeshSdf>(mesh);
        PointSample s = sample_surface(mesh, samples, seed ^ 0x7a7a7a7aULL);
        t.points.positions = std::move(s.positions);
        t.points.normals   = std::move(s.normals);
        t.index = std::make_shared<const PointIndex>(t.points.positions);
        return t;
    }

    double FitTarget::signed_distance(const Vec3 & p, double current, Vec3 * gradient) const
    {
        Vec3 offset;
        double dist;
        double sign;
        if (mesh)
        {
            const auto q = mesh->query(p);
            offset = p - q.closest;
            dist   = std::abs(q.value);
            sign   = q.sign;
        }
        else
        {
            const auto hit = index->nearest(p);
            offset = p - points.positions.row(hit.index).transpose();
            dist   = std::sqrt(hit.squared_distance);
            sign   = is_inside(current) ? -1.0 : 1.0;
        }
        if (gradient)
        {
            *gradient = dist > 1e-12 ? Vec3(sign * offset / dist) : Vec3::Zero();
        }
        return sign * dist;
    }

    void Adam::resize(Index n)
    {
        m_ = VecX::Zero(n);
        v_ = VecX::Zero(n);
    }

    void Adam::prolong(const SubdivisionPlan & plan, int components)
    {
        const Index n_out = plan.num_output_vertices();
        VecX m = VecX::Zero(n_out * components), v = VecX::Zero(n_out * components);
        for (std::size_t i = 0; i < plan.kept_vertices.size(); ++i)
        {
            for (int c = 0; c < components; ++c)
            {
                m[Index(i) * components + c] = m_[plan.kept_vertices[i] * components + c];
                v[Index(i) * components + c] = v_[plan.kept_vertices[i] * components + c];
            }
        }
        m_ = std::move(m);
        v_ = std::move(v);
    }

    void Adam::update(double * params, const double * grad, Index n, double step, double beta1, double beta2, double eps, long t)
    {
        if (m_.size() != n)
        {
            throw Error(ErrorCode::invalid_argument, "optimizer moments do not match the parameter count");
        }
        const double c1 = 1.0 - std::pow(beta1, double(t));
        const double c2 = 1.0 - std::pow(beta2, double(t));
        for (Index i = 0; i < n; ++i)
        {
            m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
            v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= step * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
    }

    Objective evaluate_objective(const TetGrid & grid, const VecX & alpha_raw, const FitTarget & target, const FitConfig & config, std::uint64_t sample_seed,
                                 const PointSample * provenance)
    {
        const LossWeights & w = config.weights;
        Objective out;
        out.extracted = marching_tetrahedra(grid);
        if (out.extracted.num_triangles() == 0)
        {
            throw Error(ErrorCode::no_surface, "the grid SDF has no zero crossing");
        }

        LoopTape tape;
        const bool loop = use_loop(out.extracted, config);
        if (loop)
        {
            out.surface = loop_subdivide(out.extracted, mesh_alpha(out.extracted, alpha_raw), config.surface_subdiv_iters, &tape);
        }
        else
        {
            out.surface = out.extracted;
        }
        out.sample = provenance ? resample(out.surface, *provenance) : sample_surface(out.surface, config.sample_count, sample_seed);

        const ChamferResult cd = chamfer(out.sample.positions, *target.index, config.chamfer_order);
        const NormalConsistency nc = normal_consistency(out.sample.normals, target.points.normals, cd.p_to_q);

        const Index nv = grid.num_vertices();
        VecX target_sdf(nv);
        MatX3 target_grad(nv, 3);
        parallel_for(nv, [&](Index begin, Index end) {
            for (Index v = begin; v < end; ++v)
            {
                Vec3 g;
                target_sdf[v]       = target.signed_distance(grid.position(v), grid.sdf[v], &g);
                target_grad.row(v)  = g.transpose();
            }
        }, 256);
        const SdfRegularization sdf_term = sdf_regularization(grid, target_sdf);
        const DeformationRegularization def_term = deformation_regularization(grid);

        LossTerms terms;
        terms.cd     = cd.value;
        terms.normal = nc.value;
        terms.sdf    = sdf_term.value;
        terms.deform = def_term.value;
        out.report   = total_loss(terms, w);

        // Backward.
        const MatX3 d_surface = sample_surface_vjp(out.surface, out.sample, w.cd * cd.d_p, w.normal * nc.d_normals);
        MatX3 d_extracted;
        out.d_alpha_raw = VecX::Zero(alpha_raw.size());
        if (loop)
        {
            const LoopCotangents lc = loop_subdivide_vjp(tape, d_surface);
            d_extracted = lc.d_positions;
            const AlphaField alpha = mesh_alpha(out.extracted, alpha_raw);
            for (Index i = 0; i < out.extracted.num_vertices(); ++i)
            {
                const double a = alpha.alpha[i];
                const double g = 0.5 * lc.d_alpha[i] * a * (1.0 - a);
                out.d_alpha_raw[out.extracted.provenance[i][0]] += g;
                out.d_alpha_raw[out.extracted.provenance[i][1]] += g;
            }
        }
        else
        {
            d_extracted = d_surface;
        }
        const Cotangents mt = marching_tetrahedra_vjp(grid, out.extracted, d_extracted);
        out.d_sdf         = mt.d_sdf + w.sdf * sdf_term.d_sdf;
        out.d_deformation = mt.d_position + w.deform * def_term.d_deformations;
        for (Index v = 0; v < nv; ++v)
        {
            out.d_deformation.row(v) -= w.sdf * sdf_term.d_sdf[v] * target_grad.row(v);
        }
        return out;
    }

    FitState initialize(const FitTarget & target, const FitConfig & config)
    {
        config.validate();
        if (target.points.size() == 0 || !target.index)
        {
            throw Error(ErrorCode::invalid_argument, "fit target is empty");
        }
        FitState state;
        state.grid    = build_grid(config.base_resolution, config.scheme);
        TetGrid & g   = state.grid;
        const Index n = g.num_vertices();
        const double h = g.cell_size();

        if (target.mesh)
        {
            parallel_for(n, [&](Index begin, Index end) {
                for (Index v = begin; v < end; ++v)
                {
                    g.sdf[v] = (*target.mesh)(g.position(v));
                }
            }, 256);
        }
        else
        {
            VecX dist(n);
            parallel_for(n, [&](Index begin, Index end) {
                for (Index v = begin; v < end; ++v)
                {
                    dist[v] = std::sqrt(target.index->nearest(g.position(v)).squared_distance);
                }
            }, 256);
            const VecX signed_dist = flood_signed_distance(g, target, dist, h);
            if (signed_dist.size() == n && (signed_dist.array() < 0.0).any())
            {
                g.sdf = signed_dist;
            }
            else
            {
                // Open or sparse cloud: a thin shell around the points.
                g.sdf = dist.array() - 0.5 * h;
            }
        }
        if (surface_tets(g).empty())
        {
            throw Error(ErrorCode::no_surface, "initial SDF has no zero crossing; is the target inside the unit cube?");
        }

        state.alpha_raw = VecX::Zero(n);
        state.sdf_moments.resize(n);
        state.deform_moments.resize(3 * n);
        state.alpha_moments.resize(n);
        return state;
    }

    void step(FitState & state, const FitTarget & target, const FitConfig & config)
    {
        const std::uint64_t seed = CounterRng::mix(config.seed ^ CounterRng::mix(std::uint64_t(state.iteration) + 1));
        Objective obj            = evaluate_objective(state.grid, state.alpha_raw, target, config, seed);
        check_finite(obj.report, state.iteration);

        StepRecord rec;
        rec.iteration     = int(state.iteration);
        rec.level         = state.grid.level;
        rec.report        = obj.report;
        rec.mesh_vertices = obj.surface.num_vertices();
        rec.mesh_faces    = obj.surface.num_triangles();
        state.history.push_back(rec);

        const long t   = state.iteration + 1;
        TetGrid & grid = state.grid;
        const Index n  = grid.num_vertices();
        // Step sizes are in grid units: they shrink with the cell size at each level.
        const double scale = std::ldexp(1.0, -grid.level);
        state.sdf_moments.update(grid.sdf.data(), obj.d_sdf.data(), n, scale * config.step_size, config.beta1, config.beta2, config.adam_eps, t);
        if (!config.ablations.freeze_deformation)
        {
            MatX3 deform = grid.deformations;
            state.deform_moments.update(deform.data(), obj.d_deformation.data(), 3 * n, scale * config.deform_step_size, config.beta1, config.beta2, config.adam_eps, t);
            set_deformation(grid, deform);
        }
        if (config.surface_subdiv_iters > 0 && !config.ablations.disable_surface_subdiv)
        {
            state.alpha_moments.update(state.alpha_raw.data(), obj.d_alpha_raw.data(), n, config.alpha_step_size, config.beta1, config.beta2, config.adam_eps, t);
        }
        if (!grid.sdf.allFinite() || !grid.deformations.allFinite())
        {
            throw Error(ErrorCode::diverged, "non-finite parameters after iteration " + std::to_string(state.iteration));
        }
        ++state.iteration;
    }

    void advance_level(FitState & state)
    {
        const SubdivisionPlan plan = plan_subdivision(state.grid);
        if (plan.selected.empty())
        {
            throw Error(ErrorCode::no_surface, "no surface tets to subdivide");
        }
        state.grid      = subdivide_volume(state.grid, plan);
        state.alpha_raw = prolong_vertex_values(plan, state.alpha_raw);
        state.sdf_moments.prolong(plan, 1);
        state.deform_moments.prolong(plan, 3);
        state.alpha_moments.prolong(plan, 1);
    }

    TriangleMesh extract_surface(const FitState & state, const FitConfig & config)
    {
        TriangleMesh mesh = marching_tetrahedra(state.grid);
        if (mesh.num_triangles() > 0 && use_loop(mesh, config))
        {
            mesh = loop_subdivide(mesh, mesh_alpha(mesh, state.alpha_raw), config.surface_subdiv_iters);
        }
        return mesh;
    }

    FitResult fit(const FitTarget & target, const FitConfig & config)
    {
        FitResult result;
        result.state   = initialize(target, config);
        const int stages = config.levels + 1;
        const int levels = config.effective_levels();
        for (int stage = 0; stage < stages; ++stage)
        {
            for (int it = 0; it < config.iterations_per_level; ++it)
            {
                step(result.state, target, config);
            }
            if (stage < levels)
            {
                advance_level(result.state);
            }
        }
        result.mesh    = extract_surface(result.state, config);
        result.history = result.state.history;
        return result;
    }

    double analytic_chamfer_l1(const TriangleMesh & mesh, const AnalyticSdf & shape, Index samples, std::uint64_t seed)
    {
        if (mesh.num_triangles() == 0)
        {
            throw Error(ErrorCode::empty_surface, "cannot score an empty mesh");
        }
        const PointSample on_mesh  = sample_surface(mesh, samples, seed);
        const PointSample on_shape = sample_analytic_surface(shape, samples, seed);
        const TriangleIndex index(mesh);
        VecX a(samples), b(samples);
        parallel_for(samples, [&](Index begin, Index end) {
            for (Index i = begin; i < end; ++i)
            {
                a[i] = std::abs(eval_analytic<double>(shape, Vec3(on_mesh.positions.row(i).transpose())));
                b[i] = std::sqrt(index.nearest(on_shape.positions.row(i).transpose()).squared_distance);
            }
        }, 256);
        double sa = 0.0, sb = 0.0;
        for (Index i = 0; i < samples; ++i)
        {
            sa += a[i];
            sb += b[i];
        }
        return (sa + sb) / double(samples);
    }

    Index bcc_vertex_count(int n)
    {
        const Index m = n;
        return (m + 1) * (m + 1) * (m + 1) + m * m * m + 6 * m * m;
    }

    int bcc_resolution_for_budget(Index budget)
    {
        int n = 0;
        while (bcc_vertex_count(n + 1) <= budget)
        {
            ++n;
        }
        if (n < 1)
        {
            throw Error(ErrorCode::invalid_argument, "budget " + std::to_string(budget) + " is below the smallest grid");
        }
        return n;
    }

    std::vector<BenchRow> oracle_bench(const AnalyticSdf & shape, const std::vector<Index> & budgets, Index eval_samples, std::uint64_t seed,
                                       const std::optional<FitConfig> & fit_config)
    {
        if (budgets.empty())
        {
            throw Error(ErrorCode::invalid_argument, "bench needs at least one budget");
        }
        std::vector<BenchRow> rows;
        for (Index budget : budgets)
        {
            int mc_res = int(std::floor(std::cbrt(double(budget)) + 1e-9)) - 1;
            while (Index(mc_res + 1) * (mc_res + 1) * (mc_res + 1) > budget)
            {
                --mc_res;
            }
            if (mc_res < 1)
            {
                throw Error(ErrorCode::invalid_argument, "budget " + std::to_string(budget) + " is below the smallest lattice");
            }
            const Index side = mc_res + 1;
            VecX values(side * side * side);
            for (Index k = 0; k < side; ++k)
                for (Index j = 0; j < side; ++j)
                    for (Index i = 0; i < side; ++i)
                        values[i + side * (j + side * k)] = eval_analytic<double>(shape, Vec3(double(i), double(j), double(k)) / double(mc_res));
            const TriangleMesh mc = marching_cubes(values, mc_res);
            rows.push_back({"mc", budget, values.size(), mc_res, analytic_chamfer_l1(mc, shape, eval_samples, seed)});

            const int mt_res = bcc_resolution_for_budget(budget);
            TetGrid grid     = build_grid(mt_res, GridScheme::bcc);
            for (Index v = 0; v < grid.num_vertices(); ++v)
            {
                grid.sdf[v] = eval_analytic<double>(shape, grid.position(v));
            }
            const TriangleMesh mt = marching_tetrahedra(grid);
            rows.push_back({"mt", budget, grid.num_vertices(), mt_res, analytic_chamfer_l1(mt, shape, eval_samples, seed)});

            if (fit_config)
            {
                FitConfig cfg       = *fit_config;
                cfg.base_resolution = mt_res;
                cfg.scheme          = GridScheme::bcc;
                cfg.levels          = 0;
                const FitTarget target = FitTarget::from_points(sample_analytic_surface(shape, cfg.target_samples, seed ^ 0xf17ULL));
                const FitResult result = fit(target, cfg);
                rows.push_back({"fit", budget, grid.num_vertices(), mt_res, analytic_chamfer_l1(result.mesh, shape, eval_samples, seed)});
            }
        }
        return rows;
    }
}
