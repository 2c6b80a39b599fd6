#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <random>

#include "tetfit/fitting.hpp"
#include "tetfit/sdfield.hpp"

namespace tetfit::testing
{
    inline AnalyticSdf unit_sphere() { return AnalyticSdf::sphere(Vec3::Constant(0.5), 0.3); }
    inline AnalyticSdf fixture_torus() { return AnalyticSdf::torus(Vec3::Constant(0.5), 0.3, 0.1); }
    inline AnalyticSdf thin_box() { return AnalyticSdf::box(Vec3::Constant(0.5), Vec3(0.3, 0.2, 0.04)); }

    // Surface samples with isotropic gaussian noise; normals dropped.
    inline PointSample noisy_points(const AnalyticSdf & shape, Index n, double sigma, std::uint64_t seed)
    {
        PointSample pts = sample_analytic_surface(shape, n, seed);
        std::mt19937_64 gen(seed + 1);
        std::normal_distribution<double> noise(0.0, sigma);
        PointSample out;
        out.positions = pts.positions;
        for (Index i = 0; i < out.size(); ++i)
            for (int a = 0; a < 3; ++a)
                out.positions(i, a) += noise(gen);
        return out;
    }

    struct GradientCheck
    {
        double worst_relative = 0.0;
        int directions = 0;
        bool used_loop = false;
    };

    // Central differences of the full objective along random directions in
    // (sdf, deformation, alpha) space with the sample provenance held fixed.
    // `levels` volume subdivisions are applied to the res-4 grid first.
    inline GradientCheck chained_gradient_check(int levels, int directions, double h)
    {
        const AnalyticSdf shape = AnalyticSdf::sphere(Vec3(0.52, 0.48, 0.5), 0.31);
        FitConfig cfg;
        cfg.base_resolution      = 4;
        cfg.sample_count         = 64;
        cfg.surface_subdiv_iters = 1;
        cfg.weights              = {1.0, 0.1, 0.0, 0.2, 0.05};
        const FitTarget target   = FitTarget::from_points(sample_analytic_surface(shape, 128, 3));

        std::mt19937_64 gen(11);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        TetGrid grid = build_grid(4, GridScheme::six_tet);
        for (Index v = 0; v < grid.num_vertices(); ++v)
            grid.sdf[v] = eval_analytic<double>(shape, grid.position(v));
        for (int l = 0; l < levels; ++l)
            grid = subdivide_volume(grid, plan_subdivision(grid));
        const Index n = grid.num_vertices();
        MatX3 deform(n, 3);
        for (Index v = 0; v < n; ++v)
            for (int a = 0; a < 3; ++a)
                deform(v, a) = 0.5 * grid.clamp_radius * u(gen);
        set_deformation(grid, deform);
        VecX alpha_raw(n);
        for (Index v = 0; v < n; ++v)
            alpha_raw[v] = u(gen);

        const Objective base = evaluate_objective(grid, alpha_raw, target, cfg, 7);
        GradientCheck out;
        out.used_loop  = base.surface.num_vertices() != base.extracted.num_vertices();
        out.directions = directions;
        const double min_abs_sdf = grid.sdf.cwiseAbs().minCoeff();
        for (int k = 0; k < directions; ++k)
        {
            VecX ds(n), da(n);
            MatX3 dd(n, 3);
            for (Index v = 0; v < n; ++v)
            {
                ds[v] = u(gen);
                da[v] = u(gen);
                for (int a = 0; a < 3; ++a)
                    dd(v, a) = u(gen);
            }
            // keep every vertex sign and stay inside the clamp
            const double t = std::min(h, 0.5 * min_abs_sdf);
            auto eval = [&](double s) {
                TetGrid g = grid;
                g.sdf += s * ds;
                g.deformations += s * dd;
                return evaluate_objective(g, alpha_raw + s * da, target, cfg, 7, &base.sample).report.total;
            };
            const double fd       = (eval(t) - eval(-t)) / (2.0 * t);
            const double analytic = base.d_sdf.dot(ds) + (base.d_deformation.array() * dd.array()).sum() + base.d_alpha_raw.dot(da);
            const double rel      = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8});
            out.worst_relative    = std::max(out.worst_relative, rel);
        }
        return out;
    }
}
