// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "fixtures.hpp"
#include "loop_oracle.hpp"
#include "tetfit/fitting.hpp"
#include "tetfit/io.hpp"
#include "tetfit/marching.hpp"
#include "tetfit/parallel.hpp"
#include "tetfit/subdivision.hpp"

using namespace tetfit;
using namespace tetfit::testing;

namespace
{
    struct Outcome
    {
        bool pass = false;
        std::string detail;
    };

    std::string fmt(const char * f, double a)
    {
        char buf[128];
        std::snprintf(buf, sizeof(buf), f, a);
        return buf;
    }

    // Brute-force symmetric chamfer-L1 (mean Euclidean nearest distance, both ways).
    double brute_chamfer_l1(const MatX3 & p, const MatX3 & q)
    {
        auto one_way = [](const MatX3 & a, const MatX3 & b) {
            double sum = 0.0;
            for (Index i = 0; i < a.rows(); ++i)
            {
                double best = std::numeric_limits<double>::infinity();
                for (Index j = 0; j < b.rows(); ++j)
                    best = std::min(best, (a.row(i) - b.row(j)).squaredNorm());
                sum += std::sqrt(best);
            }
            return sum / double(a.rows());
        };
        return one_way(p, q) + one_way(q, p);
    }

    Outcome gradients()
    {
        const GradientCheck level0 = chained_gradient_check(0, 20, 1e-5);
        const GradientCheck level1 = chained_gradient_check(1, 20, 1e-5);
        const double worst = std::max(level0.worst_relative, level1.worst_relative);
        return {worst < 1e-3 && level0.used_loop, "worst relative error " + fmt("%.2e", worst) + " over 2x20 directions (levels 0 and 1)"};
    }

    Outcome marching()
    {
        bool ok = true;
        std::string detail;
        for (GridScheme scheme : {GridScheme::six_tet, GridScheme::bcc})
        {
            TetGrid plane = build_grid(16, scheme);
            for (Index v = 0; v < plane.num_vertices(); ++v)
                plane.sdf[v] = plane.position(v).z() - 0.3712;
            const TriangleMesh m = marching_tetrahedra(plane);
            double off = 0.0;
            for (Index v = 0; v < m.num_vertices(); ++v)
                off = std::max(off, std::abs(m.positions(v, 2) - 0.3712));
            const double area = surface_area(m);
            ok = ok && std::abs(area - 1.0) <= 1e-9 && off <= 1e-12;
            detail += std::string(scheme_name(scheme)) + ": plane area-1 " + fmt("%.1e", area - 1.0) + ", off-plane " + fmt("%.1e", off) + "; ";
        }
        TetGrid sphere = build_grid(32);
        TetGrid torus  = build_grid(32);
        for (Index v = 0; v < sphere.num_vertices(); ++v)
        {
            sphere.sdf[v] = eval_analytic<double>(unit_sphere(), sphere.position(v));
            torus.sdf[v]  = eval_analytic<double>(fixture_torus(), torus.position(v));
        }
        const TopologyReport ts = analyze_topology(marching_tetrahedra(sphere));
        const TopologyReport tt = analyze_topology(marching_tetrahedra(torus));
        ok = ok && ts.closed_manifold() && ts.euler_characteristic() == 2 && tt.closed_manifold() && tt.euler_characteristic() == 0;
        detail += "sphere chi " + std::to_string(ts.euler_characteristic()) + ", torus chi " + std::to_string(tt.euler_characteristic());
        return {ok, detail};
    }

    Outcome volume_invariance()
    {
        double worst_dist = 0.0, worst_area = 0.0;
        for (const AnalyticSdf & shape : {unit_sphere(), fixture_torus()})
        {
            for (bool deformed : {false, true})
            {
                TetGrid g = build_grid(8);
                if (deformed)
                {
                    std::mt19937_64 gen(5);
                    std::uniform_real_distribution<double> u(-1.0, 1.0);
                    MatX3 d(g.num_vertices(), 3);
                    for (Index v = 0; v < d.rows(); ++v)
                        for (int a = 0; a < 3; ++a)
                            d(v, a) = u(gen) * g.clamp_radius;
                    set_deformation(g, d);
                }
                for (Index v = 0; v < g.num_vertices(); ++v)
                    g.sdf[v] = eval_analytic<double>(shape, g.position(v));
                const TriangleMesh before = marching_tetrahedra(g);
                const TriangleMesh after  = marching_tetrahedra(subdivide_volume(g, plan_subdivision(g)));
                worst_dist = std::max({worst_dist, vertex_to_surface_deviation(before, after).max, vertex_to_surface_deviation(after, before).max});
                worst_area = std::max(worst_area, std::abs(surface_area(after) - surface_area(before)) / surface_area(before));
            }
        }
        return {worst_dist < 1e-9 && worst_area < 1e-9, "max mutual distance " + fmt("%.1e", worst_dist) + ", max relative area change " + fmt("%.1e", worst_area)};
    }

    Outcome oracle()
    {
        bool ok = true;
        std::string detail;
        const std::vector<Index> budgets = {17 * 17 * 17, 33 * 33 * 33, 65 * 65 * 65};
        for (const auto & [name, shape] : {std::pair {"torus", fixture_torus()}, std::pair {"thin box", thin_box()}})
        {
            const std::vector<BenchRow> rows = oracle_bench(shape, budgets, 20000, 0);
            double last_mc = std::numeric_limits<double>::infinity(), last_mt = last_mc;
            detail += std::string(name) + " mc/mt:";
            for (std::size_t i = 0; i < rows.size(); i += 2)
            {
                const double mc = rows[i].chamfer_l1, mt = rows[i + 1].chamfer_l1;
                ok = ok && mt <= mc && mc < last_mc && mt < last_mt;
                last_mc = mc;
                last_mt = mt;
                detail += " " + fmt("%.2e", mc) + "/" + fmt("%.2e", mt);
            }
            detail += "; ";
        }
        return {ok, detail};
    }

    Outcome sphere_fit()
    {
        const PointSample noisy = noisy_points(unit_sphere(), 5000, 0.005, 1);
        const PointSample clean = sample_analytic_surface(unit_sphere(), 5000, 99);
        const double floor      = brute_chamfer_l1(clean.positions, noisy.positions);

        const FitResult r = fit(FitTarget::from_points(noisy), FitConfig {});
        const double final_cd = brute_chamfer_l1(sample_surface(r.mesh, 5000, 3).positions, noisy.positions);
        const double exact    = analytic_chamfer_l1(r.mesh, unit_sphere(), 20000, 1);
        const TopologyReport topo = analyze_topology(r.mesh);
        return {final_cd <= 3.0 * floor, "chamfer-L1 " + fmt("%.5f", final_cd) + " vs 3x floor " + fmt("%.5f", 3.0 * floor) + " (floor " + fmt("%.5f", floor) +
                                            ", literal 0.015 " + (final_cd <= 0.015 ? "met" : "not met") + "), exact " + fmt("%.5f", exact) + ", chi " +
                                            std::to_string(topo.euler_characteristic()) + ", components " + std::to_string(topo.components) +
                                            ", closed manifold " + (topo.closed_manifold() ? "yes" : "no")};
    }

    Outcome ablations()
    {
        const FitTarget target = FitTarget::from_points(sample_analytic_surface(thin_box(), 5000, 1));
        FitConfig base;
        base.base_resolution      = 16;
        base.iterations_per_level = 100;
        base.levels               = 1;
        auto score = [&](FitConfig cfg) { return analytic_chamfer_l1(fit(target, cfg).mesh, thin_box(), 20000, 1); };
        FitConfig frozen = base, flat = base;
        frozen.ablations.freeze_deformation = true;
        flat.ablations.disable_volume_subdiv = true;
        const double full = score(base), no_def = score(frozen), no_vol = score(flat);
        return {full < no_def && full < no_vol,
                "full " + fmt("%.5f", full) + ", frozen deformation " + fmt("%.5f", no_def) + ", no volume level " + fmt("%.5f", no_vol)};
    }

    Outcome loop_oracle()
    {
        double worst = 0.0;
        bool structure = true;
        for (const TriangleMesh & mesh : {make_tetrahedron_mesh(), make_icosahedron_mesh()})
        {
            const TriangleMesh expected = reference_loop(reference_loop(mesh));
            const TriangleMesh got      = loop_subdivide(mesh, AlphaField::constant(mesh.num_vertices(), 0.5), 2);
            const Match m               = matched_distance(got, expected);
            worst     = std::max(worst, m.max_distance);
            structure = structure && m.bijective && m.faces_match;
        }
        return {structure && worst < 1e-12, "max vertex distance " + fmt("%.1e", worst) + (structure ? ", connectivity matches" : ", connectivity differs")};
    }

    Outcome lsgan()
    {
        const LsganTerms a = lsgan_terms(1.0, 0.0);
        const LsganTerms b = lsgan_terms(0.3, 1.0);
        const LsganTerms c = lsgan_terms(0.0, 1.0);
        const bool ok = a.discriminator == 0.0 && a.generator == 0.5 && b.generator == 0.0 && c.discriminator == 1.0;
        return {ok, "L_D(1,0)=" + fmt("%g", a.discriminator) + " L_G(.,0)=" + fmt("%g", a.generator) + " L_G(.,1)=" + fmt("%g", b.generator) +
                        " L_D(0,1)=" + fmt("%g", c.discriminator)};
    }

    Outcome determinism()
    {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "tetfit_acceptance";
        fs::remove_all(dir);
        fs::create_directories(dir);
        auto path = [&](const std::string & f) { return (dir / f).string(); };
        auto run = [](std::vector<std::string> args) {
            args.insert(args.begin(), "tetfit");
            std::vector<const char *> argv;
            for (const auto & a : args)
                argv.push_back(a.c_str());
            std::ostringstream out, err;
            return cli::run(int(argv.size()), argv.data(), out, err);
        };
        auto slurp = [](const std::string & p) {
            std::ifstream f(p, std::ios::binary);
            std::ostringstream ss;
            ss << f.rdbuf();
            return ss.str();
        };
        bool ok = run({"sample", "--shape", "sphere:0.5,0.5,0.5,0.3", "--n", "5000", "--noise", "0.005", "--seed", "1", "--out", path("s.xyz")}) == 0;
        std::ofstream(path("c.cfg")) << "base_resolution = 16\niterations_per_level = 25\nlevels = 1\n";
        for (const auto & [tag, workers] : {std::pair {"a", "1"}, std::pair {"b", "1"}, std::pair {"c", "4"}})
        {
            ok = ok && run({"--workers", workers, "fit", "--points", path("s.xyz"), "--config", path("c.cfg"), "--seed", "7", "--out", path(std::string(tag) + ".obj")}) == 0;
        }
        const std::string mesh = slurp(path("a.obj")), hist = slurp(path("a.history.csv"));
        const bool repeat = ok && !mesh.empty() && mesh == slurp(path("b.obj")) && hist == slurp(path("b.history.csv"));
        const bool across = ok && mesh == slurp(path("c.obj")) && hist == slurp(path("c.history.csv"));
        fs::remove_all(dir);
        return {repeat && across, std::string("two runs ") + (repeat ? "byte-identical" : "differ") + ", workers 1 vs 4 " + (across ? "byte-identical" : "differ")};
    }
}

int main()
{
    struct Criterion
    {
        int id;
        const char * name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "chained gradient vs finite differences", 60, gradients},
        {2, "marching tetrahedra correctness", 10, marching},
        {3, "volume subdivision invariance", 60, volume_invariance},
        {4, "oracle benchmark MT <= MC, converging", 120, oracle},
        {5, "sphere fit within 3x the noise floor", 300, sphere_fit},
        {6, "ablation trends on the thin box", 600, ablations},
        {7, "Loop subdivision matches the textbook oracle", 60, loop_oracle},
        {8, "LSGAN arithmetic", 1, lsgan},
        {9, "CLI fit determinism", 300, determinism},
    };
    int failures = 0;
    for (const Criterion & c : criteria)
    {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = c.run();
        }
        catch (const std::exception & e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass    = o.pass && in_time;
        failures += pass ? 0 : 1;
        std::printf("%s criterion %d: %s | %s | %.1fs (limit %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs, c.limit_seconds,
                    in_time ? "" : ", exceeded");
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
