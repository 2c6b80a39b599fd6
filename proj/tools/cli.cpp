#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "tetfit/fitting.hpp"
#include "tetfit/io.hpp"
#include "tetfit/marching.hpp"
#include "tetfit/parallel.hpp"
#include "tetfit/sdfield.hpp"

namespace tetfit::cli
{
    namespace
    {
        namespace fs = std::filesystem;

        std::string sibling(const std::string & path, const std::string & suffix)
        {
            fs::path p(path);
            return (p.parent_path() / (p.stem().string() + suffix)).string();
        }

        void write_text(const std::string & path, const std::string & text)
        {
            std::ofstream f(path, std::ios::binary);
            if (!f || !(f << text) || !f.flush())
            {
                throw Error(ErrorCode::io, "cannot write '" + path + "'");
            }
        }

        Vec3 parse_point(const std::string & text)
        {
            std::vector<double> xs;
            std::stringstream ss(text);
            for (std::string tok; std::getline(ss, tok, ',');)
            {
                try
                {
                    std::size_t used = 0;
                    xs.push_back(std::stod(tok, &used));
                    if (used != tok.size())
                        throw std::invalid_argument(tok);
                }
                catch (const std::exception &)
                {
                    throw Error(ErrorCode::invalid_argument, "bad coordinate '" + tok + "' in '" + text + "'");
                }
            }
            if (xs.size() != 3)
            {
                throw Error(ErrorCode::invalid_argument, "expected x,y,z, got '" + text + "'");
            }
            return Vec3(xs[0], xs[1], xs[2]);
        }

        TetGrid shape_grid(const AnalyticSdf & shape, int res, GridScheme scheme)
        {
            TetGrid grid = build_grid(res, scheme);
            for (Index v = 0; v < grid.num_vertices(); ++v)
            {
                grid.sdf[v] = eval_analytic<double>(shape, grid.position(v));
            }
            return grid;
        }

        TriangleMesh lattice_mc(const AnalyticSdf & shape, int res)
        {
            const Index side = res + 1;
            VecX values(side * side * side);
            for (Index k = 0; k < side; ++k)
                for (Index j = 0; j < side; ++j)
                    for (Index i = 0; i < side; ++i)
                        values[i + side * (j + side * k)] = eval_analytic<double>(shape, Vec3(double(i), double(j), double(k)) / double(res));
            return marching_cubes(values, res);
        }

        int exit_code(ErrorCode code)
        {
            switch (code)
            {
                case ErrorCode::io: return kIoFailure;
                case ErrorCode::invalid_argument:
                case ErrorCode::unsupported_face:
                case ErrorCode::open_surface: return kUsage;
                default: return kFailure;
            }
        }
    }

    int run(int argc, const char * const * argv, std::ostream & out, std::ostream & err)
    {
        CLI::App app {"Deformable tet-grid iso-surfacing: extraction, fitting and benchmarks", "tetfit"};
        app.require_subcommand(1);
        int workers = int(std::max(1u, std::thread::hardware_concurrency()));
        app.add_option("--workers", workers, "Worker threads for the inner kernels")->check(CLI::PositiveNumber);

        // build
        auto * build = app.add_subcommand("build", "Build a tet grid, optionally filled from an analytic shape");
        int build_res = 32;
        std::string build_scheme = "six_tet", build_shape, build_out;
        build->add_option("--res", build_res, "Grid resolution (cells per axis)")->check(CLI::PositiveNumber);
        build->add_option("--scheme", build_scheme, "six_tet or bcc");
        build->add_option("--shape", build_shape, "Analytic shape, e.g. sphere:0.5,0.5,0.5,0.3");
        build->add_option("--out", build_out, "Grid file")->required();

        // extract
        auto * extract = app.add_subcommand("extract", "Extract a triangle mesh from an analytic shape or a grid file");
        int extract_res = 32;
        std::string extract_shape, extract_grid, extract_method = "mt", extract_scheme = "six_tet", extract_out;
        auto * shape_opt = extract->add_option("--shape", extract_shape, "Analytic shape");
        auto * grid_opt  = extract->add_option("--grid", extract_grid, "Grid file written by `build`");
        shape_opt->excludes(grid_opt);
        extract->add_option("--res", extract_res, "Resolution")->check(CLI::PositiveNumber);
        extract->add_option("--method", extract_method, "mt or mc")->check(CLI::IsMember({"mt", "mc"}));
        extract->add_option("--scheme", extract_scheme, "Grid scheme for mt: six_tet or bcc");
        extract->add_option("--out", extract_out, "OBJ file")->required();

        // fit
        auto * fitc = app.add_subcommand("fit", "Fit a grid to a point cloud or a closed mesh");
        std::string fit_points, fit_mesh, fit_config, fit_out, fit_history, fit_manifest;
        std::vector<std::string> fit_ablate, fit_set;
        std::uint64_t fit_seed = 0;
        auto * points_opt = fitc->add_option("--points", fit_points, "XYZ point cloud");
        auto * mesh_opt   = fitc->add_option("--mesh", fit_mesh, "Closed OBJ mesh");
        points_opt->excludes(mesh_opt);
        fitc->add_option("--config", fit_config, "key = value config file");
        fitc->add_option("--set", fit_set, "Config override key=value (repeatable)");
        auto * seed_opt = fitc->add_option("--seed", fit_seed, "Random seed (overrides the config)");
        fitc->add_option("--ablate", fit_ablate, "no-deform, no-volume or no-surface (repeatable)")
            ->check(CLI::IsMember({"no-deform", "no-volume", "no-surface"}));
        fitc->add_option("--out", fit_out, "Output OBJ")->required();
        fitc->add_option("--history", fit_history, "Loss history CSV (default: <out>.history.csv)");
        fitc->add_option("--manifest", fit_manifest, "Run manifest JSON (default: <out>.manifest.json)");

        // bench
        auto * bench = app.add_subcommand("bench", "MC vs MT oracle benchmark at equal SDF query budgets");
        std::string bench_shape, bench_out, bench_config;
        std::vector<Index> budgets;
        Index bench_samples = 20000;
        std::uint64_t bench_seed = 0;
        bool bench_fit = false;
        bench->add_option("--shape", bench_shape, "Analytic shape")->required();
        bench->add_option("--budgets", budgets, "Comma-separated query budgets")->delimiter(',')->required();
        bench->add_option("--samples", bench_samples, "Evaluation samples per direction")->check(CLI::PositiveNumber);
        bench->add_option("--seed", bench_seed, "Random seed");
        bench->add_flag("--fit", bench_fit, "Also fit a grid at each MT resolution");
        bench->add_option("--config", bench_config, "Fit config for --fit");
        bench->add_option("--out", bench_out, "CSV file")->required();

        // patch
        auto * patch = app.add_subcommand("patch", "Sample the signed distance of a mesh on an n^3 lattice");
        std::string patch_mesh, patch_center, patch_out;
        int patch_n = 16;
        double patch_extent = 4.0 / 32.0;
        std::uint64_t patch_seed = 0;
        patch->add_option("--mesh", patch_mesh, "Closed OBJ mesh")->required();
        patch->add_option("--center", patch_center, "x,y,z (default: a high-curvature vertex picked with --seed)");
        patch->add_option("--seed", patch_seed, "Seed for the curvature pick");
        patch->add_option("--n", patch_n, "Lattice points per axis")->check(CLI::Range(2, 256));
        patch->add_option("--extent", patch_extent, "Half-width of the lattice")->check(CLI::PositiveNumber);
        patch->add_option("--out", patch_out, "CSV file")->required();

        // sample
        auto * sample = app.add_subcommand("sample", "Write surface samples of an analytic shape as XYZ");
        std::string sample_shape, sample_out;
        Index sample_n = 5000;
        double sample_noise = 0.0;
        std::uint64_t sample_seed = 0;
        bool sample_normals = false;
        sample->add_option("--shape", sample_shape, "Analytic shape")->required();
        sample->add_option("--n", sample_n, "Number of points")->check(CLI::PositiveNumber);
        sample->add_option("--noise", sample_noise, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);
        sample->add_option("--seed", sample_seed, "Random seed");
        sample->add_flag("--normals", sample_normals, "Write x y z nx ny nz rows");
        sample->add_option("--out", sample_out, "XYZ file")->required();

        try
        {
            app.parse(argc, argv);
        }
        catch (const CLI::ParseError & e)
        {
            return app.exit(e, out, err) == 0 ? kOk : kUsage;
        }

        try
        {
            set_worker_count(workers);

            if (*build)
            {
                TetGrid grid = build_grid(build_res, parse_scheme(build_scheme));
                if (!build_shape.empty())
                {
                    grid = shape_grid(parse_shape(build_shape), build_res, grid.scheme);
                }
                write_grid(build_out, grid);
                out << "grid: " << grid.num_vertices() << " vertices, " << grid.num_tets() << " tets, " << surface_tets(grid).size() << " surface tets\n";
            }
            else if (*extract)
            {
                if (extract_shape.empty() == extract_grid.empty())
                {
                    throw Error(ErrorCode::invalid_argument, "extract needs exactly one of --shape or --grid");
                }
                TriangleMesh mesh;
                if (!extract_grid.empty())
                {
                    if (extract_method != "mt")
                        throw Error(ErrorCode::invalid_argument, "grid files only support --method mt");
                    mesh = marching_tetrahedra(read_grid(extract_grid));
                }
                else
                {
                    const AnalyticSdf shape = parse_shape(extract_shape);
                    mesh = extract_method == "mc" ? lattice_mc(shape, extract_res) : marching_tetrahedra(shape_grid(shape, extract_res, parse_scheme(extract_scheme)));
                }
                write_obj(extract_out, mesh);
                const TopologyReport topo = analyze_topology(mesh);
                out << "mesh: " << mesh.num_vertices() << " vertices, " << mesh.num_triangles() << " faces, euler " << topo.euler_characteristic()
                    << (topo.closed_manifold() ? ", closed manifold" : "") << '\n';
            }
            else if (*fitc)
            {
                if (fit_points.empty() == fit_mesh.empty())
                {
                    throw Error(ErrorCode::invalid_argument, "fit needs exactly one of --points or --mesh");
                }
                FitConfig cfg = fit_config.empty() ? FitConfig {} : read_config(fit_config);
                for (const std::string & kv : fit_set)
                {
                    const auto eq = kv.find('=');
                    if (eq == std::string::npos)
                        throw Error(ErrorCode::invalid_argument, "--set expects key=value, got '" + kv + "'");
                    apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
                }
                if (*seed_opt)
                    cfg.seed = fit_seed;
                for (const std::string & a : fit_ablate)
                {
                    if (a == "no-deform")
                        cfg.ablations.freeze_deformation = true;
                    else if (a == "no-volume")
                        cfg.ablations.disable_volume_subdiv = true;
                    else
                        cfg.ablations.disable_surface_subdiv = true;
                }
                cfg.validate();

                const FitTarget target = fit_points.empty() ? FitTarget::from_mesh(read_obj(fit_mesh), cfg.target_samples, cfg.seed)
                                                            : FitTarget::from_points(read_xyz(fit_points), cfg.normal_neighbours);
                const auto t0          = std::chrono::steady_clock::now();
                const FitResult result = fit(target, cfg);
                const double seconds   = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

                if (fit_history.empty())
                    fit_history = sibling(fit_out, ".history.csv");
                if (fit_manifest.empty())
                    fit_manifest = sibling(fit_out, ".manifest.json");
                write_obj(fit_out, result.mesh);
                std::ostringstream csv;
                write_history_csv(csv, result.history);
                write_text(fit_history, csv.str());

                RunManifest m;
                m.command  = "fit";
                m.config   = config_entries(cfg);
                m.seed     = cfg.seed;
                m.workers  = worker_count();
                m.versions = library_versions();
                m.inputs   = {{fit_points.empty() ? "mesh" : "points", fit_points.empty() ? fit_mesh : fit_points}};
                if (!fit_config.empty())
                    m.inputs["config"] = fit_config;
                m.outputs       = {{"mesh", fit_out}, {"history", fit_history}, {"manifest", fit_manifest}};
                m.seconds       = seconds;
                m.final_report  = result.history.back().report;
                m.mesh_vertices = result.mesh.num_vertices();
                m.mesh_faces    = result.mesh.num_triangles();
                write_text(fit_manifest, to_json(m).dump(2) + "\n");

                out << "fit: " << result.history.size() << " steps, loss " << format_double(result.history.front().report.total) << " -> "
                    << format_double(result.history.back().report.total) << ", chamfer " << format_double(result.history.front().report.terms.cd) << " -> "
                    << format_double(result.history.back().report.terms.cd) << ", " << result.mesh.num_triangles() << " faces\n";
            }
            else if (*bench)
            {
                std::optional<FitConfig> fc;
                if (bench_fit)
                    fc = bench_config.empty() ? FitConfig {} : read_config(bench_config);
                const std::vector<BenchRow> rows = oracle_bench(parse_shape(bench_shape), budgets, bench_samples, bench_seed, fc);
                std::ostringstream csv;
                write_bench_csv(csv, rows);
                write_text(bench_out, csv.str());
                out << csv.str();
            }
            else if (*sample)
            {
                PointSample pts = sample_analytic_surface(parse_shape(sample_shape), sample_n, sample_seed);
                if (sample_noise > 0.0)
                {
                    std::mt19937_64 gen(sample_seed ^ 0x6e6f697365ULL);
                    std::normal_distribution<double> noise(0.0, sample_noise);
                    for (Index i = 0; i < pts.size(); ++i)
                        for (int a = 0; a < 3; ++a)
                            pts.positions(i, a) += noise(gen);
                }
                if (!sample_normals)
                    pts.normals.resize(0, 3);
                std::ostringstream xyz;
                write_xyz(xyz, pts);
                write_text(sample_out, xyz.str());
                out << "sample: " << pts.size() << " points\n";
            }
            else if (*patch)
            {
                const MeshSdf sdf(read_obj(patch_mesh));
                Vec3 center;
                if (!patch_center.empty())
                {
                    center = parse_point(patch_center);
                }
                else
                {
                    const VertexId v = high_curvature_vertices(sdf.mesh(), 1, patch_seed).front();
                    center           = sdf.mesh().vertex(v.value);
                }
                const ScalarPatch p = sdf_patch(sdf, center, patch_n, patch_extent);
                std::ostringstream csv;
                csv << "i,j,k,x,y,z,sdf\n";
                for (Index f = 0; f < p.values.size(); ++f)
                {
                    const Vec3 x = p.point(f);
                    csv << f % p.n << ',' << (f / p.n) % p.n << ',' << f / (Index(p.n) * p.n) << ',' << format_double(x.x()) << ',' << format_double(x.y()) << ','
                        << format_double(x.z()) << ',' << format_double(p.values[f]) << '\n';
                }
                write_text(patch_out, csv.str());
                out << "patch: " << p.values.size() << " values around " << format_double(center.x()) << ',' << format_double(center.y()) << ','
                    << format_double(center.z()) << '\n';
            }
            return kOk;
        }
        catch (const Error & e)
        {
            err << "error: " << e.what() << '\n';
            return exit_code(e.code());
        }
        catch (const std::exception & e)
        {
            err << "error: " << e.what() << '\n';
            return kFailure;
        }
    }
}
