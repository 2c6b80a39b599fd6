#include "tetfit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace tetfit
{
    namespace
    {
        std::ifstream open_in(const std::string & path)
        {
            std::ifstream in(path);
            if (!in)
            {
                throw Error(ErrorCode::io, "cannot open '" + path + "' for reading");
            }
            return in;
        }

        std::ofstream open_out(const std::string & path)
        {
            std::ofstream out(path, std::ios::binary);
            if (!out)
            {
                throw Error(ErrorCode::io, "cannot open '" + path + "' for writing");
            }
            return out;
        }

        void finish(std::ostream & out, const std::string & path)
        {
            out.flush();
            if (!out)
            {
                throw Error(ErrorCode::io, "failed writing '" + path + "'");
            }
        }

        std::string trim(const std::string & s)
        {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos)
            {
                return {};
            }
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        }

        std::string strip_comment(const std::string & line)
        {
            return trim(line.substr(0, line.find('#')));
        }

        std::string where(Index line) { return "line " + std::to_string(line) + ": "; }

        bool parse_number(const std::string & token, double & out)
        {
            const char * end = token.data() + token.size();
            auto [ptr, ec]   = std::from_chars(token.data(), end, out);
            return ec == std::errc() && ptr == end;
        }

        template <typename Int>
        bool parse_integer(const std::string & token, Int & out)
        {
            const char * end = token.data() + token.size();
            auto [ptr, ec]   = std::from_chars(token.data(), end, out);
            return ec == std::errc() && ptr == end;
        }

        std::vector<std::string> split_ws(const std::string & line)
        {
            std::istringstream ss(line);
            std::vector<std::string> out;
            for (std::string t; ss >> t;)
            {
                out.push_back(t);
            }
            return out;
        }

        double number_or_throw(const std::string & token, Index line)
        {
            double x = 0.0;
            if (!parse_number(token, x) || !std::isfinite(x))
            {
                throw Error(ErrorCode::invalid_argument, where(line) + "bad number '" + token + "'");
            }
            return x;
        }

        void write_rows(std::ostream & out, const char * tag, const MatX3 & m)
        {
            for (Index i = 0; i < m.rows(); ++i)
            {
                out << tag << ' ' << format_double(m(i, 0)) << ' ' << format_double(m(i, 1)) << ' ' << format_double(m(i, 2)) << '\n';
            }
        }
    }

    std::string format_double(double x)
    {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
        return std::string(buf, ptr);
    }

    // ---- OBJ ----

    TriangleMesh parse_obj(std::istream & in)
    {
        std::vector<Vec3> vertices;
        std::vector<std::array<Index, 3>> faces;
        std::string raw;
        Index line_no = 0;
        while (std::getline(in, raw))
        {
            ++line_no;
            const auto tokens = split_ws(strip_comment(raw));
            if (tokens.empty())
            {
                continue;
            }
            if (tokens[0] == "v")
            {
                if (tokens.size() < 4)
                {
                    throw Error(ErrorCode::invalid_argument, where(line_no) + "vertex needs three coordinates");
                }
                vertices.emplace_back(number_or_throw(tokens[1], line_no), number_or_throw(tokens[2], line_no), number_or_throw(tokens[3], line_no));
            }
            else if (tokens[0] == "f")
            {
                if (tokens.size() != 4)
                {
                    throw Error(ErrorCode::unsupported_face, where(line_no) + "face with " + std::to_string(tokens.size() - 1) + " corners; only triangles are supported");
                }
                std::array<Index, 3> f {};
                for (int c = 0; c < 3; ++c)
                {
                    const std::string idx = tokens[c + 1].substr(0, tokens[c + 1].find('/'));
                    Index k               = 0;
                    if (!parse_integer(idx, k) || k == 0)
                    {
                        throw Error(ErrorCode::invalid_argument, where(line_no) + "bad face index '" + tokens[c + 1] + "'");
                    }
                    k = k > 0 ? k - 1 : Index(vertices.size()) + k;
                    if (k < 0 || k >= Index(vertices.size()))
                    {
                        throw Error(ErrorCode::invalid_argument, where(line_no) + "face index out of range '" + tokens[c + 1] + "'");
                    }
                    f[c] = k;
                }
                faces.push_back(f);
            }
        }
        TriangleMesh mesh;
        mesh.positions.resize(Index(vertices.size()), 3);
        for (std::size_t i = 0; i < vertices.size(); ++i)
        {
            mesh.positions.row(Index(i)) = vertices[i].transpose();
        }
        mesh.triangles.resize(Index(faces.size()), 3);
        for (std::size_t f = 0; f < faces.size(); ++f)
        {
            for (int c = 0; c < 3; ++c)
            {
                mesh.triangles(Index(f), c) = faces[f][c];
            }
        }
        return mesh;
    }

    TriangleMesh read_obj(const std::string & path)
    {
        auto in = open_in(path);
        return parse_obj(in);
    }

    void write_obj(std::ostream & out, const TriangleMesh & mesh)
    {
        bool degenerate = false;
        for (Index f = 0; f < mesh.num_triangles() && !degenerate; ++f)
        {
            degenerate = !(triangle_area(mesh, f) > 0.0);
        }
        const TriangleMesh clean = degenerate ? remove_degenerate_triangles(mesh, 0.0) : mesh;
        write_rows(out, "v", clean.positions);
        for (Index f = 0; f < clean.num_triangles(); ++f)
        {
            out << "f " << clean.triangles(f, 0) + 1 << ' ' << clean.triangles(f, 1) + 1 << ' ' << clean.triangles(f, 2) + 1 << '\n';
        }
    }

    void write_obj(const std::string & path, const TriangleMesh & mesh)
    {
        auto out = open_out(path);
        write_obj(out, mesh);
        finish(out, path);
    }

    // ---- XYZ ----

    PointSample parse_xyz(std::istream & in)
    {
        std::vector<std::array<double, 6>> rows;
        std::size_t width = 0;
        std::string raw;
        Index line_no = 0;
        while (std::getline(in, raw))
        {
            ++line_no;
            const auto tokens = split_ws(strip_comment(raw));
            if (tokens.empty())
            {
                continue;
            }
            if (tokens.size() != 3 && tokens.size() != 6)
            {
                throw Error(ErrorCode::invalid_argument, where(line_no) + "expected 3 or 6 numbers, got " + std::to_string(tokens.size()));
            }
            if (width == 0)
            {
                width = tokens.size();
            }
            else if (tokens.size() != width)
            {
                throw Error(ErrorCode::invalid_argument, where(line_no) + "mixed 3- and 6-column rows");
            }
            std::array<double, 6> r {};
            for (std::size_t i = 0; i < tokens.size(); ++i)
            {
                r[i] = number_or_throw(tokens[i], line_no);
            }
            rows.push_back(r);
        }
        PointSample out;
        const Index n = Index(rows.size());
        out.positions.resize(n, 3);
        if (width == 6)
        {
            out.normals.resize(n, 3);
        }
        for (Index i = 0; i < n; ++i)
        {
            const auto & r = rows[std::size_t(i)];
            out.positions.row(i) = Vec3(r[0], r[1], r[2]).transpose();
            if (width == 6)
            {
                const Vec3 nrm(r[3], r[4], r[5]);
                if (!(nrm.norm() > 0.0))
                {
                    throw Error(ErrorCode::invalid_argument, "point " + std::to_string(i) + ": zero normal");
                }
                out.normals.row(i) = nrm.normalized().transpose();
            }
        }
        return out;
    }

    PointSample read_xyz(const std::string & path)
    {
        auto in = open_in(path);
        return parse_xyz(in);
    }

    void write_xyz(std::ostream & out, const PointSample & points)
    {
        const bool normals = points.has_normals();
        for (Index i = 0; i < points.size(); ++i)
        {
            out << format_double(points.positions(i, 0)) << ' ' << format_double(points.positions(i, 1)) << ' ' << format_double(points.positions(i, 2));
            if (normals)
            {
                out << ' ' << format_double(points.normals(i, 0)) << ' ' << format_double(points.normals(i, 1)) << ' ' << format_double(points.normals(i, 2));
            }
            out << '\n';
        }
    }

    void write_xyz(const std::string & path, const PointSample & points)
    {
        auto out = open_out(path);
        write_xyz(out, points);
        finish(out, path);
    }

    // ---- grid ----

    const char * scheme_name(GridScheme scheme)
    {
        return scheme == GridScheme::bcc ? "bcc" : "six_tet";
    }

    GridScheme parse_scheme(const std::string & name)
    {
        if (name == "six_tet" || name == "six-tet")
            return GridScheme::six_tet;
        if (name == "bcc")
            return GridScheme::bcc;
        throw Error(ErrorCode::invalid_argument, "unknown grid scheme '" + name + "' (six_tet or bcc)");
    }

    void write_grid(std::ostream & out, const TetGrid & grid)
    {
        out << "tetgrid 1\n";
        out << "scheme " << scheme_name(grid.scheme) << '\n';
        out << "base_resolution " << grid.base_resolution << '\n';
        out << "level " << grid.level << '\n';
        out << "clamp_radius " << format_double(grid.clamp_radius) << '\n';
        out << "counts " << grid.num_vertices() << ' ' << grid.num_tets() << '\n';
        for (Index v = 0; v < grid.num_vertices(); ++v)
        {
            out << "v";
            for (int a = 0; a < 3; ++a)
                out << ' ' << format_double(grid.rest_positions(v, a));
            for (int a = 0; a < 3; ++a)
                out << ' ' << format_double(grid.deformations(v, a));
            out << ' ' << format_double(grid.sdf[v]) << '\n';
        }
        for (Index t = 0; t < grid.num_tets(); ++t)
        {
            out << "t " << grid.tets(t, 0) << ' ' << grid.tets(t, 1) << ' ' << grid.tets(t, 2) << ' ' << grid.tets(t, 3) << '\n';
        }
    }

    void write_grid(const std::string & path, const TetGrid & grid)
    {
        auto out = open_out(path);
        write_grid(out, grid);
        finish(out, path);
    }

    TetGrid parse_grid(std::istream & in)
    {
        TetGrid grid;
        std::string raw;
        Index line_no = 0, nv = -1, nt = -1, v = 0, t = 0;
        auto bad = [&](const std::string & what) { return Error(ErrorCode::invalid_argument, where(line_no) + what); };
        while (std::getline(in, raw))
        {
            ++line_no;
            const auto tok = split_ws(strip_comment(raw));
            if (tok.empty())
                continue;
            const std::string & key = tok[0];
            if (line_no == 1)
            {
                if (key != "tetgrid" || tok.size() != 2 || tok[1] != "1")
                    throw bad("not a tetgrid v1 file");
                continue;
            }
            if (key == "scheme" && tok.size() == 2)
                grid.scheme = parse_scheme(tok[1]);
            else if (key == "base_resolution" && tok.size() == 2 && parse_integer(tok[1], grid.base_resolution))
                continue;
            else if (key == "level" && tok.size() == 2 && parse_integer(tok[1], grid.level))
                continue;
            else if (key == "clamp_radius" && tok.size() == 2)
                grid.clamp_radius = number_or_throw(tok[1], line_no);
            else if (key == "counts" && tok.size() == 3 && parse_integer(tok[1], nv) && parse_integer(tok[2], nt) && nv >= 0 && nt >= 0)
            {
                grid.rest_positions.resize(nv, 3);
                grid.deformations.resize(nv, 3);
                grid.sdf.resize(nv);
                grid.tets.resize(nt, 4);
            }
            else if (key == "v" && tok.size() == 8)
            {
                if (v >= nv)
                    throw bad("more vertices than declared");
                for (int a = 0; a < 3; ++a)
                {
                    grid.rest_positions(v, a) = number_or_throw(tok[1 + a], line_no);
                    grid.deformations(v, a)   = number_or_throw(tok[4 + a], line_no);
                }
                grid.sdf[v++] = number_or_throw(tok[7], line_no);
            }
            else if (key == "t" && tok.size() == 5)
            {
                if (t >= nt)
                    throw bad("more tets than declared");
                for (int c = 0; c < 4; ++c)
                {
                    Index k = 0;
                    if (!parse_integer(tok[1 + c], k) || k < 0 || k >= nv)
                        throw bad("bad tet index '" + tok[1 + c] + "'");
                    grid.tets(t, c) = k;
                }
                ++t;
            }
            else
            {
                throw bad("unexpected '" + key + "'");
            }
        }
        if (nv < 0 || v != nv || t != nt)
        {
            throw Error(ErrorCode::invalid_argument, "grid file is truncated");
        }
        return grid;
    }

    TetGrid read_grid(const std::string & path)
    {
        auto in = open_in(path);
        return parse_grid(in);
    }

    // ---- config ----

    namespace
    {
        struct Field
        {
            const char * key;
            std::string (*get)(const FitConfig &);
            void (*set)(FitConfig &, const std::string &);
        };

        int to_int(const std::string & s)
        {
            int x = 0;
            if (!parse_integer(s, x))
                throw Error(ErrorCode::invalid_argument, "expected an integer, got '" + s + "'");
            return x;
        }

        double to_real(const std::string & s)
        {
            double x = 0.0;
            if (!parse_number(s, x) || !std::isfinite(x))
                throw Error(ErrorCode::invalid_argument, "expected a number, got '" + s + "'");
            return x;
        }

        bool to_bool(const std::string & s)
        {
            if (s == "true" || s == "1")
                return true;
            if (s == "false" || s == "0")
                return false;
            throw Error(ErrorCode::invalid_argument, "expected true or false, got '" + s + "'");
        }

        std::string from_bool(bool b) { return b ? "true" : "false"; }

#define TETFIT_INT(name, member) \
    Field { name, [](const FitConfig & c) { return std::to_string(c.member); }, [](FitConfig & c, const std::string & s) { c.member = decltype(c.member)(to_int(s)); } }
#define TETFIT_REAL(name, member) \
    Field { name, [](const FitConfig & c) { return format_double(c.member); }, [](FitConfig & c, const std::string & s) { c.member = to_real(s); } }
#define TETFIT_BOOL(name, member) \
    Field { name, [](const FitConfig & c) { return from_bool(c.member); }, [](FitConfig & c, const std::string & s) { c.member = to_bool(s); } }

        const std::vector<Field> & fields()
        {
            static const std::vector<Field> table = {
                TETFIT_INT("base_resolution", base_resolution),
                Field {"scheme", [](const FitConfig & c) { return std::string(scheme_name(c.scheme)); },
                       [](FitConfig & c, const std::string & s) { c.scheme = parse_scheme(s); }},
                TETFIT_INT("iterations_per_level", iterations_per_level),
                TETFIT_INT("levels", levels),
                TETFIT_INT("surface_subdiv_iters", surface_subdiv_iters),
                TETFIT_INT("sample_count", sample_count),
                TETFIT_INT("target_samples", target_samples),
                TETFIT_INT("normal_neighbours", normal_neighbours),
                Field {"chamfer_order", [](const FitConfig & c) { return std::string(c.chamfer_order == ChamferOrder::l1 ? "l1" : "l2"); },
                       [](FitConfig & c, const std::string & s) {
                           if (s == "l1")
                               c.chamfer_order = ChamferOrder::l1;
                           else if (s == "l2")
                               c.chamfer_order = ChamferOrder::l2;
                           else
                               throw Error(ErrorCode::invalid_argument, "chamfer_order must be l1 or l2, got '" + s + "'");
                       }},
                TETFIT_REAL("lambda_cd", weights.cd),
                TETFIT_REAL("lambda_normal", weights.normal),
                TETFIT_REAL("lambda_gan", weights.gan),
                TETFIT_REAL("lambda_sdf", weights.sdf),
                TETFIT_REAL("lambda_def", weights.deform),
                TETFIT_REAL("step_size", step_size),
                TETFIT_REAL("deform_step_size", deform_step_size),
                TETFIT_REAL("alpha_step_size", alpha_step_size),
                TETFIT_REAL("beta1", beta1),
                TETFIT_REAL("beta2", beta2),
                TETFIT_REAL("adam_eps", adam_eps),
                Field {"seed", [](const FitConfig & c) { return std::to_string(c.seed); },
                       [](FitConfig & c, const std::string & s) {
                           std::uint64_t x = 0;
                           if (!parse_integer(s, x))
                               throw Error(ErrorCode::invalid_argument, "expected a non-negative integer, got '" + s + "'");
                           c.seed = x;
                       }},
                TETFIT_BOOL("freeze_deformation", ablations.freeze_deformation),
                TETFIT_BOOL("disable_volume_subdiv", ablations.disable_volume_subdiv),
                TETFIT_BOOL("disable_surface_subdiv", ablations.disable_surface_subdiv),
            };
            return table;
        }

#undef TETFIT_INT
#undef TETFIT_REAL
#undef TETFIT_BOOL
    }

    ConfigEntries config_entries(const FitConfig & config)
    {
        ConfigEntries out;
        for (const Field & f : fields())
        {
            out.emplace_back(f.key, f.get(config));
        }
        return out;
    }

    void apply_config_entry(FitConfig & config, const std::string & key, const std::string & value)
    {
        for (const Field & f : fields())
        {
            if (key == f.key)
            {
                f.set(config, value);
                return;
            }
        }
        throw Error(ErrorCode::invalid_argument, "unknown config key '" + key + "'");
    }

    FitConfig parse_config(std::istream & in, FitConfig base)
    {
        std::set<std::string> seen;
        std::string raw;
        Index line_no = 0;
        while (std::getline(in, raw))
        {
            ++line_no;
            const std::string line = strip_comment(raw);
            if (line.empty())
            {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
            {
                throw Error(ErrorCode::invalid_argument, where(line_no) + "expected key = value");
            }
            const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
            if (!seen.insert(key).second)
            {
                throw Error(ErrorCode::invalid_argument, where(line_no) + "repeated key '" + key + "'");
            }
            try
            {
                apply_config_entry(base, key, value);
            }
            catch (const Error & e)
            {
                throw Error(e.code(), where(line_no) + e.what());
            }
        }
        base.validate();
        return base;
    }

    FitConfig read_config(const std::string & path, FitConfig base)
    {
        auto in = open_in(path);
        return parse_config(in, base);
    }

    void write_config(std::ostream & out, const FitConfig & config)
    {
        for (const auto & [k, v] : config_entries(config))
        {
            out << k << " = " << v << '\n';
        }
    }

    // ---- CSV ----

    void write_history_csv(std::ostream & out, const std::vector<StepRecord> & history)
    {
        out << "iteration,level,total,cd,normal,gan,sdf,deform,mesh_vertices,mesh_faces\n";
        for (const StepRecord & r : history)
        {
            const LossTerms & t = r.report.terms;
            out << r.iteration << ',' << r.level << ',' << format_double(r.report.total) << ',' << format_double(t.cd) << ',' << format_double(t.normal) << ','
                << format_double(t.gan) << ',' << format_double(t.sdf) << ',' << format_double(t.deform) << ',' << r.mesh_vertices << ',' << r.mesh_faces << '\n';
        }
    }

    void write_bench_csv(std::ostream & out, const std::vector<BenchRow> & rows)
    {
        out << "method,budget,vertices,resolution,chamfer_l1\n";
        for (const BenchRow & r : rows)
        {
            out << r.method << ',' << r.budget << ',' << r.vertices << ',' << r.resolution << ',' << format_double(r.chamfer_l1) << '\n';
        }
    }
}
