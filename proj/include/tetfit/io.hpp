#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fitting.hpp"
#include "mesh.hpp"
#include "point_sample.hpp"
#include "tetgrid.hpp"

namespace tetfit
{
    /// Shortest decimal text that parses back to the same double.
    std::string format_double(double x);

    // OBJ: `v x y z` and `f i j k` (1-based; `i/t/n` and negative indices are
    // accepted). Faces with more than three corners are rejected with
    // unsupported_face. Other statements are ignored.
    TriangleMesh parse_obj(std::istream & in);
    TriangleMesh read_obj(const std::string & path);

    /// Zero-area triangles (and vertices left unused) are dropped on export.
    void write_obj(std::ostream & out, const TriangleMesh & mesh);
    void write_obj(const std::string & path, const TriangleMesh & mesh);

    // XYZ: one `x y z` or `x y z nx ny nz` per line, the same form on every
    // line; `#` starts a comment. Normals are normalized on read.
    PointSample parse_xyz(std::istream & in);
    PointSample read_xyz(const std::string & path);
    void write_xyz(std::ostream & out, const PointSample & points);
    void write_xyz(const std::string & path, const PointSample & points);

    // Plain-text grid dump: header, then `v rest deformation sdf` and `t a b c d` lines.
    void write_grid(std::ostream & out, const TetGrid & grid);
    void write_grid(const std::string & path, const TetGrid & grid);
    TetGrid parse_grid(std::istream & in);
    TetGrid read_grid(const std::string & path);

    const char * scheme_name(GridScheme scheme);
    GridScheme parse_scheme(const std::string & name);

    // Fit configuration as flat `key = value` lines. Unknown keys, repeated
    // keys and malformed values are errors that name the line.
    using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

    ConfigEntries config_entries(const FitConfig & config);  // every key, in a fixed order
    void apply_config_entry(FitConfig & config, const std::string & key, const std::string & value);
    FitConfig parse_config(std::istream & in, FitConfig base = {});
    FitConfig read_config(const std::string & path, FitConfig base = {});
    void write_config(std::ostream & out, const FitConfig & config);

    /// Per-step loss history as CSV with a header row.
    void write_history_csv(std::ostream & out, const std::vector<StepRecord> & history);
    void write_bench_csv(std::ostream & out, const std::vector<BenchRow> & rows);
}
