#pragma once

#include <vector>

#include "types.hpp"

namespace tetfit
{
    /// Surface sample set. When drawn from a mesh, every point remembers the
    /// triangle and barycentric weights it came from so gradients can flow back
    /// to the mesh vertices; samples from other sources leave `faces` empty.
    struct PointSample
    {
        MatX3 positions;
        MatX3 normals;  // unit length; may be empty for raw point clouds
        std::vector<Index> faces;
        MatX3 barycentrics;

        Index size() const { return positions.rows(); }
        bool has_normals() const { return normals.rows() == positions.rows() && positions.rows() > 0; }
        bool has_provenance() const { return Index(faces.size()) == positions.rows() && positions.rows() > 0; }
    };
}
