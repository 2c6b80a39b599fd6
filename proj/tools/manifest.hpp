#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "tetfit/io.hpp"

namespace tetfit::cli
{
    /// What a fit run used and produced, written next to its outputs.
    struct RunManifest
    {
        std::string command;
        ConfigEntries config;  // every FitConfig key, as written in config files
        std::uint64_t seed = 0;
        int workers        = 1;
        std::map<std::string, std::string> versions;
        std::map<std::string, std::string> inputs;
        std::map<std::string, std::string> outputs;
        double seconds = 0.0;
        LossReport final_report;
        Index mesh_vertices = 0;
        Index mesh_faces    = 0;

        bool operator==(const RunManifest & other) const;
    };

    nlohmann::json to_json(const RunManifest & m);
    RunManifest manifest_from_json(const nlohmann::json & j);

    std::map<std::string, std::string> library_versions();
}
