#include "manifest.hpp"

#include <Eigen/Core>

namespace tetfit::cli
{
    namespace
    {
        nlohmann::json terms_json(const LossTerms & t)
        {
            return {{"cd", t.cd}, {"normal", t.normal}, {"gan", t.gan}, {"sdf", t.sdf}, {"deform", t.deform}};
        }

        LossTerms terms_from(const nlohmann::json & j)
        {
            LossTerms t;
            t.cd     = j.at("cd").get<double>();
            t.normal = j.at("normal").get<double>();
            t.gan    = j.at("gan").get<double>();
            t.sdf    = j.at("sdf").get<double>();
            t.deform = j.at("deform").get<double>();
            return t;
        }

        bool same_terms(const LossTerms & a, const LossTerms & b)
        {
            return a.cd == b.cd && a.normal == b.normal && a.gan == b.gan && a.sdf == b.sdf && a.deform == b.deform;
        }
    }

    bool RunManifest::operator==(const RunManifest & o) const
    {
        const LossWeights & wa = final_report.weights;
        const LossWeights & wb = o.final_report.weights;
        return command == o.command && config == o.config && seed == o.seed && workers == o.workers && versions == o.versions && inputs == o.inputs &&
               outputs == o.outputs && seconds == o.seconds && same_terms(final_report.terms, o.final_report.terms) && final_report.total == o.final_report.total &&
               wa.cd == wb.cd && wa.normal == wb.normal && wa.gan == wb.gan && wa.sdf == wb.sdf && wa.deform == wb.deform && mesh_vertices == o.mesh_vertices &&
               mesh_faces == o.mesh_faces;
    }

    nlohmann::json to_json(const RunManifest & m)
    {
        nlohmann::json config = nlohmann::json::array();
        for (const auto & [k, v] : m.config)
        {
            config.push_back({k, v});
        }
        const LossWeights & w = m.final_report.weights;
        return {
            {"command", m.command},
            {"config", config},
            {"seed", m.seed},
            {"workers", m.workers},
            {"versions", m.versions},
            {"inputs", m.inputs},
            {"outputs", m.outputs},
            {"timing", {{"seconds", m.seconds}}},
            {"final_report",
             {{"terms", terms_json(m.final_report.terms)},
              {"weights", {{"cd", w.cd}, {"normal", w.normal}, {"gan", w.gan}, {"sdf", w.sdf}, {"deform", w.deform}}},
              {"total", m.final_report.total}}},
            {"mesh", {{"vertices", m.mesh_vertices}, {"faces", m.mesh_faces}}},
        };
    }

    RunManifest manifest_from_json(const nlohmann::json & j)
    {
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        for (const auto & kv : j.at("config"))
        {
            m.config.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
        }
        m.seed     = j.at("seed").get<std::uint64_t>();
        m.workers  = j.at("workers").get<int>();
        m.versions = j.at("versions").get<std::map<std::string, std::string>>();
        m.inputs   = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs  = j.at("outputs").get<std::map<std::string, std::string>>();
        m.seconds  = j.at("timing").at("seconds").get<double>();
        const auto & r = j.at("final_report");
        m.final_report.terms = terms_from(r.at("terms"));
        const auto & w       = r.at("weights");
        m.final_report.weights = {w.at("cd").get<double>(), w.at("normal").get<double>(), w.at("gan").get<double>(), w.at("sdf").get<double>(),
                                  w.at("deform").get<double>()};
        m.final_report.total = r.at("total").get<double>();
        m.mesh_vertices      = j.at("mesh").at("vertices").get<Index>();
        m.mesh_faces         = j.at("mesh").at("faces").get<Index>();
        return m;
    }

    std::map<std::string, std::string> library_versions()
    {
        return {
            {"tetfit", TETFIT_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
        };
    }
}
