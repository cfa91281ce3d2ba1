#ifndef MICH_REPORT_HPP
#define MICH_REPORT_HPP

#include <string>

#include <json.hpp>

#include "mich/engine.hpp"
#include "mich/postprocess.hpp"

namespace mich {

inline const char* class_name(ComponentClass cls) {
    switch (cls) {
        case ComponentClass::mean: return "mean";
        case ComponentClass::var: return "var";
        case ComponentClass::meanvar: return "meanvar";
        case ComponentClass::poisson_rate: return "poisson-rate";
    }
    return "unknown";
}

inline const char* model_name(Model m) {
    switch (m) {
        case Model::gaussian: return "gaussian";
        case Model::multivariate_mean: return "mvmean";
        case Model::poisson: return "poisson";
    }
    return "unknown";
}

// JSON detection report; all time indices are one-based on the wire.
inline nlohmann::json detection_report(const ChangeReport& rep, Model model, std::size_t T,
                                       std::size_t d, double mu0, double lambda0,
                                       double elbo, int iterations, int L, int K, int J) {
    nlohmann::json doc;
    doc["schema_version"] = "1";
    doc["model"] = model_name(model);
    doc["T"] = T;
    doc["d"] = d;
    doc["mu0"] = mu0;
    doc["lambda0"] = lambda0;
    doc["elbo"] = elbo;
    doc["iterations"] = iterations;
    doc["counts"] = {{"L", L},          {"K", K},          {"J", J},
                     {"L_hat", rep.L_hat}, {"K_hat", rep.K_hat}, {"J_hat", rep.J_hat},
                     {"N_hat", rep.N_hat}};
    doc["changepoints"] = nlohmann::json::array();
    for (const ComponentReport& r : rep.components) {
        nlohmann::json item;
        item["class"] = class_name(r.cls);
        item["map_index"] = r.map_index + 1;
        item["map_probability"] = r.map_probability;
        nlohmann::json cs = nlohmann::json::array();
        for (std::size_t idx : r.cs.indices) cs.push_back(idx + 1);
        item["credible_set"] = std::move(cs);
        item["mass"] = r.cs.mass;
        item["detected"] = r.detected;
        doc["changepoints"].push_back(std::move(item));
    }
    return doc;
}

}  // namespace mich

#endif  // MICH_REPORT_HPP
