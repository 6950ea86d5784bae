#include "dsc/aligner.hpp"

#include <algorithm>
#include <cmath>

#include "dsc/errors.hpp"
#include "dsc/hash.hpp"
#include "dsc/rng.hpp"

namespace dsc {

void AlignerConfig::validate() const {
    if (hidden_units < 1) throw ConfigError("aligner.hidden_units must be >= 1");
    if (init_scale < 0.0) throw ConfigError("aligner.init_scale must be >= 0");
    if (reference_id.empty()) throw ConfigError("aligner.reference_id must be set");
    if (fallback_reference_id && *fallback_reference_id == reference_id) {
        throw ConfigError("aligner.fallback_reference_id must differ from reference_id");
    }
}

double ScoreMapping::forward(double s) const {
    double acc = s + b_out;
    for (size_t k = 0; k < w_in.size(); ++k) {
        acc += w_out[k] * std::tanh(w_in[k] * s + b_in[k]);
    }
    return acc;
}

double mapping_backward(const ScoreMapping& m, double s, double upstream, ScoreMappingGrad* grad) {
    double ds = 1.0;  // the unit skip
    for (size_t k = 0; k < m.w_in.size(); ++k) {
        const double t = std::tanh(m.w_in[k] * s + m.b_in[k]);
        const double dt = 1.0 - t * t;
        ds += m.w_out[k] * dt * m.w_in[k];
        if (grad) {
            grad->w_out[k] += upstream * t;
            grad->w_in[k] += upstream * m.w_out[k] * dt * s;
            grad->b_in[k] += upstream * m.w_out[k] * dt;
        }
    }
    if (grad) grad->b_out += upstream;
    return upstream * ds;
}

size_t AlignerParams::param_count() const {
    size_t total = 0;
    for (const auto& [id, m] : mappings) {
        (void)id;
        total += m.param_count();
    }
    return total;
}

AlignerParams init_aligner(const AlignerConfig& cfg, const std::vector<std::string>& dataset_ids,
                           uint64_t seed) {
    cfg.validate();
    if (std::find(dataset_ids.begin(), dataset_ids.end(), cfg.reference_id) == dataset_ids.end()) {
        throw ConfigError("aligner reference dataset '" + cfg.reference_id +
                          "' is not among the training datasets");
    }

    AlignerParams params;
    params.reference_id = cfg.reference_id;
    params.hidden_units = cfg.hidden_units;
    params.init_scale = cfg.init_scale;
    params.fallback_reference_id = cfg.fallback_reference_id;

    for (const auto& id : dataset_ids) {
        if (id == cfg.reference_id) continue;
        Rng rng(stable_hash(seed, "aligner", id));
        ScoreMapping m;
        m.w_in.resize(cfg.hidden_units);
        m.b_in.resize(cfg.hidden_units);
        m.w_out.resize(cfg.hidden_units);
        const double s = cfg.init_scale;
        for (size_t k = 0; k < cfg.hidden_units; ++k) m.w_in[k] = rng.uniform(-s, s);
        for (size_t k = 0; k < cfg.hidden_units; ++k) m.b_in[k] = rng.uniform(-s, s);
        for (size_t k = 0; k < cfg.hidden_units; ++k) m.w_out[k] = rng.uniform(-s, s);
        m.b_out = rng.uniform(-s, s);
        params.mappings.emplace(id, std::move(m));
    }
    return params;
}

double apply(const AlignerParams& params, double raw_score, const std::string& dataset_id) {
    if (dataset_id == params.reference_id) return raw_score;
    auto it = params.mappings.find(dataset_id);
    if (it == params.mappings.end()) {
        throw UnknownDatasetError("aligner has no mapping for dataset '" + dataset_id +
                                  "' (and it is not the reference)");
    }
    return it->second.forward(raw_score);
}

}  // namespace dsc
