#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dsc {

struct AlignerConfig {
    size_t hidden_units = 16;
    double init_scale = 1e-3;
    std::string reference_id;
    std::optional<std::string> fallback_reference_id;

    void validate() const;  // throws ConfigError
};

// One per-dataset score mapping: out = s + w_out . tanh(w_in * s + b_in) + b_out.
// The unit skip from the input makes a zero-initialized mapping the exact
// identity. 3h + 1 parameters.
struct ScoreMapping {
    std::vector<double> w_in;
    std::vector<double> b_in;
    std::vector<double> w_out;
    double b_out = 0.0;

    size_t param_count() const { return 3 * w_in.size() + 1; }
    double forward(double s) const;
};

// Gradient accumulator matching ScoreMapping's layout.
struct ScoreMappingGrad {
    std::vector<double> w_in;
    std::vector<double> b_in;
    std::vector<double> w_out;
    double b_out = 0.0;

    explicit ScoreMappingGrad(size_t h) : w_in(h, 0.0), b_in(h, 0.0), w_out(h, 0.0) {}
};

// Accumulates parameter gradients scaled by `upstream` into `grad` (when
// non-null) and returns upstream * d(out)/d(s).
double mapping_backward(const ScoreMapping& m, double s, double upstream, ScoreMappingGrad* grad);

// Per-dataset score mappings keyed by dataset id. The reference dataset has
// no entry: its mapping is the identity by construction.
struct AlignerParams {
    std::string reference_id;
    std::map<std::string, ScoreMapping> mappings;
    bool frozen = false;
    size_t hidden_units = 16;
    double init_scale = 1e-3;
    std::optional<std::string> fallback_reference_id;  // config echo

    size_t param_count() const;
    bool knows(const std::string& dataset_id) const {
        return dataset_id == reference_id || mappings.count(dataset_id) > 0;
    }
};

// Near-identity initialization: apply(s, j) = s + O(init_scale) on [1, 5].
// Deterministic given the experiment seed. The reference must be one of
// dataset_ids; every other id receives a mapping.
AlignerParams init_aligner(const AlignerConfig& cfg, const std::vector<std::string>& dataset_ids,
                           uint64_t seed);

// Reference id -> raw score unchanged, exactly. Unknown id -> UnknownDatasetError
// (signals a concealed-evaluation misconfiguration).
double apply(const AlignerParams& params, double raw_score, const std::string& dataset_id);

}  // namespace dsc
