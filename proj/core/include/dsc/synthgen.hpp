#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsc/corpus.hpp"

namespace dsc {

// A strictly increasing mapping from latent quality to a dataset's label
// scale. Models the inter-test label shift: the same latent quality can land
// on different MOS values in different subjective tests.
struct WarpSpec {
    enum class Kind { Identity, Affine, Sigmoid };

    Kind kind = Kind::Identity;
    // Affine: y = a*q + b, a > 0.
    double a = 1.0;
    double b = 0.0;
    // Sigmoid: y = 1 + 4 * sigma(k*(q - center)), center in [1,5], k > 0.
    double center = 3.0;
    double steepness = 1.0;

    // Raw warp value (strictly increasing on [1,5], may leave [1,5]).
    double apply(double q) const;
    // Warp value clamped onto the label scale.
    double apply_clamped(double q) const;

    void validate() const;  // throws ConfigError

    static WarpSpec identity();
    static WarpSpec affine(double a, double b);
    static WarpSpec sigmoid(double center, double steepness);
};

struct SynthConfig {
    size_t n_datasets = 0;
    size_t samples_per_dataset = 0;
    size_t feature_dim = 0;
    std::vector<WarpSpec> warps;  // one per dataset
    int vote_count = 1;
    double vote_noise_sd = 0.0;     // MOS units
    double feature_noise_sd = 0.0;
    // Optional per-dataset latent-quality support restriction, keyed by
    // dataset index; default support is [1, 5].
    std::map<size_t, std::pair<double, double>> condition_shift;
    uint64_t seed = 0;
    // Seed of the feature map phi (the stand-in for a fixed feature
    // extractor). Defaults to `seed`; set it explicitly to generate unseen
    // corpora that live in the same feature space as a training corpus.
    std::optional<uint64_t> basis_seed;
    std::string id_prefix = "ds";  // dataset ids are <prefix><2-digit index>

    void validate() const;  // throws ConfigError

    std::string dataset_id_for(size_t index) const;
};

// Per-sample latent quality and per-dataset warps, retained for oracle checks.
// Never written into the corpus files consumed by training.
struct GroundTruth {
    struct DatasetTruth {
        WarpSpec warp;
        std::vector<double> q;  // aligned with Dataset::samples order
    };
    std::map<std::string, DatasetTruth> datasets;
};

// Deterministic generative simulation of the corpus effect:
//   q ~ Uniform(support_j)
//   features = phi(q) + N(0, feature_noise_sd),  phi_k(q) = sin(w_k q + t_k)
//   vote    = round(clamp(warp_j(q) + N(0, vote_noise_sd), 1, 5))
//   mos     = clamp(mean of vote_count votes, 1, 5)
std::pair<Corpus, GroundTruth> generate(const SynthConfig& config);

// LCC between observed mos and the clamped warp of the latent quality: the
// noise ceiling any estimator can reach on that dataset.
double oracle_correlation(const Dataset& dataset, const GroundTruth& truth);

// truth.json round trip (per-sample q, per-dataset warp spec).
void save_ground_truth(const GroundTruth& truth, const std::string& path);
GroundTruth load_ground_truth(const std::string& path);

}  // namespace dsc
