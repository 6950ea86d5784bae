#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsc/aligner.hpp"

namespace dsc {

enum class Activation { Tanh, Relu };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& s);

// A small fully-connected regressor producing one raw quality score.
struct EstimatorArch {
    size_t input_dim = 0;
    std::vector<size_t> hidden_layers;
    Activation activation = Activation::Tanh;

    void validate() const;  // throws ConfigError
    // in/out sizes of each affine layer, ending at the scalar output.
    std::vector<std::pair<size_t, size_t>> layer_shapes() const;
    size_t param_count() const;
};

struct EstimatorParams {
    EstimatorArch arch;
    struct Layer {
        std::vector<double> w;  // row-major, [out][in]
        std::vector<double> b;  // [out]
    };
    std::vector<Layer> layers;

    size_t param_count() const;
};

// Deterministic initialization: weights uniform in +/- 1/sqrt(fan_in), biases zero.
EstimatorParams init_estimator(const EstimatorArch& arch, uint64_t seed);

double forward(const EstimatorParams& params, std::span<const double> features);

// Estimator output for (features, dataset): the aligner mapping is applied
// unless absent, the dataset is the reference, or reference_scale is forced
// (concealed / unseen evaluation).
double predict(const EstimatorParams& params, const std::optional<AlignerParams>& aligner,
               std::span<const double> features, const std::string& dataset_id,
               bool reference_scale = false);

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind = Kind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    size_t max_epochs = 200;
    size_t batch_size = 32;
    double learning_rate = 1e-2;
    OptimizerConfig optimizer;
    size_t patience = 20;  // epochs without validation improvement before stop
    uint64_t seed = 0;
    // Aligner freeze threshold on the Fisher-averaged per-dataset validation
    // LCC; nullopt means the aligner is never frozen.
    std::optional<double> aligner_freeze_threshold = 0.6;

    void validate() const;
};

// Samples grouped by dataset identity, flattened for batching.
struct TrainingSet {
    struct Example {
        uint32_t dataset = 0;  // index into dataset_ids
        std::vector<double> features;
        double mos = 0.0;
    };
    std::vector<std::string> dataset_ids;
    std::vector<Example> examples;

    uint32_t intern(const std::string& dataset_id);
    void add(const std::string& dataset_id, std::vector<double> features, double mos);
    bool empty() const { return examples.empty(); }
};

struct EpochStats {
    size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_corr = 0.0;  // Fisher-averaged per-dataset validation LCC
    bool aligner_frozen = false;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    size_t best_epoch = 0;
};

std::string history_csv(const TrainHistory& history);

struct TrainResult {
    EstimatorParams params;
    std::optional<AlignerParams> aligner;
    TrainHistory history;
};

// Mini-batch MSE training with early stopping; returns the parameters from
// the best-validation-loss epoch. Batch order is a deterministic function of
// (seed, epoch). When an aligner is attached with a freeze threshold, its
// parameters receive zero updates until the first epoch whose validation
// correlation reaches the threshold (never re-frozen afterwards); gradients
// flow through the aligner into the estimator in all epochs.
TrainResult train(const EstimatorParams& init, const TrainingSet& train_set,
                  const TrainingSet& val_set, const TrainConfig& cfg,
                  std::optional<AlignerParams> aligner = std::nullopt);

// Central finite differences of the batch MSE against the analytic gradient
// over every parameter (estimator and aligner). Returns the maximum relative
// error with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const EstimatorParams& params, const std::optional<AlignerParams>& aligner,
                  const TrainingSet& batch, double eps);

}  // namespace dsc
