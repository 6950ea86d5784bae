#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsc/aligner.hpp"
#include "dsc/corpus.hpp"
#include "dsc/model.hpp"
#include "dsc/stats.hpp"

namespace dsc {

enum class VariantKind { Individual, Global, Concealed };

std::string variant_kind_name(VariantKind k);
VariantKind parse_variant_kind(const std::string& s);

enum class Mode { Conventional, Aligned };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);

struct ReplicationCounts {
    size_t individual = 10;
    size_t global = 10;
    size_t concealed = 2;
};

// Everything a training job needs besides the corpus itself.
struct ExperimentSpec {
    uint64_t seed = 0;
    SplitSpec split;
    EstimatorArch arch;  // input_dim is taken from the corpus
    TrainConfig train;
    std::optional<AlignerConfig> aligner;  // required for aligned plans
    ReplicationCounts replications;
};

struct TrainingJob {
    VariantKind kind = VariantKind::Global;
    std::string target;  // dataset under study for Individual/Concealed; empty for Global
    Mode mode = Mode::Conventional;
    size_t replication = 0;
    uint64_t seed = 0;
    std::vector<std::string> train_dataset_ids;
    std::vector<std::string> eval_dataset_ids;
    std::optional<AlignerConfig> aligner;  // reference already resolved (fallback applied)

    std::string key() const;  // "mode/kind/target/replication"
};

// Expands the concealment matrix for one alignment mode: N Individual
// variants, one Global, N Concealed, each multiplied by its replication
// count. Seeds derive from (experiment seed, kind, target, replication) and
// are mode-independent, so aligned and conventional runs are paired.
std::vector<TrainingJob> plan(const Corpus& corpus, Mode mode, const ExperimentSpec& spec);

// The split spec used for a given replication index. Every variant of a
// replication shares it, so the I/G/C results for a dataset are measured on
// identical test sets.
SplitSpec replication_split_spec(const SplitSpec& base, size_t replication);

struct RunResult {
    Mode mode = Mode::Conventional;
    VariantKind kind = VariantKind::Global;
    std::string target;
    std::string eval_dataset;
    size_t replication = 0;
    uint64_t seed = 0;
    double lcc = 0.0;
    double srcc = 0.0;
    size_t test_n = 0;
    std::string history_digest;
    std::string status = "ok";  // "ok" or "failed"
    std::string error;

    bool ok() const { return status == "ok"; }
    std::string job_key() const;
    std::string result_key() const;  // job key + eval dataset
};

std::string run_result_to_json_line(const RunResult& r);
RunResult run_result_from_json_line(const std::string& line);

// A trained estimator bundle as serialized to disk.
struct TrainedModel {
    EstimatorParams params;
    std::optional<AlignerParams> aligner;
    std::vector<std::string> training_dataset_ids;
    std::map<std::string, std::string> metadata;
};

void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

struct ExecuteOptions {
    int parallelism = 1;
    std::string runs_path;  // line-delimited JSON journal; empty disables journaling
    bool resume = false;    // skip jobs whose results are already journaled
    long max_jobs = -1;     // stop after executing this many jobs (< 0: no limit)
    // invoked (serialized) for every freshly executed job
    std::function<void(const TrainingJob&, const TrainResult&)> on_model;
};

struct ExecuteOutcome {
    std::vector<RunResult> results;  // canonical order, merged with resumed results
    size_t executed_jobs = 0;
    size_t skipped_jobs = 0;
    size_t failed_jobs = 0;
    size_t leakage_violations = 0;
    bool stopped_early = false;
};

// Runs the jobs. Each dataset is split once per replication index and the
// split is shared across variants, so the I/G/C results for a dataset are
// measured on identical test sets. Results are bit-identical for any
// parallelism level.
ExecuteOutcome execute(const std::vector<TrainingJob>& jobs, const Corpus& corpus,
                       const ExperimentSpec& spec, const ExecuteOptions& options);

struct InferResult {
    std::string dataset_id;
    size_t n = 0;
    bool ok = false;
    double lcc = 0.0;
    double srcc = 0.0;
    std::string error;
};

// Scores every dataset of an unseen corpus on the reference scale and
// correlates against its labels. Dataset-id collisions with the model's
// training corpus are a precondition violation.
std::vector<InferResult> infer_unseen(const TrainedModel& model, const Corpus& unseen);

// --- report assembly ---------------------------------------------------

struct ReportCell {
    bool missing = true;
    size_t n = 0;           // successful replications aggregated
    size_t expected_n = 0;  // including failed ones
    double r_avg = 0.0;
    double z_mean = 0.0;
    double z_se = 0.0;
    std::vector<double> values;  // per-replication LCCs (successful runs)

    bool complete() const { return !missing && n == expected_n; }
};

struct GapCell {
    bool missing = true;
    stats::GapResult gap;
};

struct EffectCell {  // aligner-vs-conventional delta for one (dataset, variant)
    bool missing = true;
    double conventional_r = 0.0;
    double aligned_r = 0.0;
    double delta = 0.0;
    bool significant = false;
    stats::SignificanceResult sig;
};

struct DatasetModeReport {
    ReportCell individual;
    ReportCell global;
    ReportCell concealed;
    GapCell gap;

    const ReportCell& cell(VariantKind k) const;
    ReportCell& cell(VariantKind k);
};

struct DscReport {
    std::vector<std::string> datasets;  // sorted
    bool has_conventional = false;
    bool has_aligned = false;
    std::map<std::string, DatasetModeReport> conventional;
    std::map<std::string, DatasetModeReport> aligned;
    std::map<std::string, std::array<EffectCell, 3>> effects;  // [I, G, C] per dataset
    std::map<std::string, std::string> metadata;
};

// Aggregates per-replication correlations (Fisher-z), computes gaps and the
// aligner-vs-conventional significance per cell. Failed runs leave their
// cells flagged rather than aborting. se_mode selects the reported standard
// error (sample-based by default; analytic uses the per-replication test-set
// size); significance tests always use the sample-based SE.
DscReport assemble_report(const std::vector<RunResult>& results,
                          stats::SeMode se_mode = stats::SeMode::Sample);

}  // namespace dsc
