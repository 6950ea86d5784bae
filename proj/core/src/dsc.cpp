#include "dsc/dsc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dsc/digest.hpp"
#include "dsc/errors.hpp"
#include "dsc/hash.hpp"

using nlohmann::json;

namespace dsc {

std::string variant_kind_name(VariantKind k) {
    switch (k) {
        case VariantKind::Individual: return "individual";
        case VariantKind::Global: return "global";
        case VariantKind::Concealed: return "concealed";
    }
    return "?";
}

VariantKind parse_variant_kind(const std::string& s) {
    if (s == "individual") return VariantKind::Individual;
    if (s == "global") return VariantKind::Global;
    if (s == "concealed") return VariantKind::Concealed;
    throw IngestError("unknown variant kind '" + s + "'");
}

std::string mode_name(Mode m) { return m == Mode::Conventional ? "conventional" : "aligned"; }

Mode parse_mode(const std::string& s) {
    if (s == "conventional") return Mode::Conventional;
    if (s == "aligned") return Mode::Aligned;
    throw IngestError("unknown mode '" + s + "'");
}

std::string TrainingJob::key() const {
    return mode_name(mode) + "/" + variant_kind_name(kind) + "/" + target + "/" +
           std::to_string(replication);
}

std::string RunResult::job_key() const {
    return mode_name(mode) + "/" + variant_kind_name(kind) + "/" + target + "/" +
           std::to_string(replication);
}

std::string RunResult::result_key() const { return job_key() + "/" + eval_dataset; }

const ReportCell& DatasetModeReport::cell(VariantKind k) const {
    switch (k) {
        case VariantKind::Individual: return individual;
        case VariantKind::Global: return global;
        case VariantKind::Concealed: return concealed;
    }
    return global;
}

ReportCell& DatasetModeReport::cell(VariantKind k) {
    switch (k) {
        case VariantKind::Individual: return individual;
        case VariantKind::Global: return global;
        case VariantKind::Concealed: return concealed;
    }
    return global;
}

namespace {

uint64_t job_seed(const ExperimentSpec& spec, VariantKind kind, const std::string& target,
                  size_t replication) {
    // mode-independent: aligned and conventional replications are paired
    return stable_hash(spec.seed, variant_kind_name(kind), target,
                       static_cast<uint64_t>(replication));
}

AlignerConfig resolve_aligner(const ExperimentSpec& spec, VariantKind kind,
                              const std::string& target,
                              const std::vector<std::string>& train_ids) {
    if (!spec.aligner) {
        throw ConfigError("aligned plan requested but no aligner configuration given");
    }
    AlignerConfig cfg = *spec.aligner;
    cfg.validate();

    if (kind == VariantKind::Individual) {
        // single-dataset training has no corpus effect to align; the aligner
        // degenerates to the identity with the trained dataset as reference
        cfg.reference_id = target;
        cfg.fallback_reference_id.reset();
        return cfg;
    }

    auto in_train = [&](const std::string& id) {
        return std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end();
    };

    if (!in_train(cfg.reference_id)) {
        // the reference dataset is concealed; fall back
        if (!cfg.fallback_reference_id) {
            throw ConfigError("aligner reference '" + cfg.reference_id +
                              "' is concealed in variant concealed(" + target +
                              ") and no fallback_reference is configured");
        }
        if (!in_train(*cfg.fallback_reference_id)) {
            throw ConfigError("aligner fallback reference '" + *cfg.fallback_reference_id +
                              "' is not among the training datasets of concealed(" + target + ")");
        }
        cfg.reference_id = *cfg.fallback_reference_id;
        cfg.fallback_reference_id.reset();
    }
    return cfg;
}

}  // namespace

SplitSpec replication_split_spec(const SplitSpec& base, size_t replication) {
    SplitSpec per_rep = base;
    per_rep.seed = stable_hash(base.seed, "replication", static_cast<uint64_t>(replication));
    return per_rep;
}

std::vector<TrainingJob> plan(const Corpus& corpus, Mode mode, const ExperimentSpec& spec) {
    const auto ids = corpus.dataset_ids();
    const size_t n = ids.size();
    if (n < 2) {
        throw PreconditionError("the concealment matrix requires at least 2 datasets, got " +
                                std::to_string(n));
    }
    if (mode == Mode::Aligned && spec.aligner) {
        spec.aligner->validate();
        if (corpus.find(spec.aligner->reference_id) == nullptr) {
            throw ConfigError("aligner reference '" + spec.aligner->reference_id +
                              "' is not a dataset of the corpus");
        }
        if (spec.aligner->fallback_reference_id &&
            corpus.find(*spec.aligner->fallback_reference_id) == nullptr) {
            throw ConfigError("aligner fallback reference '" + *spec.aligner->fallback_reference_id +
                              "' is not a dataset of the corpus");
        }
    }

    std::vector<TrainingJob> jobs;
    auto make_job = [&](VariantKind kind, const std::string& target, size_t rep) {
        TrainingJob job;
        job.kind = kind;
        job.target = target;
        job.mode = mode;
        job.replication = rep;
        job.seed = job_seed(spec, kind, target, rep);
        switch (kind) {
            case VariantKind::Individual:
                job.train_dataset_ids = {target};
                job.eval_dataset_ids = {target};
                break;
            case VariantKind::Global:
                job.train_dataset_ids = ids;
                job.eval_dataset_ids = ids;
                break;
            case VariantKind::Concealed:
                for (const auto& id : ids) {
                    if (id != target) job.train_dataset_ids.push_back(id);
                }
                job.eval_dataset_ids = {target};
                break;
        }
        if (mode == Mode::Aligned) {
            job.aligner = resolve_aligner(spec, kind, target, job.train_dataset_ids);
        }
        jobs.push_back(std::move(job));
    };

    for (const auto& id : ids) {
        for (size_t r = 0; r < spec.replications.individual; ++r) {
            make_job(VariantKind::Individual, id, r);
        }
    }
    for (size_t r = 0; r < spec.replications.global; ++r) make_job(VariantKind::Global, "", r);
    for (const auto& id : ids) {
        for (size_t r = 0; r < spec.replications.concealed; ++r) {
            make_job(VariantKind::Concealed, id, r);
        }
    }
    return jobs;
}

std::string run_result_to_json_line(const RunResult& r) {
    json j;
    j["mode"] = mode_name(r.mode);
    j["kind"] = variant_kind_name(r.kind);
    j["target"] = r.target;
    j["eval"] = r.eval_dataset;
    j["rep"] = r.replication;
    j["seed"] = r.seed;
    j["lcc"] = r.lcc;
    j["srcc"] = r.srcc;
    j["test_n"] = r.test_n;
    j["history_digest"] = r.history_digest;
    j["status"] = r.status;
    j["error"] = r.error;
    return j.dump();
}

RunResult run_result_from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw IngestError(std::string("bad runs journal line: ") + e.what());
    }
    RunResult r;
    try {
        r.mode = parse_mode(j.at("mode").get<std::string>());
        r.kind = parse_variant_kind(j.at("kind").get<std::string>());
        r.target = j.at("target").get<std::string>();
        r.eval_dataset = j.at("eval").get<std::string>();
        r.replication = j.at("rep").get<size_t>();
        r.seed = j.at("seed").get<uint64_t>();
        r.lcc = j.at("lcc").get<double>();
        r.srcc = j.at("srcc").get<double>();
        r.test_n = j.at("test_n").get<size_t>();
        r.history_digest = j.at("history_digest").get<std::string>();
        r.status = j.at("status").get<std::string>();
        r.error = j.at("error").get<std::string>();
    } catch (const json::exception& e) {
        throw IngestError(std::string("bad runs journal line: ") + e.what());
    }
    return r;
}

namespace {

json layer_to_json(const EstimatorParams::Layer& l) {
    return json{{"w", l.w}, {"b", l.b}};
}

json aligner_to_json(const AlignerParams& a) {
    json mappings = json::object();
    for (const auto& [id, m] : a.mappings) {
        mappings[id] = json{{"w_in", m.w_in}, {"b_in", m.b_in}, {"w_out", m.w_out}, {"b_out", m.b_out}};
    }
    json j;
    j["reference_id"] = a.reference_id;
    j["hidden_units"] = a.hidden_units;
    j["init_scale"] = a.init_scale;
    j["frozen"] = a.frozen;
    j["fallback_reference_id"] =
        a.fallback_reference_id ? json(*a.fallback_reference_id) : json(nullptr);
    j["mappings"] = mappings;
    return j;
}

AlignerParams aligner_from_json(const json& j) {
    AlignerParams a;
    a.reference_id = j.at("reference_id").get<std::string>();
    a.hidden_units = j.at("hidden_units").get<size_t>();
    a.init_scale = j.at("init_scale").get<double>();
    a.frozen = j.at("frozen").get<bool>();
    if (!j.at("fallback_reference_id").is_null()) {
        a.fallback_reference_id = j.at("fallback_reference_id").get<std::string>();
    }
    for (const auto& [id, m] : j.at("mappings").items()) {
        ScoreMapping sm;
        sm.w_in = m.at("w_in").get<std::vector<double>>();
        sm.b_in = m.at("b_in").get<std::vector<double>>();
        sm.w_out = m.at("w_out").get<std::vector<double>>();
        sm.b_out = m.at("b_out").get<double>();
        a.mappings.emplace(id, std::move(sm));
    }
    return a;
}

}  // namespace

void save_model(const TrainedModel& model, const std::string& path) {
    json j;
    j["format"] = "dsceval-model-v1";
    j["arch"] = json{{"input_dim", model.params.arch.input_dim},
                     {"hidden_layers", model.params.arch.hidden_layers},
                     {"activation", activation_name(model.params.arch.activation)}};
    j["layers"] = json::array();
    for (const auto& l : model.params.layers) j["layers"].push_back(layer_to_json(l));
    j["aligner"] = model.aligner ? aligner_to_json(*model.aligner) : json(nullptr);
    j["training_dataset_ids"] = model.training_dataset_ids;
    j["metadata"] = model.metadata;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << j.dump(2) << "\n";
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open model file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IngestError(path + ": " + e.what());
    }

    TrainedModel model;
    try {
        if (j.at("format").get<std::string>() != "dsceval-model-v1") {
            throw IngestError(path + ": unsupported model format");
        }
        model.params.arch.input_dim = j.at("arch").at("input_dim").get<size_t>();
        model.params.arch.hidden_layers = j.at("arch").at("hidden_layers").get<std::vector<size_t>>();
        model.params.arch.activation = parse_activation(j.at("arch").at("activation").get<std::string>());
        for (const auto& l : j.at("layers")) {
            EstimatorParams::Layer layer;
            layer.w = l.at("w").get<std::vector<double>>();
            layer.b = l.at("b").get<std::vector<double>>();
            model.params.layers.push_back(std::move(layer));
        }
        if (!j.at("aligner").is_null()) model.aligner = aligner_from_json(j.at("aligner"));
        model.training_dataset_ids = j.at("training_dataset_ids").get<std::vector<std::string>>();
        if (j.contains("metadata")) {
            model.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw IngestError(path + ": " + e.what());
    }

    // shape check
    const auto shapes = model.params.arch.layer_shapes();
    if (shapes.size() != model.params.layers.size()) {
        throw ValidationError(path + ": layer count does not match architecture");
    }
    for (size_t i = 0; i < shapes.size(); ++i) {
        const auto [in_dim, out_dim] = shapes[i];
        if (model.params.layers[i].w.size() != in_dim * out_dim ||
            model.params.layers[i].b.size() != out_dim) {
            throw ValidationError(path + ": layer " + std::to_string(i) + " shape mismatch");
        }
    }
    return model;
}

namespace {

struct SplitCache {
    // (replication, dataset_id) -> split
    std::map<std::pair<size_t, std::string>, SplitResult> splits;

    const SplitResult& get(const Corpus& corpus, const ExperimentSpec& spec, size_t replication,
                           const std::string& dataset_id) {
        auto key = std::make_pair(replication, dataset_id);
        auto it = splits.find(key);
        if (it != splits.end()) return it->second;
        const Dataset* ds = corpus.find(dataset_id);
        if (!ds) throw Error("dataset '" + dataset_id + "' not in corpus");
        return splits
            .emplace(std::move(key),
                     split_dataset(*ds, replication_split_spec(spec.split, replication)))
            .first->second;
    }
};

TrainingSet build_set(const std::vector<std::string>& dataset_ids,
                      const std::function<const std::vector<Sample>&(const std::string&)>& part) {
    TrainingSet set;
    for (const auto& id : dataset_ids) {
        for (const Sample& s : part(id)) {
            set.add(id, s.features, s.mos);
        }
    }
    return set;
}

// Executes one job; returns one RunResult per eval dataset.
std::vector<RunResult> run_job(const TrainingJob& job, const Corpus& corpus,
                               const ExperimentSpec& spec, SplitCache& cache,
                               std::mutex& cache_mutex, size_t* leakage_counter,
                               const ExecuteOptions& options) {
    std::vector<RunResult> results;
    auto base_result = [&](const std::string& eval_ds) {
        RunResult r;
        r.mode = job.mode;
        r.kind = job.kind;
        r.target = job.target;
        r.eval_dataset = eval_ds;
        r.replication = job.replication;
        r.seed = job.seed;
        return r;
    };

    try {
        // splits are shared across jobs; build them under a lock
        std::map<std::string, const SplitResult*> needed;
        {
            std::lock_guard<std::mutex> lock(cache_mutex);
            for (const auto& id : job.train_dataset_ids) {
                needed[id] = &cache.get(corpus, spec, job.replication, id);
            }
            for (const auto& id : job.eval_dataset_ids) {
                needed[id] = &cache.get(corpus, spec, job.replication, id);
            }
        }

        // concealment leakage guard
        if (job.kind == VariantKind::Concealed) {
            bool leaked = std::find(job.train_dataset_ids.begin(), job.train_dataset_ids.end(),
                                    job.target) != job.train_dataset_ids.end();
            if (leaked) {
                if (leakage_counter) ++*leakage_counter;
                throw Error("concealed(" + job.target + ") training set contains the concealed dataset");
            }
        }

        TrainingSet train_set = build_set(job.train_dataset_ids, [&](const std::string& id) -> const std::vector<Sample>& {
            return needed.at(id)->train;
        });
        TrainingSet val_set = build_set(job.train_dataset_ids, [&](const std::string& id) -> const std::vector<Sample>& {
            return needed.at(id)->val;
        });

        EstimatorArch arch = spec.arch;
        arch.input_dim = corpus.feature_dim;
        EstimatorParams init = init_estimator(arch, job.seed);

        std::optional<AlignerParams> aligner;
        if (job.aligner) aligner = init_aligner(*job.aligner, job.train_dataset_ids, job.seed);

        TrainConfig cfg = spec.train;
        cfg.seed = job.seed;

        TrainResult trained = train(init, train_set, val_set, cfg, std::move(aligner));
        const std::string history_digest = sha256_hex(history_csv(trained.history));

        // concealed targets are scored on the reference scale: no mapping
        // exists for a dataset unseen at training
        const bool reference_scale = (job.kind == VariantKind::Concealed);

        for (const auto& eval_id : job.eval_dataset_ids) {
            RunResult r = base_result(eval_id);
            r.history_digest = history_digest;
            const auto& test = needed.at(eval_id)->test;
            std::vector<double> preds, labels;
            preds.reserve(test.size());
            labels.reserve(test.size());
            for (const Sample& s : test) {
                preds.push_back(predict(trained.params, trained.aligner, s.features, eval_id,
                                        reference_scale));
                labels.push_back(s.mos);
            }
            r.test_n = test.size();
            try {
                r.lcc = stats::lcc(preds, labels);
                r.srcc = stats::srcc(preds, labels);
            } catch (const Error& e) {
                r.status = "failed";
                r.error = e.what();
            }
            results.push_back(std::move(r));
        }

        if (options.on_model) options.on_model(job, trained);
    } catch (const std::exception& e) {
        results.clear();
        for (const auto& eval_id : job.eval_dataset_ids) {
            RunResult r = base_result(eval_id);
            r.status = "failed";
            r.error = e.what();
            results.push_back(std::move(r));
        }
    }
    return results;
}

std::vector<RunResult> load_journal(const std::string& path) {
    std::vector<RunResult> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(run_result_from_json_line(line));
    }
    return out;
}

void sort_canonical(std::vector<RunResult>& results) {
    std::sort(results.begin(), results.end(), [](const RunResult& a, const RunResult& b) {
        return a.result_key() < b.result_key();
    });
}

}  // namespace

ExecuteOutcome execute(const std::vector<TrainingJob>& jobs, const Corpus& corpus,
                       const ExperimentSpec& spec, const ExecuteOptions& options) {
    ExecuteOutcome outcome;

    // resume: figure out which jobs already have a full set of results
    std::map<std::string, std::vector<RunResult>> journaled;  // job key -> results
    if (options.resume && !options.runs_path.empty()) {
        for (auto& r : load_journal(options.runs_path)) {
            journaled[r.job_key()].push_back(std::move(r));
        }
    }

    std::vector<const TrainingJob*> pending;
    std::vector<RunResult> merged;
    for (const auto& job : jobs) {
        auto it = journaled.find(job.key());
        if (it != journaled.end()) {
            std::set<std::string> have;
            for (const auto& r : it->second) have.insert(r.eval_dataset);
            const bool complete = std::all_of(
                job.eval_dataset_ids.begin(), job.eval_dataset_ids.end(),
                [&](const std::string& id) { return have.count(id) > 0; });
            if (complete) {
                // keep the last journaled record per eval dataset
                std::map<std::string, RunResult> last;
                for (auto& r : it->second) last[r.eval_dataset] = std::move(r);
                for (auto& [eval, r] : last) {
                    (void)eval;
                    merged.push_back(std::move(r));
                }
                ++outcome.skipped_jobs;
                continue;
            }
        }
        pending.push_back(&job);
    }

    long budget = options.max_jobs;
    if (budget >= 0 && static_cast<size_t>(budget) < pending.size()) {
        pending.resize(static_cast<size_t>(budget));
        outcome.stopped_early = true;
    }

    std::ofstream journal;
    std::mutex journal_mutex;
    if (!options.runs_path.empty()) {
        journal.open(options.runs_path, std::ios::app | std::ios::binary);
        if (!journal) throw Error("cannot open runs journal '" + options.runs_path + "'");
    }

    SplitCache cache;
    std::mutex cache_mutex;
    std::mutex sink_mutex;  // serializes on_model and the leakage counter

    std::vector<std::vector<RunResult>> per_job(pending.size());
    std::atomic<size_t> next{0};
    size_t leakage = 0;

    ExecuteOptions worker_options = options;
    worker_options.on_model = nullptr;  // wrapped below to serialize

    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            ExecuteOptions per_call = worker_options;
            if (options.on_model) {
                per_call.on_model = [&](const TrainingJob& j, const TrainResult& t) {
                    std::lock_guard<std::mutex> lock(sink_mutex);
                    options.on_model(j, t);
                };
            }
            size_t local_leakage = 0;
            auto results = run_job(*pending[i], corpus, spec, cache, cache_mutex, &local_leakage,
                                   per_call);
            if (local_leakage) {
                std::lock_guard<std::mutex> lock(sink_mutex);
                leakage += local_leakage;
            }
            if (journal.is_open()) {
                std::lock_guard<std::mutex> lock(journal_mutex);
                for (const auto& r : results) journal << run_result_to_json_line(r) << "\n";
                journal.flush();
            }
            per_job[i] = std::move(results);
        }
    };

    const int n_threads = std::max(1, std::min<int>(options.parallelism,
                                                    static_cast<int>(pending.size())));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    outcome.executed_jobs = pending.size();
    outcome.leakage_violations = leakage;
    for (auto& rs : per_job) {
        bool failed = std::any_of(rs.begin(), rs.end(),
                                  [](const RunResult& r) { return !r.ok(); });
        if (failed) ++outcome.failed_jobs;
        for (auto& r : rs) merged.push_back(std::move(r));
    }

    sort_canonical(merged);
    outcome.results = std::move(merged);
    return outcome;
}

std::vector<InferResult> infer_unseen(const TrainedModel& model, const Corpus& unseen) {
    std::set<std::string> trained(model.training_dataset_ids.begin(),
                                  model.training_dataset_ids.end());
    for (const auto& ds : unseen.datasets) {
        if (trained.count(ds.dataset_id)) {
            throw PreconditionError("dataset '" + ds.dataset_id +
                                    "' collides with a training dataset: not truly unseen");
        }
    }
    if (!unseen.datasets.empty() && unseen.feature_dim != model.params.arch.input_dim) {
        std::ostringstream os;
        os << "unseen corpus feature_dim " << unseen.feature_dim << " != model input_dim "
           << model.params.arch.input_dim;
        throw PreconditionError(os.str());
    }

    std::vector<InferResult> out;
    for (const auto& ds : unseen.datasets) {
        InferResult res;
        res.dataset_id = ds.dataset_id;
        res.n = ds.samples.size();
        std::vector<double> preds, labels;
        preds.reserve(ds.samples.size());
        labels.reserve(ds.samples.size());
        for (const Sample& s : ds.samples) {
            preds.push_back(predict(model.params, model.aligner, s.features, ds.dataset_id,
                                    /*reference_scale=*/true));
            labels.push_back(s.mos);
        }
        try {
            res.lcc = stats::lcc(preds, labels);
            res.srcc = stats::srcc(preds, labels);
            res.ok = true;
        } catch (const Error& e) {
            res.ok = false;
            res.error = e.what();
        }
        out.push_back(std::move(res));
    }
    return out;
}

namespace {

ReportCell make_cell(const std::vector<const RunResult*>& runs, stats::SeMode se_mode) {
    ReportCell cell;
    cell.expected_n = runs.size();
    size_t pairs = 0;
    for (const RunResult* r : runs) {
        if (r->ok()) {
            cell.values.push_back(r->lcc);
            pairs = r->test_n;  // replications share the split sizes
        }
    }
    cell.n = cell.values.size();
    if (cell.n == 0) return cell;  // missing
    cell.missing = false;
    const auto agg =
        stats::aggregate({cell.values, stats::CorrelationKind::LCC}, se_mode, pairs);
    cell.r_avg = agg.r_avg;
    cell.z_mean = agg.z_mean;
    cell.z_se = agg.z_se;
    return cell;
}

}  // namespace

DscReport assemble_report(const std::vector<RunResult>& results, stats::SeMode se_mode) {
    DscReport report;

    std::set<std::string> dataset_set;
    for (const auto& r : results) dataset_set.insert(r.eval_dataset);
    report.datasets.assign(dataset_set.begin(), dataset_set.end());

    for (Mode mode : {Mode::Conventional, Mode::Aligned}) {
        auto& per_dataset =
            (mode == Mode::Conventional) ? report.conventional : report.aligned;
        bool mode_present = false;

        for (const auto& ds : report.datasets) {
            DatasetModeReport dmr;
            for (VariantKind kind :
                 {VariantKind::Individual, VariantKind::Global, VariantKind::Concealed}) {
                std::vector<const RunResult*> runs;
                for (const auto& r : results) {
                    if (r.mode != mode || r.kind != kind || r.eval_dataset != ds) continue;
                    if (kind != VariantKind::Global && r.target != ds) continue;
                    runs.push_back(&r);
                }
                if (!runs.empty()) mode_present = true;
                dmr.cell(kind) = make_cell(runs, se_mode);
            }

            if (!dmr.individual.missing && !dmr.global.missing && !dmr.concealed.missing) {
                const stats::CorrelationSet si{dmr.individual.values, stats::CorrelationKind::LCC};
                const stats::CorrelationSet sg{dmr.global.values, stats::CorrelationKind::LCC};
                const stats::CorrelationSet sc{dmr.concealed.values, stats::CorrelationKind::LCC};
                dmr.gap.gap = stats::gaps(stats::aggregate(si), stats::aggregate(sg),
                                          stats::aggregate(sc), si, sg, sc);
                dmr.gap.missing = false;
            }
            per_dataset.emplace(ds, std::move(dmr));
        }

        if (mode == Mode::Conventional) {
            report.has_conventional = mode_present;
        } else {
            report.has_aligned = mode_present;
        }
    }

    if (report.has_conventional && report.has_aligned) {
        for (const auto& ds : report.datasets) {
            std::array<EffectCell, 3> effects;
            const auto& conv = report.conventional.at(ds);
            const auto& alig = report.aligned.at(ds);
            size_t i = 0;
            for (VariantKind kind :
                 {VariantKind::Individual, VariantKind::Global, VariantKind::Concealed}) {
                EffectCell e;
                const ReportCell& c = conv.cell(kind);
                const ReportCell& a = alig.cell(kind);
                if (!c.missing && !a.missing) {
                    e.missing = false;
                    e.conventional_r = c.r_avg;
                    e.aligned_r = a.r_avg;
                    e.delta = a.r_avg - c.r_avg;
                    e.sig = stats::significant_difference(
                        {a.values, stats::CorrelationKind::LCC},
                        {c.values, stats::CorrelationKind::LCC});
                    e.significant = e.sig.significant;
                }
                effects[i++] = e;
            }
            report.effects.emplace(ds, effects);
        }
    }

    report.metadata["validation_correlation"] = "fisher_averaged_per_dataset_lcc";
    report.metadata["concealed_evaluation"] = "target_dataset_only_reference_scale";
    return report;
}

}  // namespace dsc
