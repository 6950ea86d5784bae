// dsceval: dataset-concealment evaluation for quality estimators.
//
// Subcommands:
//   synth  - generate a synthetic multi-dataset corpus with ground truth
//   dsc    - run the full concealment training/evaluation matrix
//   infer  - score an unseen corpus with a trained global model
//   stats  - LCC/SRCC of a two-column CSV
//
// Exit codes: 0 success, 1 runtime error, 2 configuration error,
// 3 precondition violation.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsc/corpus.hpp"
#include "dsc/dsc.hpp"
#include "dsc/errors.hpp"
#include "dsc/model.hpp"
#include "dsc/report.hpp"
#include "dsc/stats.hpp"
#include "dsc/synthgen.hpp"
#include "experiment_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsceval_cli;

namespace {

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw dsc::ConfigError("cannot open config file '" + path + "'");
    try {
        json doc;
        in >> doc;
        return doc;
    } catch (const json::exception& e) {
        throw dsc::ConfigError(path + ": " + e.what());
    }
}

std::string fmt12(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

int run_synth(const std::string& config_path, const std::string& out_dir) {
    const json doc = load_json_file(config_path);
    // accept either a whole experiment config or a bare generator config
    const dsc::SynthConfig cfg = doc.contains("synth")
                                     ? parse_synth_config(doc.at("synth"), "synth")
                                     : parse_synth_config(doc, "");
    auto [corpus, truth] = dsc::generate(cfg);
    dsc::save_corpus(corpus, out_dir);
    dsc::save_ground_truth(truth, (fs::path(out_dir) / "truth.json").string());
    std::cout << "wrote " << corpus.datasets.size() << " datasets ("
              << cfg.samples_per_dataset << " samples each, feature_dim "
              << corpus.feature_dim << ") to " << out_dir << "\n";
    return 0;
}

struct DscFlags {
    std::string out_dir_override;
    std::optional<uint64_t> seed_override;
    int jobs_override = 0;
    bool resume = false;
    long max_jobs = -1;
    bool force_aligner = false;
    bool force_no_aligner = false;
    bool force_both = false;
};

int run_dsc(const std::string& config_path, const DscFlags& flags) {
    json doc = load_json_file(config_path);

    // flag overrides land in the document so the echo stays faithful
    if (!flags.out_dir_override.empty()) doc["output_dir"] = flags.out_dir_override;
    if (flags.seed_override) doc["seed"] = *flags.seed_override;
    if (flags.jobs_override > 0) doc["parallelism"] = flags.jobs_override;
    if (flags.force_both) doc["mode"] = "both";
    if (flags.force_aligner) doc["mode"] = "aligner";
    if (flags.force_no_aligner) doc["mode"] = "no-aligner";

    ExperimentConfig cfg = parse_experiment_config(doc);
    if (cfg.output_dir.empty()) {
        throw dsc::ConfigError("output_dir: required for the dsc command");
    }
    fs::create_directories(cfg.output_dir);

    dsc::Corpus corpus;
    if (cfg.corpus_dir) {
        corpus = dsc::load_corpus(*cfg.corpus_dir);
    } else {
        auto [generated, truth] = dsc::generate(*cfg.synth);
        corpus = std::move(generated);
        const std::string corpus_dir = (fs::path(cfg.output_dir) / "corpus").string();
        dsc::save_corpus(corpus, corpus_dir);
        dsc::save_ground_truth(truth, (fs::path(corpus_dir) / "truth.json").string());
    }

    std::vector<dsc::Mode> modes;
    if (cfg.mode == "both") {
        modes = {dsc::Mode::Conventional, dsc::Mode::Aligned};
    } else if (cfg.mode == "aligner") {
        modes = {dsc::Mode::Aligned};
    } else {
        modes = {dsc::Mode::Conventional};
    }
    if (std::find(modes.begin(), modes.end(), dsc::Mode::Aligned) != modes.end() &&
        !cfg.spec.aligner) {
        throw dsc::ConfigError("aligner: required when mode includes aligned training");
    }

    std::vector<dsc::TrainingJob> jobs;
    for (dsc::Mode mode : modes) {
        auto mode_jobs = dsc::plan(corpus, mode, cfg.spec);
        jobs.insert(jobs.end(), std::make_move_iterator(mode_jobs.begin()),
                    std::make_move_iterator(mode_jobs.end()));
    }
    std::cout << "planned " << jobs.size() << " training jobs over "
              << corpus.datasets.size() << " datasets\n";

    dsc::ExecuteOptions opts;
    opts.parallelism = cfg.parallelism;
    opts.runs_path = (fs::path(cfg.output_dir) / "runs.jsonl").string();
    opts.resume = flags.resume;
    opts.max_jobs = flags.max_jobs;
    opts.on_model = [&](const dsc::TrainingJob& job, const dsc::TrainResult& trained) {
        if (job.kind != dsc::VariantKind::Global || job.replication != 0) return;
        dsc::TrainedModel model;
        model.params = trained.params;
        model.aligner = trained.aligner;
        model.training_dataset_ids = job.train_dataset_ids;
        model.metadata["mode"] = dsc::mode_name(job.mode);
        model.metadata["seed"] = std::to_string(job.seed);
        model.metadata["validation_correlation"] = "fisher_averaged_per_dataset_lcc";
        const std::string stem = "model_global_" + dsc::mode_name(job.mode);
        dsc::save_model(model, (fs::path(cfg.output_dir) / (stem + ".json")).string());
        std::ofstream hist(fs::path(cfg.output_dir) / (stem + "_history.csv"),
                           std::ios::binary);
        hist << dsc::history_csv(trained.history);
    };

    const auto outcome = dsc::execute(jobs, corpus, cfg.spec, opts);
    std::cout << "executed " << outcome.executed_jobs << " jobs, skipped "
              << outcome.skipped_jobs << " (resumed), failed " << outcome.failed_jobs << "\n";

    if (outcome.stopped_early) {
        std::cout << "stopped after --max-jobs budget; rerun with --resume to finish\n";
        return 0;
    }
    if (outcome.leakage_violations > 0) {
        std::cerr << "error: " << outcome.leakage_violations
                  << " concealment leakage violations\n";
        return 1;
    }

    const auto se_mode = cfg.se_mode == "analytic" ? dsc::stats::SeMode::Analytic
                                                   : dsc::stats::SeMode::Sample;
    auto report = dsc::assemble_report(outcome.results, se_mode);
    report.metadata["se_mode"] = cfg.se_mode;
    dsc::EmitOptions emit_opts;
    emit_opts.config_json = doc.dump();
    dsc::emit(report, cfg.output_dir, emit_opts);

    // terse per-dataset view
    for (const auto& ds : report.datasets) {
        for (dsc::Mode mode : modes) {
            const auto& per_dataset = (mode == dsc::Mode::Conventional) ? report.conventional
                                                                        : report.aligned;
            const auto& dmr = per_dataset.at(ds);
            std::cout << ds << " [" << dsc::mode_name(mode) << "]";
            for (dsc::VariantKind kind : {dsc::VariantKind::Individual, dsc::VariantKind::Global,
                                          dsc::VariantKind::Concealed}) {
                const auto& cell = dmr.cell(kind);
                std::cout << "  " << dsc::variant_kind_name(kind)[0] << "="
                          << (cell.missing ? std::string("missing") : fmt12(cell.r_avg));
            }
            if (!dmr.gap.missing) {
                std::cout << "  v=" << fmt12(dmr.gap.gap.v) << " c=" << fmt12(dmr.gap.gap.c);
            }
            std::cout << "\n";
        }
    }
    std::cout << "report written to " << cfg.output_dir << "\n";
    return 0;
}

int run_infer(const std::string& model_path, const std::string& corpus_path,
              const std::string& out_path) {
    const dsc::TrainedModel model = dsc::load_model(model_path);
    const dsc::Corpus corpus = dsc::load_corpus(corpus_path);
    const auto results = dsc::infer_unseen(model, corpus);

    std::string csv = "dataset_id,n,lcc,srcc,error\n";
    for (const auto& r : results) {
        csv += r.dataset_id + ',' + std::to_string(r.n) + ',';
        if (r.ok) {
            csv += fmt12(r.lcc) + ',' + fmt12(r.srcc) + ",\n";
        } else {
            std::string err = r.error;
            for (auto& c : err) {
                if (c == ',' || c == '\n') c = ';';
            }
            csv += ",," + err + "\n";
        }
    }
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw dsc::Error("cannot write '" + out_path + "'");
        out << csv;
        std::cout << "wrote " << results.size() << " rows to " << out_path << "\n";
    }
    return 0;
}

int run_stats(const std::string& input_path) {
    std::ifstream in(input_path);
    if (!in) throw dsc::IngestError("cannot open '" + input_path + "'");
    std::vector<double> x, y;
    std::string line;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw dsc::IngestError(input_path + " row " + std::to_string(row) +
                                   ": expected two comma-separated columns");
        }
        double a = 0.0, b = 0.0;
        const auto ra = std::from_chars(line.data(), line.data() + comma, a);
        const auto rb =
            std::from_chars(line.data() + comma + 1, line.data() + line.size(), b);
        if (ra.ec != std::errc{} || rb.ec != std::errc{}) {
            if (row == 1) continue;  // tolerate a header line
            throw dsc::IngestError(input_path + " row " + std::to_string(row) +
                                   ": cannot parse numbers");
        }
        x.push_back(a);
        y.push_back(b);
    }
    std::cout << "lcc " << fmt12(dsc::stats::lcc(x, y)) << "\n";
    std::cout << "srcc " << fmt12(dsc::stats::srcc(x, y)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dataset-concealment evaluation for quality estimators"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "JSON config (generator section or whole experiment)")
        ->required();
    synth->add_option("--out", synth_out, "output directory for the corpus")->required();

    // dsc
    auto* dsc_cmd = app.add_subcommand("dsc", "run the concealment training/evaluation matrix");
    std::string dsc_config;
    DscFlags flags;
    uint64_t seed_value = 0;
    dsc_cmd->add_option("--config", dsc_config, "experiment JSON config")->required();
    dsc_cmd->add_option("--out-dir", flags.out_dir_override, "override output_dir");
    auto* seed_opt = dsc_cmd->add_option("--seed", seed_value, "override the experiment seed");
    dsc_cmd->add_option("--jobs", flags.jobs_override, "worker parallelism");
    dsc_cmd->add_flag("--resume", flags.resume, "skip runs already in runs.jsonl");
    dsc_cmd->add_option("--max-jobs", flags.max_jobs,
                        "stop after this many newly executed jobs (for staged runs)");
    auto* f_aligner = dsc_cmd->add_flag("--aligner", flags.force_aligner, "aligned training only");
    auto* f_plain =
        dsc_cmd->add_flag("--no-aligner", flags.force_no_aligner, "conventional training only");
    auto* f_both = dsc_cmd->add_flag("--both", flags.force_both, "both training modes");
    f_aligner->excludes(f_plain)->excludes(f_both);
    f_plain->excludes(f_both);

    // infer
    auto* infer = app.add_subcommand("infer", "score an unseen corpus with a trained model");
    std::string infer_model, infer_corpus, infer_out;
    infer->add_option("--model", infer_model, "trained model JSON")->required();
    infer->add_option("--corpus", infer_corpus, "unseen corpus directory")->required();
    infer->add_option("--out", infer_out, "output CSV path (default: stdout)");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "LCC/SRCC of a two-column CSV");
    std::string stats_input;
    stats_cmd->add_option("input", stats_input, "CSV file with two numeric columns")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(synth_config, synth_out);
        if (*dsc_cmd) {
            if (seed_opt->count() > 0) flags.seed_override = seed_value;
            return run_dsc(dsc_config, flags);
        }
        if (*infer) return run_infer(infer_model, infer_corpus, infer_out);
        if (*stats_cmd) return run_stats(stats_input);
    } catch (const dsc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const dsc::PreconditionError& e) {
        std::cerr << "precondition violated: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
