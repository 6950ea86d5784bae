#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "dsc/dsc.hpp"
#include "dsc/errors.hpp"
#include "dsc/stats.hpp"
#include "dsc/synthgen.hpp"
#include "test_helpers.hpp"

using namespace dsc;

namespace {

Corpus toy_corpus(size_t n_datasets, size_t samples, uint64_t seed, bool degenerate_last = false) {
    SynthConfig cfg;
    cfg.n_datasets = n_datasets;
    cfg.samples_per_dataset = samples;
    cfg.feature_dim = 5;
    for (size_t j = 0; j < n_datasets; ++j) {
        cfg.warps.push_back(j % 2 == 0 ? WarpSpec::identity()
                                       : WarpSpec::affine(1.0, 0.3 * static_cast<double>(j)));
    }
    cfg.vote_count = 8;
    cfg.vote_noise_sd = 0.4;
    cfg.feature_noise_sd = 0.05;
    cfg.seed = seed;
    if (degenerate_last) {
        // constant latent quality and noise-free votes: constant labels
        cfg.condition_shift[n_datasets - 1] = {3.0, 3.0};
        cfg.vote_noise_sd = 0.0;
    }
    return generate(cfg).first;
}

ExperimentSpec quick_spec(uint64_t seed) {
    ExperimentSpec spec;
    spec.seed = seed;
    spec.split.seed = seed;
    spec.arch.hidden_layers = {12};
    spec.train.max_epochs = 15;
    spec.train.batch_size = 32;
    spec.train.learning_rate = 8e-3;
    spec.train.patience = 15;
    spec.replications = {2, 2, 1};
    return spec;
}

std::string serialize_results(const std::vector<RunResult>& rs) {
    std::string out;
    for (const auto& r : rs) out += run_result_to_json_line(r) + "\n";
    return out;
}

}  // namespace

TEST_CASE("plan expands the full concealment matrix") {
    SUBCASE("paper-scale defaults: 9 datasets, 10/10/2 replications") {
        const Corpus corpus = toy_corpus(9, 12, 1);
        ExperimentSpec spec = quick_spec(1);
        spec.replications = {10, 10, 2};
        const auto jobs = plan(corpus, Mode::Conventional, spec);
        CHECK(jobs.size() == 9 * 10 + 10 + 9 * 2);  // 118
    }
    SUBCASE("two datasets, single replications") {
        const Corpus corpus = toy_corpus(2, 12, 1);
        ExperimentSpec spec = quick_spec(1);
        spec.replications = {1, 1, 1};
        const auto jobs = plan(corpus, Mode::Conventional, spec);
        CHECK(jobs.size() == 5);
    }
    SUBCASE("job count identity for arbitrary replication counts") {
        const Corpus corpus = toy_corpus(4, 12, 1);
        ExperimentSpec spec = quick_spec(1);
        spec.replications = {3, 5, 2};
        CHECK(plan(corpus, Mode::Conventional, spec).size() == 3 * 4 + 5 + 2 * 4);
    }
}

TEST_CASE("plan wires training sets per variant and derives stable seeds") {
    const Corpus corpus = toy_corpus(3, 12, 2);
    ExperimentSpec spec = quick_spec(9);
    spec.replications = {1, 1, 1};
    const auto jobs = plan(corpus, Mode::Conventional, spec);
    REQUIRE(jobs.size() == 7);

    const auto ids = corpus.dataset_ids();
    for (const auto& job : jobs) {
        switch (job.kind) {
            case VariantKind::Individual:
                CHECK(job.train_dataset_ids == std::vector<std::string>{job.target});
                CHECK(job.eval_dataset_ids == std::vector<std::string>{job.target});
                break;
            case VariantKind::Global:
                CHECK(job.train_dataset_ids == ids);
                CHECK(job.eval_dataset_ids == ids);
                break;
            case VariantKind::Concealed:
                CHECK(job.train_dataset_ids.size() == ids.size() - 1);
                CHECK(std::find(job.train_dataset_ids.begin(), job.train_dataset_ids.end(),
                                job.target) == job.train_dataset_ids.end());
                break;
        }
    }

    // seeds are mode-independent: aligned plans pair with conventional ones
    ExperimentSpec aspec = spec;
    aspec.aligner = AlignerConfig{};
    aspec.aligner->reference_id = ids[0];
    aspec.aligner->fallback_reference_id = ids[1];
    const auto aligned_jobs = plan(corpus, Mode::Aligned, aspec);
    REQUIRE(aligned_jobs.size() == jobs.size());
    for (size_t i = 0; i < jobs.size(); ++i) CHECK(jobs[i].seed == aligned_jobs[i].seed);
}

TEST_CASE("aligned plans fall back when the reference is concealed") {
    const Corpus corpus = toy_corpus(3, 12, 3);
    const auto ids = corpus.dataset_ids();

    ExperimentSpec spec = quick_spec(4);
    spec.replications = {1, 1, 1};
    spec.aligner = AlignerConfig{};
    spec.aligner->reference_id = ids[0];
    spec.aligner->fallback_reference_id = ids[1];

    const auto jobs = plan(corpus, Mode::Aligned, spec);
    for (const auto& job : jobs) {
        REQUIRE(job.aligner.has_value());
        if (job.kind == VariantKind::Concealed && job.target == ids[0]) {
            CHECK(job.aligner->reference_id == ids[1]);
        } else if (job.kind == VariantKind::Individual) {
            // identity aligner anchored on the trained dataset itself
            CHECK(job.aligner->reference_id == job.target);
        } else {
            CHECK(job.aligner->reference_id == ids[0]);
        }
    }

    // no fallback configured -> concealing the reference is a config error
    spec.aligner->fallback_reference_id.reset();
    CHECK_THROWS_AS(plan(corpus, Mode::Aligned, spec), ConfigError);
}

TEST_CASE("plan requires at least two datasets") {
    const Corpus corpus = toy_corpus(1, 12, 5);
    CHECK_THROWS_AS(plan(corpus, Mode::Conventional, quick_spec(1)), PreconditionError);
}

TEST_CASE("execute produces the 3N test-result aggregates with shared test sets") {
    const Corpus corpus = toy_corpus(3, 60, 7);
    ExperimentSpec spec = quick_spec(7);
    const auto jobs = plan(corpus, Mode::Conventional, spec);
    CHECK(jobs.size() == 2 * 3 + 2 + 1 * 3);  // 11

    ExecuteOptions opts;
    const auto outcome = execute(jobs, corpus, spec, opts);
    CHECK(outcome.leakage_violations == 0);
    CHECK(outcome.failed_jobs == 0);
    CHECK(outcome.executed_jobs == jobs.size());
    // 6 individual + 2 global jobs x 3 evals + 3 concealed
    CHECK(outcome.results.size() == 6 + 6 + 3);

    const auto report = assemble_report(outcome.results);
    REQUIRE(report.datasets.size() == 3);
    size_t cells = 0;
    for (const auto& ds : report.datasets) {
        const auto& dmr = report.conventional.at(ds);
        for (VariantKind k :
             {VariantKind::Individual, VariantKind::Global, VariantKind::Concealed}) {
            CHECK_FALSE(dmr.cell(k).missing);
            ++cells;
        }
        // telescoping identity
        REQUIRE_FALSE(dmr.gap.missing);
        const double vi = std::abs(dmr.individual.r_avg);
        const double vc = std::abs(dmr.concealed.r_avg);
        CHECK(std::abs((dmr.gap.gap.v + dmr.gap.gap.c) - (vi - vc)) < 1e-12);
    }
    CHECK(cells == 9);  // 3N

    // test-set integrity: I, G, C of a replication evaluate on the same split
    for (const auto& ds : corpus.datasets) {
        const auto expect =
            split_dataset(ds, replication_split_spec(spec.split, 0)).test.size();
        for (const auto& r : outcome.results) {
            if (r.replication == 0 && r.eval_dataset == ds.dataset_id) {
                CHECK(r.test_n == expect);
            }
        }
    }
}

TEST_CASE("execute is invariant to the parallelism level") {
    const Corpus corpus = toy_corpus(3, 50, 11);
    ExperimentSpec spec = quick_spec(11);
    spec.replications = {2, 2, 1};
    const auto jobs = plan(corpus, Mode::Conventional, spec);

    ExecuteOptions serial;
    serial.parallelism = 1;
    ExecuteOptions wide;
    wide.parallelism = 8;
    const auto a = execute(jobs, corpus, spec, serial);
    const auto b = execute(jobs, corpus, spec, wide);
    CHECK(serialize_results(a.results) == serialize_results(b.results));
}

TEST_CASE("runs journal enables resume and interrupted runs converge") {
    const Corpus corpus = toy_corpus(3, 50, 13);
    ExperimentSpec spec = quick_spec(13);
    spec.replications = {1, 1, 1};
    const auto jobs = plan(corpus, Mode::Conventional, spec);

    TempDir dir("resume");
    ExecuteOptions base;
    base.runs_path = dir.sub("baseline.jsonl");
    const auto baseline = execute(jobs, corpus, spec, base);

    // interrupted run: stop after 3 jobs, then resume
    ExecuteOptions first;
    first.runs_path = dir.sub("runs.jsonl");
    first.max_jobs = 3;
    const auto partial = execute(jobs, corpus, spec, first);
    CHECK(partial.stopped_early);
    CHECK(partial.executed_jobs == 3);

    ExecuteOptions second;
    second.runs_path = dir.sub("runs.jsonl");
    second.resume = true;
    const auto resumed = execute(jobs, corpus, spec, second);
    CHECK(resumed.skipped_jobs == 3);
    CHECK(resumed.executed_jobs == jobs.size() - 3);
    CHECK(serialize_results(resumed.results) == serialize_results(baseline.results));

    // a second resume executes nothing and reproduces the same results
    const auto third = execute(jobs, corpus, spec, second);
    CHECK(third.executed_jobs == 0);
    CHECK(third.skipped_jobs == jobs.size());
    CHECK(serialize_results(third.results) == serialize_results(baseline.results));
}

TEST_CASE("a dataset with undefined test correlation degrades, not aborts") {
    const Corpus corpus = toy_corpus(3, 40, 17, /*degenerate_last=*/true);
    ExperimentSpec spec = quick_spec(17);
    spec.replications = {1, 1, 1};
    const auto jobs = plan(corpus, Mode::Conventional, spec);
    const auto outcome = execute(jobs, corpus, spec, {});
    CHECK(outcome.failed_jobs > 0);

    const auto report = assemble_report(outcome.results);
    const std::string degenerate = corpus.datasets.back().dataset_id;
    for (const auto& ds : report.datasets) {
        const auto& dmr = report.conventional.at(ds);
        if (ds == degenerate) {
            CHECK(dmr.individual.missing);
            CHECK(dmr.gap.missing);
        } else {
            CHECK_FALSE(dmr.individual.missing);
            CHECK_FALSE(dmr.global.missing);
            CHECK_FALSE(dmr.concealed.missing);
        }
    }
    // failed cells carry their expected counts
    const auto& bad = report.conventional.at(degenerate);
    CHECK(bad.individual.expected_n == 1);
    CHECK(bad.individual.n == 0);
}

TEST_CASE("run results serialize losslessly to journal lines") {
    RunResult r;
    r.mode = Mode::Aligned;
    r.kind = VariantKind::Concealed;
    r.target = "ds02";
    r.eval_dataset = "ds02";
    r.replication = 3;
    r.seed = 0xdeadbeefcafe1234ULL;
    r.lcc = 0.87654321012345;
    r.srcc = -0.12345678901234;
    r.test_n = 42;
    r.history_digest = "abc123";
    r.status = "ok";
    const RunResult back = run_result_from_json_line(run_result_to_json_line(r));
    CHECK(back.mode == r.mode);
    CHECK(back.kind == r.kind);
    CHECK(back.target == r.target);
    CHECK(back.eval_dataset == r.eval_dataset);
    CHECK(back.replication == r.replication);
    CHECK(back.seed == r.seed);
    CHECK(back.lcc == r.lcc);
    CHECK(back.srcc == r.srcc);
    CHECK(back.test_n == r.test_n);
    CHECK(back.history_digest == r.history_digest);
    CHECK(run_result_to_json_line(back) == run_result_to_json_line(r));
}

TEST_CASE("trained models round trip through JSON") {
    const Corpus corpus = toy_corpus(2, 40, 19);
    ExperimentSpec spec = quick_spec(19);
    spec.replications = {0, 1, 0};
    spec.aligner = AlignerConfig{};
    spec.aligner->reference_id = corpus.dataset_ids()[0];
    const auto jobs = plan(corpus, Mode::Aligned, spec);
    REQUIRE(jobs.size() == 1);

    TrainedModel captured;
    ExecuteOptions opts;
    opts.on_model = [&](const TrainingJob& job, const TrainResult& trained) {
        captured.params = trained.params;
        captured.aligner = trained.aligner;
        captured.training_dataset_ids = job.train_dataset_ids;
        captured.metadata["note"] = "test";
    };
    execute(jobs, corpus, spec, opts);
    REQUIRE_FALSE(captured.training_dataset_ids.empty());

    TempDir dir("model_io");
    save_model(captured, dir.sub("model.json"));
    const TrainedModel loaded = load_model(dir.sub("model.json"));
    CHECK(loaded.training_dataset_ids == captured.training_dataset_ids);
    CHECK(loaded.metadata.at("note") == "test");
    REQUIRE(loaded.aligner.has_value());

    const auto& sample = corpus.datasets[1].samples[0];
    const std::string ds1 = corpus.datasets[1].dataset_id;
    CHECK(predict(loaded.params, loaded.aligner, sample.features, ds1) ==
          predict(captured.params, captured.aligner, sample.features, ds1));
    CHECK(predict(loaded.params, loaded.aligner, sample.features, ds1, true) ==
          predict(captured.params, captured.aligner, sample.features, ds1, true));
}

TEST_CASE("infer_unseen scores clones close to the global correlation") {
    // four datasets from one generation so they share the feature basis; the
    // fourth clones ds00's distribution (identity warp, full support) and is
    // held out as the unseen corpus
    SynthConfig cfg;
    cfg.n_datasets = 4;
    cfg.samples_per_dataset = 400;
    cfg.feature_dim = 5;
    cfg.warps = {WarpSpec::identity(), WarpSpec::affine(1.0, 0.4), WarpSpec::sigmoid(3.0, 1.0),
                 WarpSpec::identity()};
    cfg.vote_count = 8;
    cfg.vote_noise_sd = 0.4;
    cfg.feature_noise_sd = 0.05;
    cfg.seed = 100;
    Corpus corpus = generate(cfg).first;
    Corpus clone;
    clone.feature_dim = corpus.feature_dim;
    clone.datasets.push_back(std::move(corpus.datasets.back()));
    corpus.datasets.pop_back();

    ExperimentSpec spec = quick_spec(23);
    spec.train.max_epochs = 60;
    spec.train.patience = 60;
    spec.replications = {0, 5, 0};
    const auto jobs = plan(corpus, Mode::Conventional, spec);

    TrainedModel model;
    bool first = true;
    ExecuteOptions opts;
    opts.on_model = [&](const TrainingJob& job, const TrainResult& trained) {
        if (!first) return;
        first = false;
        model.params = trained.params;
        model.aligner = trained.aligner;
        model.training_dataset_ids = job.train_dataset_ids;
    };
    const auto outcome = execute(jobs, corpus, spec, opts);

    // rho_G for ds00 across the 5 replications
    std::vector<double> g_values;
    for (const auto& r : outcome.results) {
        if (r.kind == VariantKind::Global && r.eval_dataset == "ds00" && r.ok()) {
            g_values.push_back(r.lcc);
        }
    }
    REQUIRE(g_values.size() == 5);
    const auto agg = stats::aggregate({g_values, stats::CorrelationKind::LCC});

    const auto results = infer_unseen(model, clone);
    REQUIRE(results.size() == 1);
    REQUIRE(results[0].ok);
    const double z_clone = stats::fisher(results[0].lcc);
    const double se = std::sqrt(agg.z_se * agg.z_se +
                                1.0 / static_cast<double>(clone.datasets[0].samples.size() - 3));
    CHECK(std::abs(z_clone - agg.z_mean) <= 3.0 * se + 0.05);
}

TEST_CASE("infer_unseen edge cases") {
    const Corpus corpus = toy_corpus(2, 40, 29);
    ExperimentSpec spec = quick_spec(29);
    spec.replications = {0, 1, 0};
    const auto jobs = plan(corpus, Mode::Conventional, spec);
    TrainedModel model;
    ExecuteOptions opts;
    opts.on_model = [&](const TrainingJob& job, const TrainResult& trained) {
        model.params = trained.params;
        model.aligner = trained.aligner;
        model.training_dataset_ids = job.train_dataset_ids;
    };
    execute(jobs, corpus, spec, opts);

    SUBCASE("empty corpus gives empty results") {
        Corpus empty;
        empty.feature_dim = corpus.feature_dim;
        CHECK(infer_unseen(model, empty).empty());
    }
    SUBCASE("id collision is a precondition violation") {
        Corpus colliding = toy_corpus(2, 40, 31);
        CHECK_THROWS_AS(infer_unseen(model, colliding), PreconditionError);
    }
    SUBCASE("feature dimension mismatch is a precondition violation") {
        SynthConfig cfg;
        cfg.n_datasets = 1;
        cfg.samples_per_dataset = 20;
        cfg.feature_dim = corpus.feature_dim + 1;
        cfg.warps = {WarpSpec::identity()};
        cfg.seed = 5;
        Corpus wrong = generate(cfg).first;
        wrong.datasets[0].dataset_id = "unseen";
        CHECK_THROWS_AS(infer_unseen(model, wrong), PreconditionError);
    }
    SUBCASE("constant labels surface per-dataset errors") {
        SynthConfig cfg;
        cfg.n_datasets = 1;
        cfg.samples_per_dataset = 30;
        cfg.feature_dim = corpus.feature_dim;
        cfg.warps = {WarpSpec::identity()};
        cfg.condition_shift[0] = {3.0, 3.0};
        cfg.feature_noise_sd = 0.1;
        cfg.seed = 6;
        Corpus degenerate = generate(cfg).first;
        degenerate.datasets[0].dataset_id = "flat";
        const auto results = infer_unseen(model, degenerate);
        REQUIRE(results.size() == 1);
        CHECK_FALSE(results[0].ok);
        CHECK_FALSE(results[0].error.empty());
    }
}

TEST_CASE("assemble_report on synthetic result sets") {
    auto result = [](Mode mode, VariantKind kind, const std::string& target,
                     const std::string& eval, size_t rep, double lcc) {
        RunResult r;
        r.mode = mode;
        r.kind = kind;
        r.target = target;
        r.eval_dataset = eval;
        r.replication = rep;
        r.lcc = lcc;
        r.srcc = lcc;
        return r;
    };

    SUBCASE("identical conventional and aligned sets give zero deltas") {
        std::vector<RunResult> results;
        for (Mode mode : {Mode::Conventional, Mode::Aligned}) {
            for (size_t rep = 0; rep < 3; ++rep) {
                results.push_back(result(mode, VariantKind::Individual, "a", "a", rep, 0.9));
                results.push_back(result(mode, VariantKind::Global, "", "a", rep, 0.8));
                results.push_back(result(mode, VariantKind::Concealed, "a", "a", rep, 0.7));
            }
        }
        const auto report = assemble_report(results);
        CHECK(report.has_conventional);
        CHECK(report.has_aligned);
        const auto& effects = report.effects.at("a");
        for (const auto& e : effects) {
            REQUIRE_FALSE(e.missing);
            CHECK(e.delta == 0.0);
            CHECK_FALSE(e.significant);
        }
        CHECK(report.conventional.at("a").gap.gap.v == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(report.conventional.at("a").gap.gap.c == doctest::Approx(0.1).epsilon(1e-12));
    }

    SUBCASE("aggregates match the stats module exactly") {
        std::vector<RunResult> results;
        const std::vector<double> values{0.6, 0.7, 0.75, 0.81};
        for (size_t rep = 0; rep < values.size(); ++rep) {
            results.push_back(
                result(Mode::Conventional, VariantKind::Global, "", "x", rep, values[rep]));
        }
        const auto report = assemble_report(results);
        const auto& cell = report.conventional.at("x").global;
        const auto agg = stats::aggregate({values, stats::CorrelationKind::LCC});
        CHECK(cell.r_avg == agg.r_avg);
        CHECK(cell.z_se == agg.z_se);
        CHECK(cell.n == 4);
        CHECK(report.conventional.at("x").individual.missing);
        CHECK(report.conventional.at("x").gap.missing);
    }
}
