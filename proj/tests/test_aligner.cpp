#include <doctest.h>

#include <cmath>
#include <vector>

#include "dsc/aligner.hpp"
#include "dsc/corpus.hpp"
#include "dsc/errors.hpp"
#include "dsc/model.hpp"
#include "dsc/stats.hpp"
#include "dsc/synthgen.hpp"

using namespace dsc;

namespace {

std::vector<std::string> nine_plus_reference() {
    std::vector<std::string> ids{"ref"};
    for (int i = 0; i < 9; ++i) ids.push_back("d" + std::to_string(i));
    return ids;
}

}  // namespace

TEST_CASE("aligner parameter count is 3h+1 per non-reference dataset") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    cfg.hidden_units = 16;
    const auto params = init_aligner(cfg, nine_plus_reference(), 1);
    CHECK(params.mappings.size() == 9);
    CHECK(params.param_count() == 9 * (3 * 16 + 1));  // 441
    CHECK(params.mappings.count("ref") == 0);
}

TEST_CASE("zero init scale is the exact identity everywhere") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    cfg.init_scale = 0.0;
    const auto params = init_aligner(cfg, {"ref", "a", "b"}, 7);
    for (double s = 1.0; s <= 5.0; s += 0.125) {
        CHECK(apply(params, s, "a") == s);
        CHECK(apply(params, s, "b") == s);
    }
}

TEST_CASE("near-identity initialization stays within 10x init_scale") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    cfg.init_scale = 1e-3;
    const auto params = init_aligner(cfg, {"ref", "j"}, 3);
    for (double s = 1.0; s <= 5.0; s += 0.25) {
        CHECK(std::abs(apply(params, s, "j") - s) <= 10 * cfg.init_scale);
    }
    CHECK(std::abs(apply(params, 3.2, "j") - 3.2) <= 10 * cfg.init_scale);
}

TEST_CASE("initialization is deterministic in the seed") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    const auto a = init_aligner(cfg, {"ref", "x", "y"}, 11);
    const auto b = init_aligner(cfg, {"ref", "x", "y"}, 11);
    for (const auto& [id, m] : a.mappings) {
        const auto& other = b.mappings.at(id);
        CHECK(m.w_in == other.w_in);
        CHECK(m.b_in == other.b_in);
        CHECK(m.w_out == other.w_out);
        CHECK(m.b_out == other.b_out);
    }
    const auto c = init_aligner(cfg, {"ref", "x", "y"}, 12);
    CHECK(a.mappings.at("x").w_in != c.mappings.at("x").w_in);
}

TEST_CASE("reference identity is bit-exact for any score") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    cfg.init_scale = 0.5;  // mappings far from identity
    const auto params = init_aligner(cfg, {"ref", "other"}, 5);
    for (int i = 0; i <= 100; ++i) {
        const double s = 1.0 + 4.0 * static_cast<double>(i) / 100.0;
        CHECK(apply(params, s, "ref") == s);
    }
}

TEST_CASE("unknown dataset ids are rejected") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    const auto params = init_aligner(cfg, {"ref", "known"}, 5);
    CHECK_THROWS_AS(apply(params, 3.0, "mystery"), UnknownDatasetError);
}

TEST_CASE("config validation") {
    AlignerConfig cfg;
    cfg.reference_id = "ref";
    cfg.fallback_reference_id = "ref";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    AlignerConfig cfg2;
    cfg2.reference_id = "ref";
    cfg2.hidden_units = 0;
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);

    AlignerConfig cfg3;
    cfg3.reference_id = "not_present";
    CHECK_THROWS_AS(init_aligner(cfg3, {"a", "b"}, 1), ConfigError);
}

TEST_CASE("global training on an offset corpus recovers the warp") {
    // Two datasets sharing latent quality; the second is rated 0.8 higher.
    // After aligned training the mapping should carry ~3.0 -> ~3.8 and be
    // rank-faithful to the true warp across the score range.
    SynthConfig scfg;
    scfg.n_datasets = 2;
    scfg.samples_per_dataset = 1200;
    scfg.feature_dim = 6;
    scfg.warps = {WarpSpec::identity(), WarpSpec::affine(1.0, 0.8)};
    scfg.vote_count = 32;       // heavy vote averaging:
    scfg.vote_noise_sd = 0.25;  // dithers the 5-point rounding away
    scfg.feature_noise_sd = 0.02;
    scfg.seed = 2026;
    auto [corpus, truth] = generate(scfg);

    SplitSpec split;
    split.seed = 1;
    TrainingSet train_set, val_set;
    for (const auto& ds : corpus.datasets) {
        const auto parts = split_dataset(ds, split);
        for (const auto& s : parts.train) train_set.add(ds.dataset_id, s.features, s.mos);
        for (const auto& s : parts.val) val_set.add(ds.dataset_id, s.features, s.mos);
    }

    EstimatorArch arch;
    arch.input_dim = scfg.feature_dim;
    arch.hidden_layers = {24, 12};

    AlignerConfig acfg;
    acfg.reference_id = "ds00";
    const auto aligner0 = init_aligner(acfg, corpus.dataset_ids(), 3);

    TrainConfig tcfg;
    tcfg.max_epochs = 150;
    tcfg.batch_size = 64;
    tcfg.learning_rate = 5e-3;
    tcfg.patience = 40;
    tcfg.seed = 3;
    tcfg.aligner_freeze_threshold = 0.6;

    const auto result = train(init_estimator(arch, 3), train_set, val_set, tcfg, aligner0);
    REQUIRE(result.aligner.has_value());
    CHECK_FALSE(result.aligner->frozen);  // threshold must have been reached

    const double mapped = apply(*result.aligner, 3.0, "ds01");
    CHECK(mapped >= 3.6);
    CHECK(mapped <= 4.0);

    // rank agreement with the true warp over a 101-point score grid
    std::vector<double> learned, ideal;
    for (int i = 0; i <= 100; ++i) {
        const double s = 1.0 + 4.0 * static_cast<double>(i) / 100.0;
        learned.push_back(apply(*result.aligner, s, "ds01"));
        ideal.push_back(truth.datasets.at("ds01").warp.apply_clamped(s));
    }
    CHECK(stats::srcc(learned, ideal) >= 0.99);
}
