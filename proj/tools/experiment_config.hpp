#pragma once

// Experiment configuration: a single JSON document describes a run; CLI
// flags may override scalar fields. Parse errors name the offending field
// path and map to exit code 2.

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "dsc/dsc.hpp"
#include "dsc/errors.hpp"
#include "dsc/synthgen.hpp"

namespace dsceval_cli {

using nlohmann::json;

inline std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] inline void bad_field(const std::string& path, const std::string& what) {
    throw dsc::ConfigError(path + ": " + what);
}

inline const json& require_field(const json& j, const std::string& prefix,
                                 const std::string& key) {
    if (!j.is_object() || !j.contains(key)) bad_field(join_path(prefix, key), "missing field");
    return j.at(key);
}

inline double get_number(const json& j, const std::string& path) {
    if (!j.is_number()) bad_field(path, "must be a number");
    return j.get<double>();
}

inline uint64_t get_u64(const json& j, const std::string& path) {
    if (!j.is_number_unsigned()) bad_field(path, "must be a non-negative integer");
    return j.get<uint64_t>();
}

inline size_t get_positive(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<int64_t>() <= 0) {
        bad_field(path, "must be a positive integer");
    }
    return j.get<size_t>();
}

inline size_t get_nonneg_int(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<int64_t>() < 0) {
        bad_field(path, "must be a non-negative integer");
    }
    return j.get<size_t>();
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) bad_field(path, "must be a string");
    return j.get<std::string>();
}

inline dsc::WarpSpec parse_warp(const json& j, const std::string& path) {
    if (!j.is_object()) bad_field(path, "must be an object");
    const std::string kind = get_string(require_field(j, path, "kind"), join_path(path, "kind"));
    try {
        if (kind == "identity") return dsc::WarpSpec::identity();
        if (kind == "affine") {
            return dsc::WarpSpec::affine(get_number(require_field(j, path, "a"), join_path(path, "a")),
                                         get_number(require_field(j, path, "b"), join_path(path, "b")));
        }
        if (kind == "sigmoid") {
            return dsc::WarpSpec::sigmoid(
                get_number(require_field(j, path, "center"), join_path(path, "center")),
                get_number(require_field(j, path, "steepness"), join_path(path, "steepness")));
        }
    } catch (const dsc::ConfigError& e) {
        bad_field(path, e.what());
    }
    bad_field(join_path(path, "kind"), "must be identity, affine or sigmoid");
}

inline dsc::SynthConfig parse_synth_config(const json& j, const std::string& prefix) {
    if (!j.is_object()) bad_field(prefix, "must be an object");
    dsc::SynthConfig cfg;
    cfg.n_datasets = get_positive(require_field(j, prefix, "n_datasets"),
                                  join_path(prefix, "n_datasets"));
    cfg.samples_per_dataset = get_positive(require_field(j, prefix, "samples_per_dataset"),
                                           join_path(prefix, "samples_per_dataset"));
    cfg.feature_dim = get_positive(require_field(j, prefix, "feature_dim"),
                                   join_path(prefix, "feature_dim"));

    const json& warps = require_field(j, prefix, "warps");
    if (!warps.is_array()) bad_field(join_path(prefix, "warps"), "must be an array");
    for (size_t i = 0; i < warps.size(); ++i) {
        cfg.warps.push_back(parse_warp(warps[i], join_path(prefix, "warps[" + std::to_string(i) + "]")));
    }

    if (j.contains("vote_count")) {
        cfg.vote_count = static_cast<int>(
            get_positive(j.at("vote_count"), join_path(prefix, "vote_count")));
    }
    if (j.contains("vote_noise_sd")) {
        cfg.vote_noise_sd = get_number(j.at("vote_noise_sd"), join_path(prefix, "vote_noise_sd"));
    }
    if (j.contains("feature_noise_sd")) {
        cfg.feature_noise_sd =
            get_number(j.at("feature_noise_sd"), join_path(prefix, "feature_noise_sd"));
    }
    if (j.contains("condition_shift")) {
        const json& cs = j.at("condition_shift");
        const std::string cs_path = join_path(prefix, "condition_shift");
        if (!cs.is_object()) bad_field(cs_path, "must map dataset ids to [lo, hi] intervals");
        for (const auto& [key, value] : cs.items()) {
            size_t index = 0;
            try {
                // accept both a bare index ("3") and a generated id ("ds03")
                index = std::stoul(key.rfind("ds", 0) == 0 ? key.substr(2) : key);
            } catch (...) {
                bad_field(join_path(cs_path, key), "key must be a dataset index or dsNN id");
            }
            if (!value.is_array() || value.size() != 2) {
                bad_field(join_path(cs_path, key), "must be a [lo, hi] interval");
            }
            cfg.condition_shift[index] = {get_number(value[0], join_path(cs_path, key)),
                                          get_number(value[1], join_path(cs_path, key))};
        }
    }
    if (j.contains("seed")) cfg.seed = get_u64(j.at("seed"), join_path(prefix, "seed"));
    if (j.contains("basis_seed") && !j.at("basis_seed").is_null()) {
        cfg.basis_seed = get_u64(j.at("basis_seed"), join_path(prefix, "basis_seed"));
    }
    if (j.contains("id_prefix")) {
        cfg.id_prefix = get_string(j.at("id_prefix"), join_path(prefix, "id_prefix"));
    }

    try {
        cfg.validate();
    } catch (const dsc::ConfigError& e) {
        bad_field(prefix, e.what());
    }
    return cfg;
}

struct ExperimentConfig {
    uint64_t seed = 0;
    std::string output_dir;
    std::optional<std::string> corpus_dir;
    std::optional<dsc::SynthConfig> synth;
    dsc::ExperimentSpec spec;
    int parallelism = 1;
    std::string mode = "both";  // both | aligner | no-aligner
    std::string se_mode = "sample";
    json echo;  // effective configuration
};

inline dsc::TrainConfig parse_train_config(const json& j, const std::string& prefix) {
    dsc::TrainConfig cfg;
    if (!j.is_object()) bad_field(prefix, "must be an object");
    if (j.contains("max_epochs")) {
        cfg.max_epochs = get_positive(j.at("max_epochs"), join_path(prefix, "max_epochs"));
    }
    if (j.contains("batch_size")) {
        cfg.batch_size = get_positive(j.at("batch_size"), join_path(prefix, "batch_size"));
    }
    if (j.contains("learning_rate")) {
        cfg.learning_rate = get_number(j.at("learning_rate"), join_path(prefix, "learning_rate"));
    }
    if (j.contains("patience")) {
        cfg.patience = get_positive(j.at("patience"), join_path(prefix, "patience"));
    }
    if (j.contains("aligner_freeze_threshold")) {
        const json& t = j.at("aligner_freeze_threshold");
        if (t.is_null()) {
            cfg.aligner_freeze_threshold.reset();
        } else {
            cfg.aligner_freeze_threshold =
                get_number(t, join_path(prefix, "aligner_freeze_threshold"));
        }
    }
    if (j.contains("optimizer")) {
        const json& opt = j.at("optimizer");
        const std::string opath = join_path(prefix, "optimizer");
        std::string kind;
        if (opt.is_string()) {
            kind = opt.get<std::string>();
        } else if (opt.is_object()) {
            kind = get_string(require_field(opt, opath, "kind"), join_path(opath, "kind"));
            if (opt.contains("beta1")) {
                cfg.optimizer.beta1 = get_number(opt.at("beta1"), join_path(opath, "beta1"));
            }
            if (opt.contains("beta2")) {
                cfg.optimizer.beta2 = get_number(opt.at("beta2"), join_path(opath, "beta2"));
            }
            if (opt.contains("eps")) {
                cfg.optimizer.eps = get_number(opt.at("eps"), join_path(opath, "eps"));
            }
        } else {
            bad_field(opath, "must be a string or object");
        }
        if (kind == "sgd") {
            cfg.optimizer.kind = dsc::OptimizerConfig::Kind::Sgd;
        } else if (kind == "adam") {
            cfg.optimizer.kind = dsc::OptimizerConfig::Kind::Adam;
        } else {
            bad_field(join_path(opath, "kind"), "must be sgd or adam");
        }
    }
    try {
        cfg.validate();
    } catch (const dsc::ConfigError& e) {
        bad_field(prefix, e.what());
    }
    return cfg;
}

inline ExperimentConfig parse_experiment_config(const json& doc) {
    if (!doc.is_object()) throw dsc::ConfigError("config root must be a JSON object");
    ExperimentConfig cfg;

    cfg.seed = get_u64(require_field(doc, "", "seed"), "seed");
    if (doc.contains("output_dir")) cfg.output_dir = get_string(doc.at("output_dir"), "output_dir");

    if (doc.contains("corpus")) cfg.corpus_dir = get_string(doc.at("corpus"), "corpus");
    if (doc.contains("synth")) cfg.synth = parse_synth_config(doc.at("synth"), "synth");
    if (!cfg.corpus_dir && !cfg.synth) {
        throw dsc::ConfigError("config needs either 'corpus' (directory) or 'synth' (generator)");
    }
    if (cfg.corpus_dir && cfg.synth) {
        throw dsc::ConfigError("config must not set both 'corpus' and 'synth'");
    }

    cfg.spec.seed = cfg.seed;
    cfg.spec.split.seed = cfg.seed;
    if (doc.contains("split")) {
        const json& s = doc.at("split");
        if (!s.is_object()) bad_field("split", "must be an object");
        if (s.contains("fractions")) {
            const json& f = s.at("fractions");
            if (!f.is_array() || f.size() != 3) {
                bad_field("split.fractions", "must be [train, val, test]");
            }
            cfg.spec.split.train_fraction = get_number(f[0], "split.fractions[0]");
            cfg.spec.split.val_fraction = get_number(f[1], "split.fractions[1]");
            cfg.spec.split.test_fraction = get_number(f[2], "split.fractions[2]");
        }
        if (s.contains("honor_curated")) {
            if (!s.at("honor_curated").is_boolean()) {
                bad_field("split.honor_curated", "must be a boolean");
            }
            cfg.spec.split.honor_curated = s.at("honor_curated").get<bool>();
        }
        if (s.contains("seed")) cfg.spec.split.seed = get_u64(s.at("seed"), "split.seed");
        try {
            cfg.spec.split.validate();
        } catch (const dsc::ConfigError& e) {
            bad_field("split", e.what());
        }
    }

    cfg.spec.arch.hidden_layers = {32, 16};
    if (doc.contains("estimator")) {
        const json& e = doc.at("estimator");
        if (!e.is_object()) bad_field("estimator", "must be an object");
        if (e.contains("hidden_layers")) {
            const json& h = e.at("hidden_layers");
            if (!h.is_array()) bad_field("estimator.hidden_layers", "must be an array");
            cfg.spec.arch.hidden_layers.clear();
            for (size_t i = 0; i < h.size(); ++i) {
                cfg.spec.arch.hidden_layers.push_back(
                    get_positive(h[i], "estimator.hidden_layers[" + std::to_string(i) + "]"));
            }
        }
        if (e.contains("activation")) {
            try {
                cfg.spec.arch.activation =
                    dsc::parse_activation(get_string(e.at("activation"), "estimator.activation"));
            } catch (const dsc::ConfigError& err) {
                bad_field("estimator.activation", err.what());
            }
        }
    }

    if (doc.contains("train")) cfg.spec.train = parse_train_config(doc.at("train"), "train");

    if (doc.contains("aligner") && !doc.at("aligner").is_null()) {
        const json& a = doc.at("aligner");
        if (!a.is_object()) bad_field("aligner", "must be an object or null");
        dsc::AlignerConfig acfg;
        acfg.reference_id = get_string(require_field(a, "aligner", "reference"), "aligner.reference");
        if (a.contains("fallback_reference") && !a.at("fallback_reference").is_null()) {
            acfg.fallback_reference_id =
                get_string(a.at("fallback_reference"), "aligner.fallback_reference");
        }
        if (a.contains("hidden_units")) {
            acfg.hidden_units = get_positive(a.at("hidden_units"), "aligner.hidden_units");
        }
        if (a.contains("init_scale")) {
            acfg.init_scale = get_number(a.at("init_scale"), "aligner.init_scale");
        }
        try {
            acfg.validate();
        } catch (const dsc::ConfigError& e) {
            bad_field("aligner", e.what());
        }
        cfg.spec.aligner = std::move(acfg);
    }

    if (doc.contains("replications")) {
        const json& r = doc.at("replications");
        if (!r.is_object()) bad_field("replications", "must be an object");
        if (r.contains("individual")) {
            cfg.spec.replications.individual =
                get_nonneg_int(r.at("individual"), "replications.individual");
        }
        if (r.contains("global")) {
            cfg.spec.replications.global = get_nonneg_int(r.at("global"), "replications.global");
        }
        if (r.contains("concealed")) {
            cfg.spec.replications.concealed =
                get_nonneg_int(r.at("concealed"), "replications.concealed");
        }
        if (cfg.spec.replications.individual + cfg.spec.replications.global +
                cfg.spec.replications.concealed ==
            0) {
            bad_field("replications", "at least one variant needs a positive replication count");
        }
    }

    if (doc.contains("parallelism")) {
        cfg.parallelism = static_cast<int>(get_positive(doc.at("parallelism"), "parallelism"));
    }
    if (doc.contains("mode")) {
        cfg.mode = get_string(doc.at("mode"), "mode");
        if (cfg.mode != "both" && cfg.mode != "aligner" && cfg.mode != "no-aligner") {
            bad_field("mode", "must be both, aligner or no-aligner");
        }
    }
    if (doc.contains("se_mode")) {
        cfg.se_mode = get_string(doc.at("se_mode"), "se_mode");
        if (cfg.se_mode != "sample" && cfg.se_mode != "analytic") {
            bad_field("se_mode", "must be sample or analytic");
        }
    }

    cfg.echo = doc;
    return cfg;
}

}  // namespace dsceval_cli
