#include "dsc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dsc/errors.hpp"
#include "dsc/hash.hpp"
#include "dsc/rng.hpp"
#include "dsc/stats.hpp"

using nlohmann::json;

namespace dsc {

double WarpSpec::apply(double q) const {
    switch (kind) {
        case Kind::Identity: return q;
        case Kind::Affine: return a * q + b;
        case Kind::Sigmoid: return 1.0 + 4.0 / (1.0 + std::exp(-steepness * (q - center)));
    }
    return q;
}

double WarpSpec::apply_clamped(double q) const { return std::clamp(apply(q), 1.0, 5.0); }

void WarpSpec::validate() const {
    switch (kind) {
        case Kind::Identity: break;
        case Kind::Affine:
            if (!(a > 0.0)) throw ConfigError("affine warp requires a > 0");
            break;
        case Kind::Sigmoid:
            if (center < 1.0 || center > 5.0) throw ConfigError("sigmoid warp center must be in [1, 5]");
            if (!(steepness > 0.0)) throw ConfigError("sigmoid warp steepness must be > 0");
            break;
    }
}

WarpSpec WarpSpec::identity() { return WarpSpec{}; }

WarpSpec WarpSpec::affine(double a, double b) {
    WarpSpec w;
    w.kind = Kind::Affine;
    w.a = a;
    w.b = b;
    w.validate();
    return w;
}

WarpSpec WarpSpec::sigmoid(double center, double steepness) {
    WarpSpec w;
    w.kind = Kind::Sigmoid;
    w.center = center;
    w.steepness = steepness;
    w.validate();
    return w;
}

void SynthConfig::validate() const {
    if (n_datasets == 0) throw ConfigError("synth.n_datasets must be positive");
    if (samples_per_dataset == 0) throw ConfigError("synth.samples_per_dataset must be positive");
    if (feature_dim == 0) throw ConfigError("synth.feature_dim must be positive");
    if (warps.size() != n_datasets) {
        std::ostringstream os;
        os << "synth.warps must have one entry per dataset (" << n_datasets << "), got "
           << warps.size();
        throw ConfigError(os.str());
    }
    for (const auto& w : warps) w.validate();
    if (vote_count < 1) throw ConfigError("synth.vote_count must be >= 1");
    if (vote_noise_sd < 0.0) throw ConfigError("synth.vote_noise_sd must be >= 0");
    if (feature_noise_sd < 0.0) throw ConfigError("synth.feature_noise_sd must be >= 0");
    if (id_prefix.empty()) throw ConfigError("synth.id_prefix must be nonempty");
    for (const auto& [idx, interval] : condition_shift) {
        if (idx >= n_datasets) {
            throw ConfigError("synth.condition_shift references dataset index " +
                              std::to_string(idx) + " out of range");
        }
        const auto [lo, hi] = interval;
        if (!(lo >= 1.0 && hi <= 5.0 && lo <= hi)) {
            throw ConfigError("synth.condition_shift interval must be a nonempty subset of [1, 5]");
        }
    }
}

std::string SynthConfig::dataset_id_for(size_t index) const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%02zu", index);
    return id_prefix + buf;
}

std::pair<Corpus, GroundTruth> generate(const SynthConfig& config) {
    config.validate();

    Corpus corpus;
    corpus.feature_dim = config.feature_dim;
    GroundTruth truth;

    // Feature map phi_k(q) = sin(w_k q + t_k), shared across datasets, drawn
    // once from the master seed so the same latent quality produces the same
    // features everywhere.
    Rng basis_rng(stable_hash(config.basis_seed.value_or(config.seed), "phi"));
    std::vector<double> omega(config.feature_dim), theta(config.feature_dim);
    for (size_t k = 0; k < config.feature_dim; ++k) {
        omega[k] = basis_rng.uniform(0.5, 1.5);
        theta[k] = basis_rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    }

    for (size_t j = 0; j < config.n_datasets; ++j) {
        Dataset ds;
        ds.dataset_id = config.dataset_id_for(j);
        GroundTruth::DatasetTruth dt;
        dt.warp = config.warps[j];

        double lo = 1.0, hi = 5.0;
        if (auto it = config.condition_shift.find(j); it != config.condition_shift.end()) {
            lo = it->second.first;
            hi = it->second.second;
        }

        Rng rng(stable_hash(config.seed, "dataset", static_cast<uint64_t>(j)));
        for (size_t i = 0; i < config.samples_per_dataset; ++i) {
            const double q = (lo == hi) ? lo : rng.uniform(lo, hi);

            Sample s;
            char fid[16];
            std::snprintf(fid, sizeof(fid), "f%05zu", i);
            s.file_id = fid;
            s.features.reserve(config.feature_dim);
            for (size_t k = 0; k < config.feature_dim; ++k) {
                double f = std::sin(omega[k] * q + theta[k]);
                if (config.feature_noise_sd > 0.0) f += rng.gaussian(0.0, config.feature_noise_sd);
                s.features.push_back(f);
            }

            const double warped = config.warps[j].apply(q);
            double vote_sum = 0.0;
            for (int v = 0; v < config.vote_count; ++v) {
                double raw = warped;
                if (config.vote_noise_sd > 0.0) raw += rng.gaussian(0.0, config.vote_noise_sd);
                vote_sum += std::round(std::clamp(raw, 1.0, 5.0));
            }
            s.mos = std::clamp(vote_sum / config.vote_count, 1.0, 5.0);
            s.votes = config.vote_count;

            dt.q.push_back(q);
            ds.samples.push_back(std::move(s));
        }
        truth.datasets.emplace(ds.dataset_id, std::move(dt));
        corpus.datasets.push_back(std::move(ds));
    }

    validate_corpus(corpus);
    return {std::move(corpus), std::move(truth)};
}

double oracle_correlation(const Dataset& dataset, const GroundTruth& truth) {
    auto it = truth.datasets.find(dataset.dataset_id);
    if (it == truth.datasets.end()) {
        throw Error("oracle_correlation: dataset '" + dataset.dataset_id +
                    "' unknown to ground truth");
    }
    const auto& dt = it->second;
    if (dt.q.size() != dataset.samples.size()) {
        throw Error("oracle_correlation: ground truth size mismatch for dataset '" +
                    dataset.dataset_id + "'");
    }
    std::vector<double> mos(dataset.samples.size()), ideal(dataset.samples.size());
    for (size_t i = 0; i < dataset.samples.size(); ++i) {
        mos[i] = dataset.samples[i].mos;
        ideal[i] = dt.warp.apply_clamped(dt.q[i]);
    }
    return stats::lcc(mos, ideal);
}

namespace {

json warp_to_json(const WarpSpec& w) {
    json out;
    switch (w.kind) {
        case WarpSpec::Kind::Identity:
            out["kind"] = "identity";
            break;
        case WarpSpec::Kind::Affine:
            out["kind"] = "affine";
            out["a"] = w.a;
            out["b"] = w.b;
            break;
        case WarpSpec::Kind::Sigmoid:
            out["kind"] = "sigmoid";
            out["center"] = w.center;
            out["steepness"] = w.steepness;
            break;
    }
    return out;
}

WarpSpec warp_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "identity") return WarpSpec::identity();
    if (kind == "affine") return WarpSpec::affine(j.at("a").get<double>(), j.at("b").get<double>());
    if (kind == "sigmoid") {
        return WarpSpec::sigmoid(j.at("center").get<double>(), j.at("steepness").get<double>());
    }
    throw ConfigError("unknown warp kind '" + kind + "'");
}

}  // namespace

void save_ground_truth(const GroundTruth& truth, const std::string& path) {
    json out;
    out["datasets"] = json::object();
    for (const auto& [id, dt] : truth.datasets) {
        json entry;
        entry["warp"] = warp_to_json(dt.warp);
        entry["q"] = dt.q;
        out["datasets"][id] = entry;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write ground truth '" + path + "'");
    f << out.dump(2) << "\n";
}

GroundTruth load_ground_truth(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open ground truth '" + path + "'");
    json in;
    try {
        f >> in;
    } catch (const json::exception& e) {
        throw IngestError(path + ": " + e.what());
    }
    GroundTruth truth;
    for (const auto& [id, entry] : in.at("datasets").items()) {
        GroundTruth::DatasetTruth dt;
        dt.warp = warp_from_json(entry.at("warp"));
        dt.q = entry.at("q").get<std::vector<double>>();
        truth.datasets.emplace(id, std::move(dt));
    }
    return truth;
}

}  // namespace dsc
