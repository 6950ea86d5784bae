#include "dsc/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dsc/errors.hpp"
#include "dsc/hash.hpp"
#include "dsc/rng.hpp"
#include "dsc/stats.hpp"

namespace dsc {

std::string activation_name(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + s + "' (expected tanh or relu)");
}

void EstimatorArch::validate() const {
    if (input_dim == 0) throw ConfigError("estimator input_dim must be positive");
    for (size_t h : hidden_layers) {
        if (h == 0) throw ConfigError("estimator hidden layer sizes must be positive");
    }
}

std::vector<std::pair<size_t, size_t>> EstimatorArch::layer_shapes() const {
    std::vector<std::pair<size_t, size_t>> shapes;
    size_t in = input_dim;
    for (size_t h : hidden_layers) {
        shapes.emplace_back(in, h);
        in = h;
    }
    shapes.emplace_back(in, 1);
    return shapes;
}

size_t EstimatorArch::param_count() const {
    size_t total = 0;
    for (auto [in, out] : layer_shapes()) total += in * out + out;
    return total;
}

size_t EstimatorParams::param_count() const {
    size_t total = 0;
    for (const auto& l : layers) total += l.w.size() + l.b.size();
    return total;
}

EstimatorParams init_estimator(const EstimatorArch& arch, uint64_t seed) {
    arch.validate();
    EstimatorParams params;
    params.arch = arch;
    Rng rng(stable_hash(seed, "estimator"));
    for (auto [in, out] : arch.layer_shapes()) {
        EstimatorParams::Layer layer;
        layer.w.resize(in * out);
        layer.b.assign(out, 0.0);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& w : layer.w) w = rng.uniform(-scale, scale);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

namespace {

double activate(Activation a, double z) {
    return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

double activate_deriv(Activation a, double activated) {
    // both activations allow the derivative from the activated value
    return a == Activation::Tanh ? 1.0 - activated * activated : (activated > 0.0 ? 1.0 : 0.0);
}

// Per-layer activations for one example; acts[0] is the input.
void forward_trace(const EstimatorParams& p, std::span<const double> x,
                   std::vector<std::vector<double>>& acts) {
    const auto shapes = p.arch.layer_shapes();
    acts.resize(shapes.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (size_t l = 0; l < shapes.size(); ++l) {
        const auto [in, out] = shapes[l];
        const bool last = (l + 1 == shapes.size());
        acts[l + 1].assign(out, 0.0);
        const auto& layer = p.layers[l];
        for (size_t o = 0; o < out; ++o) {
            double z = layer.b[o];
            const double* wrow = layer.w.data() + o * in;
            const double* a = acts[l].data();
            for (size_t i = 0; i < in; ++i) z += wrow[i] * a[i];
            acts[l + 1][o] = last ? z : activate(p.arch.activation, z);
        }
    }
}

struct EstimatorGrad {
    std::vector<EstimatorParams::Layer> layers;

    explicit EstimatorGrad(const EstimatorParams& p) {
        layers.resize(p.layers.size());
        for (size_t l = 0; l < p.layers.size(); ++l) {
            layers[l].w.assign(p.layers[l].w.size(), 0.0);
            layers[l].b.assign(p.layers[l].b.size(), 0.0);
        }
    }
};

// Backpropagates d(loss)/d(raw_score) through the estimator, accumulating
// parameter gradients.
void backward_trace(const EstimatorParams& p, const std::vector<std::vector<double>>& acts,
                    double upstream, EstimatorGrad& grad) {
    const auto shapes = p.arch.layer_shapes();
    std::vector<double> delta{upstream};  // gradient w.r.t. current layer output
    for (size_t l = shapes.size(); l-- > 0;) {
        const auto [in, out] = shapes[l];
        const bool last = (l + 1 == shapes.size());
        const auto& layer = p.layers[l];
        auto& glayer = grad.layers[l];
        std::vector<double> prev_delta(in, 0.0);
        for (size_t o = 0; o < out; ++o) {
            double dz = delta[o];
            if (!last) dz *= activate_deriv(p.arch.activation, acts[l + 1][o]);
            glayer.b[o] += dz;
            const double* a = acts[l].data();
            double* gw = glayer.w.data() + o * in;
            const double* w = layer.w.data() + o * in;
            for (size_t i = 0; i < in; ++i) {
                gw[i] += dz * a[i];
                prev_delta[i] += dz * w[i];
            }
        }
        delta = std::move(prev_delta);
    }
}

// Flat views over all trainable doubles; estimator first, then aligner
// mappings in their (sorted) map order.
std::vector<double*> param_view(EstimatorParams& p) {
    std::vector<double*> view;
    for (auto& l : p.layers) {
        for (auto& w : l.w) view.push_back(&w);
        for (auto& b : l.b) view.push_back(&b);
    }
    return view;
}

std::vector<double*> param_view(AlignerParams& a) {
    std::vector<double*> view;
    for (auto& [id, m] : a.mappings) {
        (void)id;
        for (auto& w : m.w_in) view.push_back(&w);
        for (auto& b : m.b_in) view.push_back(&b);
        for (auto& w : m.w_out) view.push_back(&w);
        view.push_back(&m.b_out);
    }
    return view;
}

struct AlignerGrad {
    std::map<std::string, ScoreMappingGrad> mappings;

    explicit AlignerGrad(const AlignerParams& a) {
        for (const auto& [id, m] : a.mappings) mappings.emplace(id, ScoreMappingGrad(m.w_in.size()));
    }

    std::vector<double*> view() {
        std::vector<double*> v;
        for (auto& [id, g] : mappings) {
            (void)id;
            for (auto& w : g.w_in) v.push_back(&w);
            for (auto& b : g.b_in) v.push_back(&b);
            for (auto& w : g.w_out) v.push_back(&w);
            v.push_back(&g.b_out);
        }
        return v;
    }
};

std::vector<double*> grad_view(EstimatorGrad& g) {
    std::vector<double*> view;
    for (auto& l : g.layers) {
        for (auto& w : l.w) view.push_back(&w);
        for (auto& b : l.b) view.push_back(&b);
    }
    return view;
}

// Aligned prediction for a training-set example. mapping may be null
// (reference dataset or no aligner).
const ScoreMapping* mapping_for(const std::optional<AlignerParams>& aligner,
                                const std::string& dataset_id) {
    if (!aligner) return nullptr;
    if (dataset_id == aligner->reference_id) return nullptr;
    auto it = aligner->mappings.find(dataset_id);
    if (it == aligner->mappings.end()) {
        throw UnknownDatasetError("aligner has no mapping for dataset '" + dataset_id + "'");
    }
    return &it->second;
}

// Batch MSE plus (optionally) analytic gradients.
double batch_loss(const EstimatorParams& p, const TrainingSet& data,
                  std::span<const size_t> indices, EstimatorGrad* egrad, AlignerGrad* agrad,
                  std::vector<std::vector<double>>& acts_scratch,
                  const std::vector<const ScoreMapping*>& mapping_by_dataset) {
    const double n = static_cast<double>(indices.size());
    double loss = 0.0;
    for (size_t idx : indices) {
        const auto& ex = data.examples[idx];
        forward_trace(p, ex.features, acts_scratch);
        const double raw = acts_scratch.back()[0];
        const ScoreMapping* mapping = mapping_by_dataset[ex.dataset];
        const double out = mapping ? mapping->forward(raw) : raw;
        const double err = out - ex.mos;
        loss += err * err;
        if (egrad) {
            const double upstream = 2.0 * err / n;
            double upstream_raw = upstream;
            if (mapping) {
                ScoreMappingGrad* mg = nullptr;
                if (agrad) mg = &agrad->mappings.at(data.dataset_ids[ex.dataset]);
                upstream_raw = mapping_backward(*mapping, raw, upstream, mg);
            }
            backward_trace(p, acts_scratch, upstream_raw, *egrad);
        }
    }
    return loss / n;
}

std::vector<const ScoreMapping*> resolve_mappings(const std::optional<AlignerParams>& aligner,
                                                  const std::vector<std::string>& dataset_ids) {
    std::vector<const ScoreMapping*> out(dataset_ids.size(), nullptr);
    for (size_t i = 0; i < dataset_ids.size(); ++i) {
        out[i] = mapping_for(aligner, dataset_ids[i]);
    }
    return out;
}

struct AdamState {
    std::vector<double> m, v;
    size_t t = 0;

    explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

void apply_update(const TrainConfig& cfg, std::span<double* const> params,
                  std::span<double* const> grads, AdamState* adam) {
    const double lr = cfg.learning_rate;
    if (cfg.optimizer.kind == OptimizerConfig::Kind::Sgd) {
        for (size_t i = 0; i < params.size(); ++i) *params[i] -= lr * *grads[i];
        return;
    }
    const double b1 = cfg.optimizer.beta1;
    const double b2 = cfg.optimizer.beta2;
    const double eps = cfg.optimizer.eps;
    adam->t += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam->t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam->t));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = *grads[i];
        adam->m[i] = b1 * adam->m[i] + (1.0 - b1) * g;
        adam->v[i] = b2 * adam->v[i] + (1.0 - b2) * g * g;
        const double mhat = adam->m[i] / bc1;
        const double vhat = adam->v[i] / bc2;
        *params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Fisher-averaged per-dataset validation LCC; datasets whose correlation is
// undefined (constant predictions or labels) contribute z = 0.
double fisher_averaged_val_lcc(const std::vector<std::vector<double>>& preds,
                               const std::vector<std::vector<double>>& labels) {
    double zsum = 0.0;
    size_t n = 0;
    for (size_t d = 0; d < preds.size(); ++d) {
        if (preds[d].empty()) continue;
        double r = 0.0;
        try {
            r = stats::lcc(preds[d], labels[d]);
        } catch (const UndefinedCorrelation&) {
            r = 0.0;
        }
        zsum += stats::fisher(r);
        ++n;
    }
    return n == 0 ? 0.0 : stats::inv_fisher(zsum / static_cast<double>(n));
}

}  // namespace

double forward(const EstimatorParams& params, std::span<const double> features) {
    if (features.size() != params.arch.input_dim) {
        std::ostringstream os;
        os << "forward: feature length " << features.size() << " != input_dim "
           << params.arch.input_dim;
        throw ValidationError(os.str());
    }
    std::vector<std::vector<double>> acts;
    forward_trace(params, features, acts);
    return acts.back()[0];
}

double predict(const EstimatorParams& params, const std::optional<AlignerParams>& aligner,
               std::span<const double> features, const std::string& dataset_id,
               bool reference_scale) {
    const double raw = forward(params, features);
    if (!aligner || reference_scale) return raw;
    return apply(*aligner, raw, dataset_id);
}

void TrainConfig::validate() const {
    if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (patience == 0) throw ConfigError("train.patience must be positive");
    // thresholds above 1 are allowed and simply never trigger
    if (aligner_freeze_threshold && *aligner_freeze_threshold < 0.0) {
        throw ConfigError("train.aligner_freeze_threshold must be >= 0");
    }
    if (optimizer.kind == OptimizerConfig::Kind::Adam) {
        if (!(optimizer.beta1 > 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 > 0.0 &&
              optimizer.beta2 < 1.0 && optimizer.eps > 0.0)) {
            throw ConfigError("train.optimizer adam parameters out of range");
        }
    }
}

uint32_t TrainingSet::intern(const std::string& dataset_id) {
    for (uint32_t i = 0; i < dataset_ids.size(); ++i) {
        if (dataset_ids[i] == dataset_id) return i;
    }
    dataset_ids.push_back(dataset_id);
    return static_cast<uint32_t>(dataset_ids.size() - 1);
}

void TrainingSet::add(const std::string& dataset_id, std::vector<double> features, double mos) {
    Example ex;
    ex.dataset = intern(dataset_id);
    ex.features = std::move(features);
    ex.mos = mos;
    examples.push_back(std::move(ex));
}

std::string history_csv(const TrainHistory& history) {
    auto fmt = [](double v) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        return std::string(buf, ptr);
    };
    std::string out = "epoch,train_loss,val_loss,val_corr,aligner_frozen\n";
    for (const auto& e : history.epochs) {
        out += std::to_string(e.epoch) + ',' + fmt(e.train_loss) + ',' + fmt(e.val_loss) + ',' +
               fmt(e.val_corr) + ',' + (e.aligner_frozen ? "1" : "0") + "\n";
    }
    return out;
}

TrainResult train(const EstimatorParams& init, const TrainingSet& train_set,
                  const TrainingSet& val_set, const TrainConfig& cfg,
                  std::optional<AlignerParams> aligner) {
    cfg.validate();
    if (train_set.empty()) throw PreconditionError("train: empty training set");
    if (val_set.empty()) throw PreconditionError("train: empty validation set");
    if (aligner) {
        for (const auto& ids : {train_set.dataset_ids, val_set.dataset_ids}) {
            for (const auto& id : ids) {
                if (!aligner->knows(id)) {
                    throw PreconditionError("train: dataset '" + id +
                                            "' is not registered with the aligner");
                }
            }
        }
    }

    EstimatorParams params = init;
    const auto est_params = param_view(params);
    std::vector<double*> align_params;
    if (aligner) align_params = param_view(*aligner);

    AdamState est_adam(est_params.size());
    AdamState align_adam(align_params.size());

    bool frozen = aligner.has_value() && cfg.aligner_freeze_threshold.has_value();
    if (aligner) aligner->frozen = frozen;

    // Validation bookkeeping: group val examples by dataset once.
    std::vector<std::vector<size_t>> val_by_dataset(val_set.dataset_ids.size());
    for (size_t i = 0; i < val_set.examples.size(); ++i) {
        val_by_dataset[val_set.examples[i].dataset].push_back(i);
    }
    std::vector<std::vector<double>> val_labels(val_set.dataset_ids.size());
    for (size_t d = 0; d < val_by_dataset.size(); ++d) {
        for (size_t i : val_by_dataset[d]) val_labels[d].push_back(val_set.examples[i].mos);
    }

    TrainResult best;
    best.params = params;
    best.aligner = aligner;
    double best_val_loss = std::numeric_limits<double>::infinity();
    size_t epochs_since_improvement = 0;

    TrainHistory history;
    std::vector<size_t> order(train_set.examples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<std::vector<double>> acts;

    for (size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto train_mappings = resolve_mappings(aligner, train_set.dataset_ids);

        // deterministic batch order from (seed, epoch)
        {
            Rng shuffle_rng(stable_hash(cfg.seed, "epoch", static_cast<uint64_t>(epoch)));
            std::iota(order.begin(), order.end(), size_t{0});
            shuffle_rng.shuffle(order);
        }

        double epoch_loss = 0.0;
        size_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            std::span<const size_t> batch(order.data() + start, end - start);

            EstimatorGrad egrad(params);
            std::optional<AlignerGrad> agrad;
            if (aligner && !frozen) agrad.emplace(*aligner);

            const double loss = batch_loss(params, train_set, batch, &egrad,
                                           agrad ? &*agrad : nullptr, acts, train_mappings);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << " batch "
                   << batches;
                throw TrainingDiverged(os.str());
            }
            epoch_loss += loss;
            ++batches;

            const auto eg = grad_view(egrad);
            apply_update(cfg, est_params, eg, &est_adam);
            if (agrad) {
                const auto ag = agrad->view();
                apply_update(cfg, align_params, ag, &align_adam);
            }
        }
        epoch_loss /= static_cast<double>(batches);

        // validation pass
        auto val_mappings = resolve_mappings(aligner, val_set.dataset_ids);
        std::vector<std::vector<double>> val_preds(val_set.dataset_ids.size());
        double val_loss = 0.0;
        for (size_t d = 0; d < val_by_dataset.size(); ++d) {
            val_preds[d].reserve(val_by_dataset[d].size());
            for (size_t i : val_by_dataset[d]) {
                const auto& ex = val_set.examples[i];
                forward_trace(params, ex.features, acts);
                const double raw = acts.back()[0];
                const double out = val_mappings[d] ? val_mappings[d]->forward(raw) : raw;
                val_preds[d].push_back(out);
                const double err = out - ex.mos;
                val_loss += err * err;
            }
        }
        val_loss /= static_cast<double>(val_set.examples.size());
        if (!std::isfinite(val_loss)) {
            std::ostringstream os;
            os << "training diverged: non-finite validation loss at epoch " << epoch;
            throw TrainingDiverged(os.str());
        }
        const double val_corr = fisher_averaged_val_lcc(val_preds, val_labels);

        history.epochs.push_back({epoch, epoch_loss, val_loss, val_corr, frozen});

        if (val_loss < best_val_loss) {
            best_val_loss = val_loss;
            best.params = params;
            best.aligner = aligner;
            history.best_epoch = epoch;
            epochs_since_improvement = 0;
        } else {
            ++epochs_since_improvement;
        }

        // unfreeze once the validation correlation reaches the threshold
        if (frozen && cfg.aligner_freeze_threshold && val_corr >= *cfg.aligner_freeze_threshold) {
            frozen = false;
            if (aligner) aligner->frozen = false;
        }

        if (epochs_since_improvement >= cfg.patience) break;
    }

    best.history = std::move(history);
    if (best.aligner) {
        // report the final freeze state, not the snapshot's
        best.aligner->frozen = frozen;
    }
    return best;
}

double grad_check(const EstimatorParams& params, const std::optional<AlignerParams>& aligner,
                  const TrainingSet& batch, double eps) {
    if (eps < 1e-8 || eps > 1e-3) throw ConfigError("grad_check: eps must be in [1e-8, 1e-3]");
    if (batch.empty()) throw PreconditionError("grad_check: empty batch");

    EstimatorParams p = params;
    std::optional<AlignerParams> a = aligner;

    std::vector<size_t> indices(batch.examples.size());
    std::iota(indices.begin(), indices.end(), size_t{0});
    std::vector<std::vector<double>> acts;

    const auto mappings = resolve_mappings(a, batch.dataset_ids);

    // analytic gradient
    EstimatorGrad egrad(p);
    std::optional<AlignerGrad> agrad;
    if (a) agrad.emplace(*a);
    batch_loss(p, batch, indices, &egrad, agrad ? &*agrad : nullptr, acts, mappings);

    std::vector<double*> pview = param_view(p);
    std::vector<double*> gview = grad_view(egrad);
    if (a) {
        const auto av = param_view(*a);
        pview.insert(pview.end(), av.begin(), av.end());
        const auto agv = agrad->view();
        gview.insert(gview.end(), agv.begin(), agv.end());
    }

    double max_rel = 0.0;
    for (size_t i = 0; i < pview.size(); ++i) {
        const double saved = *pview[i];
        *pview[i] = saved + eps;
        const double lp = batch_loss(p, batch, indices, nullptr, nullptr, acts, mappings);
        *pview[i] = saved - eps;
        const double lm = batch_loss(p, batch, indices, nullptr, nullptr, acts, mappings);
        *pview[i] = saved;

        const double numeric = (lp - lm) / (2.0 * eps);
        const double analytic = *gview[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    }
    return max_rel;
}

}  // namespace dsc
