#include "lodet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lodet/errors.hpp"
#include "lodet/parallel.hpp"
#include "lodet/rng.hpp"

namespace lodet {

using nlohmann::json;

namespace {

constexpr double kRmsEpsilon = 1e-8;

struct PairRef {
    int study = 0;
    int timepoint = 0;
};

PatchInputs segment_inputs(const TrainingSegment& seg, int size) {
    PatchInputs in;
    in.size = size;
    in.main = &seg.main_patch;
    in.prior = &seg.prior_patch;
    for (const auto& lr : seg.lowres_patches) in.lowres.push_back(&lr);
    return in;
}

void add_grads(Model& total, const Model& part) {
    for (std::size_t p = 0; p < total.pathways.size(); ++p) {
        for (std::size_t l = 0; l < total.pathways[p].size(); ++l) {
            auto& t = total.pathways[p][l];
            const auto& s = part.pathways[p][l];
            for (std::size_t i = 0; i < t.weights.size(); ++i) t.weights[i] += s.weights[i];
            for (std::size_t i = 0; i < t.biases.size(); ++i) t.biases[i] += s.biases[i];
        }
    }
    for (std::size_t l = 0; l < total.head.size(); ++l) {
        auto& t = total.head[l];
        const auto& s = part.head[l];
        for (std::size_t i = 0; i < t.weights.size(); ++i) t.weights[i] += s.weights[i];
        for (std::size_t i = 0; i < t.biases.size(); ++i) t.biases[i] += s.biases[i];
    }
}

void zero_grads_inplace(Model& g) {
    for (auto& pathway : g.pathways) {
        for (auto& layer : pathway) {
            std::fill(layer.weights.begin(), layer.weights.end(), 0.0f);
            std::fill(layer.biases.begin(), layer.biases.end(), 0.0f);
        }
    }
    for (auto& layer : g.head) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0f);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0f);
    }
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

SegmentBatchEval evaluate_segment_batch(const Model& model,
                                        const std::vector<TrainingSegment>& segments,
                                        const SegmentSpec& spec, LossKind kind,
                                        const VssParams& params, int n_threads) {
    if (segments.empty()) throw ValidationError("evaluate_segment_batch: empty segment batch");
    SegmentBatchEval out;
    const int b = static_cast<int>(segments.size());
    std::vector<std::vector<float>> probs(static_cast<std::size_t>(b));
    parallel_for(
        b,
        [&](int i) {
            probs[static_cast<std::size_t>(i)] =
                forward(model,
                        segment_inputs(segments[static_cast<std::size_t>(i)], spec.main_size))
                    .probs;
        },
        n_threads);
    const int os = spec.output_size();
    out.batch.shape = {os, os, os};
    out.batch.labels.reserve(static_cast<std::size_t>(b));
    out.batch.preds.reserve(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        for (float p : probs[static_cast<std::size_t>(i)]) {
            if (!std::isfinite(p)) {
                throw ValidationError(
                    "evaluate_segment_batch: model produced non-finite predictions (diverged)");
            }
        }
        out.batch.labels.push_back(segments[static_cast<std::size_t>(i)].label_patch);
        out.batch.preds.emplace_back(probs[static_cast<std::size_t>(i)].begin(),
                                     probs[static_cast<std::size_t>(i)].end());
    }
    out.loss = evaluate_loss(kind, out.batch, params);
    return out;
}

void TrainConfig::validate() const {
    vss.validate();
    if (!(learning_rate >= 0.0)) throw ValidationError("TrainConfig: learning_rate must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ValidationError("TrainConfig: momentum must be in [0,1)");
    }
    if (!(rms_decay > 0.0 && rms_decay < 1.0)) {
        throw ValidationError("TrainConfig: rms_decay must be in (0,1)");
    }
    if (l1_weight < 0.0 || l2_weight < 0.0) {
        throw ValidationError("TrainConfig: regularization weights must be >= 0");
    }
    if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("TrainConfig: batch_size must be >= 1");
    if (segments_per_epoch < 1) {
        throw ValidationError("TrainConfig: segments_per_epoch must be >= 1");
    }
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ValidationError("TrainConfig: validation_fraction must be in [0,1)");
    }
    segments.validate();
}

RmsPropNesterov::RmsPropNesterov(const Model& model, double learning_rate, double momentum,
                                 double rms_decay)
    : lr_(learning_rate), momentum_(momentum), decay_(rms_decay) {
    auto add_tensor = [this](const std::vector<float>& t) {
        cache_.emplace_back(t.size(), 0.0f);
        velocity_.emplace_back(t.size(), 0.0f);
    };
    for (const auto& pathway : model.pathways) {
        for (const auto& layer : pathway) {
            add_tensor(layer.weights);
            add_tensor(layer.biases);
        }
    }
    for (const auto& layer : model.head) {
        add_tensor(layer.weights);
        add_tensor(layer.biases);
    }
}

void RmsPropNesterov::step(Model& model, const Model& grads, double l1_weight, double l2_weight) {
    std::size_t tensor_idx = 0;
    auto update_tensor = [&](std::vector<float>& param, const std::vector<float>& grad,
                             bool regularize) {
        auto& cache = cache_[tensor_idx];
        auto& vel = velocity_[tensor_idx];
        ++tensor_idx;
        if (param.size() != grad.size() || param.size() != cache.size()) {
            throw InternalError("optimizer tensor shape drift");
        }
        for (std::size_t i = 0; i < param.size(); ++i) {
            double g = grad[i];
            if (regularize) {
                const double w = param[i];
                g += l1_weight * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0)) + l2_weight * w;
            }
            const double c = decay_ * cache[i] + (1.0 - decay_) * g * g;
            cache[i] = static_cast<float>(c);
            const double scaled = lr_ * g / std::sqrt(c + kRmsEpsilon);
            const double v_new = momentum_ * vel[i] - scaled;
            vel[i] = static_cast<float>(v_new);
            param[i] = static_cast<float>(param[i] + momentum_ * v_new - scaled);
        }
    };
    auto walk = [&](Model& m, const Model& g) {
        for (std::size_t p = 0; p < m.pathways.size(); ++p) {
            for (std::size_t l = 0; l < m.pathways[p].size(); ++l) {
                update_tensor(m.pathways[p][l].weights, g.pathways[p][l].weights, true);
                update_tensor(m.pathways[p][l].biases, g.pathways[p][l].biases, false);
            }
        }
        for (std::size_t l = 0; l < m.head.size(); ++l) {
            update_tensor(m.head[l].weights, g.head[l].weights, true);
            update_tensor(m.head[l].biases, g.head[l].biases, false);
        }
    };
    walk(model, grads);
}

TrainResult train(const std::vector<LongitudinalStudy>& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
    model_config.validate();
    train_config.validate();
    if (corpus.empty()) throw ValidationError("train: corpus is empty");
    if (train_config.segments.n_conv_layers != model_config.n_conv_layers ||
        train_config.segments.lowres_factors != model_config.lowres_factors) {
        throw ValidationError(
            "train: SegmentSpec layers/low-res factors must match the model config");
    }
    bool any_lesions = false;
    for (const auto& study : corpus) {
        for (const auto& tp : study.timepoints) {
            if (tp.reference_mask.positive_count() > 0) any_lesions = true;
        }
    }
    if (!any_lesions) throw ValidationError("train: no study in the corpus has lesions");

    Rng root(train_config.seed);

    // Validation split by study, never by segment.
    std::vector<int> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = root.fork(777);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1],
                  order[static_cast<std::size_t>(split_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    int n_val = static_cast<int>(std::floor(train_config.validation_fraction *
                                            static_cast<double>(corpus.size()) + 0.5));
    if (train_config.validation_fraction > 0.0 && corpus.size() > 1 && n_val == 0) n_val = 1;
    n_val = std::min<int>(n_val, static_cast<int>(corpus.size()) - 1);

    std::vector<PairRef> train_pairs, val_pairs;
    for (std::size_t k = 0; k < order.size(); ++k) {
        const int s = order[k];
        const auto n_tp = static_cast<int>(corpus[static_cast<std::size_t>(s)].timepoints.size());
        for (int t = 0; t < n_tp; ++t) {
            if (static_cast<int>(k) < n_val) val_pairs.push_back({s, t});
            else train_pairs.push_back({s, t});
        }
    }

    Model model = make_model(model_config);
    RmsPropNesterov optimizer(model, train_config.learning_rate, train_config.momentum,
                              train_config.rms_decay);

    const SegmentSpec& spec = train_config.segments;
    const int threads = train_config.n_threads;
    TrainingLog log;

    auto sample_pair_segments = [&](const std::vector<PairRef>& pairs, int count, Rng& rng,
                                    bool with_augment) {
        // Tally how many segments each (study, timepoint) pair contributes,
        // then sample per pair in one call so tumor-voxel scans happen once.
        std::vector<int> tally(pairs.size(), 0);
        for (int i = 0; i < count; ++i) {
            ++tally[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(pairs.size()) - 1))];
        }
        std::vector<TrainingSegment> segments;
        segments.reserve(static_cast<std::size_t>(count));
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            if (tally[p] == 0) continue;
            SampleSet set = sample_segments(corpus[static_cast<std::size_t>(pairs[p].study)],
                                            pairs[p].timepoint, spec, tally[p], rng.next_u64());
            if (set.tumor_fallback) log.tumor_sampling_fallback = true;
            for (auto& seg : set.segments) segments.push_back(std::move(seg));
        }
        // Shuffle so batches mix studies.
        for (std::size_t i = segments.size(); i > 1; --i) {
            std::swap(segments[i - 1],
                      segments[static_cast<std::size_t>(
                          rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
        }
        if (with_augment) {
            for (auto& seg : segments) seg = augment(seg, spec, rng.next_u64());
        }
        return segments;
    };

    std::vector<Model> sample_grads;
    Model total_grads = make_zero_grads(model);

    for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        Rng epoch_rng = root.fork(1000 + static_cast<std::uint64_t>(epoch));
        std::vector<TrainingSegment> segments =
            sample_pair_segments(train_pairs, train_config.segments_per_epoch, epoch_rng, true);

        double loss_sum = 0.0;
        std::map<std::string, double> comp_sum;
        int steps = 0;

        for (std::size_t start = 0; start < segments.size();
             start += static_cast<std::size_t>(train_config.batch_size)) {
            const std::size_t end =
                std::min(segments.size(), start + static_cast<std::size_t>(train_config.batch_size));
            std::vector<TrainingSegment> batch_segments(segments.begin() + static_cast<std::ptrdiff_t>(start),
                                                        segments.begin() + static_cast<std::ptrdiff_t>(end));
            SegmentBatchEval fwd;
            try {
                fwd = evaluate_segment_batch(model, batch_segments, spec, train_config.loss,
                                             train_config.vss, threads);
            } catch (const ValidationError& e) {
                throw ValidationError("training aborted at epoch " + std::to_string(epoch) + ": " +
                                      e.what());
            }
            if (!std::isfinite(fwd.loss.total)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ": loss=" << fwd.loss.total;
                for (const auto& [k, v] : fwd.loss.components) msg << " " << k << "=" << v;
                throw ValidationError(msg.str());
            }
            loss_sum += fwd.loss.total;
            for (const auto& [k, v] : fwd.loss.components) comp_sum[k] += v;
            ++steps;

            // dLoss/dlogit = dLoss/dprob * prob * (1 - prob).
            const int b = static_cast<int>(batch_segments.size());
            std::vector<std::vector<float>> dlogits(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                const auto& preds = fwd.batch.preds[static_cast<std::size_t>(i)];
                const auto& grad = fwd.loss.grad[static_cast<std::size_t>(i)];
                auto& dl = dlogits[static_cast<std::size_t>(i)];
                dl.resize(preds.size());
                for (std::size_t v = 0; v < preds.size(); ++v) {
                    const double p = preds[v];
                    dl[v] = static_cast<float>(grad[v] * p * (1.0 - p));
                }
            }

            while (sample_grads.size() < static_cast<std::size_t>(b)) {
                sample_grads.push_back(make_zero_grads(model));
            }
            // Per-sample backward runs in parallel; the reduction below is in
            // fixed order, so results are bit-stable for a given seed.
            parallel_for(
                b,
                [&](int i) {
                    zero_grads_inplace(sample_grads[static_cast<std::size_t>(i)]);
                    const ForwardTrace trace = forward_trace(
                        model,
                        segment_inputs(batch_segments[static_cast<std::size_t>(i)], spec.main_size));
                    backward(model, trace, dlogits[static_cast<std::size_t>(i)],
                             sample_grads[static_cast<std::size_t>(i)]);
                },
                threads);
            zero_grads_inplace(total_grads);
            for (int i = 0; i < b; ++i) add_grads(total_grads, sample_grads[static_cast<std::size_t>(i)]);
            optimizer.step(model, total_grads, train_config.l1_weight, train_config.l2_weight);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = steps > 0 ? loss_sum / steps : 0.0;
        for (const auto& [k, v] : comp_sum) stats.components[k] = v / std::max(1, steps);

        if (!val_pairs.empty()) {
            // Fixed validation sample: same seed every epoch, no augmentation.
            Rng val_rng = root.fork(424242);
            const int val_count = std::min(train_config.segments_per_epoch,
                                           std::max(train_config.batch_size, 64));
            std::vector<TrainingSegment> val_segments =
                sample_pair_segments(val_pairs, val_count, val_rng, false);
            double val_sum = 0.0;
            int val_steps = 0;
            for (std::size_t start = 0; start < val_segments.size();
                 start += static_cast<std::size_t>(train_config.batch_size)) {
                const std::size_t end = std::min(
                    val_segments.size(), start + static_cast<std::size_t>(train_config.batch_size));
                std::vector<TrainingSegment> vb(val_segments.begin() + static_cast<std::ptrdiff_t>(start),
                                                val_segments.begin() + static_cast<std::ptrdiff_t>(end));
                val_sum += evaluate_segment_batch(model, vb, spec, train_config.loss,
                                                  train_config.vss, threads)
                               .loss.total;
                ++val_steps;
            }
            stats.val_loss = val_steps > 0 ? val_sum / val_steps : 0.0;
            stats.has_validation = true;
        } else {
            stats.val_loss = stats.train_loss;
            stats.has_validation = false;
        }
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
        log.epochs.push_back(std::move(stats));
    }

    TrainResult result;
    result.fingerprint.loss = loss_kind_name(train_config.loss);
    result.fingerprint.alpha = train_config.vss.alpha;
    result.fingerprint.epsilon = train_config.vss.epsilon;
    result.fingerprint.epochs = train_config.epochs;
    result.fingerprint.seed = train_config.seed;

    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& pathway : model.pathways) {
        for (const auto& layer : pathway) {
            h = fnv1a(layer.weights.data(), layer.weights.size() * sizeof(float), h);
            h = fnv1a(layer.biases.data(), layer.biases.size() * sizeof(float), h);
        }
    }
    for (const auto& layer : model.head) {
        h = fnv1a(layer.weights.data(), layer.weights.size() * sizeof(float), h);
        h = fnv1a(layer.biases.data(), layer.biases.size() * sizeof(float), h);
    }
    std::ostringstream id;
    id << result.fingerprint.loss << "-a" << result.fingerprint.alpha << "-" << std::hex << h;
    log.checkpoint_id = id.str();

    result.model = std::move(model);
    result.log = std::move(log);
    return result;
}

std::string training_log_to_json(const TrainingLog& log) {
    json epochs = json::array();
    for (const auto& e : log.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"components", e.components},
                          {"val_loss", e.val_loss},
                          {"has_validation", e.has_validation},
                          {"wall_seconds", e.wall_seconds}});
    }
    return json{{"epochs", std::move(epochs)},
                {"checkpoint_id", log.checkpoint_id},
                {"tumor_sampling_fallback", log.tumor_sampling_fallback}}
        .dump(2);
}

}  // namespace lodet
