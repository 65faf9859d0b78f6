#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lodet/losses.hpp"
#include "lodet/model.hpp"
#include "lodet/patching.hpp"
#include "lodet/phantom.hpp"

namespace lodet {

struct TrainConfig {
    LossKind loss = LossKind::jvss;
    VssParams vss;  // alpha used by jvss and sse

    double learning_rate = 0.001;
    double momentum = 0.6;       // Nesterov-style
    double rms_decay = 0.9;      // squared-gradient moving average
    double l1_weight = 1e-6;     // weights only, not biases
    double l2_weight = 1e-4;

    int epochs = 10;
    int batch_size = 16;
    int segments_per_epoch = 200;
    double validation_fraction = 0.1;  // held out by study
    std::uint64_t seed = 0;
    int n_threads = 0;  // 0 = hardware concurrency

    SegmentSpec segments;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    std::map<std::string, double> components;  // epoch means
    double val_loss = 0.0;
    bool has_validation = false;
    double wall_seconds = 0.0;
};

struct TrainingLog {
    std::vector<EpochStats> epochs;
    std::string checkpoint_id;
    bool tumor_sampling_fallback = false;
};

struct TrainResult {
    Model model;
    TrainingFingerprint fingerprint;
    TrainingLog log;
};

// Forwards every segment through the model, assembles the label/prediction
// batch, and evaluates the loss on it via the losses module. Every loss value
// the trainer logs is produced by this function.
struct SegmentBatchEval {
    SubvolumeBatch batch;
    LossValue loss;
};

SegmentBatchEval evaluate_segment_batch(const Model& model,
                                        const std::vector<TrainingSegment>& segments,
                                        const SegmentSpec& spec, LossKind kind,
                                        const VssParams& params, int n_threads = 0);

// Adaptive-gradient step: squared-gradient moving average (RMSProp) combined
// with Nesterov-style momentum. One instance owns the caches for one model.
class RmsPropNesterov {
public:
    RmsPropNesterov(const Model& model, double learning_rate, double momentum, double rms_decay);

    // Applies one update in place. `grads` holds dLoss/dparam in the model's
    // layout; L1/L2 penalties at the given weights are added here (weights
    // only, biases are not regularized).
    void step(Model& model, const Model& grads, double l1_weight, double l2_weight);

private:
    double lr_, momentum_, decay_;
    std::vector<std::vector<float>> cache_;     // per tensor, running mean of g^2
    std::vector<std::vector<float>> velocity_;  // per tensor, momentum state
};

TrainResult train(const std::vector<LongitudinalStudy>& corpus, const ModelConfig& model_config,
                  const TrainConfig& train_config);

std::string training_log_to_json(const TrainingLog& log);

}  // namespace lodet
