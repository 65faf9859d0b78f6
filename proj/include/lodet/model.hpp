#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lodet/patching.hpp"
#include "lodet/volume.hpp"

namespace lodet {

enum class PriorMode { none, channel, path };

std::string prior_mode_name(PriorMode mode);
PriorMode prior_mode_from_name(const std::string& name);

struct ModelConfig {
    int n_conv_layers = 9;                  // 3x3x3 valid convolutions, no padding
    std::vector<int> channels_per_layer;    // empty -> 8 per layer
    PriorMode prior_mode = PriorMode::none;
    std::vector<int> lowres_factors{3, 5};
    int head_layers = 2;                    // 1x1x1 fusion layers, last one emits the logit
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<int> channels() const;      // resolved channels_per_layer
    int output_size(int input_size) const { return input_size - 2 * n_conv_layers; }
    int pathway_count() const {
        return 1 + (prior_mode == PriorMode::path ? 1 : 0) +
               static_cast<int>(lowres_factors.size());
    }
};

struct ConvLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;                // 3 for pathway layers, 1 for head layers
    std::vector<float> weights;    // [oc][ic][kz][ky][kx]
    std::vector<float> biases;     // [oc]
};

// Pathway order: main, prior (path mode only), then one pathway per low-res factor.
struct Model {
    ModelConfig config;
    std::vector<std::vector<ConvLayer>> pathways;
    std::vector<ConvLayer> head;

    std::int64_t parameter_count() const;
};

Model make_model(const ModelConfig& config);  // He-init, deterministic under config.seed

// Inputs for one forward pass; `size` is the patch edge length. In channel
// mode the prior is stacked as a second input channel of the main pathway; in
// none mode it is ignored entirely.
struct PatchInputs {
    int size = 0;
    const std::vector<float>* main = nullptr;
    const std::vector<float>* prior = nullptr;                // may be null (zeros substituted)
    std::vector<const std::vector<float>*> lowres;            // one per configured factor
};

struct ForwardResult {
    int out_size = 0;
    std::vector<float> logits;
    std::vector<float> probs;  // logistic(logits)
};

ForwardResult forward(const Model& model, const PatchInputs& inputs);

// Forward pass that keeps every intermediate activation so a backward pass can
// run against it.
struct ForwardTrace {
    int in_size = 0;
    int out_size = 0;
    std::vector<std::vector<float>> path_inputs;              // [pathway] channel-major input block
    std::vector<std::vector<std::vector<float>>> path_acts;   // [pathway][layer] post-activation
    std::vector<float> concat;                                // fused feature block
    std::vector<std::vector<float>> head_acts;                // hidden head activations
    std::vector<float> logits;
    std::vector<float> probs;
};

ForwardTrace forward_trace(const Model& model, const PatchInputs& inputs);

// Accumulates parameter gradients for dL/dlogits into `grads`, which must have
// the same shape as the model (make_zero_grads). Input gradients are not
// produced; labels and patches are data.
Model make_zero_grads(const Model& model);
void backward(const Model& model, const ForwardTrace& trace, const std::vector<float>& dlogits,
              Model& grads);

// Tiled whole-volume inference. When the model wants a prior and none is
// given, a zero volume is substituted and the flag records it.
struct PredictResult {
    Volume prob;
    bool prior_substituted = false;
};

PredictResult predict_volume(const Model& model, const Volume& image, const Volume* prior,
                             const SegmentSpec& spec, int n_threads = 0);

// --- checkpointing -----------------------------------------------------------

struct TrainingFingerprint {
    std::string loss = "none";
    double alpha = 0.0;
    double epsilon = 0.0;
    int epochs = 0;
    std::uint64_t seed = 0;
};

// Container: magic "LDM1", u32 LE header length, JSON header (config,
// fingerprint, parameter count), then f32 LE parameter block.
void save_checkpoint(const Model& model, const TrainingFingerprint& fingerprint,
                     const std::filesystem::path& path);

struct Checkpoint {
    Model model;
    TrainingFingerprint fingerprint;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lodet
