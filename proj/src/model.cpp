#include "lodet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "lodet/errors.hpp"
#include "lodet/io_formats.hpp"
#include "lodet/parallel.hpp"
#include "lodet/rng.hpp"

namespace lodet {

using nlohmann::json;

namespace {

constexpr float kLeakySlope = 0.01f;

std::int64_t cube(int n) { return static_cast<std::int64_t>(n) * n * n; }

void leaky_relu_inplace(float* v, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        if (v[i] < 0.0f) v[i] *= kLeakySlope;
    }
}

// Valid convolution, channel-major layout: in[ic][z][y][x], out[oc][z][y][x].
void conv_forward(const float* in, int in_size, const ConvLayer& layer, float* out,
                  int out_size) {
    const int k = layer.kernel;
    const std::int64_t in_plane = static_cast<std::int64_t>(in_size) * in_size;
    const std::int64_t in_vol = in_plane * in_size;
    const std::int64_t out_plane = static_cast<std::int64_t>(out_size) * out_size;
    const std::int64_t out_vol = out_plane * out_size;
    for (int oc = 0; oc < layer.out_channels; ++oc) {
        std::fill(out + oc * out_vol, out + (oc + 1) * out_vol, layer.biases[oc]);
    }
    for (int oc = 0; oc < layer.out_channels; ++oc) {
        float* o = out + oc * out_vol;
        for (int ic = 0; ic < layer.in_channels; ++ic) {
            const float* ib = in + ic * in_vol;
            const float* wb =
                layer.weights.data() + (static_cast<std::int64_t>(oc) * layer.in_channels + ic) * k * k * k;
            for (int dz = 0; dz < k; ++dz) {
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        const float w = wb[(dz * k + dy) * k + dx];
                        for (int z = 0; z < out_size; ++z) {
                            const float* src = ib + (z + dz) * in_plane + dy * in_size + dx;
                            float* dst = o + z * out_plane;
                            for (int y = 0; y < out_size; ++y) {
                                const float* s = src + y * in_size;
                                float* d = dst + y * out_size;
                                for (int x = 0; x < out_size; ++x) d[x] += w * s[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

// Gradients for one convolution: accumulates weight/bias grads into `g` and,
// when din is non-null, input grads into din (din must be pre-zeroed).
void conv_backward(const float* in, int in_size, const ConvLayer& layer, const float* dout,
                   int out_size, ConvLayer& g, float* din) {
    const int k = layer.kernel;
    const std::int64_t in_plane = static_cast<std::int64_t>(in_size) * in_size;
    const std::int64_t in_vol = in_plane * in_size;
    const std::int64_t out_plane = static_cast<std::int64_t>(out_size) * out_size;
    const std::int64_t out_vol = out_plane * out_size;
    for (int oc = 0; oc < layer.out_channels; ++oc) {
        const float* dob = dout + oc * out_vol;
        double bias_acc = 0.0;
        for (std::int64_t i = 0; i < out_vol; ++i) bias_acc += dob[i];
        g.biases[oc] += static_cast<float>(bias_acc);
        for (int ic = 0; ic < layer.in_channels; ++ic) {
            const float* ib = in + ic * in_vol;
            float* dib = din ? din + ic * in_vol : nullptr;
            const std::int64_t w_base =
                (static_cast<std::int64_t>(oc) * layer.in_channels + ic) * k * k * k;
            for (int dz = 0; dz < k; ++dz) {
                for (int dy = 0; dy < k; ++dy) {
                    for (int dx = 0; dx < k; ++dx) {
                        const float w = layer.weights[w_base + (dz * k + dy) * k + dx];
                        float w_acc = 0.0f;
                        for (int z = 0; z < out_size; ++z) {
                            const float* srow = ib + (z + dz) * in_plane + dy * in_size + dx;
                            const float* drow = dout + oc * out_vol + z * out_plane;
                            float* dirow = dib ? dib + (z + dz) * in_plane + dy * in_size + dx
                                               : nullptr;
                            for (int y = 0; y < out_size; ++y) {
                                const float* s = srow + y * in_size;
                                const float* d = drow + y * out_size;
                                float acc = 0.0f;
                                for (int x = 0; x < out_size; ++x) acc += s[x] * d[x];
                                w_acc += acc;
                                if (dirow) {
                                    float* di = dirow + y * in_size;
                                    for (int x = 0; x < out_size; ++x) di[x] += w * d[x];
                                }
                            }
                        }
                        g.weights[w_base + (dz * k + dy) * k + dx] += w_acc;
                    }
                }
            }
        }
    }
}

// Nearest-neighbor alignment from a low-res pathway output onto the fused
// output grid. Low-res output voxel j sits at offset (j + L - (S-1)/2) * f
// from the patch center; each fused voxel picks the nearest one.
std::vector<int> lowres_align_map(int in_size, int n_layers, int factor, int out_size) {
    std::vector<int> map(static_cast<std::size_t>(out_size));
    const double half_in = (in_size - 1) / 2.0;
    const double half_out = (out_size - 1) / 2.0;
    for (int m = 0; m < out_size; ++m) {
        const double delta = m - half_out;
        const int j = static_cast<int>(std::lround(delta / factor - n_layers + half_in));
        map[static_cast<std::size_t>(m)] = std::clamp(j, 0, out_size - 1);
    }
    return map;
}

struct PathwaySpec {
    std::string name;
    int in_channels;
    int lowres_factor;  // 0 for normal-resolution pathways
};

std::vector<PathwaySpec> pathway_specs(const ModelConfig& cfg) {
    std::vector<PathwaySpec> specs;
    specs.push_back({"main", cfg.prior_mode == PriorMode::channel ? 2 : 1, 0});
    if (cfg.prior_mode == PriorMode::path) specs.push_back({"prior", 1, 0});
    for (std::size_t i = 0; i < cfg.lowres_factors.size(); ++i) {
        specs.push_back({"lowres[" + std::to_string(i) + "]", 1, cfg.lowres_factors[i]});
    }
    return specs;
}

// Builds the channel-major input block for each pathway, substituting zeros
// for a missing prior and validating every patch length.
std::vector<std::vector<float>> gather_pathway_inputs(const Model& model,
                                                      const PatchInputs& inputs) {
    const ModelConfig& cfg = model.config;
    const auto n = static_cast<std::size_t>(cube(inputs.size));
    if (inputs.size < 2 * cfg.n_conv_layers + 1) {
        throw ValidationError("forward: patch size " + std::to_string(inputs.size) +
                              " too small for " + std::to_string(cfg.n_conv_layers) +
                              " valid conv layers");
    }
    if (!inputs.main || inputs.main->size() != n) {
        throw ValidationError("forward: main pathway patch has wrong size");
    }
    if (inputs.prior && inputs.prior->size() != n) {
        throw ValidationError("forward: prior pathway patch has wrong size");
    }
    if (cfg.lowres_factors.size() != inputs.lowres.size()) {
        throw ValidationError("forward: expected " + std::to_string(cfg.lowres_factors.size()) +
                              " low-res patches, got " + std::to_string(inputs.lowres.size()));
    }
    for (std::size_t i = 0; i < inputs.lowres.size(); ++i) {
        if (!inputs.lowres[i] || inputs.lowres[i]->size() != n) {
            throw ValidationError("forward: lowres[" + std::to_string(i) +
                                  "] pathway patch has wrong size");
        }
    }

    std::vector<std::vector<float>> blocks;
    if (cfg.prior_mode == PriorMode::channel) {
        std::vector<float> block(2 * n, 0.0f);
        std::copy(inputs.main->begin(), inputs.main->end(), block.begin());
        if (inputs.prior) {
            std::copy(inputs.prior->begin(), inputs.prior->end(), block.begin() + n);
        }
        blocks.push_back(std::move(block));
    } else {
        blocks.push_back(*inputs.main);
    }
    if (cfg.prior_mode == PriorMode::path) {
        if (inputs.prior) {
            blocks.push_back(*inputs.prior);
        } else {
            blocks.emplace_back(n, 0.0f);
        }
    }
    for (const auto* lr : inputs.lowres) blocks.push_back(*lr);
    return blocks;
}

void run_head_forward(const Model& model, const std::vector<float>& concat, int out_size,
                      std::vector<std::vector<float>>* hidden_acts, std::vector<float>& logits) {
    const std::int64_t vol = cube(out_size);
    std::vector<float> cur = concat;
    for (std::size_t h = 0; h < model.head.size(); ++h) {
        const ConvLayer& layer = model.head[h];
        std::vector<float> next(static_cast<std::size_t>(layer.out_channels) * vol);
        conv_forward(cur.data(), out_size, layer, next.data(), out_size);
        const bool last = h + 1 == model.head.size();
        if (!last) {
            leaky_relu_inplace(next.data(), static_cast<std::int64_t>(next.size()));
            if (hidden_acts) hidden_acts->push_back(next);
        }
        cur = std::move(next);
    }
    logits = std::move(cur);
}

std::vector<float> sigmoid(const std::vector<float>& logits) {
    std::vector<float> probs(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = 1.0f / (1.0f + std::exp(-logits[i]));
    }
    return probs;
}

json config_to_json(const ModelConfig& cfg) {
    return json{{"n_conv_layers", cfg.n_conv_layers},
                {"channels_per_layer", cfg.channels()},
                {"prior_mode", prior_mode_name(cfg.prior_mode)},
                {"lowres_factors", cfg.lowres_factors},
                {"head_layers", cfg.head_layers},
                {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.n_conv_layers = j.at("n_conv_layers").get<int>();
    cfg.channels_per_layer = j.at("channels_per_layer").get<std::vector<int>>();
    cfg.prior_mode = prior_mode_from_name(j.at("prior_mode").get<std::string>());
    cfg.lowres_factors = j.at("lowres_factors").get<std::vector<int>>();
    cfg.head_layers = j.at("head_layers").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

template <typename Fn>
void for_each_layer(Model& model, Fn&& fn) {
    for (auto& pathway : model.pathways) {
        for (auto& layer : pathway) fn(layer);
    }
    for (auto& layer : model.head) fn(layer);
}

template <typename Fn>
void for_each_layer(const Model& model, Fn&& fn) {
    for (const auto& pathway : model.pathways) {
        for (const auto& layer : pathway) fn(layer);
    }
    for (const auto& layer : model.head) fn(layer);
}

}  // namespace

std::string prior_mode_name(PriorMode mode) {
    switch (mode) {
        case PriorMode::none: return "none";
        case PriorMode::channel: return "channel";
        case PriorMode::path: return "path";
    }
    throw InternalError("unknown PriorMode");
}

PriorMode prior_mode_from_name(const std::string& name) {
    if (name == "none") return PriorMode::none;
    if (name == "channel") return PriorMode::channel;
    if (name == "path") return PriorMode::path;
    throw ValidationError("unknown prior mode '" + name + "' (expected none|channel|path)");
}

void ModelConfig::validate() const {
    if (n_conv_layers < 1) throw ValidationError("ModelConfig: n_conv_layers must be >= 1");
    if (!channels_per_layer.empty() &&
        channels_per_layer.size() != static_cast<std::size_t>(n_conv_layers)) {
        throw ValidationError("ModelConfig: channels_per_layer must have n_conv_layers entries");
    }
    for (int c : channels_per_layer) {
        if (c < 1) throw ValidationError("ModelConfig: channel counts must be >= 1");
    }
    if (head_layers < 1) throw ValidationError("ModelConfig: head_layers must be >= 1");
    for (int f : lowres_factors) {
        if (f < 2) throw ValidationError("ModelConfig: lowres factors must be >= 2");
    }
}

std::vector<int> ModelConfig::channels() const {
    if (!channels_per_layer.empty()) return channels_per_layer;
    return std::vector<int>(static_cast<std::size_t>(n_conv_layers), 8);
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for_each_layer(*this, [&](const ConvLayer& layer) {
        n += static_cast<std::int64_t>(layer.weights.size()) + layer.biases.size();
    });
    return n;
}

Model make_model(const ModelConfig& config) {
    config.validate();
    Model model;
    model.config = config;
    Rng rng(config.seed);

    auto init_layer = [&](int in_c, int out_c, int kernel) {
        ConvLayer layer;
        layer.in_channels = in_c;
        layer.out_channels = out_c;
        layer.kernel = kernel;
        layer.weights.resize(static_cast<std::size_t>(out_c) * in_c * kernel * kernel * kernel);
        layer.biases.assign(static_cast<std::size_t>(out_c), 0.0f);
        const double std_dev = std::sqrt(2.0 / (in_c * kernel * kernel * kernel));
        for (auto& w : layer.weights) w = static_cast<float>(rng.normal() * std_dev);
        return layer;
    };

    const std::vector<int> ch = config.channels();
    for (const auto& spec : pathway_specs(config)) {
        std::vector<ConvLayer> layers;
        int in_c = spec.in_channels;
        for (int l = 0; l < config.n_conv_layers; ++l) {
            layers.push_back(init_layer(in_c, ch[static_cast<std::size_t>(l)], 3));
            in_c = ch[static_cast<std::size_t>(l)];
        }
        model.pathways.push_back(std::move(layers));
    }

    const int concat_c = ch.back() * config.pathway_count();
    int in_c = concat_c;
    for (int h = 0; h < config.head_layers; ++h) {
        const bool last = h + 1 == config.head_layers;
        model.head.push_back(init_layer(in_c, last ? 1 : concat_c, 1));
        in_c = last ? 1 : concat_c;
    }
    return model;
}

ForwardTrace forward_trace(const Model& model, const PatchInputs& inputs) {
    const ModelConfig& cfg = model.config;
    ForwardTrace trace;
    trace.in_size = inputs.size;
    trace.out_size = cfg.output_size(inputs.size);
    trace.path_inputs = gather_pathway_inputs(model, inputs);

    const int out_size = trace.out_size;
    const std::int64_t out_vol = cube(out_size);
    const int last_c = cfg.channels().back();
    const auto specs = pathway_specs(cfg);

    trace.concat.assign(static_cast<std::size_t>(last_c) * specs.size() * out_vol, 0.0f);
    trace.path_acts.resize(specs.size());
    for (std::size_t p = 0; p < specs.size(); ++p) {
        const float* cur = trace.path_inputs[p].data();
        int cur_size = inputs.size;
        for (int l = 0; l < cfg.n_conv_layers; ++l) {
            const ConvLayer& layer = model.pathways[p][static_cast<std::size_t>(l)];
            const int next_size = cur_size - 2;
            std::vector<float> act(static_cast<std::size_t>(layer.out_channels) * cube(next_size));
            conv_forward(cur, cur_size, layer, act.data(), next_size);
            leaky_relu_inplace(act.data(), static_cast<std::int64_t>(act.size()));
            trace.path_acts[p].push_back(std::move(act));
            cur = trace.path_acts[p].back().data();
            cur_size = next_size;
        }
        // Fuse into the concat block, aligning low-res features by nearest
        // neighbor; normal-resolution features copy through.
        float* dst = trace.concat.data() + static_cast<std::int64_t>(p) * last_c * out_vol;
        const std::vector<float>& feat = trace.path_acts[p].back();
        if (specs[p].lowres_factor == 0) {
            std::copy(feat.begin(), feat.end(), dst);
        } else {
            const auto amap =
                lowres_align_map(inputs.size, cfg.n_conv_layers, specs[p].lowres_factor, out_size);
            for (int c = 0; c < last_c; ++c) {
                const float* f = feat.data() + static_cast<std::int64_t>(c) * out_vol;
                float* d = dst + static_cast<std::int64_t>(c) * out_vol;
                std::int64_t idx = 0;
                for (int z = 0; z < out_size; ++z) {
                    for (int y = 0; y < out_size; ++y) {
                        for (int x = 0; x < out_size; ++x, ++idx) {
                            d[idx] = f[(static_cast<std::int64_t>(amap[z]) * out_size + amap[y]) *
                                           out_size +
                                       amap[x]];
                        }
                    }
                }
            }
        }
    }

    run_head_forward(model, trace.concat, out_size, &trace.head_acts, trace.logits);
    trace.probs = sigmoid(trace.logits);
    return trace;
}

ForwardResult forward(const Model& model, const PatchInputs& inputs) {
    // Lean pass: same math as forward_trace but without retaining activations.
    const ModelConfig& cfg = model.config;
    const auto blocks = gather_pathway_inputs(model, inputs);
    const int out_size = cfg.output_size(inputs.size);
    const std::int64_t out_vol = cube(out_size);
    const int last_c = cfg.channels().back();
    const auto specs = pathway_specs(cfg);

    std::vector<float> concat(static_cast<std::size_t>(last_c) * specs.size() * out_vol, 0.0f);
    std::vector<float> buf_a, buf_b;
    for (std::size_t p = 0; p < specs.size(); ++p) {
        const float* cur = blocks[p].data();
        int cur_size = inputs.size;
        for (int l = 0; l < cfg.n_conv_layers; ++l) {
            const ConvLayer& layer = model.pathways[p][static_cast<std::size_t>(l)];
            const int next_size = cur_size - 2;
            std::vector<float>& dst_buf = (l % 2 == 0) ? buf_a : buf_b;
            dst_buf.assign(static_cast<std::size_t>(layer.out_channels) * cube(next_size), 0.0f);
            conv_forward(cur, cur_size, layer, dst_buf.data(), next_size);
            leaky_relu_inplace(dst_buf.data(), static_cast<std::int64_t>(dst_buf.size()));
            cur = dst_buf.data();
            cur_size = next_size;
        }
        float* dst = concat.data() + static_cast<std::int64_t>(p) * last_c * out_vol;
        if (specs[p].lowres_factor == 0) {
            std::copy(cur, cur + last_c * out_vol, dst);
        } else {
            const auto amap =
                lowres_align_map(inputs.size, cfg.n_conv_layers, specs[p].lowres_factor, out_size);
            for (int c = 0; c < last_c; ++c) {
                const float* f = cur + static_cast<std::int64_t>(c) * out_vol;
                float* d = dst + static_cast<std::int64_t>(c) * out_vol;
                std::int64_t idx = 0;
                for (int z = 0; z < out_size; ++z) {
                    for (int y = 0; y < out_size; ++y) {
                        for (int x = 0; x < out_size; ++x, ++idx) {
                            d[idx] = f[(static_cast<std::int64_t>(amap[z]) * out_size + amap[y]) *
                                           out_size +
                                       amap[x]];
                        }
                    }
                }
            }
        }
    }

    ForwardResult result;
    result.out_size = out_size;
    run_head_forward(model, concat, out_size, nullptr, result.logits);
    result.probs = sigmoid(result.logits);
    return result;
}

Model make_zero_grads(const Model& model) {
    Model g = model;
    for_each_layer(g, [](ConvLayer& layer) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0f);
        std::fill(layer.biases.begin(), layer.biases.end(), 0.0f);
    });
    return g;
}

void backward(const Model& model, const ForwardTrace& trace, const std::vector<float>& dlogits,
              Model& grads) {
    const ModelConfig& cfg = model.config;
    const int out_size = trace.out_size;
    const std::int64_t out_vol = cube(out_size);
    if (dlogits.size() != static_cast<std::size_t>(out_vol)) {
        throw ValidationError("backward: dlogits size mismatch");
    }
    const int last_c = cfg.channels().back();
    const auto specs = pathway_specs(cfg);

    // Head, last layer first. Hidden activations pass through the leaky-relu
    // derivative recovered from the stored post-activation sign.
    std::vector<float> dcur = dlogits;
    for (int h = static_cast<int>(model.head.size()) - 1; h >= 0; --h) {
        const ConvLayer& layer = model.head[static_cast<std::size_t>(h)];
        const float* input = h == 0 ? trace.concat.data()
                                    : trace.head_acts[static_cast<std::size_t>(h - 1)].data();
        std::vector<float> dinput(static_cast<std::size_t>(layer.in_channels) * out_vol, 0.0f);
        conv_backward(input, out_size, layer, dcur.data(), out_size,
                      grads.head[static_cast<std::size_t>(h)], dinput.data());
        if (h > 0) {
            const auto& act = trace.head_acts[static_cast<std::size_t>(h - 1)];
            for (std::size_t i = 0; i < dinput.size(); ++i) {
                if (act[i] <= 0.0f) dinput[i] *= kLeakySlope;
            }
        }
        dcur = std::move(dinput);
    }

    // Split the concat gradient back into pathways and run each one down.
    for (std::size_t p = 0; p < specs.size(); ++p) {
        const float* dconcat = dcur.data() + static_cast<std::int64_t>(p) * last_c * out_vol;
        std::vector<float> dfeat(static_cast<std::size_t>(last_c) * out_vol, 0.0f);
        if (specs[p].lowres_factor == 0) {
            std::copy(dconcat, dconcat + last_c * out_vol, dfeat.begin());
        } else {
            const auto amap = lowres_align_map(trace.in_size, cfg.n_conv_layers,
                                               specs[p].lowres_factor, out_size);
            for (int c = 0; c < last_c; ++c) {
                const float* d = dconcat + static_cast<std::int64_t>(c) * out_vol;
                float* f = dfeat.data() + static_cast<std::int64_t>(c) * out_vol;
                std::int64_t idx = 0;
                for (int z = 0; z < out_size; ++z) {
                    for (int y = 0; y < out_size; ++y) {
                        for (int x = 0; x < out_size; ++x, ++idx) {
                            f[(static_cast<std::int64_t>(amap[z]) * out_size + amap[y]) * out_size +
                              amap[x]] += d[idx];
                        }
                    }
                }
            }
        }

        std::vector<float> dact = std::move(dfeat);
        for (int l = cfg.n_conv_layers - 1; l >= 0; --l) {
            const ConvLayer& layer = model.pathways[p][static_cast<std::size_t>(l)];
            const int layer_out = trace.in_size - 2 * (l + 1);
            const auto& act = trace.path_acts[p][static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < dact.size(); ++i) {
                if (act[i] <= 0.0f) dact[i] *= kLeakySlope;
            }
            const float* input = l == 0 ? trace.path_inputs[p].data()
                                        : trace.path_acts[p][static_cast<std::size_t>(l - 1)].data();
            const int layer_in = trace.in_size - 2 * l;
            if (l == 0) {
                conv_backward(input, layer_in, layer, dact.data(), layer_out,
                              grads.pathways[p][static_cast<std::size_t>(l)], nullptr);
            } else {
                std::vector<float> dinput(static_cast<std::size_t>(layer.in_channels) *
                                              cube(layer_in),
                                          0.0f);
                conv_backward(input, layer_in, layer, dact.data(), layer_out,
                              grads.pathways[p][static_cast<std::size_t>(l)], dinput.data());
                dact = std::move(dinput);
            }
        }
    }
}

PredictResult predict_volume(const Model& model, const Volume& image, const Volume* prior,
                             const SegmentSpec& spec, int n_threads) {
    const ModelConfig& cfg = model.config;
    if (spec.n_conv_layers != cfg.n_conv_layers || spec.lowres_factors != cfg.lowres_factors) {
        throw ValidationError(
            "predict_volume: SegmentSpec layers/low-res factors do not match the model config");
    }
    PredictResult result;
    const bool wants_prior = cfg.prior_mode != PriorMode::none;
    if (wants_prior && prior == nullptr) result.prior_substituted = true;
    const Volume* effective_prior = wants_prior ? prior : nullptr;

    Tiling tiling = tile_volume(image, effective_prior, spec);
    std::vector<std::vector<float>> outputs(tiling.tiles.size());
    parallel_for(
        static_cast<int>(tiling.tiles.size()),
        [&](int i) {
            const InferenceTile& tile = tiling.tiles[static_cast<std::size_t>(i)];
            PatchInputs in;
            in.size = spec.infer_size;
            in.main = &tile.main_patch;
            in.prior = &tile.prior_patch;
            for (const auto& lr : tile.lowres_patches) in.lowres.push_back(&lr);
            outputs[static_cast<std::size_t>(i)] = forward(model, in).probs;
        },
        n_threads);
    result.prob = stitch_predictions(outputs, tiling);
    result.prob.spacing_mm = image.spacing_mm;
    result.prob.meta = image.meta;
    return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'D', 'M', '1'};

json fingerprint_to_json(const TrainingFingerprint& fp) {
    return json{{"loss", fp.loss},
                {"alpha", fp.alpha},
                {"epsilon", fp.epsilon},
                {"epochs", fp.epochs},
                {"seed", fp.seed}};
}

TrainingFingerprint fingerprint_from_json(const json& j) {
    TrainingFingerprint fp;
    fp.loss = j.at("loss").get<std::string>();
    fp.alpha = j.at("alpha").get<double>();
    fp.epsilon = j.at("epsilon").get<double>();
    fp.epochs = j.at("epochs").get<int>();
    fp.seed = j.at("seed").get<std::uint64_t>();
    return fp;
}

}  // namespace

void save_checkpoint(const Model& model, const TrainingFingerprint& fingerprint,
                     const std::filesystem::path& path) {
    json header{{"config", config_to_json(model.config)},
                {"fingerprint", fingerprint_to_json(fingerprint)},
                {"param_count", model.parameter_count()}};
    const std::string header_str = header.dump();

    std::string out;
    out.append(kCheckpointMagic, 4);
    const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
    out.push_back(static_cast<char>(len & 0xff));
    out.push_back(static_cast<char>((len >> 8) & 0xff));
    out.push_back(static_cast<char>((len >> 16) & 0xff));
    out.push_back(static_cast<char>((len >> 24) & 0xff));
    out += header_str;

    auto append_floats = [&out](const std::vector<float>& v) {
        static_assert(std::endian::native == std::endian::little,
                      "big-endian hosts need byte swapping here");
        out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    };
    for_each_layer(model, [&](const ConvLayer& layer) {
        append_floats(layer.weights);
        append_floats(layer.biases);
    });
    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw ValidationError("bad checkpoint magic in " + path.string());
    }
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + 4;
    const std::uint32_t header_len = static_cast<std::uint32_t>(p[0]) |
                                     (static_cast<std::uint32_t>(p[1]) << 8) |
                                     (static_cast<std::uint32_t>(p[2]) << 16) |
                                     (static_cast<std::uint32_t>(p[3]) << 24);
    if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
        throw ValidationError("truncated checkpoint header in " + path.string());
    }
    json header;
    try {
        header = json::parse(bytes.substr(8, header_len));
    } catch (const json::exception& e) {
        throw ValidationError("unparseable checkpoint header: " + std::string(e.what()));
    }

    Checkpoint ckpt;
    try {
        ckpt.model = make_model(config_from_json(header.at("config")));
        ckpt.fingerprint = fingerprint_from_json(header.at("fingerprint"));
    } catch (const json::exception& e) {
        throw ValidationError("incomplete checkpoint header: " + std::string(e.what()));
    }
    const auto expected = ckpt.model.parameter_count();
    if (header.at("param_count").get<std::int64_t>() != expected) {
        throw ValidationError("checkpoint param_count does not match its config");
    }
    const std::size_t body = bytes.size() - 8 - header_len;
    if (body != static_cast<std::size_t>(expected) * sizeof(float)) {
        throw ValidationError("truncated checkpoint body in " + path.string());
    }
    const char* cursor = bytes.data() + 8 + header_len;
    auto read_floats = [&cursor](std::vector<float>& v) {
        std::memcpy(v.data(), cursor, v.size() * sizeof(float));
        cursor += v.size() * sizeof(float);
    };
    for_each_layer(ckpt.model, [&](ConvLayer& layer) {
        read_floats(layer.weights);
        read_floats(layer.biases);
    });
    return ckpt;
}

}  // namespace lodet
