#pragma once

#include <tcnd/autodiff.hpp>
#include <tcnd/layers.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace tcnd {

enum class BlockNorm { global, channelwise };

inline std::string to_string(BlockNorm n) { return n == BlockNorm::global ? "gln" : "cln"; }

inline BlockNorm block_norm_from_string(const std::string& s) {
    if (s == "gln") return BlockNorm::global;
    if (s == "cln") return BlockNorm::channelwise;
    throw ConfigError("unknown block norm '" + s + "' (expected gln or cln)");
}

struct ModelConfig {
    std::size_t block_length = 16;   // L_BL, samples per encoder block
    std::size_t enc_channels = 512;  // N
    std::size_t bottleneck = 128;    // B
    std::size_t hidden = 512;        // H
    std::size_t kernel = 3;          // P
    std::size_t blocks_per_stack = 6;  // X
    std::size_t repeats = 8;           // R
    std::size_t sample_rate = 8000;    // f_s
    bool residual = true;
    BlockNorm block_norm = BlockNorm::global;

    std::size_t hop() const { return block_length / 2; }
    std::size_t block_count() const { return blocks_per_stack * repeats; }

    void validate() const {
        if (block_length == 0 || enc_channels == 0 || bottleneck == 0 || hidden == 0 || kernel == 0 ||
            blocks_per_stack == 0 || repeats == 0 || sample_rate == 0) {
            throw ConfigError("model config: all sizes must be positive");
        }
        if (block_length % 2 != 0) throw ConfigError("model config: block length must be even for 50% overlap");
        if (blocks_per_stack > 30) throw ConfigError("model config: blocks per stack too large for dilation 2^(X-1)");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"block_length", c.block_length}, {"enc_channels", c.enc_channels},
                       {"bottleneck", c.bottleneck},     {"hidden", c.hidden},
                       {"kernel", c.kernel},             {"X", c.blocks_per_stack},
                       {"R", c.repeats},                 {"sample_rate", c.sample_rate},
                       {"residual", c.residual},         {"block_norm", to_string(c.block_norm)}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("block_length", c.block_length);
    get("enc_channels", c.enc_channels);
    get("bottleneck", c.bottleneck);
    get("hidden", c.hidden);
    get("kernel", c.kernel);
    get("X", c.blocks_per_stack);
    get("R", c.repeats);
    get("sample_rate", c.sample_rate);
    get("residual", c.residual);
    if (j.contains("block_norm")) c.block_norm = block_norm_from_string(j.at("block_norm").get<std::string>());
}

// Dilation of the x-th block (0-based) inside a stack.
inline std::size_t block_dilation(std::size_t x) { return std::size_t{1} << x; }

// Receptive field in frames (hops): 1 + R·(P-1)·Σ_{i=1..X} 2^(X-i).
inline double receptive_field_frames(const ModelConfig& c) {
    double dilation_sum = 0.0;
    for (std::size_t i = 1; i <= c.blocks_per_stack; ++i) {
        dilation_sum += std::ldexp(1.0, static_cast<int>(c.blocks_per_stack - i));
    }
    return 1.0 + static_cast<double>(c.repeats) * static_cast<double>(c.kernel - 1) * dilation_sum;
}

// Receptive field in seconds: (L_BL / 2 f_s) · (1 + R (P-1) Σ 2^(X-i)).
inline double receptive_field(const ModelConfig& c) {
    return static_cast<double>(c.block_length) / (2.0 * static_cast<double>(c.sample_rate)) *
           receptive_field_frames(c);
}

struct BlockParameterCount {
    std::size_t in_conv_weight = 0;    // B·H
    std::size_t in_conv_bias = 0;      // H
    std::size_t depthwise_weight = 0;  // H·P
    std::size_t out_conv_weight = 0;   // H·B
    std::size_t prelu = 0;
    std::size_t norm = 0;
    std::size_t depthwise_bias = 0;
    std::size_t out_conv_bias = 0;

    // B·H + H + H·P + H·B, the per-block figure quoted for the architecture.
    std::size_t core() const { return in_conv_weight + in_conv_bias + depthwise_weight + out_conv_weight; }
    std::size_t extra() const { return prelu + norm + depthwise_bias + out_conv_bias; }
    std::size_t total() const { return core() + extra(); }
};

struct ParameterCount {
    std::size_t encoder = 0;
    std::size_t bottleneck = 0;
    BlockParameterCount per_block;
    std::size_t blocks = 0;
    std::size_t mask_head = 0;
    std::size_t decoder = 0;

    std::size_t total() const { return encoder + bottleneck + blocks + mask_head + decoder; }
};

inline BlockParameterCount block_parameter_count(std::size_t bottleneck, std::size_t hidden, std::size_t kernel) {
    BlockParameterCount b;
    b.in_conv_weight = bottleneck * hidden;
    b.in_conv_bias = hidden;
    b.depthwise_weight = hidden * kernel;
    b.out_conv_weight = hidden * bottleneck;
    b.prelu = 1;
    b.norm = 2 * hidden;
    b.depthwise_bias = hidden;
    b.out_conv_bias = bottleneck;
    return b;
}

inline ParameterCount count_parameters(const ModelConfig& c) {
    ParameterCount pc;
    pc.encoder = c.block_length * c.enc_channels;
    pc.bottleneck = 2 * c.enc_channels + c.enc_channels * c.bottleneck + c.bottleneck;
    pc.per_block = block_parameter_count(c.bottleneck, c.hidden, c.kernel);
    pc.blocks = c.block_count() * pc.per_block.total();
    pc.mask_head = 1 + c.bottleneck * c.enc_channels + c.enc_channels;
    pc.decoder = c.enc_channels * c.block_length;
    return pc;
}

inline nlohmann::json parameter_count_json(const ParameterCount& pc) {
    return {{"encoder", pc.encoder},
            {"bottleneck", pc.bottleneck},
            {"per_block_core", pc.per_block.core()},
            {"per_block_total", pc.per_block.total()},
            {"blocks", pc.blocks},
            {"mask_head", pc.mask_head},
            {"decoder", pc.decoder},
            {"total", pc.total()}};
}

// Number of 50%-overlap blocks for a signal of `samples` samples after
// zero-padding to the next hop multiple.
inline std::size_t frame_count(std::size_t samples, std::size_t block_length) {
    const std::size_t hop = block_length / 2;
    const std::size_t padded_hops = (samples + hop - 1) / hop;
    return padded_hops - 1;
}

// Encoder (per-block basis + ReLU), TCN mask estimator, masked decoder with
// 50%-overlap-add synthesis. Signals are 1-D tensors.
class DereverbModel {
public:
    struct Block {
        Conv1dParams in_conv;  // B -> H
        Tensor slope;
        NormParams norm;
        Conv1dParams depthwise;  // H, kernel P, dilation 2^x
        Conv1dParams out_conv;   // H -> B
    };

    DereverbModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(seed);
        const auto& c = config_;
        encoder_basis_ = uniform({c.block_length, c.enc_channels}, c.block_length, rng);
        bottleneck_norm_ = NormParams::init(c.enc_channels);
        bottleneck_conv_ = Conv1dParams::init(c.enc_channels, c.bottleneck, 1, {}, true, rng);
        for (std::size_t r = 0; r < c.repeats; ++r) {
            for (std::size_t x = 0; x < c.blocks_per_stack; ++x) {
                Block b{Conv1dParams::init(c.bottleneck, c.hidden, 1, {}, true, rng),
                        Tensor::full({1}, 0.25, true), NormParams::init(c.hidden),
                        Conv1dParams::init(c.hidden, c.hidden, c.kernel,
                                           Conv1dOptions::same(c.kernel, block_dilation(x), c.hidden), true, rng),
                        Conv1dParams::init(c.hidden, c.bottleneck, 1, {}, true, rng)};
                blocks_.push_back(std::move(b));
            }
        }
        mask_slope_ = Tensor::full({1}, 0.25, true);
        mask_conv_ = Conv1dParams::init(c.bottleneck, c.enc_channels, 1, {}, true, rng);
        decoder_basis_ = uniform({c.enc_channels, c.block_length}, c.enc_channels, rng);
    }

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }

    // blocks [L_x × L_BL] -> features [L_x × N], w = ReLU(x · B).
    Tensor encode(const Tensor& blocks) const {
        if (blocks.rank() != 2 || blocks.dim(1) != config_.block_length) {
            throw DimensionError("encode: expected blocks of width " + std::to_string(config_.block_length) +
                                 ", got " + shape_string(blocks.shape()));
        }
        return relu(matmul(blocks, encoder_basis_));
    }

    // features [L_x × N] -> non-negative mask [L_x × N].
    Tensor estimate_mask(const Tensor& features) const {
        if (features.rank() != 2 || features.dim(1) != config_.enc_channels) {
            throw DimensionError("estimate_mask: expected feature width " + std::to_string(config_.enc_channels) +
                                 ", got " + shape_string(features.shape()));
        }
        Tensor y = conv1d(channelwise_layer_norm(transpose(features), bottleneck_norm_), bottleneck_conv_);
        for (const auto& b : blocks_) y = apply_block(b, y);
        Tensor mask = relu(conv1d(prelu(y, mask_slope_), mask_conv_));
        return transpose(mask);
    }

    // ŝ_l = (m_l ⊙ w_l) · U, overlap-added at hop L_BL/2. length 0 keeps the
    // full synthesis length (L_x + 1) · hop.
    Tensor decode(const Tensor& mask, const Tensor& features, std::size_t length = 0) const {
        if (mask.shape() != features.shape()) {
            throw DimensionError("decode: mask " + shape_string(mask.shape()) + " vs features " +
                                 shape_string(features.shape()));
        }
        if (features.rank() != 2 || features.dim(1) != config_.enc_channels) {
            throw DimensionError("decode: expected feature width " + std::to_string(config_.enc_channels));
        }
        return overlap_add(matmul(mul(mask, features), decoder_basis_), config_.hop(), length);
    }

    // Zero-pads to the next hop multiple, frames, encodes, masks, decodes and
    // trims back to the input length.
    Tensor forward(const Tensor& signal) const {
        if (signal.rank() != 1) throw DimensionError("forward: expected a 1-D signal");
        const std::size_t n = signal.dim(0);
        if (n < config_.block_length) {
            throw InputError("forward: signal of " + std::to_string(n) + " samples is shorter than one block (" +
                             std::to_string(config_.block_length) + ")");
        }
        const std::size_t hop = config_.hop();
        const std::size_t padded = (n + hop - 1) / hop * hop;
        Tensor x = signal;
        if (padded != n) x = pad_end(signal, padded);
        Tensor features = encode(frame_signal(x, config_.block_length, hop));
        return decode(estimate_mask(features), features, n);
    }

    std::vector<double> enhance(std::span<const double> samples) const {
        NoGradGuard no_grad;
        Tensor out = forward(Tensor::from({samples.size()}, std::vector<double>(samples.begin(), samples.end())));
        return {out.data().begin(), out.data().end()};
    }

    // Named leaves in a fixed order: checkpoint keys and optimizer slots.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        out.emplace_back("encoder.basis", encoder_basis_);
        out.emplace_back("bottleneck.norm.gain", bottleneck_norm_.gain);
        out.emplace_back("bottleneck.norm.bias", bottleneck_norm_.bias);
        out.emplace_back("bottleneck.conv.weight", bottleneck_conv_.weight);
        out.emplace_back("bottleneck.conv.bias", *bottleneck_conv_.bias);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto& b = blocks_[i];
            const std::string p = "blocks." + std::to_string(i) + ".";
            out.emplace_back(p + "in_conv.weight", b.in_conv.weight);
            out.emplace_back(p + "in_conv.bias", *b.in_conv.bias);
            out.emplace_back(p + "prelu.slope", b.slope);
            out.emplace_back(p + "norm.gain", b.norm.gain);
            out.emplace_back(p + "norm.bias", b.norm.bias);
            out.emplace_back(p + "depthwise.weight", b.depthwise.weight);
            out.emplace_back(p + "depthwise.bias", *b.depthwise.bias);
            out.emplace_back(p + "out_conv.weight", b.out_conv.weight);
            out.emplace_back(p + "out_conv.bias", *b.out_conv.bias);
        }
        out.emplace_back("mask.prelu.slope", mask_slope_);
        out.emplace_back("mask.conv.weight", mask_conv_.weight);
        out.emplace_back("mask.conv.bias", *mask_conv_.bias);
        out.emplace_back("decoder.basis", decoder_basis_);
        return out;
    }

    // Tensor handles share storage with the model.
    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : parameters()) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& t : parameters()) t.zero_grad();
    }

    // Deep copy with independent parameter storage.
    DereverbModel clone() const {
        DereverbModel copy(config_, 0);
        copy.copy_parameters_from(*this);
        return copy;
    }

    void copy_parameters_from(const DereverbModel& other) {
        if (!(other.config_ == config_)) throw ConfigError("copy_parameters_from: config mismatch");
        auto dst = named_parameters();
        auto src = other.named_parameters();
        for (std::size_t i = 0; i < dst.size(); ++i) {
            auto d = dst[i].second.mutable_data();
            auto s = src[i].second.data();
            std::copy(s.begin(), s.end(), d.begin());
        }
    }

private:
    static Tensor uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> v(shape_numel(shape));
        for (double& x : v) x = dist(rng);
        return Tensor::from(std::move(shape), std::move(v), true);
    }

    static Tensor pad_end(const Tensor& signal, std::size_t length) {
        const std::size_t n = signal.dim(0);
        std::vector<double> v(length, 0.0);
        std::copy(signal.data().begin(), signal.data().end(), v.begin());
        return record_op("pad_end", {length}, std::move(v), {signal},
                         [n](std::span<const double> g, std::span<const std::span<double>> gin) {
                             for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i];
                         });
    }

    // pointwise B->H, PReLU, norm, depthwise-separable H->B, optional residual.
    Tensor apply_block(const Block& b, const Tensor& input) const {
        Tensor h = prelu(conv1d(input, b.in_conv), b.slope);
        h = config_.block_norm == BlockNorm::global ? global_layer_norm(h, b.norm) : channelwise_layer_norm(h, b.norm);
        Tensor out = depthwise_separable_conv(h, b.depthwise, b.out_conv);
        return config_.residual ? add(input, out) : out;
    }

    ModelConfig config_;
    Tensor encoder_basis_;
    NormParams bottleneck_norm_;
    Conv1dParams bottleneck_conv_;
    std::vector<Block> blocks_;
    Tensor mask_slope_;
    Conv1dParams mask_conv_;
    Tensor decoder_basis_;
};

// ---------------------------------------------------------------------------
// Checkpoints: JSON object
//   {"format": "tcnd.checkpoint", "version": 1, "config": {...},
//    "parameters": {"<name>": {"shape": [...], "data": [...]}, ...}}
// Doubles are written in shortest round-trip form, so load(save(m)) is exact.

inline constexpr const char* kCheckpointFormat = "tcnd.checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const DereverbModel& model) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [name, t] : model.named_parameters()) {
        params[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
    }
    return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"config", model.config()},
            {"parameters", std::move(params)}};
}

inline DereverbModel model_from_checkpoint_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kCheckpointFormat) throw ConfigError("not a tcnd checkpoint");
    if (j.value("version", 0) != kCheckpointVersion) {
        throw ConfigError("unsupported checkpoint version " + std::to_string(j.value("version", 0)));
    }
    DereverbModel model(j.at("config").get<ModelConfig>(), 0);
    const auto& params = j.at("parameters");
    for (auto& [name, tensor] : model.named_parameters()) {
        if (!params.contains(name)) throw ConfigError("checkpoint is missing parameter " + name);
        const auto& entry = params.at(name);
        if (entry.at("shape").get<Shape>() != tensor.shape()) {
            throw DimensionError("checkpoint parameter " + name + " has the wrong shape");
        }
        const auto values = entry.at("data").get<std::vector<double>>();
        auto dst = tensor.mutable_data();
        if (values.size() != dst.size()) throw DimensionError("checkpoint parameter " + name + " has the wrong size");
        std::copy(values.begin(), values.end(), dst.begin());
    }
    return model;
}

inline void save_checkpoint(const DereverbModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError(path, "cannot open for writing");
    out << checkpoint_json(model).dump() << '\n';
    if (!out) throw IngestionError(path, "write failed");
}

inline DereverbModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestionError(path, "cannot open checkpoint");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IngestionError(path, std::string("malformed checkpoint: ") + e.what());
    }
    return model_from_checkpoint_json(j);
}

}  // namespace tcnd
