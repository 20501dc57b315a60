#pragma once

#include <tcnd/autodiff.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tcnd {

struct Conv1dOptions {
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t pad_left = 0;
    std::size_t pad_right = 0;
    std::size_t groups = 1;

    // Zero padding that keeps T' == T for stride 1. The extra sample for an
    // even receptive span goes on the right.
    static Conv1dOptions same(std::size_t kernel, std::size_t dilation, std::size_t groups = 1) {
        const std::size_t span = dilation * (kernel - 1);
        return {1, dilation, span / 2, span - span / 2, groups};
    }
};

inline std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, const Conv1dOptions& o) {
    const std::size_t padded = length + o.pad_left + o.pad_right;
    const std::size_t span = o.dilation * (kernel - 1) + 1;
    if (padded < span) return 0;
    return (padded - span) / o.stride + 1;
}

// weight: [out, in/groups, kernel]; bias: [out] or absent.
struct Conv1dParams {
    Tensor weight;
    std::optional<Tensor> bias;
    Conv1dOptions options;

    std::size_t out_channels() const { return weight.dim(0); }
    std::size_t in_channels() const { return weight.dim(1) * options.groups; }
    std::size_t kernel_size() const { return weight.dim(2); }
    bool depthwise() const { return options.groups == in_channels() && weight.dim(1) == 1; }
    bool pointwise() const { return kernel_size() == 1 && options.dilation == 1; }

    std::size_t parameter_count() const { return weight.numel() + (bias ? bias->numel() : 0); }

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
    static Conv1dParams init(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                             Conv1dOptions options, bool with_bias, std::mt19937_64& rng) {
        if (in_channels == 0 || out_channels == 0 || kernel == 0 || options.groups == 0 ||
            in_channels % options.groups != 0 || out_channels % options.groups != 0) {
            throw ConfigError("conv1d: invalid channel/group configuration");
        }
        const std::size_t per_group = in_channels / options.groups;
        const double bound = 1.0 / std::sqrt(static_cast<double>(per_group * kernel));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> w(out_channels * per_group * kernel);
        for (double& v : w) v = dist(rng);
        Conv1dParams p{Tensor::from({out_channels, per_group, kernel}, std::move(w), true), std::nullopt,
                       options};
        if (with_bias) {
            std::vector<double> b(out_channels);
            for (double& v : b) v = dist(rng);
            p.bias = Tensor::from({out_channels}, std::move(b), true);
        }
        return p;
    }
};

// Cross-correlation (no kernel flip) with zero padding.
// input [C_in × T] -> [C_out × T'].
inline Tensor conv1d(const Tensor& input, const Tensor& weight, const std::optional<Tensor>& bias,
                     const Conv1dOptions& o) {
    detail::require_rank(input, 2, "conv1d");
    detail::require_rank(weight, 3, "conv1d weight");
    const std::size_t c_in = input.dim(0), length = input.dim(1);
    const std::size_t c_out = weight.dim(0), per_group = weight.dim(1), kernel = weight.dim(2);
    if (o.groups == 0 || o.stride == 0 || o.dilation == 0) throw ConfigError("conv1d: zero stride/dilation/groups");
    if (per_group * o.groups != c_in || c_out % o.groups != 0) {
        throw DimensionError("conv1d: input has " + std::to_string(c_in) + " channels, weight expects " +
                             std::to_string(per_group * o.groups));
    }
    if (bias && (bias->rank() != 1 || bias->dim(0) != c_out)) {
        throw DimensionError("conv1d: bias shape " + shape_string(bias->shape()));
    }
    const std::size_t out_len = conv1d_output_length(length, kernel, o);
    if (out_len == 0) {
        throw DimensionError("conv1d: input length " + std::to_string(length) + " too short for kernel " +
                             std::to_string(kernel) + " at dilation " + std::to_string(o.dilation));
    }
    const std::size_t out_per_group = c_out / o.groups;

    // Visits every (out channel, in channel, tap) with the valid output range
    // [t_lo, t_hi) such that the input index t*stride + offset is in bounds.
    auto for_each_tap = [=](auto&& fn) {
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            const std::size_t g = oc / out_per_group;
            for (std::size_t i = 0; i < per_group; ++i) {
                const std::size_t ic = g * per_group + i;
                for (std::size_t k = 0; k < kernel; ++k) {
                    const long offset = static_cast<long>(k * o.dilation) - static_cast<long>(o.pad_left);
                    const long s = static_cast<long>(o.stride);
                    long t_lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
                    long t_hi = (static_cast<long>(length) - offset + s - 1) / s;
                    t_hi = std::min<long>(t_hi, static_cast<long>(out_len));
                    if (t_hi <= t_lo) continue;
                    fn(oc, ic, (oc * per_group + i) * kernel + k, offset, static_cast<std::size_t>(t_lo),
                       static_cast<std::size_t>(t_hi));
                }
            }
        }
    };

    std::vector<double> out(c_out * out_len, 0.0);
    auto x = input.data(), w = weight.data();
    if (bias) {
        auto b = bias->data();
        for (std::size_t oc = 0; oc < c_out; ++oc) std::fill_n(out.begin() + oc * out_len, out_len, b[oc]);
    }
    const std::size_t stride = o.stride;
    for_each_tap([&](std::size_t oc, std::size_t ic, std::size_t wi, long offset, std::size_t lo, std::size_t hi) {
        const double wv = w[wi];
        double* dst = out.data() + oc * out_len;
        const double* src = x.data() + ic * length;
        for (std::size_t t = lo; t < hi; ++t) dst[t] += wv * src[static_cast<long>(t * stride) + offset];
    });

    std::vector<Tensor> inputs{input, weight};
    if (bias) inputs.push_back(*bias);
    const bool has_bias = bias.has_value();
    return record_op(
        "conv1d", {c_out, out_len}, std::move(out), std::move(inputs),
        [input, weight, for_each_tap, out_len, length, stride, has_bias](
            std::span<const double> g, std::span<const std::span<double>> gin) {
            auto x = input.data(), w = weight.data();
            auto dx = gin[0], dw = gin[1];
            for_each_tap([&](std::size_t oc, std::size_t ic, std::size_t wi, long offset, std::size_t lo,
                             std::size_t hi) {
                const double* go = g.data() + oc * out_len;
                if (!dx.empty()) {
                    const double wv = w[wi];
                    double* dst = dx.data() + ic * length;
                    for (std::size_t t = lo; t < hi; ++t) dst[static_cast<long>(t * stride) + offset] += wv * go[t];
                }
                if (!dw.empty()) {
                    const double* src = x.data() + ic * length;
                    double acc = 0.0;
                    for (std::size_t t = lo; t < hi; ++t) acc += go[t] * src[static_cast<long>(t * stride) + offset];
                    dw[wi] += acc;
                }
            });
            if (has_bias && !gin[2].empty()) {
                auto db = gin[2];
                for (std::size_t oc = 0; oc < db.size(); ++oc) {
                    const double* go = g.data() + oc * out_len;
                    double acc = 0.0;
                    for (std::size_t t = 0; t < out_len; ++t) acc += go[t];
                    db[oc] += acc;
                }
            }
        });
}

inline Tensor conv1d(const Tensor& input, const Conv1dParams& p) {
    return conv1d(input, p.weight, p.bias, p.options);
}

// Depthwise (groups == H, kernel P, dilation f) followed by pointwise H -> B.
inline Tensor depthwise_separable_conv(const Tensor& input, const Conv1dParams& depthwise,
                                       const Conv1dParams& pointwise) {
    if (!depthwise.depthwise()) throw ConfigError("depthwise_separable_conv: first stage is not depthwise");
    if (!pointwise.pointwise()) throw ConfigError("depthwise_separable_conv: second stage is not pointwise");
    return conv1d(conv1d(input, depthwise), pointwise);
}

// H·P + H (depthwise weight + bias) + H·B + B (pointwise weight + bias).
constexpr std::size_t depthwise_separable_parameter_count(std::size_t hidden, std::size_t out, std::size_t kernel) {
    return hidden * kernel + hidden + hidden * out + out;
}

// Transposed convolution, the adjoint of conv1d(·, weight, stride) without
// padding. input [C_in × L], weight [C_in × C_out × K] -> [C_out × (L-1)·S + K].
// Each input frame contributes a K-sample segment at offset l·S; overlaps sum.
inline Tensor transposed_conv1d(const Tensor& input, const Tensor& weight, std::size_t stride) {
    detail::require_rank(input, 2, "transposed_conv1d");
    detail::require_rank(weight, 3, "transposed_conv1d weight");
    const std::size_t c_in = input.dim(0), frames = input.dim(1);
    const std::size_t c_out = weight.dim(1), kernel = weight.dim(2);
    if (frames == 0 || c_in == 0) throw DimensionError("transposed_conv1d: empty input");
    if (weight.dim(0) != c_in) throw DimensionError("transposed_conv1d: channel mismatch");
    if (stride == 0) throw ConfigError("transposed_conv1d: zero stride");
    const std::size_t out_len = (frames - 1) * stride + kernel;
    std::vector<double> out(c_out * out_len, 0.0);
    auto x = input.data(), w = weight.data();
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            const double* wk = w.data() + (c * c_out + oc) * kernel;
            double* dst = out.data() + oc * out_len;
            for (std::size_t l = 0; l < frames; ++l) {
                const double xv = x[c * frames + l];
                if (xv == 0.0) continue;
                for (std::size_t k = 0; k < kernel; ++k) dst[l * stride + k] += xv * wk[k];
            }
        }
    }
    return record_op(
        "transposed_conv1d", {c_out, out_len}, std::move(out), {input, weight},
        [input, weight, c_in, c_out, frames, kernel, stride, out_len](std::span<const double> g,
                                                                    std::span<const std::span<double>> gin) {
            auto x = input.data(), w = weight.data();
            for (std::size_t c = 0; c < c_in; ++c) {
                for (std::size_t oc = 0; oc < c_out; ++oc) {
                    const double* wk = w.data() + (c * c_out + oc) * kernel;
                    const double* go = g.data() + oc * out_len;
                    for (std::size_t l = 0; l < frames; ++l) {
                        const double* seg = go + l * stride;
                        if (!gin[0].empty()) {
                            double acc = 0.0;
                            for (std::size_t k = 0; k < kernel; ++k) acc += wk[k] * seg[k];
                            gin[0][c * frames + l] += acc;
                        }
                        if (!gin[1].empty()) {
                            const double xv = x[c * frames + l];
                            double* dw = gin[1].data() + (c * c_out + oc) * kernel;
                            for (std::size_t k = 0; k < kernel; ++k) dw[k] += xv * seg[k];
                        }
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Framing. frame_signal and overlap_add are mutual adjoints.

// signal [L_s] -> [L × width], frame l covering samples [l·hop, l·hop + width).
// The signal must already be long enough; no padding happens here.
inline Tensor frame_signal(const Tensor& signal, std::size_t width, std::size_t hop) {
    detail::require_rank(signal, 1, "frame_signal");
    const std::size_t n = signal.dim(0);
    if (width == 0 || hop == 0) throw ConfigError("frame_signal: zero width or hop");
    if (n < width) throw InputError("frame_signal: signal of " + std::to_string(n) + " samples is shorter than one block");
    const std::size_t frames = (n - width) / hop + 1;
    std::vector<double> out(frames * width);
    auto x = signal.data();
    for (std::size_t l = 0; l < frames; ++l) {
        std::copy_n(x.begin() + static_cast<long>(l * hop), width, out.begin() + static_cast<long>(l * width));
    }
    return record_op("frame_signal", {frames, width}, std::move(out), {signal},
                     [frames, width, hop](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t l = 0; l < frames; ++l) {
                             for (std::size_t k = 0; k < width; ++k) gin[0][l * hop + k] += g[l * width + k];
                         }
                     });
}

// frames [L × width] -> [out_len] by summing frame l at offset l·hop. The full
// synthesis length is (L-1)·hop + width; out_len truncates or zero-extends it
// (0 keeps the full length). No window, no normalization.
inline Tensor overlap_add(const Tensor& frames, std::size_t hop, std::size_t out_len = 0) {
    detail::require_rank(frames, 2, "overlap_add");
    const std::size_t count = frames.dim(0), width = frames.dim(1);
    if (count == 0 || width == 0) throw DimensionError("overlap_add: empty input");
    if (hop == 0) throw ConfigError("overlap_add: zero hop");
    const std::size_t full = (count - 1) * hop + width;
    if (out_len == 0) out_len = full;
    std::vector<double> out(out_len, 0.0);
    auto x = frames.data();
    for (std::size_t l = 0; l < count; ++l) {
        for (std::size_t k = 0; k < width && l * hop + k < out_len; ++k) out[l * hop + k] += x[l * width + k];
    }
    return record_op("overlap_add", {out_len}, std::move(out), {frames},
                     [count, width, hop, out_len](std::span<const double> g, std::span<const std::span<double>> gin) {
                         for (std::size_t l = 0; l < count; ++l) {
                             for (std::size_t k = 0; k < width && l * hop + k < out_len; ++k) {
                                 gin[0][l * width + k] += g[l * hop + k];
                             }
                         }
                     });
}

// ---------------------------------------------------------------------------
// Activations.

inline Tensor relu(const Tensor& input) {
    std::vector<double> out(input.data().begin(), input.data().end());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return record_op("relu", input.shape(), std::move(out), {input},
                     [input](std::span<const double> g, std::span<const std::span<double>> gin) {
                         auto x = input.data();
                         for (std::size_t i = 0; i < gin[0].size(); ++i) {
                             if (x[i] > 0.0) gin[0][i] += g[i];
                         }
                     });
}

// x >= 0 -> x, x < 0 -> slope·x. slope is a single learnable value (shape [1]).
// The subgradient at 0 is taken from the positive branch.
inline Tensor prelu(const Tensor& input, const Tensor& slope) {
    if (slope.numel() != 1) throw DimensionError("prelu: slope must hold one value");
    const double a = slope.data()[0];
    std::vector<double> out(input.data().begin(), input.data().end());
    for (double& v : out) v = v >= 0.0 ? v : a * v;
    return record_op("prelu", input.shape(), std::move(out), {input, slope},
                     [input, a](std::span<const double> g, std::span<const std::span<double>> gin) {
                         auto x = input.data();
                         double ds = 0.0;
                         for (std::size_t i = 0; i < x.size(); ++i) {
                             if (x[i] >= 0.0) {
                                 if (!gin[0].empty()) gin[0][i] += g[i];
                             } else {
                                 if (!gin[0].empty()) gin[0][i] += a * g[i];
                                 ds += x[i] * g[i];
                             }
                         }
                         if (!gin[1].empty()) gin[1][0] += ds;
                     });
}

// ---------------------------------------------------------------------------
// Normalization. Both variants normalize to zero mean / unit variance with
// var + epsilon under the square root, then apply per-channel gain and bias.

inline constexpr double kNormEpsilon = 1e-8;

struct NormParams {
    Tensor gain;
    Tensor bias;
    double epsilon = kNormEpsilon;

    static NormParams init(std::size_t channels, double epsilon = kNormEpsilon) {
        return {Tensor::full({channels}, 1.0, true), Tensor::zeros({channels}, true), epsilon};
    }
    std::size_t channels() const { return gain.numel(); }
    std::size_t parameter_count() const { return gain.numel() + bias.numel(); }
};

namespace detail {

// Normalizes groups of entries of a [C × T] tensor. Group membership is given
// by `group_of(c, t)`; `group_count` groups in total.
template <class GroupOf>
Tensor grouped_layer_norm(const char* name, const Tensor& input, const NormParams& p, std::size_t group_count,
                          GroupOf group_of) {
    require_rank(input, 2, name);
    const std::size_t channels = input.dim(0), length = input.dim(1);
    if (channels == 0 || length == 0) throw DimensionError(std::string(name) + ": empty input");
    if (p.gain.numel() != channels || p.bias.numel() != channels) {
        throw DimensionError(std::string(name) + ": gain/bias length differs from channel count");
    }
    if (!(p.epsilon > 0.0)) throw ConfigError(std::string(name) + ": epsilon must be positive");

    auto x = input.data();
    std::vector<double> mean(group_count, 0.0), count(group_count, 0.0), inv_std(group_count, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < length; ++t) {
            const std::size_t g = group_of(c, t);
            mean[g] += x[c * length + t];
            count[g] += 1.0;
        }
    }
    for (std::size_t g = 0; g < group_count; ++g) mean[g] /= count[g];
    std::vector<double> var(group_count, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < length; ++t) {
            const std::size_t g = group_of(c, t);
            const double d = x[c * length + t] - mean[g];
            var[g] += d * d;
        }
    }
    for (std::size_t g = 0; g < group_count; ++g) inv_std[g] = 1.0 / std::sqrt(var[g] / count[g] + p.epsilon);

    std::vector<double> normalized(x.size()), out(x.size());
    auto gain = p.gain.data(), bias = p.bias.data();
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < length; ++t) {
            const std::size_t i = c * length + t, g = group_of(c, t);
            normalized[i] = (x[i] - mean[g]) * inv_std[g];
            out[i] = gain[c] * normalized[i] + bias[c];
        }
    }
    return record_op(
        name, input.shape(), std::move(out), {input, p.gain, p.bias},
        [gain_t = p.gain, normalized = std::move(normalized), inv_std = std::move(inv_std), count = std::move(count),
         channels, length, group_count, group_of](std::span<const double> g, std::span<const std::span<double>> gin) {
            auto gain = gain_t.data();
            if (!gin[1].empty() || !gin[2].empty()) {
                for (std::size_t c = 0; c < channels; ++c) {
                    double dg = 0.0, db = 0.0;
                    for (std::size_t t = 0; t < length; ++t) {
                        const std::size_t i = c * length + t;
                        dg += g[i] * normalized[i];
                        db += g[i];
                    }
                    if (!gin[1].empty()) gin[1][c] += dg;
                    if (!gin[2].empty()) gin[2][c] += db;
                }
            }
            if (gin[0].empty()) return;
            // dx = inv_std · (dn - mean(dn) - n · mean(dn · n)) per group.
            std::vector<double> mean_dn(group_count, 0.0), mean_dn_n(group_count, 0.0);
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t t = 0; t < length; ++t) {
                    const std::size_t i = c * length + t, grp = group_of(c, t);
                    const double dn = g[i] * gain[c];
                    mean_dn[grp] += dn;
                    mean_dn_n[grp] += dn * normalized[i];
                }
            }
            for (std::size_t grp = 0; grp < group_count; ++grp) {
                mean_dn[grp] /= count[grp];
                mean_dn_n[grp] /= count[grp];
            }
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t t = 0; t < length; ++t) {
                    const std::size_t i = c * length + t, grp = group_of(c, t);
                    const double dn = g[i] * gain[c];
                    gin[0][i] += inv_std[grp] * (dn - mean_dn[grp] - normalized[i] * mean_dn_n[grp]);
                }
            }
        });
}

}  // namespace detail

// cLN: statistics over channels, separately for every time step.
inline Tensor channelwise_layer_norm(const Tensor& input, const NormParams& p) {
    detail::require_rank(input, 2, "channelwise_layer_norm");
    return detail::grouped_layer_norm("channelwise_layer_norm", input, p, input.dim(1),
                                      [](std::size_t, std::size_t t) { return t; });
}

// gLN: one mean and variance over all C·T entries.
inline Tensor global_layer_norm(const Tensor& input, const NormParams& p) {
    return detail::grouped_layer_norm("global_layer_norm", input, p, 1,
                                      [](std::size_t, std::size_t) { return std::size_t{0}; });
}

// ---------------------------------------------------------------------------
// Adam.

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;
};

// One bias-corrected Adam update using each parameter's current grad.
inline void adam_step(std::span<Tensor> params, AdamState& state, double lr, const AdamOptions& opts = {}) {
    if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
    if (state.first_moment.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0);
            state.second_moment.emplace_back(p.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) throw DimensionError("adam_step: state/parameter count mismatch");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    for (std::size_t j = 0; j < params.size(); ++j) {
        auto& m = state.first_moment[j];
        auto& v = state.second_moment[j];
        if (m.size() != params[j].numel()) throw DimensionError("adam_step: moment shape mismatch");
        auto g = params[j].grad();
        auto w = params[j].mutable_data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
            v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts.epsilon);
        }
    }
}

}  // namespace tcnd
