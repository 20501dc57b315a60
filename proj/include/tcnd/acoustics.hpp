#pragma once

// Synthetic reverberant data: seeded exponential-decay impulse responses with
// an explicit direct tap, convolutional mixing with direct-path extraction,
// Schroeder-integration RT60 measurement, 50%-overlap framing and the corpus
// generator that writes WAV triples plus a JSON-lines manifest.

#include <tcnd/autodiff.hpp>
#include <tcnd/layers.hpp>
#include <tcnd/wav.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace tcnd {

inline constexpr std::uint32_t kCorpusSampleRate = 8000;

enum class ClipRole { dry, direct, reverberant, estimate };

inline std::string to_string(ClipRole r) {
    switch (r) {
        case ClipRole::dry: return "dry";
        case ClipRole::direct: return "direct";
        case ClipRole::reverberant: return "reverberant";
        case ClipRole::estimate: return "estimate";
    }
    return "unknown";
}

struct AudioClip {
    std::vector<double> samples;
    std::uint32_t sample_rate = kCorpusSampleRate;
    ClipRole role = ClipRole::dry;

    std::size_t size() const noexcept { return samples.size(); }
    double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// splitmix64 of (seed, index): independent per-example RNG streams, so
// generation order does not affect the bytes produced.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Impulse responses.

struct RIRSpec {
    double rt60 = 0.5;  // seconds
    std::uint32_t sample_rate = kCorpusSampleRate;
    std::size_t direct_delay = 0;  // i0
    double direct_gain = 1.0;      // alpha
    std::size_t length = 0;        // 0 -> ceil(rt60·f_s) + direct_delay + early_gap + 1
    std::uint64_t seed = 0;
    double tail_gain = 0.1;         // magnitude of the decaying noise at the direct tap
    std::size_t early_gap = 8;      // silent samples between direct tap and tail

    std::size_t resolved_length() const {
        if (length != 0) return length;
        return static_cast<std::size_t>(std::ceil(rt60 * sample_rate)) + direct_delay + early_gap + 1;
    }

    void validate() const {
        if (!(rt60 > 0.0) || !std::isfinite(rt60)) throw ConfigError("rir spec: rt60 must be positive");
        if (sample_rate == 0) throw ConfigError("rir spec: sample rate must be positive");
        const std::size_t n = resolved_length();
        if (n < direct_delay + 1) throw ConfigError("rir spec: length must cover the direct tap");
        if (static_cast<double>(n) < rt60 * sample_rate) throw ConfigError("rir spec: length shorter than rt60");
    }
};

struct ImpulseResponse {
    std::vector<double> taps;
    std::size_t direct_delay = 0;
    double direct_gain = 1.0;
    std::uint32_t sample_rate = kCorpusSampleRate;

    // Treats the largest-magnitude tap as the direct path.
    static ImpulseResponse from_taps(std::vector<double> taps, std::uint32_t sample_rate = kCorpusSampleRate) {
        if (taps.empty()) throw InputError("impulse response: no taps");
        ImpulseResponse h;
        const auto peak = std::max_element(taps.begin(), taps.end(),
                                           [](double a, double b) { return std::abs(a) < std::abs(b); });
        h.direct_delay = static_cast<std::size_t>(peak - taps.begin());
        h.direct_gain = *peak;
        h.taps = std::move(taps);
        h.sample_rate = sample_rate;
        return h;
    }
};

// h[i0] = alpha; for i > i0 + gap, h[i] = n[i] · exp(-(i - i0) · 3 ln 10 / (rt60 · f_s))
// with n[i] = ±tail_gain, random sign. Zero-mean and white, and the energy
// envelope is exactly exponential, falling 60 dB over rt60.
inline ImpulseResponse generate_rir(const RIRSpec& spec) {
    spec.validate();
    const std::size_t n = spec.resolved_length();
    ImpulseResponse h;
    h.taps.assign(n, 0.0);
    h.direct_delay = spec.direct_delay;
    h.direct_gain = spec.direct_gain;
    h.sample_rate = spec.sample_rate;
    h.taps[spec.direct_delay] = spec.direct_gain;
    std::mt19937_64 rng(spec.seed);
    std::bernoulli_distribution sign(0.5);
    const double decay = 3.0 * std::numbers::ln10 / (spec.rt60 * spec.sample_rate);
    for (std::size_t i = spec.direct_delay + spec.early_gap + 1; i < n; ++i) {
        const double n_i = sign(rng) ? spec.tail_gain : -spec.tail_gain;
        h.taps[i] = n_i * std::exp(-static_cast<double>(i - spec.direct_delay) * decay);
    }
    return h;
}

// Full linear convolution truncated to the first `length` samples.
inline std::vector<double> convolve_truncated(std::span<const double> signal, std::span<const double> filter,
                                              std::size_t length) {
    std::vector<double> out(length, 0.0);
    for (std::size_t j = 0; j < filter.size() && j < length; ++j) {
        const double hj = filter[j];
        if (hj == 0.0) continue;
        const std::size_t stop = std::min(length, signal.size() + j);
        double* dst = out.data() + j;
        const double* src = signal.data();
        for (std::size_t i = j; i < stop; ++i) dst[i - j] += hj * src[i - j];
    }
    return out;
}

struct MixtureExample {
    AudioClip dry;
    AudioClip direct;       // s_dir[i] = alpha · s[i - i0]
    AudioClip late;         // dry convolved with the RIR minus its direct tap
    AudioClip reverberant;  // x = direct + late
    ImpulseResponse rir;
};

// Splits h at its direct tap: x = s_dir + s_rev, all truncated to len(dry).
inline MixtureExample reverberate(const AudioClip& dry, const ImpulseResponse& h) {
    if (dry.samples.empty()) throw InputError("reverberate: empty dry signal");
    if (dry.sample_rate != h.sample_rate) throw ConfigError("reverberate: sample rate mismatch");
    if (h.direct_delay >= h.taps.size()) throw InputError("reverberate: direct tap outside the impulse response");
    const std::size_t n = dry.samples.size();
    MixtureExample m;
    m.dry = dry;
    m.dry.role = ClipRole::dry;
    m.rir = h;

    std::vector<double> direct(n, 0.0);
    for (std::size_t i = h.direct_delay; i < n; ++i) direct[i] = h.direct_gain * dry.samples[i - h.direct_delay];
    std::vector<double> tail = h.taps;
    tail[h.direct_delay] = 0.0;
    std::vector<double> late = convolve_truncated(dry.samples, tail, n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = direct[i] + late[i];

    m.direct = {std::move(direct), dry.sample_rate, ClipRole::direct};
    m.late = {std::move(late), dry.sample_rate, ClipRole::reverberant};
    m.reverberant = {std::move(x), dry.sample_rate, ClipRole::reverberant};
    return m;
}

// T20: Schroeder backward integration from the strongest tap, least-squares
// line through the -5..-25 dB part of the decay curve, extrapolated to -60 dB.
inline double estimate_rt60(std::span<const double> h, std::uint32_t sample_rate) {
    if (h.empty()) throw EstimationError("estimate_rt60: empty impulse response");
    if (sample_rate == 0) throw ConfigError("estimate_rt60: zero sample rate");
    const auto peak = static_cast<std::size_t>(
        std::max_element(h.begin(), h.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) - h.begin());
    std::vector<double> energy(h.size() - peak);
    double acc = 0.0;
    for (std::size_t i = h.size(); i-- > peak;) {
        acc += h[i] * h[i];
        energy[i - peak] = acc;
    }
    if (!(acc > 0.0)) throw EstimationError("estimate_rt60: impulse response has no energy");
    const double total = energy.front();

    std::size_t begin = energy.size(), end = energy.size();
    for (std::size_t i = 0; i < energy.size(); ++i) {
        const double db = 10.0 * std::log10(energy[i] / total);
        if (begin == energy.size() && db <= -5.0) begin = i;
        if (db < -25.0 || energy[i] <= 0.0) {
            end = i;
            break;
        }
    }
    if (end == energy.size()) throw EstimationError("estimate_rt60: decay never reaches -25 dB");
    if (begin >= end || end - begin < 10) {
        throw EstimationError("estimate_rt60: decay region shorter than 10 samples");
    }
    double st = 0, sy = 0, stt = 0, sty = 0;
    const double count = static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        const double y = 10.0 * std::log10(energy[i] / total);
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    const double slope = (count * sty - st * sy) / (count * stt - st * st);
    if (!(slope < 0.0)) throw EstimationError("estimate_rt60: decay curve is not decreasing");
    return -60.0 / slope;
}

inline double estimate_rt60(const ImpulseResponse& h) { return estimate_rt60(h.taps, h.sample_rate); }

// ---------------------------------------------------------------------------
// Framing and length normalization.

// Zero-pads to the next multiple of L_BL/2, then cuts 50%-overlap blocks:
// block l covers samples [l·L_BL/2, l·L_BL/2 + L_BL). Returns [L_x × L_BL].
inline Tensor frame_blocks(std::span<const double> x, std::size_t block_length) {
    if (block_length == 0 || block_length % 2 != 0) throw ConfigError("frame_blocks: block length must be even");
    if (x.size() < block_length) {
        throw InputError("frame_blocks: signal of " + std::to_string(x.size()) + " samples is shorter than one block");
    }
    const std::size_t hop = block_length / 2;
    std::vector<double> padded((x.size() + hop - 1) / hop * hop, 0.0);
    std::copy(x.begin(), x.end(), padded.begin());
    const std::size_t n = padded.size();
    return frame_signal(Tensor::from({n}, std::move(padded)), block_length, hop);
}

inline Tensor frame_blocks(const AudioClip& clip, std::size_t block_length) {
    return frame_blocks(clip.samples, block_length);
}

// Crops from sample 0 or zero-pads at the end to round(target·f_s) samples.
inline AudioClip pad_or_truncate(const AudioClip& clip, double target_seconds) {
    if (!(target_seconds > 0.0)) throw ConfigError("pad_or_truncate: target must be positive");
    AudioClip out = clip;
    out.samples.resize(static_cast<std::size_t>(std::llround(target_seconds * clip.sample_rate)), 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Speech-like source: voiced pulse trains and noise bursts through two
// formant resonators, shaped into syllables separated by pauses.

struct SyntheticSpeechSpec {
    double seconds = 4.0;
    std::uint32_t sample_rate = kCorpusSampleRate;
    double peak = 0.5;
};

inline AudioClip synthesize_speech(const SyntheticSpeechSpec& spec, std::mt19937_64& rng) {
    if (!(spec.seconds > 0.0)) throw ConfigError("synthesize_speech: duration must be positive");
    const double fs = spec.sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(spec.seconds * fs));
    std::vector<double> out(n, 0.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

    struct Resonator {
        double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;
        Resonator(double freq, double bandwidth, double fs) {
            const double r = std::exp(-std::numbers::pi * bandwidth / fs);
            a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / fs);
            a2 = -r * r;
            gain = 1.0 - r;
        }
        double step(double x) {
            const double y = gain * x + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            return y;
        }
    };

    auto t = static_cast<std::size_t>(uniform(0.02, 0.15) * fs);
    while (t < n) {
        const auto len = static_cast<std::size_t>(uniform(0.12, 0.35) * fs);
        const bool voiced = u(rng) < 0.8;
        const double f0 = uniform(90.0, 220.0);
        const double vibrato = uniform(0.0, 0.04);
        Resonator f1(uniform(300.0, 900.0), 90.0, fs);
        Resonator f2(uniform(900.0, 2500.0), 140.0, fs);
        const double level = uniform(0.5, 1.0);
        double phase = 0.0;
        for (std::size_t k = 0; k < len && t + k < n; ++k) {
            const double pos = static_cast<double>(k) / static_cast<double>(len);
            double excitation = 0.05 * gauss(rng);
            if (voiced) {
                const double f = f0 * (1.0 + vibrato * std::sin(2.0 * std::numbers::pi * 5.0 * k / fs) - 0.15 * pos);
                phase += f / fs;
                if (phase >= 1.0) {
                    phase -= 1.0;
                    excitation += 1.0;
                }
            } else {
                excitation = 0.4 * gauss(rng);
            }
            const double envelope = std::pow(std::sin(std::numbers::pi * pos), 0.6);
            out[t + k] += level * envelope * f2.step(f1.step(excitation));
        }
        t += len;
        const double pause = u(rng) < 0.25 ? uniform(0.25, 0.5) : uniform(0.03, 0.15);
        t += static_cast<std::size_t>(pause * fs);
    }
    const double peak = std::accumulate(out.begin(), out.end(), 0.0,
                                        [](double m, double v) { return std::max(m, std::abs(v)); });
    if (peak > 0.0) {
        for (double& v : out) v *= spec.peak / peak;
    }
    return {std::move(out), spec.sample_rate, ClipRole::dry};
}

// ---------------------------------------------------------------------------
// Corpus generation.

struct CorpusSpec {
    double rt60_min = 0.1;
    double rt60_max = 1.0;
    std::size_t train = 4;
    std::size_t val = 2;
    std::size_t test = 2;
    double seconds = 4.0;
    std::uint64_t seed = 0;
    double alpha_min = 0.5;
    double alpha_max = 1.0;
    std::size_t delay_min = 0;
    std::size_t delay_max = 40;
    double tail_gain = 0.1;
    std::vector<std::string> sources;  // dry WAVs; empty -> synthetic speech
    std::size_t jobs = 1;

    void validate() const {
        if (!(rt60_min > 0.0) || !(rt60_min < rt60_max)) {
            throw ConfigError("corpus: rt60 range must satisfy 0 < lo < hi");
        }
        if (train == 0 || val == 0 || test == 0) throw ConfigError("corpus: every split needs at least one example");
        if (!(seconds > 0.0)) throw ConfigError("corpus: clip length must be positive");
        if (!(alpha_min > 0.0) || alpha_min > alpha_max) throw ConfigError("corpus: invalid direct-gain range");
        if (delay_min > delay_max) throw ConfigError("corpus: invalid direct-delay range");
    }
};

inline void to_json(nlohmann::ordered_json& j, const CorpusSpec& s) {
    j = nlohmann::ordered_json{{"format", "tcnd.corpus"},
                               {"version", 1},
                               {"rt60_min", s.rt60_min},
                               {"rt60_max", s.rt60_max},
                               {"rt60_distribution", "uniform"},
                               {"train", s.train},
                               {"val", s.val},
                               {"test", s.test},
                               {"seconds", s.seconds},
                               {"sample_rate", kCorpusSampleRate},
                               {"seed", s.seed},
                               {"alpha_min", s.alpha_min},
                               {"alpha_max", s.alpha_max},
                               {"delay_min", s.delay_min},
                               {"delay_max", s.delay_max},
                               {"tail_gain", s.tail_gain},
                               {"sources", s.sources}};
}

struct ManifestEntry {
    std::string id;
    std::string split;
    std::string dry_path;  // relative to the corpus directory
    std::string direct_path;
    std::string reverb_path;
    double rt60_target = 0;
    std::optional<double> rt60_measured;
    double alpha = 1;
    std::size_t i0 = 0;
    std::uint64_t seed = 0;
    double gain = 1;  // common scale applied to all three clips to avoid clipping
};

inline nlohmann::ordered_json manifest_line(const ManifestEntry& e) {
    nlohmann::ordered_json j{{"id", e.id},
                             {"dry_path", e.dry_path},
                             {"direct_path", e.direct_path},
                             {"reverb_path", e.reverb_path},
                             {"rt60_target", e.rt60_target},
                             {"rt60_measured", nullptr},
                             {"alpha", e.alpha},
                             {"i0", e.i0},
                             {"seed", e.seed},
                             {"split", e.split},
                             {"gain", e.gain}};
    if (e.rt60_measured) j["rt60_measured"] = *e.rt60_measured;
    return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.split = j.value("split", std::string{});
    e.dry_path = j.at("dry_path").get<std::string>();
    e.direct_path = j.at("direct_path").get<std::string>();
    e.reverb_path = j.at("reverb_path").get<std::string>();
    e.rt60_target = j.at("rt60_target").get<double>();
    if (!j.at("rt60_measured").is_null()) e.rt60_measured = j.at("rt60_measured").get<double>();
    e.alpha = j.at("alpha").get<double>();
    e.i0 = j.at("i0").get<std::size_t>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.gain = j.value("gain", 1.0);
    return e;
}

inline constexpr const char* kManifestName = "manifest.jsonl";

namespace detail {

inline std::vector<AudioClip> load_sources(const std::vector<std::string>& paths) {
    std::vector<AudioClip> clips;
    for (const auto& path : paths) {
        WavData wav = read_wav(path);
        if (wav.sample_rate != kCorpusSampleRate) {
            throw IngestionError(path, "sample rate " + std::to_string(wav.sample_rate) + " Hz, expected 8000 Hz");
        }
        if (wav.samples.empty()) throw IngestionError(path, "no samples");
        clips.push_back({std::move(wav.samples), wav.sample_rate, ClipRole::dry});
    }
    return clips;
}

}  // namespace detail

struct GeneratedExample {
    ManifestEntry entry;
    MixtureExample mixture;
};

// Deterministic in (spec, index): draws rt60 ~ U[lo, hi], alpha, i0, a dry
// source, then mixes. Does not touch the filesystem.
inline GeneratedExample generate_example(const CorpusSpec& spec, const std::vector<AudioClip>& sources,
                                         std::size_t index, const std::string& split, std::size_t split_index) {
    const std::uint64_t seed = derive_seed(spec.seed, index);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GeneratedExample g;
    auto& e = g.entry;
    char id[64];
    std::snprintf(id, sizeof id, "%s_%04zu", split.c_str(), split_index);
    e.id = id;
    e.split = split;
    e.seed = seed;
    e.rt60_target = spec.rt60_min + (spec.rt60_max - spec.rt60_min) * u(rng);
    e.alpha = spec.alpha_min + (spec.alpha_max - spec.alpha_min) * u(rng);
    e.i0 = std::uniform_int_distribution<std::size_t>(spec.delay_min, spec.delay_max)(rng);
    const std::uint64_t rir_seed = rng();

    AudioClip dry = sources.empty() ? synthesize_speech({spec.seconds, kCorpusSampleRate, 0.5}, rng)
                                    : sources[index % sources.size()];
    dry = pad_or_truncate(dry, spec.seconds);

    RIRSpec rs;
    rs.rt60 = e.rt60_target;
    rs.direct_delay = e.i0;
    rs.direct_gain = e.alpha;
    rs.seed = rir_seed;
    rs.tail_gain = spec.tail_gain;
    g.mixture = reverberate(dry, generate_rir(rs));
    try {
        e.rt60_measured = estimate_rt60(g.mixture.rir);
    } catch (const EstimationError&) {
        e.rt60_measured.reset();
    }

    double peak = 0.0;
    for (const auto* clip : {&g.mixture.dry, &g.mixture.direct, &g.mixture.reverberant}) {
        for (double v : clip->samples) peak = std::max(peak, std::abs(v));
    }
    e.gain = peak > 0.9 ? 0.9 / peak : 1.0;
    if (e.gain != 1.0) {
        for (auto* clip : {&g.mixture.dry, &g.mixture.direct, &g.mixture.late, &g.mixture.reverberant}) {
            for (double& v : clip->samples) v *= e.gain;
        }
    }
    e.dry_path = split + "/" + e.id + "_dry.wav";
    e.direct_path = split + "/" + e.id + "_direct.wav";
    e.reverb_path = split + "/" + e.id + "_reverb.wav";
    return g;
}

// Writes <out>/{train,val,test}/<id>_{dry,direct,reverb}.wav, <out>/manifest.jsonl
// (one line per example, split order train, val, test) and <out>/corpus.json.
// Examples are generated by `spec.jobs` workers; output bytes do not depend on it.
inline std::vector<ManifestEntry> make_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    const std::vector<AudioClip> sources = detail::load_sources(spec.sources);

    struct Job {
        std::string split;
        std::size_t split_index;
    };
    std::vector<Job> jobs;
    for (auto [split, count] : {std::pair<const char*, std::size_t>{"train", spec.train}, {"val", spec.val},
                                {"test", spec.test}}) {
        std::filesystem::create_directories(out_dir / split);
        for (std::size_t i = 0; i < count; ++i) jobs.push_back({split, i});
    }

    std::vector<ManifestEntry> entries(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                GeneratedExample g = generate_example(spec, sources, i, jobs[i].split, jobs[i].split_index);
                write_wav16((out_dir / g.entry.dry_path).string(), g.mixture.dry.samples, kCorpusSampleRate);
                write_wav16((out_dir / g.entry.direct_path).string(), g.mixture.direct.samples, kCorpusSampleRate);
                write_wav16((out_dir / g.entry.reverb_path).string(), g.mixture.reverberant.samples, kCorpusSampleRate);
                entries[i] = std::move(g.entry);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(spec.jobs, 1, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    std::ofstream manifest(out_dir / kManifestName, std::ios::binary | std::ios::trunc);
    if (!manifest) throw IngestionError((out_dir / kManifestName).string(), "cannot open for writing");
    for (const auto& e : entries) manifest << manifest_line(e).dump() << '\n';
    nlohmann::ordered_json meta = spec;
    std::ofstream(out_dir / "corpus.json", std::ios::binary | std::ios::trunc) << meta.dump(2) << '\n';
    return entries;
}

// ---------------------------------------------------------------------------
// Loading.

struct CorpusExample {
    std::string id;
    AudioClip reverberant;
    AudioClip direct;
    double rt60_target = 0;
};

struct Corpus {
    std::vector<CorpusExample> train, val, test;

    const std::vector<CorpusExample>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw ConfigError("unknown split '" + name + "'");
    }
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& corpus_dir) {
    const auto path = corpus_dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw ConfigError("corpus manifest not found: " + path.string());
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            entries.push_back(manifest_entry_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError(path.string(), std::string("malformed manifest line: ") + e.what());
        }
    }
    return entries;
}

inline Corpus load_corpus(const std::filesystem::path& corpus_dir) {
    Corpus corpus;
    for (const auto& e : read_manifest(corpus_dir)) {
        auto load = [&](const std::string& rel, ClipRole role) {
            WavData w = read_wav((corpus_dir / rel).string());
            return AudioClip{std::move(w.samples), w.sample_rate, role};
        };
        CorpusExample ex{e.id, load(e.reverb_path, ClipRole::reverberant), load(e.direct_path, ClipRole::direct),
                         e.rt60_target};
        if (ex.reverberant.size() != ex.direct.size()) {
            throw IngestionError((corpus_dir / e.reverb_path).string(), "length differs from its direct-path clip");
        }
        if (e.split == "train") corpus.train.push_back(std::move(ex));
        else if (e.split == "val") corpus.val.push_back(std::move(ex));
        else if (e.split == "test") corpus.test.push_back(std::move(ex));
        else throw IngestionError((corpus_dir / kManifestName).string(), "unknown split '" + e.split + "'");
    }
    return corpus;
}

}  // namespace tcnd
