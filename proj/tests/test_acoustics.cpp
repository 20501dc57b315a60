#include <tcnd/acoustics.hpp>

#include <unistd.h>

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>

using namespace tcnd;
namespace fs = std::filesystem;

namespace {

AudioClip noise_clip(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.2);
    AudioClip c;
    c.samples.resize(n);
    for (double& v : c.samples) v = g(rng);
    return c;
}

double energy(std::span<const double> v) {
    double e = 0;
    for (double x : v) e += x * x;
    return e;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / (name + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

// --- impulse responses -----------------------------------------------------

TEST(Rir, SameSeedIsBitIdentical) {
    RIRSpec s;
    s.rt60 = 0.4;
    s.seed = 17;
    s.direct_delay = 12;
    EXPECT_EQ(generate_rir(s).taps, generate_rir(s).taps);
    RIRSpec other = s;
    other.seed = 18;
    EXPECT_NE(generate_rir(s).taps, generate_rir(other).taps);
}

TEST(Rir, DirectTapAndSilentGap) {
    RIRSpec s;
    s.rt60 = 0.3;
    s.direct_delay = 5;
    s.direct_gain = 0.7;
    s.seed = 3;
    auto h = generate_rir(s);
    EXPECT_EQ(h.taps[5], 0.7);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(h.taps[i], 0.0);
    for (std::size_t i = 6; i <= 5 + s.early_gap; ++i) EXPECT_EQ(h.taps[i], 0.0);
    EXPECT_GE(h.taps.size(), std::size_t(0.3 * 8000));
    EXPECT_EQ(h.direct_delay, 5u);
}

TEST(Rir, VeryShortDecayIsNearlyAnImpulse) {
    RIRSpec s;
    s.rt60 = 0.001;
    s.direct_delay = 3;
    s.seed = 4;
    auto h = generate_rir(s);
    double tail = 0;
    for (std::size_t i = 0; i < h.taps.size(); ++i) {
        if (i != 3) tail += h.taps[i] * h.taps[i];
    }
    EXPECT_LT(tail, 1e-8);  // below -80 dB re the direct tap
    AudioClip dry = noise_clip(200, 1);
    auto mix = reverberate(dry, h);
    for (std::size_t i = 3; i < 200; ++i) EXPECT_NEAR(mix.reverberant.samples[i], dry.samples[i - 3], 1e-4);
}

TEST(Rir, NonPositiveRt60IsConfigError) {
    RIRSpec s;
    s.rt60 = 0.0;
    EXPECT_THROW(generate_rir(s), ConfigError);
    s.rt60 = -1.0;
    EXPECT_THROW(generate_rir(s), ConfigError);
    s.rt60 = 0.5;
    s.length = 100;
    EXPECT_THROW(generate_rir(s), ConfigError);
}

TEST(Rir, FromTapsUsesLargestTapAsDirectPath) {
    auto h = ImpulseResponse::from_taps({0.1, -0.2, 0.9, 0.3});
    EXPECT_EQ(h.direct_delay, 2u);
    EXPECT_EQ(h.direct_gain, 0.9);
    EXPECT_THROW(ImpulseResponse::from_taps({}), InputError);
}

// --- RT60 estimation -------------------------------------------------------

TEST(Rt60, GeneratorEstimatorRoundTrip) {
    for (double rt60 : {0.1, 0.3, 0.5, 1.0, 1.5, 2.0, 3.0}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            RIRSpec s;
            s.rt60 = rt60;
            s.seed = seed;
            s.direct_delay = 10;
            const double est = estimate_rt60(generate_rir(s));
            EXPECT_NEAR(est, rt60, 0.1 * rt60) << "rt60 " << rt60 << " seed " << seed;
        }
    }
}

TEST(Rt60, HalfSecondWithinFivePercent) {
    RIRSpec s;
    s.rt60 = 0.5;
    s.seed = 5;
    const double est = estimate_rt60(generate_rir(s));
    EXPECT_GE(est, 0.45);
    EXPECT_LE(est, 0.55);
}

TEST(Rt60, PureExponentialEnvelope) {
    for (double tau : {0.01, 0.05, 0.2}) {
        std::vector<double> h(static_cast<std::size_t>(tau * 8000 * 20));
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::exp(-double(i) / (tau * 8000));
        const double expected = 3.0 * std::log(10.0) * tau;
        EXPECT_NEAR(estimate_rt60(h, 8000), expected, 0.02 * expected) << "tau " << tau;
    }
}

TEST(Rt60, UnitImpulseHasNoDecayRegion) {
    std::vector<double> h(100, 0.0);
    h[0] = 1.0;
    EXPECT_THROW(estimate_rt60(h, 8000), EstimationError);
    EXPECT_THROW(estimate_rt60(std::vector<double>(50, 0.0), 8000), EstimationError);
    EXPECT_THROW(estimate_rt60(std::vector<double>{}, 8000), EstimationError);
}

TEST(Rt60, TooFastDecayIsEstimationError) {
    std::vector<double> h(40);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::exp(-double(i));
    EXPECT_THROW(estimate_rt60(h, 8000), EstimationError);
}

// --- reverberate -----------------------------------------------------------

TEST(Reverberate, UnitImpulseIsIdentity) {
    AudioClip dry = noise_clip(300, 2);
    auto mix = reverberate(dry, ImpulseResponse::from_taps({1.0}));
    EXPECT_EQ(mix.reverberant.samples, dry.samples);
    EXPECT_EQ(mix.direct.samples, dry.samples);
    for (double v : mix.late.samples) EXPECT_EQ(v, 0.0);
}

TEST(Reverberate, HalfGainOneSampleDelay) {
    AudioClip dry;
    dry.samples = {1, 2, 3, 4};
    auto mix = reverberate(dry, ImpulseResponse::from_taps({0.0, 0.5}));
    EXPECT_EQ(mix.reverberant.samples, (std::vector<double>{0, 0.5, 1.0, 1.5}));
    EXPECT_EQ(mix.direct.samples, mix.reverberant.samples);
}

TEST(Reverberate, MatchesFullConvolutionAndDecomposes) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RIRSpec s;
        s.rt60 = 0.2 + 0.1 * seed;
        s.direct_delay = 4 * seed;
        s.direct_gain = 0.6;
        s.seed = seed;
        auto h = generate_rir(s);
        AudioClip dry = noise_clip(4000, seed + 10);
        auto mix = reverberate(dry, h);
        auto full = convolve_truncated(dry.samples, h.taps, dry.size());
        ASSERT_EQ(mix.reverberant.size(), dry.size());
        for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(mix.reverberant.samples[i], full[i], 1e-10);
        for (std::size_t i = 0; i < dry.size(); ++i) {
            EXPECT_EQ(mix.reverberant.samples[i], mix.direct.samples[i] + mix.late.samples[i]);
            const double expect_direct = i >= s.direct_delay ? 0.6 * dry.samples[i - s.direct_delay] : 0.0;
            EXPECT_EQ(mix.direct.samples[i], expect_direct);
        }
        double l1 = 0;
        for (double v : h.taps) l1 += std::abs(v);
        EXPECT_LE(energy(mix.reverberant.samples), l1 * l1 * energy(dry.samples));
    }
}

TEST(Reverberate, Errors) {
    EXPECT_THROW(reverberate(AudioClip{}, ImpulseResponse::from_taps({1.0})), InputError);
    AudioClip other = noise_clip(10, 1);
    other.sample_rate = 16000;
    EXPECT_THROW(reverberate(other, ImpulseResponse::from_taps({1.0})), ConfigError);
}

// --- framing ---------------------------------------------------------------

TEST(FrameBlocks, ThreeBlocksForThirtyTwoSamples) {
    std::vector<double> x(32);
    for (std::size_t i = 0; i < 32; ++i) x[i] = double(i);
    Tensor b = frame_blocks(x, 16);
    ASSERT_EQ(b.shape(), (Shape{3, 16}));
    EXPECT_EQ(b.at(0, 0), 0.0);
    EXPECT_EQ(b.at(1, 0), 8.0);
    EXPECT_EQ(b.at(2, 0), 16.0);
    EXPECT_EQ(b.at(2, 15), 31.0);
}

TEST(FrameBlocks, SingleBlockIsTheSignal) {
    AudioClip c = noise_clip(16, 3);
    Tensor b = frame_blocks(c, 16);
    ASSERT_EQ(b.shape(), (Shape{1, 16}));
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(b.at(0, i), c.samples[i]);
}

TEST(FrameBlocks, CountFormulaOnHopMultiples) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t block = 2 * std::uniform_int_distribution<std::size_t>(1, 16)(rng);
        const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
        const std::size_t len = k * block / 2;
        EXPECT_EQ(frame_blocks(std::vector<double>(len, 0.1), block).dim(0), 2 * len / block - 1);
    }
}

TEST(FrameBlocks, LastBlockCoversFinalSample) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t len = std::uniform_int_distribution<std::size_t>(16, 500)(rng);
        std::vector<double> x(len, 0.0);
        x.back() = 1.0;
        Tensor b = frame_blocks(x, 16);
        double last_row = 0;
        for (std::size_t i = 0; i < 16; ++i) last_row += b.at(b.dim(0) - 1, i);
        EXPECT_EQ(last_row, 1.0) << "len " << len;
    }
}

TEST(FrameBlocks, OverlapAddWithInteriorHalvingRecoversSignal) {
    AudioClip c = noise_clip(200, 4);
    Tensor blocks = frame_blocks(c, 16);
    Tensor y = overlap_add(blocks, 8, 200);
    for (std::size_t i = 0; i < 200; ++i) {
        const double cover = (i < 8 || i >= 192) ? 1.0 : 2.0;
        EXPECT_EQ(y.data()[i] / cover, c.samples[i]);
    }
}

TEST(FrameBlocks, ShortSignalIsInputError) {
    EXPECT_THROW(frame_blocks(std::vector<double>(15, 0.0), 16), InputError);
    EXPECT_THROW(frame_blocks(std::vector<double>(15, 0.0), 7), ConfigError);
}

TEST(PadOrTruncate, FourSecondRule) {
    AudioClip five = noise_clip(40000, 1);
    auto a = pad_or_truncate(five, 4.0);
    ASSERT_EQ(a.size(), 32000u);
    EXPECT_TRUE(std::equal(a.samples.begin(), a.samples.end(), five.samples.begin()));

    AudioClip three = noise_clip(24000, 2);
    auto b = pad_or_truncate(three, 4.0);
    ASSERT_EQ(b.size(), 32000u);
    for (std::size_t i = 24000; i < 32000; ++i) EXPECT_EQ(b.samples[i], 0.0);
    EXPECT_TRUE(std::equal(three.samples.begin(), three.samples.end(), b.samples.begin()));

    AudioClip four = noise_clip(32000, 3);
    EXPECT_EQ(pad_or_truncate(four, 4.0).samples, four.samples);
    EXPECT_THROW(pad_or_truncate(four, 0.0), ConfigError);
}

// --- WAV -------------------------------------------------------------------

TEST(Wav, Pcm16RoundTripWithinQuantization) {
    AudioClip c = noise_clip(500, 6);
    auto decoded = decode_wav(encode_wav16(c.samples, 8000));
    EXPECT_EQ(decoded.sample_rate, 8000u);
    ASSERT_EQ(decoded.samples.size(), 500u);
    for (std::size_t i = 0; i < 500; ++i) {
        EXPECT_NEAR(decoded.samples[i], std::clamp(c.samples[i], -1.0, 32767.0 / 32768.0), 0.5 / 32768 + 1e-12);
    }
    // A second pass is lossless.
    EXPECT_EQ(encode_wav16(decoded.samples, 8000), encode_wav16(c.samples, 8000));
}

TEST(Wav, ScalingConvention) {
    EXPECT_EQ(to_pcm16(0.5), 16384);
    EXPECT_EQ(to_pcm16(-1.0), -32768);
    EXPECT_EQ(to_pcm16(1.0), 32767);
    EXPECT_EQ(to_pcm16(-3.0), -32768);
}

TEST(Wav, MalformedInputsAreIngestionErrors) {
    std::vector<std::uint8_t> junk{'R', 'I', 'F', 'F', 0, 0, 0, 0, 'A', 'V', 'I', ' '};
    EXPECT_THROW(decode_wav(junk), IngestionError);
    auto bytes = encode_wav16(std::vector<double>{0.1, 0.2}, 8000);
    bytes[20] = 2;  // format tag: ADPCM
    EXPECT_THROW(decode_wav(bytes), IngestionError);
    try {
        read_wav("/nonexistent/x.wav");
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_EQ(e.path(), "/nonexistent/x.wav");
    }
}

// --- corpus ----------------------------------------------------------------

TEST(Corpus, SyntheticSpeechIsDeterministicAndBounded) {
    std::mt19937_64 a(5), b(5);
    auto x = synthesize_speech({1.0, 8000, 0.5}, a);
    auto y = synthesize_speech({1.0, 8000, 0.5}, b);
    EXPECT_EQ(x.samples, y.samples);
    EXPECT_EQ(x.size(), 8000u);
    double peak = 0;
    for (double v : x.samples) peak = std::max(peak, std::abs(v));
    EXPECT_NEAR(peak, 0.5, 1e-12);
}

TEST(Corpus, SerialAndParallelGenerationAreByteIdentical) {
    TempDir serial("tcnd_corpus_serial"), parallel("tcnd_corpus_parallel");
    CorpusSpec spec;
    spec.seconds = 0.5;
    spec.seed = 42;
    spec.jobs = 1;
    auto e1 = make_corpus(spec, serial.path);
    spec.jobs = 4;
    auto e2 = make_corpus(spec, parallel.path);
    ASSERT_EQ(e1.size(), 8u);
    EXPECT_EQ(slurp(serial.path / kManifestName), slurp(parallel.path / kManifestName));
    EXPECT_EQ(slurp(serial.path / "corpus.json"), slurp(parallel.path / "corpus.json"));
    for (const auto& e : e1) {
        for (const auto& rel : {e.dry_path, e.direct_path, e.reverb_path}) {
            EXPECT_EQ(slurp(serial.path / rel), slurp(parallel.path / rel)) << rel;
        }
    }
}

TEST(Corpus, ManifestRecordsDrawnParameters) {
    TempDir dir("tcnd_corpus_manifest");
    CorpusSpec spec;
    spec.rt60_min = 1.0;
    spec.rt60_max = 3.0;
    spec.seconds = 0.25;
    spec.seed = 7;
    auto entries = make_corpus(spec, dir.path);
    auto reread = read_manifest(dir.path);
    ASSERT_EQ(reread.size(), entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = reread[i];
        EXPECT_EQ(e.id, entries[i].id);
        EXPECT_GE(e.rt60_target, 1.0);
        EXPECT_LE(e.rt60_target, 3.0);
        EXPECT_GE(e.alpha, 0.5);
        EXPECT_LE(e.alpha, 1.0);
        EXPECT_LE(e.i0, 40u);
        ASSERT_TRUE(e.rt60_measured.has_value());
        EXPECT_NEAR(*e.rt60_measured, e.rt60_target, 0.1 * e.rt60_target);
        EXPECT_EQ(e.seed, derive_seed(7, i));
    }
    std::ifstream in(dir.path / kManifestName);
    std::string first;
    std::getline(in, first);
    auto j = nlohmann::json::parse(first);
    for (const char* key : {"id", "dry_path", "direct_path", "reverb_path", "rt60_target", "rt60_measured", "alpha",
                            "i0", "seed"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    Corpus c = load_corpus(dir.path);
    EXPECT_EQ(c.train.size(), 4u);
    EXPECT_EQ(c.val.size(), 2u);
    EXPECT_EQ(c.test.size(), 2u);
    EXPECT_EQ(c.train[0].reverberant.size(), 2000u);
    EXPECT_EQ(c.train[0].reverberant.sample_rate, 8000u);
}

TEST(Corpus, UserSourcesAreUsedAndValidated) {
    TempDir dir("tcnd_corpus_sources");
    AudioClip src = noise_clip(3000, 8);
    for (double& v : src.samples) v = std::clamp(v, -0.9, 0.9);
    write_wav16((dir.path / "a.wav").string(), src.samples, 8000);
    CorpusSpec spec;
    spec.seconds = 0.25;
    spec.sources = {(dir.path / "a.wav").string()};
    auto entries = make_corpus(spec, dir.path / "out");
    EXPECT_EQ(entries.size(), 8u);

    write_wav16((dir.path / "b.wav").string(), src.samples, 16000);
    spec.sources = {(dir.path / "b.wav").string()};
    EXPECT_THROW(make_corpus(spec, dir.path / "out2"), IngestionError);

    std::ofstream(dir.path / "c.wav") << "not audio";
    spec.sources = {(dir.path / "c.wav").string()};
    try {
        make_corpus(spec, dir.path / "out3");
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_EQ(e.path(), (dir.path / "c.wav").string());
    }
}

TEST(Corpus, InvalidSpecIsConfigError) {
    CorpusSpec spec;
    spec.rt60_min = 1.0;
    spec.rt60_max = 1.0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = {};
    spec.val = 0;
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Corpus, DeskCorpusIsFast) {
    TempDir dir("tcnd_corpus_timing");
    CorpusSpec spec;
    spec.seed = 1;
    const auto start = std::chrono::steady_clock::now();
    make_corpus(spec, dir.path);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(seconds, 10.0);
}
