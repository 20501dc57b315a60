// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <tcnd/sweep.hpp>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace tcnd;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    const auto t0 = Clock::now();
    bool ok = false;
    std::string detail;
    try {
        std::tie(ok, detail) = body();
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("%s [%d] %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
}

std::string fmt(double v) { return format_number(v); }

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return Tensor::from(shape, v);
}

Tensor probe_loss(const Tensor& out, std::uint64_t seed) {
    std::mt19937_64 rng(seed + 0x5eed);
    return sum(mul(out, random_tensor(out.shape(), rng)));
}

Conv1dParams frozen(Conv1dParams p) {
    p.weight = p.weight.detach(false);
    if (p.bias) p.bias = p.bias->detach(false);
    return p;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double sd = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, sd);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return v;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tcnd_accept_" + name + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig full(std::size_t x, std::size_t r) {
    ModelConfig c;
    c.blocks_per_stack = x;
    c.repeats = r;
    return c;
}

// ---------------------------------------------------------------------------

std::pair<bool, std::string> receptive_field_oracle() {
    struct Case {
        std::size_t x, r;
        double exact, reported;
    };
    const Case cases[] = {{1, 1, 0.003, 0}, {6, 8, 1.009, 1.02}, {7, 8, 2.033, 2.04}, {8, 8, 4.081, 4.09}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        const double rf = receptive_field(full(c.x, c.r));
        ok = ok && std::abs(rf - c.exact) < 1e-12;
        if (c.reported > 0) ok = ok && std::abs(rf - c.reported) / c.reported < 0.025;
        detail += "(" + std::to_string(c.x) + "," + std::to_string(c.r) + ")=" + fmt(rf) + "s ";
    }
    return {ok, detail + "exact; published values within 2.5%"};
}

std::pair<bool, std::string> parameter_oracle() {
    const auto block = block_parameter_count(128, 512, 3).core();
    const auto total = count_parameters(full(6, 8)).total();
    const double rel = std::abs(static_cast<double>(total) - 6.6e6) / 6.6e6;
    return {block == 133120 && rel < 0.03,
            "per block " + std::to_string(block) + ", (6,8) total " + std::to_string(total) + " (" +
                fmt(100 * rel) + "% from 6.6M)"};
}

std::pair<bool, std::string> gradient_suite() {
    const auto t0 = Clock::now();
    const double h = 1e-6;
    double worst = 0;
    std::size_t checks = 0;
    auto check = [&](double err) {
        worst = std::max(worst, err);
        ++checks;
    };
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        std::mt19937_64 rng(seed);
        const std::size_t c = 1 + seed % 4, t = 8 + (seed * 7) % 25;
        Tensor x = random_tensor({c, t}, rng);
        const std::size_t dil = 1u << (seed % 3);
        auto full = frozen(Conv1dParams::init(c, 3, 3, Conv1dOptions::same(3, dil), true, rng));
        auto dw = frozen(Conv1dParams::init(c, c, 3, Conv1dOptions::same(3, dil, c), true, rng));
        auto pw = frozen(Conv1dParams::init(c, 2, 1, {}, true, rng));
        auto strided = frozen(Conv1dParams::init(c, 2, 4, {2, 1, 1, 1, 1}, true, rng));
        NormParams norm{random_tensor({c}, rng), random_tensor({c}, rng), kNormEpsilon};
        Tensor slope = random_tensor({1}, rng);
        Tensor tw = random_tensor({c, 2, 4}, rng);

        check(finite_difference_check([&](const Tensor& v) { return probe_loss(conv1d(v, full), seed); }, x, h));
        check(finite_difference_check(
            [&](const Tensor& w) { return probe_loss(conv1d(x, w, full.bias, full.options), seed); }, full.weight, h));
        check(finite_difference_check(
            [&](const Tensor& b) { return probe_loss(conv1d(x, full.weight, b, full.options), seed); }, *full.bias, h));
        check(finite_difference_check([&](const Tensor& v) { return probe_loss(conv1d(v, strided), seed); }, x, h));
        check(finite_difference_check(
            [&](const Tensor& v) { return probe_loss(depthwise_separable_conv(v, dw, pw), seed); }, x, h));
        check(finite_difference_check(
            [&](const Tensor& w) { return probe_loss(conv1d(x, w, dw.bias, dw.options), seed); }, dw.weight, h));
        check(finite_difference_check([&](const Tensor& v) { return probe_loss(transposed_conv1d(v, tw, 2), seed); },
                                      x, h));
        check(finite_difference_check([&](const Tensor& w) { return probe_loss(transposed_conv1d(x, w, 2), seed); },
                                      tw, h));
        check(finite_difference_check([&](const Tensor& v) { return probe_loss(prelu(v, slope), seed); }, x, h));
        check(finite_difference_check([&](const Tensor& s) { return probe_loss(prelu(x, s), seed); }, slope, h));
        check(finite_difference_check([&](const Tensor& v) { return probe_loss(relu(v), seed); }, x, h));
        if (c > 2) {
            check(finite_difference_check(
                [&](const Tensor& v) { return probe_loss(channelwise_layer_norm(v, norm), seed); }, x, h));
        }
        check(finite_difference_check([&](const Tensor& v) { return probe_loss(global_layer_norm(v, norm), seed); },
                                      x, h));
        check(finite_difference_check(
            [&](const Tensor& b) { return probe_loss(global_layer_norm(x, {norm.gain, b, kNormEpsilon}), seed); },
            norm.bias, h));
        Tensor signal = random_tensor({t + 4}, rng);
        check(finite_difference_check([&](const Tensor& s) { return probe_loss(frame_signal(s, 4, 2), seed); },
                                      signal, h));
        Tensor frames = random_tensor({t, 4}, rng);
        check(finite_difference_check([&](const Tensor& f) { return probe_loss(overlap_add(f, 2, t), seed); },
                                      frames, h));
    }
    // End-to-end micro model: L_BL=4, N=8, B=4, H=8, X=2, R=1, 64 samples.
    for (BlockNorm norm : {BlockNorm::global, BlockNorm::channelwise}) {
        ModelConfig c;
        c.block_length = 4;
        c.enc_channels = 8;
        c.bottleneck = 4;
        c.hidden = 8;
        c.blocks_per_stack = 2;
        c.repeats = 1;
        c.block_norm = norm;
        DereverbModel m(c, 21);
        const auto x = gaussian(64, 31);
        const auto ref = gaussian(64, 32);
        auto params = m.parameters();
        check(finite_difference_check_params([&] { return sisdr_loss(m.forward(Tensor::from({64}, x)), ref); },
                                             params, h));
        check(finite_difference_check([&](const Tensor& s) { return sisdr_loss(m.forward(s), ref); },
                                      Tensor::from({64}, x), h));
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-4 && elapsed < 60.0, std::to_string(checks) + " checks, max relative error " + fmt(worst)};
}

std::pair<bool, std::string> sisdr_properties() {
    double scale_gap = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = gaussian(256, seed), est = gaussian(256, seed + 1000);
        const double base = sisdr(est, s);
        for (double a : {1e-3, 0.5, 7.0, 1e3}) {
            std::vector<double> scaled(est);
            for (double& v : scaled) v *= a;
            scale_gap = std::max(scale_gap, std::abs(sisdr(scaled, s) - base));
        }
    }
    const std::vector<double> s{1, 1, 1, 1}, est{2, 0, 2, 0};
    const double zero = sisdr(est, s);
    const auto mix = gaussian(400, 5), direct = gaussian(400, 6);
    const double delta = delta_sisdr(mix, mix, direct);
    const bool ok = scale_gap < 1e-9 && zero == 0.0 && delta == 0.0;
    return {ok, "scale gap " + fmt(scale_gap) + " dB, orthogonal equal-energy " + fmt(zero) +
                    " dB, mixture delta " + fmt(delta) + " dB"};
}

std::pair<bool, std::string> acoustics_round_trip() {
    bool ok = true;
    double worst = 0;
    for (double target : {0.1, 0.3, 0.5, 1.0, 2.0, 3.0}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            RIRSpec spec;
            spec.rt60 = target;
            spec.seed = seed;
            const double est = estimate_rt60(generate_rir(spec));
            const double rel = std::abs(est - target) / target;
            worst = std::max(worst, rel);
            ok = ok && rel <= 0.10;
        }
    }
    AudioClip dry;
    dry.samples = gaussian(500, 9);
    const auto mix = reverberate(dry, ImpulseResponse::from_taps({1.0}));
    const bool identity = mix.reverberant.samples == dry.samples && mix.direct.samples == dry.samples;
    std::mt19937_64 rng(77);
    bool framing = true;
    for (int i = 0; i < 20; ++i) {
        const std::size_t hop = 8, n = hop * std::uniform_int_distribution<std::size_t>(2, 2000)(rng);
        const auto frames = frame_blocks(std::vector<double>(n, 0.1), 16);
        framing = framing && frames.shape()[0] == 2 * n / 16 - 1;
    }
    return {ok && identity && framing, "worst RT60 error " + fmt(100 * worst) + "% over 18 RIRs, identity " +
                                           (identity ? "exact" : "broken") + ", framing " +
                                           (framing ? "20/20" : "mismatch")};
}

std::pair<bool, std::string> overfit_smoke() {
    const auto t0 = Clock::now();
    CorpusSpec spec;
    spec.seconds = 0.5;
    spec.seed = 1;
    spec.rt60_min = 0.3;
    spec.rt60_max = 0.4;
    std::vector<CorpusExample> train;
    for (std::size_t i = 0; i < 4; ++i) {
        auto g = generate_example(spec, {}, i, "train", i);
        train.push_back({g.entry.id, g.mixture.reverberant, g.mixture.direct, g.entry.rt60_target});
    }
    ModelConfig c;
    c.enc_channels = 64;
    c.bottleneck = 16;
    c.hidden = 32;
    c.blocks_per_stack = 3;
    c.repeats = 1;
    DereverbModel m(c, 0);
    TrainSchedule s;
    s.epochs = 200;
    s.lr = 1e-3;
    s.batch_size = 2;
    s.clip_seconds = spec.seconds;
    const double before = evaluate(m, train).mean_delta_sisdr;
    std::size_t reached = 0;
    double best = -1e9;
    FitOptions o;
    o.on_epoch = [&](const EpochRecord& r) {
        if (reached || r.epoch % 10 != 0) return;
        best = std::max(best, evaluate(m, train).mean_delta_sisdr);
        if (best >= 3.0) reached = r.epoch;
    };
    fit(m, train, train, s, o);
    const double after = evaluate(m, train).mean_delta_sisdr;
    best = std::max(best, after);
    const double elapsed = seconds_since(t0);
    return {best >= 3.0 && elapsed < 600.0,
            "train delta SI-SDR " + fmt(before) + " -> " + fmt(after) + " dB" +
                (reached ? ", +3 dB reached at epoch " + std::to_string(reached) : ", +3 dB not reached")};
}

std::pair<bool, std::string> published_grid_substitute() {
    const auto t0 = Clock::now();
    TempDir dir("sweep");
    CorpusSpec cs;
    cs.train = 2;
    cs.val = 1;
    cs.test = 1;
    cs.seconds = 0.5;
    cs.seed = 12;
    make_corpus(cs, dir.path / "standard");
    cs.rt60_min = 1.0;
    cs.rt60_max = 3.0;
    cs.seed = 13;
    make_corpus(cs, dir.path / "extended");

    SweepConfig c;
    c.x_values = {1, 2};
    c.r_values = {1, 2};
    c.schedule.epochs = 3;
    c.schedule.clip_seconds = 0.5;
    c.corpora = {{"standard", (dir.path / "standard").string()}, {"extended", (dir.path / "extended").string()}};
    c.seed = 5;
    c.out_dir = (dir.path / "a").string();
    const auto a = run_sweep(c);
    c.out_dir = (dir.path / "b").string();
    c.jobs = 4;
    const auto b = run_sweep(c);

    bool structural = a.failed == 0 && a.rows.size() == 16;
    bool deterministic = true;
    for (const char* tr : {"standard", "extended"}) {
        for (const char* ev : {"standard", "extended"}) {
            const std::string name = std::string("grid_delta_sisdr_") + tr + "_" + ev + ".csv";
            const auto text = slurp(dir.path / "a" / name);
            deterministic = deterministic && text == slurp(dir.path / "b" / name);
            std::istringstream lines(text);
            std::size_t n = 0;
            for (std::string l; std::getline(lines, l); ++n) {
                const auto fields = parse_csv_line(l);
                structural = structural && fields.size() == 3;
                for (const auto& f : fields) structural = structural && !f.empty();
            }
            structural = structural && n == 3;
        }
    }
    const double sweep_time = seconds_since(t0);

    // Analyzer against the published grids.
    const fs::path fx = TCND_FIXTURE_DIR;
    const auto t1 = read_grid_csv(fx / "table1_whamr.csv", "whamr", "whamr");
    const auto t2 = read_grid_csv(fx / "table2_whamr_ext.csv", "ext", "ext");
    using Cell = std::pair<std::size_t, std::size_t>;
    const std::vector<Cell> bold1 = {{1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}, {7, 1}, {8, 1},
                                     {9, 1}, {5, 2}, {6, 2}, {7, 2}, {6, 3}, {7, 3}, {4, 4}, {5, 4},
                                     {6, 4}, {7, 4}, {8, 4}, {5, 5}, {6, 5}, {6, 6}, {5, 8}, {6, 8}};
    const std::vector<Cell> bold2 = {{1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}, {7, 1}, {8, 1},
                                     {9, 1}, {6, 2}, {7, 2}, {8, 2}, {6, 3}, {7, 3}, {8, 3}, {9, 3},
                                     {7, 4}, {8, 4}, {7, 5}, {8, 5}, {7, 6}, {6, 8}, {7, 8}};
    std::size_t matched = 0;
    auto match = [&](const std::vector<SweepRow>& rows, const std::vector<Cell>& bold) {
        std::map<std::size_t, Cell> pick;
        for (const auto& r : best_per_block_count(rows)) pick[r.blocks()] = {r.x, r.r};
        for (const auto& cell : bold) matched += pick[cell.first * cell.second] == cell;
    };
    match(t1, bold1);
    match(t2, bold2);
    std::vector<SweepRow> twelve;
    for (const auto& r : t1) {
        if (r.blocks() == 12) twelve.push_back(r);
    }
    const auto best12 = best_per_block_count(twelve);
    const bool six_two = best12.size() == 1 && best12[0].x == 6 && best12[0].r == 2 && twelve.size() == 4;
    auto all = t1;
    all.insert(all.end(), t2.begin(), t2.end());
    const auto best = best_per_pairing(all);  // (ext, ext), (whamr, whamr)
    const bool table3 = best.size() == 2 && best[0].x == 7 && best[0].r == 8 && best[1].x == 6 && best[1].r == 8;
    const bool analyzer = matched == bold1.size() + bold2.size() && six_two && table3;

    auto cell = [](const std::vector<SweepRow>& rows, std::size_t x, std::size_t r) {
        for (const auto& row : rows) {
            if (row.x == x && row.r == r) return fmt(*row.delta_sisdr);
        }
        return std::string("?");
    };
    const bool ok = structural && deterministic && sweep_time < 3600.0 && analyzer;
    return {ok, "published grid (e.g. " + cell(t1, 1, 1) + " dB at (1,1), " + cell(t1, 6, 8) + " dB at (6,8), " +
                    cell(t2, 6, 8) + " dB at (6,8) extended) not reproduced at desk scale; "
                    "2x2 micro sweep over 2x2 corpus pairings " +
                    std::string(structural ? "complete" : "incomplete") + ", " +
                    (deterministic ? "identical serial/parallel" : "NOT deterministic") + " in " + fmt(sweep_time) +
                    " s; analyzer matches " + std::to_string(matched) + "/" +
                    std::to_string(bold1.size() + bold2.size()) + " bold cells, (6,2) best of 12-block " +
                    (six_two ? "yes" : "no") + ", best-per-pairing " + (table3 ? "(6,8)/(7,8)" : "wrong")};
}

std::pair<bool, std::string> determinism_persistence() {
    TempDir dir("persist");
    ModelConfig c;
    c.enc_channels = 32;
    c.bottleneck = 8;
    c.hidden = 16;
    c.blocks_per_stack = 3;
    c.repeats = 2;
    DereverbModel m(c, 4);
    const auto x = gaussian(4000, 8);
    const auto before = m.enhance(x);
    save_checkpoint(m, (dir.path / "m.json").string());
    const auto after = load_checkpoint((dir.path / "m.json").string()).enhance(x);
    const bool ckpt = before == after;

    CorpusSpec spec;
    spec.seconds = 0.5;
    spec.seed = 42;
    spec.jobs = 1;
    const auto entries = make_corpus(spec, dir.path / "serial");
    spec.jobs = 4;
    make_corpus(spec, dir.path / "parallel");
    bool corpus = slurp(dir.path / "serial" / kManifestName) == slurp(dir.path / "parallel" / kManifestName);
    std::size_t files = 1;
    for (const auto& e : entries) {
        for (const auto& rel : {e.dry_path, e.direct_path, e.reverb_path}) {
            corpus = corpus && slurp(dir.path / "serial" / rel) == slurp(dir.path / "parallel" / rel);
            ++files;
        }
    }
    return {ckpt && corpus, std::string("checkpoint reload ") + (ckpt ? "bit-identical" : "differs") + ", " +
                                std::to_string(files) + " corpus files " +
                                (corpus ? "byte-identical serial vs 4 threads" : "differ")};
}

}  // namespace

int main() {
    report(1, "receptive-field oracle", receptive_field_oracle);
    report(2, "parameter oracle", parameter_oracle);
    report(3, "gradient suite", gradient_suite);
    report(4, "SI-SDR properties", sisdr_properties);
    report(5, "acoustics round trip", acoustics_round_trip);
    report(6, "overfit smoke test", overfit_smoke);
    report(7, "published grid substitute", published_grid_substitute);
    report(8, "determinism and persistence", determinism_persistence);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
