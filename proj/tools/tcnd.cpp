// tcnd: corpus generation, (X, R) sweeps, analysis and single-cell train/eval.

#include <tcnd/sweep.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace tcnd;

// Bad arguments: exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

std::pair<double, double> parse_range(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw UsageError("--rt60 expects lo:hi, got '" + s + "'");
    double lo = 0, hi = 0;
    try {
        std::size_t used = 0;
        lo = std::stod(s.substr(0, colon), &used);
        if (used != colon) throw std::invalid_argument("lo");
        const auto rest = s.substr(colon + 1);
        hi = std::stod(rest, &used);
        if (used != rest.size()) throw std::invalid_argument("hi");
    } catch (const std::invalid_argument&) {
        throw UsageError("--rt60 expects numeric lo:hi, got '" + s + "'");
    }
    if (!(lo > 0.0) || !(lo < hi)) throw UsageError("--rt60 range must satisfy 0 < lo < hi");
    return {lo, hi};
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

const CLI::Validator kPositive(
    [](std::string& v) -> std::string {
        try {
            std::size_t used = 0;
            const long long n = std::stoll(v, &used);
            if (used == v.size() && n > 0) return {};
        } catch (const std::exception&) {
        }
        return "must be a positive integer, got '" + v + "'";
    },
    "POSITIVE");

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct CorpusArgs {
    std::string out;
    std::string rt60 = "0.1:1.0";
    std::size_t train = 4, val = 2, test = 2, jobs = 1;
    double seconds = 4.0;
    std::uint64_t seed = 0;
    std::vector<std::string> sources;
    std::string config;
};

int cmd_make_corpus(const CorpusArgs& a, CLI::App& sub) {
    CorpusSpec spec;
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        try {
            spec.rt60_min = j.value("rt60_min", spec.rt60_min);
            spec.rt60_max = j.value("rt60_max", spec.rt60_max);
            spec.train = j.value("train", spec.train);
            spec.val = j.value("val", spec.val);
            spec.test = j.value("test", spec.test);
            spec.seconds = j.value("seconds", spec.seconds);
            spec.seed = j.value("seed", spec.seed);
            spec.tail_gain = j.value("tail_gain", spec.tail_gain);
            spec.sources = j.value("sources", spec.sources);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("corpus config " + a.config + ": " + e.what());
        }
    }
    // Explicit flags override the config file.
    if (sub.count("--rt60") || a.config.empty()) std::tie(spec.rt60_min, spec.rt60_max) = parse_range(a.rt60);
    if (sub.count("--train") || a.config.empty()) spec.train = a.train;
    if (sub.count("--val") || a.config.empty()) spec.val = a.val;
    if (sub.count("--test") || a.config.empty()) spec.test = a.test;
    if (sub.count("--seconds") || a.config.empty()) spec.seconds = a.seconds;
    if (sub.count("--seed") || a.config.empty()) spec.seed = a.seed;
    if (sub.count("--source")) spec.sources = a.sources;
    spec.jobs = a.jobs;
    if (spec.train == 0 || spec.val == 0 || spec.test == 0) throw UsageError("split counts must be positive");
    if (!(spec.seconds > 0.0)) throw UsageError("--seconds must be positive");
    const auto entries = make_corpus(spec, a.out);
    std::cout << (std::filesystem::path(a.out) / kManifestName).string() << "\n";
    std::cerr << entries.size() << " examples written\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string config;
    std::string out;
    std::vector<std::string> corpora;  // name=path
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool paper_scale = false;
};

int cmd_sweep(const SweepArgs& a) {
    SweepConfig config;
    if (!a.config.empty()) config = load_sweep_config(a.config);
    if (a.paper_scale) {
        config = paper_scale_config(config);
        std::cerr << "warning: --paper-scale runs " << config.x_values.size() * config.r_values.size()
                  << " cells at full model width; expect days of CPU time per corpus\n";
    }
    for (const auto& spec : a.corpora) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--corpus expects name=path, got '" + spec + "'");
        config.corpora.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
    }
    if (!a.out.empty()) config.out_dir = a.out;
    if (a.seed) config.seed = *a.seed;
    if (a.jobs) config.jobs = *a.jobs;
    const auto summary = run_sweep(config, [](const SweepRow& row) {
        std::cerr << cell_name(row.x, row.r) << " " << row.train_corpus << "->" << row.eval_corpus << " ";
        if (row.status == "ok") std::cerr << "delta_sisdr " << format_number(*row.delta_sisdr) << " dB\n";
        else std::cerr << "FAILED: " << row.error << "\n";
    });
    std::cout << (std::filesystem::path(config.out_dir) / "results.jsonl").string() << "\n";
    std::cerr << summary.trained << " trained, " << summary.resumed << " resumed, " << summary.failed << " failed\n";
    return summary.failed ? kExitError : 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::vector<std::string> results;
    std::vector<std::string> grids;  // train:eval:path
    std::string out = "analysis";
    bool json = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    std::vector<SweepRow> rows;
    for (const auto& path : a.results) {
        auto more = read_results(path);
        rows.insert(rows.end(), more.begin(), more.end());
    }
    for (const auto& spec : a.grids) {
        const auto c1 = spec.find(':');
        const auto c2 = c1 == std::string::npos ? c1 : spec.find(':', c1 + 1);
        if (c2 == std::string::npos) throw UsageError("--grid expects train:eval:path, got '" + spec + "'");
        auto more = read_grid_csv(spec.substr(c2 + 1), spec.substr(0, c1), spec.substr(c1 + 1, c2 - c1 - 1));
        rows.insert(rows.end(), more.begin(), more.end());
    }
    if (std::none_of(rows.begin(), rows.end(), [](const SweepRow& r) { return ranking_score(r).has_value(); })) {
        throw UsageError("analyze: no completed results to analyze");
    }
    const auto files = analyze(rows, a.out);
    const auto best = best_per_pairing(rows);
    if (a.json) {
        nlohmann::ordered_json j{{"scatter", files.scatter.string()},
                                 {"best_per_blocks", files.best_per_blocks.string()},
                                 {"best_per_pairing", files.best_per_pairing.string()}};
        j["best"] = nlohmann::ordered_json::array();
        for (const auto& row : best) j["best"].push_back(row_json(row));
        std::cout << j.dump(2) << "\n";
    } else {
        for (const auto& row : best) {
            std::cout << row.train_corpus << " -> " << row.eval_corpus << ": X=" << row.x << " R=" << row.r
                      << " params " << row.param_count << " rf " << format_number(row.rf_seconds) << " s";
            if (row.sisdr) std::cout << " sisdr " << format_number(*row.sisdr);
            if (row.delta_sisdr) std::cout << " delta_sisdr " << format_number(*row.delta_sisdr);
            std::cout << "\n";
        }
        std::cout << files.scatter.string() << "\n"
                  << files.best_per_blocks.string() << "\n"
                  << files.best_per_pairing.string() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct RfArgs {
    ModelConfig model;
    std::string config;
    bool json = false;
};

nlohmann::ordered_json rf_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = nlohmann::json(c);
    j["receptive_field_frames"] = receptive_field_frames(c);
    j["receptive_field_seconds"] = receptive_field(c);
    j["parameters"] = parameter_count_json(count_parameters(c));
    return j;
}

int cmd_rf(RfArgs a, CLI::App& sub) {
    if (!a.config.empty()) {
        auto j = read_json_file(a.config);
        const ModelConfig flags = a.model;
        try {
            a.model = (j.contains("model") ? j.at("model") : j).get<ModelConfig>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("model config " + a.config + ": " + e.what());
        }
        if (sub.count("--X")) a.model.blocks_per_stack = flags.blocks_per_stack;
        if (sub.count("--R")) a.model.repeats = flags.repeats;
        if (sub.count("--P")) a.model.kernel = flags.kernel;
        if (sub.count("--block-length")) a.model.block_length = flags.block_length;
        if (sub.count("--sample-rate")) a.model.sample_rate = flags.sample_rate;
    }
    try {
        a.model.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    const ModelConfig& c = a.model;
    if (a.json) {
        std::cout << rf_json(c).dump(2) << "\n";
        return 0;
    }
    const auto pc = count_parameters(c);
    const auto block = block_parameter_count(c.bottleneck, c.hidden, c.kernel);
    std::printf("X=%zu R=%zu P=%zu L_BL=%zu f_s=%zu\n", c.blocks_per_stack, c.repeats, c.kernel, c.block_length,
                c.sample_rate);
    std::printf("receptive field: %s s (%s frames)\n", format_number(receptive_field(c)).c_str(),
                format_number(receptive_field_frames(c)).c_str());
    std::printf("per block: %zu core + %zu extra = %zu\n", block.core(), block.extra(), block.total());
    std::printf("encoder %zu, bottleneck %zu, blocks %zu, mask head %zu, decoder %zu\n", pc.encoder, pc.bottleneck,
                pc.blocks, pc.mask_head, pc.decoder);
    std::printf("total parameters: %zu\n", pc.total());
    return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string corpus;
    std::string out = "train_out";
    std::string config;
    std::optional<std::size_t> x, r, epochs;
    std::optional<std::uint64_t> seed;
    bool json = false;
};

int cmd_train(const TrainArgs& a) {
    ModelConfig model;
    TrainSchedule schedule;
    if (!a.config.empty()) {
        const auto j = read_json_file(a.config);
        try {
            if (j.contains("model")) model = j.at("model").get<ModelConfig>();
            if (j.contains("schedule")) schedule = j.at("schedule").get<TrainSchedule>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train config " + a.config + ": " + e.what());
        }
    }
    if (a.x) model.blocks_per_stack = *a.x;
    if (a.r) model.repeats = *a.r;
    if (a.epochs) schedule.epochs = *a.epochs;
    if (a.seed) schedule.seed = *a.seed;
    if (!std::filesystem::exists(std::filesystem::path(a.corpus) / kManifestName)) {
        throw ConfigError("corpus not found at " + a.corpus);
    }
    const auto corpus = load_corpus(a.corpus);
    DereverbModel m(model, schedule.seed);
    std::filesystem::create_directories(a.out);
    const auto result = fit(m, corpus.train, corpus.val, schedule, {std::filesystem::path(a.out), [&schedule](const EpochRecord& r) {
                                    std::cerr << history_line(r, schedule).dump() << "\n";
                                }});
    const auto ckpt = std::filesystem::path(a.out) / "best.ckpt.json";
    if (a.json) {
        print_json({{"checkpoint", ckpt.string()},
                    {"best_epoch", result.best_epoch},
                    {"best_val_sisdr", result.best_val_sisdr}});
    } else {
        std::cout << ckpt.string() << "\n";
        std::cerr << "best val SI-SDR " << format_number(result.best_val_sisdr) << " dB at epoch "
                  << result.best_epoch << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string checkpoint;
    std::string corpus;
    std::string split = "test";
    std::string out;
    std::size_t jobs = 1;
    bool json = false;
};

int cmd_eval(const EvalArgs& a) {
    const auto model = load_checkpoint(a.checkpoint);
    if (!std::filesystem::exists(std::filesystem::path(a.corpus) / kManifestName)) {
        throw ConfigError("corpus not found at " + a.corpus);
    }
    const auto corpus = load_corpus(a.corpus);
    const auto summary = evaluate(model, corpus.split(a.split), a.jobs);
    if (!a.out.empty()) write_eval_records(a.out, summary);
    if (a.json) {
        print_json({{"examples", summary.records.size()},
                    {"mean_sisdr", summary.mean_sisdr},
                    {"mean_input_sisdr", summary.mean_input_sisdr},
                    {"mean_delta_sisdr", summary.mean_delta_sisdr}});
    } else {
        std::printf("%zu examples: sisdr %s dB, input %s dB, delta %s dB\n", summary.records.size(),
                    format_number(summary.mean_sisdr).c_str(), format_number(summary.mean_input_sisdr).c_str(),
                    format_number(summary.mean_delta_sisdr).c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dereverberation TCN toolkit: corpora, sweeps, receptive-field oracles"};
    app.require_subcommand(1);

    CorpusArgs corpus;
    auto* mc = app.add_subcommand("make-corpus", "generate a synthetic reverberant corpus");
    mc->add_option("--out", corpus.out, "output directory")->required();
    mc->add_option("--rt60", corpus.rt60, "RT60 range lo:hi in seconds");
    mc->add_option("--train", corpus.train, "training examples");
    mc->add_option("--val", corpus.val, "validation examples");
    mc->add_option("--test", corpus.test, "test examples");
    mc->add_option("--seconds", corpus.seconds, "clip length");
    mc->add_option("--seed", corpus.seed, "corpus seed");
    mc->add_option("--source", corpus.sources, "dry 8 kHz WAV (repeatable); synthetic speech if absent");
    mc->add_option("--jobs", corpus.jobs, "worker threads")->check(kPositive);
    mc->add_option("--config", corpus.config, "JSON corpus spec");

    SweepArgs sweep;
    auto* sw = app.add_subcommand("sweep", "train and evaluate an (X, R) grid");
    sw->add_option("--config", sweep.config, "JSON sweep config");
    sw->add_option("--out", sweep.out, "output directory");
    sw->add_option("--corpus", sweep.corpora, "name=path (repeatable), appended to the config");
    sw->add_option("--seed", sweep.seed, "sweep seed");
    sw->add_option("--jobs", sweep.jobs, "cells trained concurrently")->check(kPositive);
    sw->add_flag("--paper-scale", sweep.paper_scale, "full published grid and model width");

    AnalyzeArgs an;
    auto* az = app.add_subcommand("analyze", "figure data and best cells from sweep results");
    az->add_option("--results", an.results, "results.jsonl (repeatable)");
    az->add_option("--grid", an.grids, "train:eval:grid.csv (repeatable)");
    az->add_option("--out", an.out, "output directory");
    az->add_flag("--json", an.json, "machine-readable summary");

    RfArgs rf;
    auto* rfc = app.add_subcommand("rf", "receptive field and parameter count");
    rfc->add_option("--X", rf.model.blocks_per_stack, "blocks per stack")->check(kPositive);
    rfc->add_option("--R", rf.model.repeats, "stack repeats")->check(kPositive);
    rfc->add_option("--P", rf.model.kernel, "depthwise kernel size")->check(kPositive);
    rfc->add_option("--block-length", rf.model.block_length, "encoder block length L_BL")
        ->check(kPositive);
    rfc->add_option("--sample-rate", rf.model.sample_rate, "sample rate")->check(kPositive);
    rfc->add_option("--config", rf.config, "JSON model config (or a previous --json output)");
    rfc->add_flag("--json", rf.json, "machine-readable output");

    TrainArgs tr;
    auto* trc = app.add_subcommand("train", "train one cell");
    trc->add_option("--corpus", tr.corpus, "corpus directory")->required();
    trc->add_option("--out", tr.out, "output directory");
    trc->add_option("--config", tr.config, "JSON with optional model and schedule objects");
    trc->add_option("--X", tr.x, "blocks per stack")->check(kPositive);
    trc->add_option("--R", tr.r, "stack repeats")->check(kPositive);
    trc->add_option("--epochs", tr.epochs, "epochs")->check(kPositive);
    trc->add_option("--seed", tr.seed, "initialisation and shuffling seed");
    trc->add_flag("--json", tr.json, "machine-readable output");

    EvalArgs ev;
    auto* evc = app.add_subcommand("eval", "evaluate a checkpoint on a corpus split");
    evc->add_option("--checkpoint", ev.checkpoint, "checkpoint JSON")->required();
    evc->add_option("--corpus", ev.corpus, "corpus directory")->required();
    evc->add_option("--split", ev.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
    evc->add_option("--out", ev.out, "per-example JSON lines");
    evc->add_option("--jobs", ev.jobs, "worker threads")->check(kPositive);
    evc->add_flag("--json", ev.json, "machine-readable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*mc) return cmd_make_corpus(corpus, *mc);
        if (*sw) return cmd_sweep(sweep);
        if (*az) return cmd_analyze(an);
        if (*rfc) return cmd_rf(rf, *rfc);
        if (*trc) return cmd_train(tr);
        if (*evc) return cmd_eval(ev);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitUsage;
}
