#pragma once

// (X, R) grid sweeps: train and evaluate one model per cell and corpus
// pairing, persist per-cell artifacts, and reduce them into grid CSVs and
// figure data.

#include <tcnd/acoustics.hpp>
#include <tcnd/model.hpp>
#include <tcnd/train.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace tcnd {

inline constexpr int kSweepSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Text formatting.

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// RFC 4180: quote fields containing a comma, quote, CR or LF; double quotes.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_line(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += csv_field(fields[i]);
    }
    return line + "\r\n";
}

// Splits one RFC 4180 record (no embedded newlines).
inline std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != '\n') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

// ---------------------------------------------------------------------------
// Configuration.

struct CorpusRef {
    std::string name;
    std::string path;  // directory holding manifest.jsonl
};

struct SweepConfig {
    int schema_version = kSweepSchemaVersion;
    std::vector<std::size_t> x_values{1, 2, 3, 4};
    std::vector<std::size_t> r_values{1, 2};
    ModelConfig model = [] {
        ModelConfig m;
        m.enc_channels = 64;
        m.bottleneck = 16;
        m.hidden = 32;
        return m;
    }();
    TrainSchedule schedule = [] {
        TrainSchedule s;
        s.epochs = 10;
        s.clip_seconds = 1.0;
        return s;
    }();
    std::vector<CorpusRef> corpora;  // every corpus trains; every corpus evaluates
    std::string out_dir = "sweep_out";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate() const {
        if (schema_version != kSweepSchemaVersion) {
            throw ConfigError("sweep config: unsupported schema_version " + std::to_string(schema_version));
        }
        if (x_values.empty() || r_values.empty()) throw ConfigError("sweep config: X and R grids must be non-empty");
        for (auto x : x_values) {
            if (x == 0) throw ConfigError("sweep config: X values must be positive");
        }
        for (auto r : r_values) {
            if (r == 0) throw ConfigError("sweep config: R values must be positive");
        }
        if (corpora.empty()) throw ConfigError("sweep config: at least one corpus is required");
        std::set<std::string> names;
        for (const auto& c : corpora) {
            if (c.name.empty() || c.name.find_first_of("/\\") != std::string::npos) {
                throw ConfigError("sweep config: corpus names must be non-empty and contain no path separators");
            }
            if (!names.insert(c.name).second) throw ConfigError("sweep config: duplicate corpus name " + c.name);
        }
        model.validate();
        schedule.validate();
    }
};

// The full published grid and model widths. Very expensive on a CPU.
inline SweepConfig paper_scale_config(SweepConfig base) {
    base.x_values.clear();
    for (std::size_t x = 1; x <= 10; ++x) base.x_values.push_back(x);
    base.r_values.clear();
    for (std::size_t r = 1; r <= 8; ++r) base.r_values.push_back(r);
    const bool residual = base.model.residual;
    const BlockNorm norm = base.model.block_norm;
    base.model = ModelConfig{};
    base.model.residual = residual;
    base.model.block_norm = norm;
    base.schedule.epochs = 100;
    base.schedule.clip_seconds = 4.0;
    return base;
}

inline void to_json(nlohmann::json& j, const SweepConfig& c) {
    nlohmann::json corpora = nlohmann::json::array();
    for (const auto& r : c.corpora) corpora.push_back({{"name", r.name}, {"path", r.path}});
    j = nlohmann::json{{"schema_version", c.schema_version},
                       {"x_values", c.x_values},
                       {"r_values", c.r_values},
                       {"model", c.model},
                       {"schedule", c.schedule},
                       {"corpora", corpora},
                       {"out_dir", c.out_dir},
                       {"seed", c.seed},
                       {"jobs", c.jobs}};
}

inline void from_json(const nlohmann::json& j, SweepConfig& c) {
    try {
        if (j.contains("schema_version")) j.at("schema_version").get_to(c.schema_version);
        if (j.contains("x_values")) j.at("x_values").get_to(c.x_values);
        if (j.contains("r_values")) j.at("r_values").get_to(c.r_values);
        if (j.contains("model")) from_json(j.at("model"), c.model);  // merges over desk defaults
        if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
        if (j.contains("corpora")) {
            c.corpora.clear();
            for (const auto& r : j.at("corpora")) {
                c.corpora.push_back({r.at("name").get<std::string>(), r.at("path").get<std::string>()});
            }
        }
        if (j.contains("out_dir")) j.at("out_dir").get_to(c.out_dir);
        if (j.contains("seed")) j.at("seed").get_to(c.seed);
        if (j.contains("jobs")) j.at("jobs").get_to(c.jobs);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sweep config: ") + e.what());
    }
}

inline SweepConfig load_sweep_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open sweep config " + path.string());
    try {
        return nlohmann::json::parse(in).get<SweepConfig>();
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("sweep config " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Results.

struct SweepRow {
    std::size_t x = 0;
    std::size_t r = 0;
    double rf_seconds = 0;
    std::size_t param_count = 0;
    std::string train_corpus;
    std::string eval_corpus;
    std::optional<double> sisdr;
    std::optional<double> delta_sisdr;
    std::optional<double> input_sisdr;
    std::size_t best_epoch = 0;
    double wall_clock_s = 0;
    std::uint64_t seed = 0;
    std::string status = "ok";  // ok | failed
    std::string error;

    std::size_t blocks() const { return x * r; }
};

inline nlohmann::ordered_json row_json(const SweepRow& row) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
    nlohmann::ordered_json j{{"X", row.x},
                             {"R", row.r},
                             {"blocks", row.blocks()},
                             {"rf_seconds", row.rf_seconds},
                             {"param_count", row.param_count},
                             {"train_corpus", row.train_corpus},
                             {"eval_corpus", row.eval_corpus},
                             {"sisdr", opt(row.sisdr)},
                             {"delta_sisdr", opt(row.delta_sisdr)},
                             {"input_sisdr", opt(row.input_sisdr)},
                             {"best_epoch", row.best_epoch},
                             {"wall_clock_s", row.wall_clock_s},
                             {"seed", row.seed},
                             {"status", row.status}};
    if (!row.error.empty()) j["error"] = row.error;
    return j;
}

inline SweepRow row_from_json(const nlohmann::json& j) {
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<double>();
    };
    SweepRow row;
    row.x = j.at("X").get<std::size_t>();
    row.r = j.at("R").get<std::size_t>();
    row.rf_seconds = j.at("rf_seconds").get<double>();
    row.param_count = j.at("param_count").get<std::size_t>();
    row.train_corpus = j.value("train_corpus", std::string{});
    row.eval_corpus = j.value("eval_corpus", std::string{});
    row.sisdr = opt("sisdr");
    row.delta_sisdr = opt("delta_sisdr");
    row.input_sisdr = opt("input_sisdr");
    row.best_epoch = j.value("best_epoch", std::size_t{0});
    row.wall_clock_s = j.value("wall_clock_s", 0.0);
    row.seed = j.value("seed", std::uint64_t{0});
    row.status = j.value("status", std::string{"ok"});
    row.error = j.value("error", std::string{});
    return row;
}

inline std::vector<SweepRow> read_results(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open results " + path.string());
    std::vector<SweepRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            rows.push_back(row_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw IngestionError(path.string(), std::string("malformed result line: ") + e.what());
        }
    }
    return rows;
}

inline std::string cell_name(std::size_t x, std::size_t r) {
    return "X" + std::to_string(x) + "_R" + std::to_string(r);
}

// Seed for a cell depends only on (sweep seed, X, R), not on grid order.
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t x, std::size_t r) {
    return derive_seed(seed, (static_cast<std::uint64_t>(x) << 32) | r);
}

// Grid CSV, rows = R and columns = X as in the published tables. Cells
// without a value are left empty. `field` is "sisdr", "delta_sisdr",
// "rf_seconds" or "param_count".
inline std::string grid_csv(const std::vector<SweepRow>& rows, const std::vector<std::size_t>& xs,
                            const std::vector<std::size_t>& rs, const std::string& field) {
    std::map<std::pair<std::size_t, std::size_t>, std::string> cells;
    for (const auto& row : rows) {
        std::optional<double> v;
        if (field == "sisdr") v = row.sisdr;
        else if (field == "delta_sisdr") v = row.delta_sisdr;
        else if (field == "rf_seconds") v = row.rf_seconds;
        else if (field == "param_count") v = static_cast<double>(row.param_count);
        else throw ConfigError("grid_csv: unknown field " + field);
        if (v) {
            cells[{row.x, row.r}] = field == "param_count" ? std::to_string(row.param_count) : format_number(*v);
        }
    }
    std::vector<std::string> header{"R/X"};
    for (auto x : xs) header.push_back(std::to_string(x));
    std::string out = csv_line(header);
    for (auto r : rs) {
        std::vector<std::string> line{std::to_string(r)};
        for (auto x : xs) {
            auto it = cells.find({x, r});
            line.push_back(it == cells.end() ? "" : it->second);
        }
        out += csv_line(line);
    }
    return out;
}

// Reads a grid CSV (header "R/X,x1,x2,...", one row per R) as rows of one
// corpus pairing. RF and parameter counts come from the oracles for `base`.
inline std::vector<SweepRow> read_grid_csv(const std::filesystem::path& path, const std::string& train_corpus,
                                           const std::string& eval_corpus, const ModelConfig& base = {},
                                           const std::string& field = "delta_sisdr") {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open grid " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestionError(path.string(), "empty grid file");
    auto header = parse_csv_line(line);
    if (header.size() < 2) throw IngestionError(path.string(), "grid header needs at least one X column");
    std::vector<std::size_t> xs;
    try {
        for (std::size_t i = 1; i < header.size(); ++i) xs.push_back(std::stoul(header[i]));
    } catch (const std::exception&) {
        throw IngestionError(path.string(), "grid header must list integer X values");
    }
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = parse_csv_line(line);
        if (fields.size() != header.size()) throw IngestionError(path.string(), "ragged grid row: " + line);
        std::size_t r = 0;
        try {
            r = std::stoul(fields[0]);
        } catch (const std::exception&) {
            throw IngestionError(path.string(), "grid row must start with an integer R: " + line);
        }
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].empty()) continue;
            SweepRow row;
            row.x = xs[i - 1];
            row.r = r;
            ModelConfig c = base;
            c.blocks_per_stack = row.x;
            c.repeats = r;
            row.rf_seconds = receptive_field(c);
            row.param_count = count_parameters(c).total();
            row.train_corpus = train_corpus;
            row.eval_corpus = eval_corpus;
            double v = 0;
            try {
                v = std::stod(fields[i]);
            } catch (const std::exception&) {
                throw IngestionError(path.string(), "non-numeric cell '" + fields[i] + "'");
            }
            if (field == "sisdr") row.sisdr = v;
            else row.delta_sisdr = v;
            rows.push_back(row);
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Running.

struct SweepSummary {
    std::vector<SweepRow> rows;  // grid order: R outer, X inner, then train, eval corpus
    std::size_t trained = 0;     // pairs trained in this run
    std::size_t resumed = 0;     // pairs loaded from existing artifacts
    std::size_t failed = 0;
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError(path.string(), "cannot open for writing");
    out << text;
}

}  // namespace detail

// Trains every (X, R) cell on every corpus's train/val splits and evaluates on
// every corpus's test split. A pair whose result.json exists is not retrained.
// Failed pairs are recorded and the sweep continues.
//
// Layout under out_dir:
//   X{X}_R{R}/{train}/best.ckpt.json, history.jsonl, eval_{eval}.jsonl, result.json
//   results.jsonl, grid_{field}_{train}_{eval}.csv, grid_rf_seconds.csv,
//   grid_param_count.csv, sweep_config.json
inline SweepSummary run_sweep(const SweepConfig& config,
                              const std::function<void(const SweepRow&)>& on_row = {}) {
    namespace fs = std::filesystem;
    config.validate();
    std::vector<Corpus> corpora;
    for (const auto& ref : config.corpora) {
        if (!fs::exists(fs::path(ref.path) / kManifestName)) {
            throw ConfigError("corpus '" + ref.name + "' not found at " + ref.path);
        }
        corpora.push_back(load_corpus(ref.path));
    }
    const fs::path out(config.out_dir);
    fs::create_directories(out);
    {
        nlohmann::json j = config;
        detail::write_text(out / "sweep_config.json", j.dump(2) + "\n");
    }

    struct Task {
        std::size_t x, r, train;
    };
    std::vector<Task> tasks;
    for (auto r : config.r_values) {
        for (auto x : config.x_values) {
            for (std::size_t t = 0; t < corpora.size(); ++t) tasks.push_back({x, r, t});
        }
    }

    std::vector<std::vector<SweepRow>> task_rows(tasks.size());
    std::vector<char> resumed(tasks.size(), 0);
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;

    auto run_task = [&](std::size_t i) {
        const Task& task = tasks[i];
        const auto& train_ref = config.corpora[task.train];
        const fs::path dir = out / cell_name(task.x, task.r) / train_ref.name;
        const fs::path result_path = dir / "result.json";
        if (fs::exists(result_path)) {
            std::ifstream in(result_path);
            const auto j = nlohmann::json::parse(in);
            for (const auto& row : j.at("rows")) task_rows[i].push_back(row_from_json(row));
            resumed[i] = 1;
            return;
        }
        fs::create_directories(dir);
        ModelConfig mc = config.model;
        mc.blocks_per_stack = task.x;
        mc.repeats = task.r;
        const std::uint64_t seed = cell_seed(config.seed, task.x, task.r);
        SweepRow base;
        base.x = task.x;
        base.r = task.r;
        base.train_corpus = train_ref.name;
        base.seed = seed;

        const auto start = std::chrono::steady_clock::now();
        std::vector<SweepRow> rows;
        try {
            mc.validate();
            base.rf_seconds = receptive_field(mc);
            base.param_count = count_parameters(mc).total();
            DereverbModel model(mc, seed);
            TrainSchedule schedule = config.schedule;
            schedule.seed = seed;
            const auto& corpus = corpora[task.train];
            FitResult fitted = fit(model, corpus.train, corpus.val, schedule, {dir, {}});
            const DereverbModel& best = fitted.best_model ? *fitted.best_model : model;
            for (std::size_t e = 0; e < corpora.size(); ++e) {
                const auto summary = evaluate(best, corpora[e].test);
                write_eval_records(dir / ("eval_" + config.corpora[e].name + ".jsonl"), summary);
                SweepRow row = base;
                row.eval_corpus = config.corpora[e].name;
                row.sisdr = summary.mean_sisdr;
                row.delta_sisdr = summary.mean_delta_sisdr;
                row.input_sisdr = summary.mean_input_sisdr;
                row.best_epoch = fitted.best_epoch;
                rows.push_back(row);
            }
        } catch (const std::exception& e) {
            rows.clear();
            for (const auto& ref : config.corpora) {
                SweepRow row = base;
                row.eval_corpus = ref.name;
                row.status = "failed";
                row.error = e.what();
                rows.push_back(row);
            }
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (auto& row : rows) row.wall_clock_s = elapsed;
        nlohmann::ordered_json doc{{"cell", cell_name(task.x, task.r)}, {"model", nlohmann::json(mc)},
                                   {"schedule", nlohmann::json(config.schedule)}};
        doc["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : rows) doc["rows"].push_back(row_json(row));
        // Only successful pairs count as complete; failed ones are retried on resume.
        const bool ok = std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.status == "ok"; });
        detail::write_text(ok ? result_path : dir / "failure.json", doc.dump(2) + "\n");
        if (ok) fs::remove(dir / "failure.json");
        task_rows[i] = std::move(rows);
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            run_task(i);
            if (on_row) {
                std::lock_guard lock(callback_mutex);
                for (const auto& row : task_rows[i]) on_row(row);
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t workers = std::clamp<std::size_t>(config.jobs, 1, tasks.size());
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    SweepSummary summary;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (resumed[i]) ++summary.resumed;
        else ++summary.trained;
        bool failed = false;
        for (auto& row : task_rows[i]) {
            failed = failed || row.status != "ok";
            summary.rows.push_back(std::move(row));
        }
        if (failed) ++summary.failed;
    }

    std::string results;
    for (const auto& row : summary.rows) results += row_json(row).dump() + "\n";
    detail::write_text(out / "results.jsonl", results);
    for (const auto& tr : config.corpora) {
        for (const auto& ev : config.corpora) {
            std::vector<SweepRow> pair;
            for (const auto& row : summary.rows) {
                if (row.train_corpus == tr.name && row.eval_corpus == ev.name) pair.push_back(row);
            }
            for (const char* field : {"delta_sisdr", "sisdr"}) {
                detail::write_text(out / ("grid_" + std::string(field) + "_" + tr.name + "_" + ev.name + ".csv"),
                                   grid_csv(pair, config.x_values, config.r_values, field));
            }
        }
    }
    // Oracle grids do not depend on training.
    std::vector<SweepRow> oracle;
    for (auto r : config.r_values) {
        for (auto x : config.x_values) {
            ModelConfig mc = config.model;
            mc.blocks_per_stack = x;
            mc.repeats = r;
            try {
                mc.validate();
            } catch (const ConfigError&) {
                continue;
            }
            SweepRow row;
            row.x = x;
            row.r = r;
            row.rf_seconds = receptive_field(mc);
            row.param_count = count_parameters(mc).total();
            oracle.push_back(row);
        }
    }
    detail::write_text(out / "grid_rf_seconds.csv", grid_csv(oracle, config.x_values, config.r_values, "rf_seconds"));
    detail::write_text(out / "grid_param_count.csv",
                       grid_csv(oracle, config.x_values, config.r_values, "param_count"));
    return summary;
}

// ---------------------------------------------------------------------------
// Analysis.

// Ranking metric per row: delta_sisdr, falling back to sisdr. Within one
// evaluation set the mean input SI-SDR is constant, so both give the same order.
inline std::optional<double> ranking_score(const SweepRow& row) {
    if (row.status != "ok") return std::nullopt;
    if (row.delta_sisdr) return row.delta_sisdr;
    return row.sisdr;
}

// a beats b: higher score, ties broken toward larger X.
inline bool better_cell(const SweepRow& a, const SweepRow& b) {
    const double sa = *ranking_score(a), sb = *ranking_score(b);
    if (sa != sb) return sa > sb;
    return a.x > b.x;
}

using Pairing = std::pair<std::string, std::string>;  // (train, eval)

// Best cell for each (pairing, X·R). Ordered by pairing, then block count.
inline std::vector<SweepRow> best_per_block_count(const std::vector<SweepRow>& rows) {
    std::map<std::tuple<std::string, std::string, std::size_t>, SweepRow> best;
    for (const auto& row : rows) {
        if (!ranking_score(row)) continue;
        const auto key = std::make_tuple(row.train_corpus, row.eval_corpus, row.blocks());
        auto it = best.find(key);
        if (it == best.end()) best.emplace(key, row);
        else if (better_cell(row, it->second)) it->second = row;
    }
    std::vector<SweepRow> out;
    for (auto& [key, row] : best) out.push_back(row);
    return out;
}

// Best cell for each (train, eval) pairing.
inline std::vector<SweepRow> best_per_pairing(const std::vector<SweepRow>& rows) {
    std::map<Pairing, SweepRow> best;
    for (const auto& row : rows) {
        if (!ranking_score(row)) continue;
        const Pairing key{row.train_corpus, row.eval_corpus};
        auto it = best.find(key);
        if (it == best.end()) best.emplace(key, row);
        else if (better_cell(row, it->second)) it->second = row;
    }
    std::vector<SweepRow> out;
    for (auto& [key, row] : best) out.push_back(row);
    return out;
}

namespace detail {

inline std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

inline std::string rows_csv(const std::vector<SweepRow>& rows) {
    std::string out = csv_line({"train_corpus", "eval_corpus", "X", "R", "blocks", "rf_seconds", "log10_rf_seconds",
                                "param_count", "sisdr", "delta_sisdr"});
    for (const auto& row : rows) {
        out += csv_line({row.train_corpus, row.eval_corpus, std::to_string(row.x), std::to_string(row.r),
                         std::to_string(row.blocks()), format_number(row.rf_seconds),
                         format_number(std::log10(row.rf_seconds)), std::to_string(row.param_count),
                         opt_number(row.sisdr), opt_number(row.delta_sisdr)});
    }
    return out;
}

}  // namespace detail

struct AnalysisFiles {
    std::filesystem::path scatter, best_per_blocks, best_per_pairing;
};

// scatter.csv: every successful cell (RF vs score vs size).
// best_per_blocks.csv: best cell per X·R and pairing.
// best_per_pairing.csv: best cell per (train, eval).
inline AnalysisFiles analyze(const std::vector<SweepRow>& rows, const std::filesystem::path& out_dir) {
    std::vector<SweepRow> ok;
    for (const auto& row : rows) {
        if (ranking_score(row)) ok.push_back(row);
    }
    if (ok.empty()) throw ConfigError("analyze: no completed results");
    std::filesystem::create_directories(out_dir);
    AnalysisFiles files{out_dir / "scatter.csv", out_dir / "best_per_blocks.csv", out_dir / "best_per_pairing.csv"};
    detail::write_text(files.scatter, detail::rows_csv(ok));
    detail::write_text(files.best_per_blocks, detail::rows_csv(best_per_block_count(ok)));
    detail::write_text(files.best_per_pairing, detail::rows_csv(best_per_pairing(ok)));
    return files;
}

}  // namespace tcnd
