#pragma once

#include <tcnd/acoustics.hpp>
#include <tcnd/autodiff.hpp>
#include <tcnd/layers.hpp>
#include <tcnd/model.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace tcnd {

// SI-SDR is reported within [-60, 60] dB. The upper cap stands in for a zero
// residual, the lower one for a zero projection onto the reference.
inline constexpr double kSisdrCap = 60.0;

class TrainingError : public Error {
public:
    using Error::Error;
};

namespace detail {

struct SisdrTerms {
    double dot = 0;       // <est, ref>
    double ref_energy = 0;
    double target_energy = 0;
    double residual_energy = 0;
    double value = 0;     // clamped dB
    bool clamped = false;
};

inline SisdrTerms sisdr_terms(std::span<const double> est, std::span<const double> ref) {
    if (est.size() != ref.size()) {
        throw DimensionError("sisdr: estimate has " + std::to_string(est.size()) + " samples, reference " +
                             std::to_string(ref.size()));
    }
    SisdrTerms s;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        s.dot += est[i] * ref[i];
        s.ref_energy += ref[i] * ref[i];
    }
    if (!(s.ref_energy > 0.0)) throw InputError("sisdr: reference has zero energy");
    const double alpha = s.dot / s.ref_energy;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double t = alpha * ref[i];
        const double e = est[i] - t;
        s.target_energy += t * t;
        s.residual_energy += e * e;
    }
    if (s.target_energy <= 0.0) {
        s.value = -kSisdrCap;
        s.clamped = true;
    } else if (s.residual_energy <= 0.0) {
        s.value = kSisdrCap;
        s.clamped = true;
    } else {
        const double db = 10.0 * std::log10(s.target_energy / s.residual_energy);
        s.clamped = std::abs(db) >= kSisdrCap;
        s.value = std::clamp(db, -kSisdrCap, kSisdrCap);
    }
    return s;
}

}  // namespace detail

// 10 log10(||a·s||² / ||ŝ - a·s||²) with a = <ŝ, s> / ||s||². No mean removal.
inline double sisdr(std::span<const double> estimate, std::span<const double> reference) {
    return detail::sisdr_terms(estimate, reference).value;
}

inline double sisdr(const AudioClip& estimate, const AudioClip& reference) {
    return sisdr(estimate.samples, reference.samples);
}

// -SI-SDR as a graph node over a 1-D estimate. The gradient is zero where the
// value is clamped.
inline Tensor sisdr_loss(const Tensor& estimate, std::span<const double> reference) {
    if (estimate.rank() != 1) throw DimensionError("sisdr_loss: estimate must be 1-D");
    const auto terms = detail::sisdr_terms(estimate.data(), reference);
    std::vector<double> ref(reference.begin(), reference.end());
    return record_op("sisdr_loss", {}, {-terms.value}, {estimate},
                     [estimate, ref = std::move(ref), terms](std::span<const double> g,
                                                            std::span<const std::span<double>> gin) {
                         if (terms.clamped) return;
                         // dL/dŝ = -(10 / ln 10) · (2 s / <ŝ, s> - 2 e / ||e||²)
                         auto est = estimate.data();
                         const double alpha = terms.dot / terms.ref_energy;
                         const double k = -10.0 / std::numbers::ln10 * g[0];
                         for (std::size_t i = 0; i < ref.size(); ++i) {
                             const double e = est[i] - alpha * ref[i];
                             gin[0][i] += k * (2.0 * ref[i] / terms.dot - 2.0 * e / terms.residual_energy);
                         }
                     });
}

// Mean of per-item losses.
inline Tensor batch_sisdr_loss(std::span<const Tensor> estimates, std::span<const std::vector<double>> references) {
    if (estimates.size() != references.size() || estimates.empty()) {
        throw DimensionError("batch_sisdr_loss: estimates and references must be non-empty and paired");
    }
    std::vector<Tensor> losses;
    for (std::size_t i = 0; i < estimates.size(); ++i) losses.push_back(sisdr_loss(estimates[i], references[i]));
    return scale(add_n(losses), 1.0 / static_cast<double>(losses.size()));
}

// SI-SDR(estimate, s_dir) - SI-SDR(x, s_dir).
inline double delta_sisdr(std::span<const double> estimate, std::span<const double> reverberant,
                          std::span<const double> direct) {
    if (estimate.size() != reverberant.size()) throw DimensionError("delta_sisdr: estimate/mixture length mismatch");
    return sisdr(estimate, direct) - sisdr(reverberant, direct);
}

// ---------------------------------------------------------------------------
// Learning-rate schedule.

// Halves the rate after `patience` consecutive epochs without a strictly
// better validation score, then restarts the count.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, std::size_t patience) : lr_(initial_lr), patience_(patience) {
        if (!(initial_lr > 0.0)) throw ConfigError("scheduler: learning rate must be positive");
        if (patience == 0) throw ConfigError("scheduler: patience must be at least 1");
    }

    // Returns true when this observation halved the rate.
    bool observe(double score) {
        if (score > best_) {
            best_ = score;
            counter_ = 0;
            return false;
        }
        if (++counter_ >= patience_) {
            lr_ *= 0.5;
            ++halvings_;
            counter_ = 0;
            return true;
        }
        return false;
    }

    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    std::size_t counter() const noexcept { return counter_; }
    std::size_t halvings() const noexcept { return halvings_; }

private:
    double lr_;
    std::size_t patience_;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t counter_ = 0;
    std::size_t halvings_ = 0;
};

struct TrainSchedule {
    std::size_t epochs = 100;
    double lr = 1e-3;
    std::size_t patience = 3;
    std::size_t batch_size = 2;
    double clip_seconds = 4.0;
    std::uint64_t seed = 0;
    AdamOptions adam;

    void validate() const {
        if (epochs == 0) throw ConfigError("schedule: epochs must be positive");
        if (!(lr > 0.0)) throw ConfigError("schedule: learning rate must be positive");
        if (patience == 0) throw ConfigError("schedule: patience must be positive");
        if (batch_size == 0) throw ConfigError("schedule: batch size must be positive");
        if (!(clip_seconds > 0.0)) throw ConfigError("schedule: clip length must be positive");
    }
};

inline void to_json(nlohmann::json& j, const TrainSchedule& s) {
    j = nlohmann::json{{"epochs", s.epochs},         {"lr", s.lr},
                       {"patience", s.patience},     {"batch_size", s.batch_size},
                       {"clip_seconds", s.clip_seconds}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, TrainSchedule& s) {
    if (j.contains("epochs")) j.at("epochs").get_to(s.epochs);
    if (j.contains("lr")) j.at("lr").get_to(s.lr);
    if (j.contains("patience")) j.at("patience").get_to(s.patience);
    if (j.contains("batch_size")) j.at("batch_size").get_to(s.batch_size);
    if (j.contains("clip_seconds")) j.at("clip_seconds").get_to(s.clip_seconds);
    if (j.contains("seed")) j.at("seed").get_to(s.seed);
}

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double lr = 0;          // rate used during the epoch
    double train_loss = 0;  // mean batch loss
    double val_sisdr = 0;   // mean over the validation split
    bool halved = false;    // rate halved after this epoch
};

inline nlohmann::ordered_json history_line(const EpochRecord& r, const TrainSchedule& s) {
    return {{"epoch", r.epoch},         {"lr", r.lr},           {"train_loss", r.train_loss},
            {"val_sisdr", r.val_sisdr}, {"halved", r.halved},   {"optimizer", "adam"},
            {"batch_size", s.batch_size}};
}

struct FitOptions {
    std::optional<std::filesystem::path> out_dir;  // history.jsonl, best.ckpt.json
    std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
    std::vector<EpochRecord> history;
    double best_val_sisdr = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::optional<DereverbModel> best_model;
};

namespace detail {

inline double mean_val_sisdr(const DereverbModel& model, const std::vector<CorpusExample>& val) {
    double total = 0.0;
    for (const auto& ex : val) total += sisdr(model.enhance(ex.reverberant.samples), ex.direct.samples);
    return total / static_cast<double>(val.size());
}

inline void require_rate(const DereverbModel& model, const std::vector<CorpusExample>& split, const char* name) {
    for (const auto& ex : split) {
        if (ex.reverberant.sample_rate != model.config().sample_rate) {
            throw ConfigError(std::string(name) + " example " + ex.id + " is at " +
                              std::to_string(ex.reverberant.sample_rate) + " Hz, model expects " +
                              std::to_string(model.config().sample_rate) + " Hz");
        }
    }
}

}  // namespace detail

// Minimizes the mean -SI-SDR against the direct-path target with Adam,
// halving the rate on validation plateaus. The model ends holding the last
// epoch's weights; the best-validation weights are returned separately.
inline FitResult fit(DereverbModel& model, const std::vector<CorpusExample>& train,
                     const std::vector<CorpusExample>& val, const TrainSchedule& schedule,
                     const FitOptions& options = {}) {
    schedule.validate();
    if (train.empty()) throw ConfigError("fit: training split is empty");
    if (val.empty()) throw ConfigError("fit: validation split is empty");
    detail::require_rate(model, train, "training");
    detail::require_rate(model, val, "validation");

    std::vector<Tensor> inputs;
    std::vector<std::vector<double>> targets;
    for (const auto& ex : train) {
        const auto x = pad_or_truncate(ex.reverberant, schedule.clip_seconds);
        inputs.push_back(Tensor::from({x.size()}, x.samples));
        targets.push_back(pad_or_truncate(ex.direct, schedule.clip_seconds).samples);
    }

    std::optional<std::ofstream> history_file;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir);
        history_file.emplace(*options.out_dir / "history.jsonl", std::ios::binary | std::ios::trunc);
    }

    FitResult result;
    PlateauScheduler scheduler(schedule.lr, schedule.patience);
    AdamState adam;
    std::vector<Tensor> params = model.parameters();
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(schedule.seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = scheduler.lr();
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t stop = std::min(order.size(), start + schedule.batch_size);
            try {
                model.zero_grad();
                std::vector<Tensor> estimates;
                std::vector<std::vector<double>> refs;
                for (std::size_t i = start; i < stop; ++i) {
                    estimates.push_back(model.forward(inputs[order[i]]));
                    refs.push_back(targets[order[i]]);
                }
                Tensor loss = batch_sisdr_loss(estimates, refs);
                backward(loss);
                adam_step(params, adam, scheduler.lr(), schedule.adam);
                loss_sum += loss.item();
                ++batches;
            } catch (const NumericError& e) {
                const nlohmann::ordered_json dump{{"error", e.what()},
                                                  {"epoch", epoch},
                                                  {"batch", batches},
                                                  {"lr", scheduler.lr()},
                                                  {"best_val_sisdr", result.best_val_sisdr},
                                                  {"completed_epochs", result.history.size()}};
                if (options.out_dir) {
                    std::ofstream(*options.out_dir / "diagnostic.json", std::ios::trunc) << dump.dump(2) << '\n';
                }
                throw TrainingError("training diverged: " + dump.dump());
            }
        }
        rec.train_loss = loss_sum / static_cast<double>(batches);
        rec.val_sisdr = detail::mean_val_sisdr(model, val);
        const bool improved = rec.val_sisdr > scheduler.best();
        rec.halved = scheduler.observe(rec.val_sisdr);
        if (improved) {
            result.best_val_sisdr = rec.val_sisdr;
            result.best_epoch = epoch;
            if (result.best_model) result.best_model->copy_parameters_from(model);
            else result.best_model.emplace(model.clone());
            if (options.out_dir) save_checkpoint(*result.best_model, (*options.out_dir / "best.ckpt.json").string());
        }
        result.history.push_back(rec);
        if (history_file) *history_file << history_line(rec, schedule).dump() << '\n' << std::flush;
        if (options.on_epoch) options.on_epoch(rec);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalRecord {
    std::string id;
    double sisdr_estimate = 0;
    double sisdr_input = 0;
    double delta_sisdr = 0;  // sisdr_estimate - sisdr_input
};

struct EvalSummary {
    std::vector<EvalRecord> records;
    double mean_sisdr = 0;
    double mean_input_sisdr = 0;
    double mean_delta_sisdr = 0;
};

inline nlohmann::ordered_json eval_line(const EvalRecord& r) {
    return {{"id", r.id},
            {"sisdr_estimate", r.sisdr_estimate},
            {"sisdr_input", r.sisdr_input},
            {"delta_sisdr", r.delta_sisdr}};
}

using Estimator = std::function<std::vector<double>(const AudioClip& reverberant)>;

// Scores every example against its direct-path clip. Examples are spread
// over `jobs` threads; records keep the input order.
inline EvalSummary evaluate(const Estimator& estimator, const std::vector<CorpusExample>& examples,
                            std::size_t jobs = 1) {
    if (examples.empty()) throw ConfigError("evaluate: split is empty");
    EvalSummary summary;
    summary.records.resize(examples.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < examples.size(); i = next++) {
            try {
                const auto& ex = examples[i];
                const auto est = estimator(ex.reverberant);
                EvalRecord r;
                r.id = ex.id;
                r.sisdr_estimate = sisdr(est, ex.direct.samples);
                r.sisdr_input = sisdr(ex.reverberant.samples, ex.direct.samples);
                r.delta_sisdr = r.sisdr_estimate - r.sisdr_input;
                summary.records[i] = std::move(r);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::clamp<std::size_t>(jobs, 1, examples.size()); ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    for (const auto& r : summary.records) {
        summary.mean_sisdr += r.sisdr_estimate;
        summary.mean_input_sisdr += r.sisdr_input;
        summary.mean_delta_sisdr += r.delta_sisdr;
    }
    const double n = static_cast<double>(summary.records.size());
    summary.mean_sisdr /= n;
    summary.mean_input_sisdr /= n;
    summary.mean_delta_sisdr /= n;
    return summary;
}

inline EvalSummary evaluate(const DereverbModel& model, const std::vector<CorpusExample>& examples,
                            std::size_t jobs = 1) {
    detail::require_rate(model, examples, "evaluation");
    return evaluate([&model](const AudioClip& x) { return model.enhance(x.samples); }, examples, jobs);
}

inline void write_eval_records(const std::filesystem::path& path, const EvalSummary& summary) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError(path.string(), "cannot open for writing");
    for (const auto& r : summary.records) out << eval_line(r).dump() << '\n';
}

}  // namespace tcnd
