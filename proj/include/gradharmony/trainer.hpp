#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gradharmony/harmonizer.hpp"
#include "gradharmony/model.hpp"
#include "gradharmony/synth.hpp"

namespace gradharmony {

enum class LrSchedule { constant, cosine };
enum class OptimizerKind { sgd, adam };

std::string to_string(LrSchedule s);
std::string to_string(OptimizerKind o);
LrSchedule lr_schedule_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    std::uint64_t steps = 2000;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t warmup_steps = 100;
    LrSchedule lr_schedule = LrSchedule::cosine;
    OptimizerKind optimizer = OptimizerKind::adam;
    AdamConfig adam;
    HarmonizerConfig harmonizer;
    LossOptions loss;
    std::uint64_t seed = 0;
    std::uint64_t log_every = 100;        // progress chatter only
    std::uint64_t checkpoint_every = 0;   // 0: final checkpoint only

    void validate() const;
};

struct StepRecord {
    std::uint64_t step = 0;
    double loss_va = 0.0;
    double loss_vt = 0.0;
    double cos_sim = 0.0;
    Action action = Action::plain;
    double grad_norm_va = 0.0;
    double grad_norm_vt = 0.0;
    double gamma = 0.0;
};

// Linear warmup to the peak rate, then the configured schedule; the cosine
// schedule anneals to half the peak rate by the final step.
double learning_rate_at(const TrainConfig& config, std::uint64_t step);

struct OptimizerState {
    std::uint64_t updates = 0;  // applied updates (drives Adam bias correction)
    DenseVector m, v;           // Adam moments, lazily sized
};

// In-place parameter update. Throws DivergenceError on non-finite gradients.
void optimizer_step(ModelParams& params, const FlatGradient& grad,
                    OptimizerState& state, const TrainConfig& config,
                    std::uint64_t step);

struct TrainResult {
    ModelParams params;
    std::vector<StepRecord> records;
    std::uint64_t updates_applied = 0;
};

using StepCallback = std::function<void(const StepRecord&, const ModelParams&)>;

// The pre-training loop: seeded i.i.d. batches, both pairwise losses, the
// harmonizer dispatch, then the optimizer unless the step was dropped.
// Deterministic for a fixed (seed, config, data).
TrainResult train(const ModelParams& initial, const std::vector<Triplet>& data,
                  const TrainConfig& config, const StepCallback& on_step = {});

struct ConflictSample {
    std::uint64_t id = 0;
    double cos_sim = 0.0;
    bool aligned = false;  // text and audio both aligned
};

struct ConflictTrace {
    std::vector<ConflictSample> samples;
    std::vector<StepRecord> warmup_records;
};

// Warm the model for n_probe_steps of plain pre-training on everything but
// the probe set (the last probe_size triplets), then record each probe
// triplet's gradient-pair cosine alongside its ground-truth alignment flag.
ConflictTrace conflict_trace(const ModelParams& params, const std::vector<Triplet>& data,
                             const TrainConfig& config, std::uint64_t n_probe_steps,
                             std::size_t probe_size);

}  // namespace gradharmony
