#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "gradharmony/linalg.hpp"

namespace gradharmony {

enum class Mode { baseline, reweight, realign, curriculum, both };
enum class Granularity { microbatch, per_sample };
enum class Action { drop, project, plain };

std::string to_string(Mode m);
std::string to_string(Granularity g);
std::string to_string(Action a);
Mode mode_from_string(const std::string& s);
Granularity granularity_from_string(const std::string& s);

// Conflict threshold, linearly interpolated from gamma_start at step 0 to
// gamma_end at total_steps, clamped afterwards.
struct GammaSchedule {
    double gamma_start = -0.3;
    double gamma_end = 0.0;
    std::uint64_t total_steps = 1;

    void validate() const;
};

double gamma_at(const GammaSchedule& schedule, std::uint64_t step);

struct HarmonizerConfig {
    Mode mode = Mode::baseline;
    double w_va = 1.0;
    double w_vt = 1.0;
    GammaSchedule schedule;
    Granularity granularity = Granularity::microbatch;

    void validate() const;
};

struct UpdateDecision {
    Action action = Action::plain;
    std::optional<FlatGradient> combined_grad;  // present iff action != drop
    double cos_sim = 0.0;
};

// Projects each gradient onto the normal plane of the other when their dot
// product is negative; identity otherwise. Both projections use the original
// counterpart gradient, so the result is order-independent.
std::pair<FlatGradient, FlatGradient> realign(const FlatGradient& g_va,
                                              const FlatGradient& g_vt);

// Keep iff cos_sim is strictly above gamma.
bool curriculum_keep(double cos_sim, double gamma);

// Dispatches a gradient pair to {drop, project, plain} per the configured
// mode and produces the combined update gradient.
UpdateDecision combine(const FlatGradient& g_va, const FlatGradient& g_vt,
                       const HarmonizerConfig& config, std::uint64_t step);

}  // namespace gradharmony
