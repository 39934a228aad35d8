#include "gradharmony/harmonizer.hpp"

#include <cmath>

namespace gradharmony {

std::string to_string(Mode m) {
    switch (m) {
        case Mode::baseline: return "baseline";
        case Mode::reweight: return "reweight";
        case Mode::realign: return "realign";
        case Mode::curriculum: return "curriculum";
        case Mode::both: return "both";
    }
    return "?";
}

std::string to_string(Granularity g) {
    return g == Granularity::microbatch ? "microbatch" : "per_sample";
}

std::string to_string(Action a) {
    switch (a) {
        case Action::drop: return "drop";
        case Action::project: return "project";
        case Action::plain: return "plain";
    }
    return "?";
}

Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return Mode::baseline;
    if (s == "reweight") return Mode::reweight;
    if (s == "realign") return Mode::realign;
    if (s == "curriculum") return Mode::curriculum;
    if (s == "both") return Mode::both;
    throw ConfigError("unknown harmonizer mode '" + s + "'");
}

Granularity granularity_from_string(const std::string& s) {
    if (s == "microbatch") return Granularity::microbatch;
    if (s == "per_sample") return Granularity::per_sample;
    throw ConfigError("unknown granularity '" + s + "'");
}

void GammaSchedule::validate() const {
    if (!(gamma_start >= -1.0 && gamma_start <= 1.0))
        throw ConfigError("gamma_start must lie in [-1, 1]");
    if (!(gamma_end >= -1.0 && gamma_end <= 1.0))
        throw ConfigError("gamma_end must lie in [-1, 1]");
    if (gamma_start > gamma_end)
        throw ConfigError("gamma schedule must be nondecreasing (gamma_start <= gamma_end)");
    if (total_steps == 0) throw ConfigError("gamma schedule needs total_steps >= 1");
}

double gamma_at(const GammaSchedule& schedule, std::uint64_t step) {
    if (step >= schedule.total_steps) return schedule.gamma_end;
    const double t = static_cast<double>(step) / static_cast<double>(schedule.total_steps);
    return schedule.gamma_start + t * (schedule.gamma_end - schedule.gamma_start);
}

void HarmonizerConfig::validate() const {
    if (!(w_va > 0.0) || !std::isfinite(w_va)) throw ConfigError("w_va must be finite and positive");
    if (!(w_vt > 0.0) || !std::isfinite(w_vt)) throw ConfigError("w_vt must be finite and positive");
    schedule.validate();
}

std::pair<FlatGradient, FlatGradient> realign(const FlatGradient& g_va,
                                              const FlatGradient& g_vt) {
    const double d = dot(g_va, g_vt);
    if (d >= 0.0) return {g_va, g_vt};

    const double nn_va = dot(g_va, g_va);
    const double nn_vt = dot(g_vt, g_vt);
    // An exactly-zero counterpart implies d == 0, so this only triggers for
    // denormal-scale gradients where the projection coefficient would blow up.
    if (nn_va < kNormEpsilon * kNormEpsilon || nn_vt < kNormEpsilon * kNormEpsilon)
        return {g_va, g_vt};

    FlatGradient hat_va = g_va;
    FlatGradient hat_vt = g_vt;
    axpy(-d / nn_vt, g_vt, hat_va);
    axpy(-d / nn_va, g_va, hat_vt);
    return {std::move(hat_va), std::move(hat_vt)};
}

bool curriculum_keep(double cos_sim, double gamma) { return cos_sim > gamma; }

UpdateDecision combine(const FlatGradient& g_va, const FlatGradient& g_vt,
                       const HarmonizerConfig& config, std::uint64_t step) {
    if (g_va.size() != g_vt.size())
        throw DimensionError("combine: gradient length mismatch");

    UpdateDecision decision;
    decision.cos_sim = cosine_similarity(g_va, g_vt).value;
    const double cos = decision.cos_sim;

    switch (config.mode) {
        case Mode::baseline:
            decision.action = Action::plain;
            decision.combined_grad = add(g_va, g_vt);
            break;
        case Mode::reweight:
            decision.action = Action::plain;
            decision.combined_grad = add(scale(config.w_va, g_va), scale(config.w_vt, g_vt));
            break;
        case Mode::realign: {
            // cos is 0 for degenerate inputs, which lands in the plain branch.
            if (cos < 0.0) {
                auto [hat_va, hat_vt] = realign(g_va, g_vt);
                decision.action = Action::project;
                decision.combined_grad = add(hat_va, hat_vt);
            } else {
                decision.action = Action::plain;
                decision.combined_grad = add(g_va, g_vt);
            }
            break;
        }
        case Mode::curriculum: {
            if (curriculum_keep(cos, gamma_at(config.schedule, step))) {
                decision.action = Action::plain;
                decision.combined_grad = add(g_va, g_vt);
            } else {
                decision.action = Action::drop;
            }
            break;
        }
        case Mode::both: {
            const double gamma = gamma_at(config.schedule, step);
            if (cos <= gamma) {
                decision.action = Action::drop;
            } else if (cos < 0.0) {
                auto [hat_va, hat_vt] = realign(g_va, g_vt);
                decision.action = Action::project;
                decision.combined_grad = add(hat_va, hat_vt);
            } else {
                decision.action = Action::plain;
                decision.combined_grad = add(g_va, g_vt);
            }
            break;
        }
    }
    return decision;
}

}  // namespace gradharmony
