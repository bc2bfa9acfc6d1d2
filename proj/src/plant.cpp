#include "moheat/plant.hpp"

#include "moheat/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace moheat {

std::vector<std::string> check_params(const PlantParams& p) {
    std::vector<std::string> problems;
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(p.r_h) || p.r_h <= 0.0) problems.emplace_back("r_h must be > 0");
    if (!finite(p.r_c) || p.r_c <= 0.0) problems.emplace_back("r_c must be > 0");
    if (!finite(p.lambda) || p.lambda < 0.0) problems.emplace_back("lambda must be >= 0");
    if (p.dt_ms < 1) problems.emplace_back("dt_ms must be >= 1");
    if (!finite(p.t_min_c) || !finite(p.t_max_c) || !finite(p.t_neutral_c) ||
        !(p.t_min_c < p.t_neutral_c && p.t_neutral_c < p.t_max_c)) {
        problems.emplace_back("clamp band must satisfy t_min_c < t_neutral_c < t_max_c");
    }
    return problems;
}

double plant_derivative(double temp_c, double u_h, double u_c, const PlantParams& p) {
    return p.r_h * u_h - p.r_c * u_c + p.lambda * (p.t_neutral_c - temp_c);
}

PlantState plant_step(const PlantState& s, double u_h, double u_c, const PlantParams& p) {
    const double dt_s = static_cast<double>(p.dt_ms) / 1000.0;
    const double next = s.temp_c + dt_s * plant_derivative(s.temp_c, u_h, u_c, p);
    return {std::clamp(next, p.t_min_c, p.t_max_c), s.t_ms + p.dt_ms};
}

PlantState plant_step(const PlantState& s, Duties duties, const PlantParams& p) {
    return plant_step(s, protocol::duty_to_drive(duties.hot), protocol::duty_to_drive(duties.cold),
                      p);
}

Duties apply_actions(Duties d, const TimedActionSet& step) {
    for (const auto& a : step.actions) {
        switch (a.kind) {
            case Action::Kind::set_cold: d.cold = protocol::intensity_to_duty(a.intensity); break;
            case Action::Kind::set_hot: d.hot = protocol::intensity_to_duty(a.intensity); break;
            case Action::Kind::all_off: d = {}; break;
        }
    }
    return d;
}

TemperatureTrace run_simulation(const ActionTimeline& tl, const PlantParams& p,
                                double initial_temp_c) {
    if (const auto problems = check_params(p); !problems.empty()) {
        throw SimulationError("invalid plant parameters: " + problems.front());
    }
    if (const auto problems = check_timeline(tl); !problems.empty()) {
        throw SimulationError("malformed timeline: " + problems.front());
    }
    if (!(initial_temp_c >= p.t_min_c && initial_temp_c <= p.t_max_c)) {
        throw SimulationError("initial temperature is outside the clamp band");
    }
    for (const auto& e : tl.entries) {
        if (e.t_ms % p.dt_ms != 0) {
            throw SimulationError("entry at t_ms=" + std::to_string(e.t_ms) +
                                  " is not a multiple of dt_ms=" + std::to_string(p.dt_ms) +
                                  "; lower dt_ms to a divisor of every entry time");
        }
    }

    TemperatureTrace trace;
    trace.dt_ms = p.dt_ms;
    const std::int64_t steps = tl.total_ms / p.dt_ms;
    trace.samples.reserve(static_cast<std::size_t>(steps) + 1);

    PlantState state{initial_temp_c, 0};
    Duties duties;
    auto next = tl.entries.begin();
    for (std::int64_t k = 0; k <= steps; ++k) {
        const std::int64_t t = k * p.dt_ms;
        while (next != tl.entries.end() && next->t_ms == t) {
            duties = apply_actions(duties, *next);
            ++next;
        }
        trace.samples.push_back({t, state.temp_c, duties.cold, duties.hot});
        if (k < steps) state = plant_step(state, duties, p);
    }
    return trace;
}

std::string trace_to_csv(const TemperatureTrace& tr) {
    std::string out = "t_ms,temp_c,cold_duty,hot_duty\n";
    char row[96];
    for (const auto& s : tr.samples) {
        std::snprintf(row, sizeof row, "%lld,%.4f,%u,%u\n", static_cast<long long>(s.t_ms),
                      s.temp_c, static_cast<unsigned>(s.cold_duty),
                      static_cast<unsigned>(s.hot_duty));
        out += row;
    }
    return out;
}

}  // namespace moheat
