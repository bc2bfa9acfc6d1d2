#pragma once

// First-order skin-temperature model:
//
//   dT/dt = r_h * u_h - r_c * u_c + lambda * (T_neutral - T)
//
// At the neutral temperature full heating gives +r_h and full cooling -r_c
// (0.6 and 0.3 degC/s by default). Integrated with explicit Euler steps of
// dt_ms and clamped to a safety band.

#include "moheat/pattern.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace moheat {

struct PlantParams {
    double r_h = 0.6;          // max heating rate, degC/s
    double r_c = 0.3;          // max cooling rate magnitude, degC/s
    double lambda = 0.05;      // passive relaxation rate, 1/s
    double t_neutral_c = 33.0; // neutral skin temperature, degC
    double t_min_c = 5.0;      // safety clamp
    double t_max_c = 45.0;
    std::int64_t dt_ms = 10;   // integration step

    friend bool operator==(const PlantParams&, const PlantParams&) = default;
};

/// Empty when valid; otherwise one message per broken invariant.
std::vector<std::string> check_params(const PlantParams& p);

struct PlantState {
    double temp_c = 33.0;
    std::int64_t t_ms = 0;

    friend bool operator==(const PlantState&, const PlantState&) = default;
};

/// Actuator registers as held by the device (0..255).
struct Duties {
    std::uint8_t cold = 0;
    std::uint8_t hot = 0;

    friend bool operator==(const Duties&, const Duties&) = default;
};

double plant_derivative(double temp_c, double u_h, double u_c, const PlantParams& p);

PlantState plant_step(const PlantState& s, double u_h, double u_c, const PlantParams& p);

/// plant_step driven by quantized duties (drive = duty / 255).
PlantState plant_step(const PlantState& s, Duties duties, const PlantParams& p);

struct TraceSample {
    std::int64_t t_ms = 0;
    double temp_c = 0.0;
    std::uint8_t cold_duty = 0;
    std::uint8_t hot_duty = 0;

    friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

struct TemperatureTrace {
    std::int64_t dt_ms = 10;
    std::vector<TraceSample> samples;

    friend bool operator==(const TemperatureTrace&, const TemperatureTrace&) = default;
};

class SimulationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Steps the plant from 0 to tl.total_ms. Entries apply before the step
/// that begins at their t_ms. Throws SimulationError when params are invalid,
/// the initial temperature is outside the clamp band, or an entry time is not
/// a multiple of dt_ms.
TemperatureTrace run_simulation(const ActionTimeline& tl, const PlantParams& p,
                                double initial_temp_c);

/// Applies one timeline step to the device registers, as the device would
/// after receiving the corresponding commands.
Duties apply_actions(Duties d, const TimedActionSet& step);

/// "t_ms,temp_c,cold_duty,hot_duty" header, 4-decimal temperatures, LF endings.
std::string trace_to_csv(const TemperatureTrace& tr);

}  // namespace moheat
