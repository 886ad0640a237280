#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "realm/errors.hpp"

namespace realm {

// Scenario condition of a scene. Integer values are used as class indices
// throughout, so they must stay dense and zero-based.
enum class Scenario : std::size_t {
    Normal = 0,
    Snow = 1,
    Fog = 2,
};

inline constexpr std::size_t kScenarioCount = 3;

inline constexpr std::array<Scenario, kScenarioCount> kAllScenarios{
    Scenario::Normal, Scenario::Snow, Scenario::Fog};

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::Normal: return "normal";
        case Scenario::Snow: return "snow";
        case Scenario::Fog: return "fog";
    }
    throw ConfigError("scenario value out of range");
}

inline Scenario scenario_from_index(std::size_t i) {
    if (i >= kScenarioCount) {
        throw ConfigError("scenario index " + std::to_string(i) + " out of range [0,3)");
    }
    return static_cast<Scenario>(i);
}

inline Scenario scenario_from_name(const std::string& name) {
    for (Scenario s : kAllScenarios) {
        if (name == scenario_name(s)) return s;
    }
    throw ConfigError("unknown scenario name: " + name);
}

// Adverse weather targeted by scene generation and scoring. Normal scenes
// are neither generated nor scored, so they have no Weather value.
enum class Weather { Snow, Fog };

inline const char* weather_name(Weather w) {
    return w == Weather::Snow ? "snow" : "fog";
}

inline Weather weather_from_name(const std::string& name) {
    if (name == "snow") return Weather::Snow;
    if (name == "fog") return Weather::Fog;
    throw ConfigError("unknown weather name: " + name);
}

inline Scenario scenario_for(Weather w) {
    return w == Weather::Snow ? Scenario::Snow : Scenario::Fog;
}

} // namespace realm
