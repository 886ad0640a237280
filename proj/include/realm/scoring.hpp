#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "realm/scenario.hpp"

namespace realm {

enum class Metric : std::size_t {
    Lpips = 0,
    Brisque = 1,
    Fid = 2,
    Fade = 3,
    SemanticIou = 4,
};

inline constexpr std::size_t kMetricCount = 5;
const char* metric_name(Metric m);

// Raw quality metric values for one generated scene.
struct MetricRecord {
    std::string scene_id;
    Weather weather = Weather::Snow;
    double lpips = 0.0;        // [0,1]
    double brisque = 0.0;      // [0,100]
    double fid = 0.0;          // >= 0
    double fade = 0.0;         // >= 0
    double semantic_iou = 0.0; // [0,1]

    void validate() const; // domain error on out-of-range values
};

MetricRecord parse_metric_record(const std::string& json_line);

// Per-weather metric weights in Metric order.
struct WeightProfile {
    std::array<double, kMetricCount> weights{};

    void validate() const; // config error unless >= 0 and summing to 1
};

struct ProfileSet {
    WeightProfile snow{{0.30, 0.25, 0.20, 0.05, 0.20}};
    WeightProfile fog{{0.20, 0.10, 0.25, 0.30, 0.15}};

    ProfileSet() { validate(); }
    void validate() const;
    const WeightProfile& for_weather(Weather w) const {
        return w == Weather::Snow ? snow : fog;
    }
};

ProfileSet profile_set_from_json(const std::string& json_text);

struct ScoredScene {
    std::string scene_id;
    Weather weather = Weather::Snow;
    std::array<double, kMetricCount> scores{}; // normalized, each in [0,1]
    double composite = 0.0;
    bool accepted = false;
    std::vector<std::string> warnings; // clamp notices
};

// Inverse normalization onto higher-is-better [0,1]. Sets *clamped when the
// raw value drove the score outside the unit interval.
double normalize_metric(Metric m, double raw, bool* clamped = nullptr);

// Square root of the weighted sum of normalized scores. `accepted` is left
// false; the batch scorer applies the threshold.
ScoredScene composite_score(const MetricRecord& record, const WeightProfile& profile);

struct WeatherSummary {
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct ScoreBatchResult {
    std::vector<ScoredScene> scenes;
    std::vector<std::string> errors; // one entry per malformed record
    WeatherSummary snow;
    WeatherSummary fog;
};

ScoreBatchResult score_batch(const std::vector<MetricRecord>& records,
                             const ProfileSet& profiles, double threshold);

// JSON-lines input, one record per line; malformed lines become error
// entries and processing continues.
ScoreBatchResult score_lines(std::istream& in, const ProfileSet& profiles, double threshold);

std::string scored_scene_json(const ScoredScene& s);
std::string score_summary_json(const ScoreBatchResult& r, double threshold);

} // namespace realm
