#include "realm/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>

#include <json.hpp>

namespace realm {

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::Lpips: return "lpips";
        case Metric::Brisque: return "brisque";
        case Metric::Fid: return "fid";
        case Metric::Fade: return "fade";
        case Metric::SemanticIou: return "semantic_iou";
    }
    throw ConfigError("metric value out of range");
}

void MetricRecord::validate() const {
    if (scene_id.empty()) throw DomainError("record has an empty scene_id");
    auto in_range = [this](const char* name, double v, double lo, double hi) {
        if (!(v >= lo && v <= hi)) {
            throw DomainError(scene_id + ": " + name + " value " + std::to_string(v) +
                              " outside [" + std::to_string(lo) + "," + std::to_string(hi) + "]");
        }
    };
    in_range("lpips", lpips, 0.0, 1.0);
    in_range("brisque", brisque, 0.0, 100.0);
    in_range("fid", fid, 0.0, std::numeric_limits<double>::infinity());
    in_range("fade", fade, 0.0, std::numeric_limits<double>::infinity());
    in_range("semantic_iou", semantic_iou, 0.0, 1.0);
    if (!std::isfinite(fid) || !std::isfinite(fade)) {
        throw DomainError(scene_id + ": non-finite metric value");
    }
}

MetricRecord parse_metric_record(const std::string& json_line) {
    nlohmann::json j = nlohmann::json::parse(json_line);
    MetricRecord r;
    r.scene_id = j.at("scene_id").get<std::string>();
    r.weather = weather_from_name(j.at("weather").get<std::string>());
    r.lpips = j.at("lpips").get<double>();
    r.brisque = j.at("brisque").get<double>();
    r.fid = j.at("fid").get<double>();
    r.fade = j.at("fade").get<double>();
    r.semantic_iou = j.at("semantic_iou").get<double>();
    r.validate();
    return r;
}

void WeightProfile::validate() const {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("metric weights must be non-negative");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ConfigError("metric weights must sum to 1, got " + std::to_string(total));
    }
}

void ProfileSet::validate() const {
    snow.validate();
    fog.validate();
}

ProfileSet profile_set_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ProfileSet set;
    auto load = [&](const char* key, WeightProfile& p) {
        if (!j.contains(key)) return;
        for (std::size_t i = 0; i < kMetricCount; ++i) {
            p.weights[i] = j[key].at(metric_name(static_cast<Metric>(i))).get<double>();
        }
    };
    load("snow", set.snow);
    load("fog", set.fog);
    set.validate();
    return set;
}

double normalize_metric(Metric m, double raw, bool* clamped) {
    double s;
    switch (m) {
        case Metric::Brisque:
        case Metric::Fid: s = 1.0 - raw / 100.0; break;
        case Metric::Lpips:
        case Metric::Fade: s = 1.0 - raw; break;
        case Metric::SemanticIou: s = raw; break;
        default: throw ConfigError("metric value out of range");
    }
    double c = std::clamp(s, 0.0, 1.0);
    if (clamped) *clamped = c != s;
    return c;
}

ScoredScene composite_score(const MetricRecord& record, const WeightProfile& profile) {
    record.validate();
    profile.validate();
    ScoredScene out;
    out.scene_id = record.scene_id;
    out.weather = record.weather;

    const std::array<double, kMetricCount> raw{record.lpips, record.brisque, record.fid,
                                               record.fade, record.semantic_iou};
    double weighted = 0.0;
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        bool clamped = false;
        out.scores[i] = normalize_metric(static_cast<Metric>(i), raw[i], &clamped);
        if (clamped) {
            out.warnings.push_back(std::string(metric_name(static_cast<Metric>(i))) + " value " +
                                   std::to_string(raw[i]) + " clamped to the unit interval");
        }
        weighted += profile.weights[i] * out.scores[i];
    }
    out.composite = std::sqrt(weighted);
    return out;
}

namespace {

void fold_summary(WeatherSummary& s, double composite) {
    if (s.count == 0) {
        s.mean = s.min = s.max = composite;
    } else {
        s.mean += composite;
        s.min = std::min(s.min, composite);
        s.max = std::max(s.max, composite);
    }
    ++s.count;
}

void finish_summary(WeatherSummary& s) {
    if (s.count > 1) s.mean /= static_cast<double>(s.count);
}

} // namespace

ScoreBatchResult score_batch(const std::vector<MetricRecord>& records,
                             const ProfileSet& profiles, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ConfigError("threshold must lie in [0,1], got " + std::to_string(threshold));
    }
    profiles.validate();
    ScoreBatchResult out;
    for (const MetricRecord& r : records) {
        try {
            ScoredScene scene = composite_score(r, profiles.for_weather(r.weather));
            scene.accepted = scene.composite >= threshold;
            fold_summary(r.weather == Weather::Snow ? out.snow : out.fog, scene.composite);
            out.scenes.push_back(std::move(scene));
        } catch (const Error& e) {
            out.errors.emplace_back(e.what());
        }
    }
    finish_summary(out.snow);
    finish_summary(out.fog);
    return out;
}

ScoreBatchResult score_lines(std::istream& in, const ProfileSet& profiles, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ConfigError("threshold must lie in [0,1], got " + std::to_string(threshold));
    }
    profiles.validate();
    ScoreBatchResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            MetricRecord r = parse_metric_record(line);
            ScoredScene scene = composite_score(r, profiles.for_weather(r.weather));
            scene.accepted = scene.composite >= threshold;
            fold_summary(r.weather == Weather::Snow ? out.snow : out.fog, scene.composite);
            out.scenes.push_back(std::move(scene));
        } catch (const std::exception& e) {
            out.errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    finish_summary(out.snow);
    finish_summary(out.fog);
    return out;
}

std::string scored_scene_json(const ScoredScene& s) {
    nlohmann::json j;
    j["scene_id"] = s.scene_id;
    j["weather"] = weather_name(s.weather);
    for (std::size_t i = 0; i < kMetricCount; ++i) {
        j["scores"][metric_name(static_cast<Metric>(i))] = s.scores[i];
    }
    j["composite"] = s.composite;
    j["accepted"] = s.accepted;
    if (!s.warnings.empty()) j["warnings"] = s.warnings;
    return j.dump();
}

std::string score_summary_json(const ScoreBatchResult& r, double threshold) {
    nlohmann::json j;
    j["threshold"] = threshold;
    auto pack = [](const WeatherSummary& s) {
        nlohmann::json w;
        w["count"] = s.count;
        if (s.count > 0) {
            w["mean"] = s.mean;
            w["min"] = s.min;
            w["max"] = s.max;
        }
        return w;
    };
    j["snow"] = pack(r.snow);
    j["fog"] = pack(r.fog);
    j["errors"] = r.errors;
    std::size_t accepted = 0;
    for (const ScoredScene& s : r.scenes) accepted += s.accepted ? 1 : 0;
    j["accepted"] = accepted;
    j["scored"] = r.scenes.size();
    return j.dump(2);
}

} // namespace realm
