#include "realm/trajeval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "realm/errors.hpp"

namespace realm {

using nlohmann::json;

void Trajectory::validate() const {
    if (waypoints.empty()) throw DomainError("trajectory has no waypoints");
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
        const Waypoint& w = waypoints[i];
        if (!std::isfinite(w.t) || !std::isfinite(w.x) || !std::isfinite(w.y))
            throw DomainError("trajectory waypoint has non-finite component");
        if (i > 0 && !(w.t > waypoints[i - 1].t))
            throw DomainError("trajectory timestamps must be strictly increasing");
    }
}

double Trajectory::t_min() const {
    if (waypoints.empty()) throw DomainError("trajectory has no waypoints");
    return waypoints.front().t;
}

double Trajectory::t_max() const {
    if (waypoints.empty()) throw DomainError("trajectory has no waypoints");
    return waypoints.back().t;
}

Waypoint Trajectory::at_time(double t) const {
    if (waypoints.empty()) throw DomainError("trajectory has no waypoints");
    if (t < t_min() || t > t_max())
        throw CoverageError("time " + std::to_string(t) + " outside trajectory coverage [" +
                            std::to_string(t_min()) + ", " + std::to_string(t_max()) + "]");
    auto it = std::lower_bound(waypoints.begin(), waypoints.end(), t,
                               [](const Waypoint& w, double v) { return w.t < v; });
    if (it->t == t) return *it; // exact at nodes
    const Waypoint& hi = *it;
    const Waypoint& lo = *(it - 1);
    double u = (t - lo.t) / (hi.t - lo.t);
    return Waypoint{t, lo.x + u * (hi.x - lo.x), lo.y + u * (hi.y - lo.y)};
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

} // namespace

double ConvexPolygon::area() const {
    double twice = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const Vec2& a = vertices[i];
        const Vec2& b = vertices[(i + 1) % vertices.size()];
        twice += a.x * b.y - a.y * b.x;
    }
    return 0.5 * twice;
}

void ConvexPolygon::validate() const {
    if (vertices.size() < 3) throw DomainError("polygon needs at least 3 vertices");
    for (const Vec2& v : vertices)
        if (!std::isfinite(v.x) || !std::isfinite(v.y))
            throw DomainError("polygon vertex has non-finite component");
    std::size_t n = vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = vertices[i];
        const Vec2& b = vertices[(i + 1) % n];
        if (a.x == b.x && a.y == b.y) throw DomainError("polygon has a zero-length edge");
        const Vec2& c = vertices[(i + 2) % n];
        if (cross(a, b, c) < 0.0)
            throw DomainError("polygon must be convex with counter-clockwise winding");
    }
    if (!(area() > 0.0)) throw DomainError("polygon area must be positive");
}

ConvexPolygon rectangle_footprint(double width, double length) {
    if (!(width > 0.0) || !(length > 0.0))
        throw ConfigError("footprint width and length must be positive");
    double hw = width / 2.0, hl = length / 2.0;
    return ConvexPolygon{{{-hl, -hw}, {hl, -hw}, {hl, hw}, {-hl, hw}}};
}

ConvexPolygon transform_polygon(const ConvexPolygon& local, double x, double y, double heading) {
    double c = std::cos(heading), s = std::sin(heading);
    ConvexPolygon out;
    out.vertices.reserve(local.vertices.size());
    for (const Vec2& v : local.vertices)
        out.vertices.push_back({x + c * v.x - s * v.y, y + s * v.x + c * v.y});
    return out;
}

namespace {

void project(const ConvexPolygon& poly, double ax, double ay, double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const Vec2& v : poly.vertices) {
        double p = v.x * ax + v.y * ay;
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
}

bool separated_by_edge_normals(const ConvexPolygon& edges_of, const ConvexPolygon& other) {
    std::size_t n = edges_of.vertices.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = edges_of.vertices[i];
        const Vec2& b = edges_of.vertices[(i + 1) % n];
        double ax = -(b.y - a.y), ay = b.x - a.x;
        double lo1, hi1, lo2, hi2;
        project(edges_of, ax, ay, lo1, hi1);
        project(other, ax, ay, lo2, hi2);
        if (hi1 < lo2 || hi2 < lo1) return true; // strict gap required
    }
    return false;
}

} // namespace

bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b) {
    return !separated_by_edge_normals(a, b) && !separated_by_edge_normals(b, a);
}

void Obstacle::validate() const {
    footprint.validate();
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const ObstaclePose& p = poses[i];
        if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.y) ||
            !std::isfinite(p.heading))
            throw DomainError("obstacle pose has non-finite component");
        if (i > 0 && !(p.t > poses[i - 1].t))
            throw DomainError("obstacle pose timestamps must be strictly increasing");
    }
}

ConvexPolygon Obstacle::at_time(double t) const {
    if (poses.empty()) return footprint;
    if (t <= poses.front().t) {
        const ObstaclePose& p = poses.front();
        return transform_polygon(footprint, p.x, p.y, p.heading);
    }
    if (t >= poses.back().t) {
        const ObstaclePose& p = poses.back();
        return transform_polygon(footprint, p.x, p.y, p.heading);
    }
    auto it = std::lower_bound(poses.begin(), poses.end(), t,
                               [](const ObstaclePose& p, double v) { return p.t < v; });
    const ObstaclePose& hi = *it;
    if (hi.t == t) return transform_polygon(footprint, hi.x, hi.y, hi.heading);
    const ObstaclePose& lo = *(it - 1);
    double u = (t - lo.t) / (hi.t - lo.t);
    return transform_polygon(footprint, lo.x + u * (hi.x - lo.x), lo.y + u * (hi.y - lo.y),
                             lo.heading + u * (hi.heading - lo.heading));
}

void ObstacleSet::validate() const {
    for (const Obstacle& o : obstacles) o.validate();
}

double l2_at_horizon(const Trajectory& pred, const Trajectory& gt, double horizon,
                     bool point_at_horizon) {
    pred.validate();
    gt.validate();
    if (!(horizon >= 0.0)) throw DomainError("horizon must be non-negative");
    if (horizon > pred.t_max() || horizon > gt.t_max())
        throw CoverageError("horizon " + std::to_string(horizon) +
                            " beyond trajectory coverage");

    if (point_at_horizon) {
        Waypoint p = pred.at_time(horizon);
        Waypoint g = gt.at_time(horizon);
        return std::hypot(p.x - g.x, p.y - g.y);
    }

    double sum = 0.0;
    std::size_t count = 0;
    for (const Waypoint& p : pred.waypoints) {
        if (p.t < 0.0 || p.t > horizon) continue;
        Waypoint g = gt.at_time(p.t);
        sum += std::hypot(p.x - g.x, p.y - g.y);
        ++count;
    }
    if (count == 0)
        throw CoverageError("no predicted waypoints between t=0 and the horizon");
    return sum / static_cast<double>(count);
}

std::vector<double> waypoint_headings(const Trajectory& traj) {
    traj.validate();
    std::size_t n = traj.waypoints.size();
    if (n < 2) throw ContractError("heading undefined for fewer than 2 waypoints");
    std::vector<double> headings(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t lo = i == 0 ? 0 : i - 1;
        std::size_t hi = i == n - 1 ? n - 1 : i + 1;
        headings[i] = std::atan2(traj.waypoints[hi].y - traj.waypoints[lo].y,
                                 traj.waypoints[hi].x - traj.waypoints[lo].x);
    }
    return headings;
}

double collision_rate(const std::vector<std::pair<Trajectory, ObstacleSet>>& preds,
                      const ConvexPolygon& ego_footprint) {
    ego_footprint.validate();
    if (preds.empty()) throw ContractError("collision_rate needs at least one trajectory");

    std::size_t colliding = 0;
    for (const auto& [traj, obstacles] : preds) {
        obstacles.validate();
        std::vector<double> headings = waypoint_headings(traj);
        bool hit = false;
        for (std::size_t i = 0; i < traj.waypoints.size() && !hit; ++i) {
            const Waypoint& w = traj.waypoints[i];
            ConvexPolygon ego = transform_polygon(ego_footprint, w.x, w.y, headings[i]);
            for (const Obstacle& obs : obstacles.obstacles) {
                if (polygons_intersect(ego, obs.at_time(w.t))) {
                    hit = true;
                    break;
                }
            }
        }
        if (hit) ++colliding;
    }
    return static_cast<double>(colliding) / static_cast<double>(preds.size());
}

double communication_cost(const std::vector<CommFrame>& frames) {
    if (frames.empty()) throw ContractError("communication_cost needs at least one frame");
    double bits = 0.0, seconds = 0.0;
    for (const CommFrame& f : frames) {
        if (!(f.interval_seconds > 0.0)) throw DomainError("frame interval must be positive");
        if (!(f.payload_bytes >= 0.0) || !std::isfinite(f.payload_bytes))
            throw DomainError("frame payload must be non-negative");
        bits += f.payload_bytes * 8.0;
        seconds += f.interval_seconds;
    }
    return bits / seconds;
}

EvalSample parse_eval_sample(const std::string& json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("unparseable eval sample: ") + e.what());
    }
    for (const char* key : {"scene_id", "scenario_label", "pred", "gt"}) {
        if (!j.contains(key)) throw ProtocolError(std::string("eval sample missing field: ") + key);
    }

    EvalSample s;
    s.scene_id = j["scene_id"].get<std::string>();
    s.label = scenario_from_index(j["scenario_label"].get<std::size_t>());

    auto read_traj = [](const json& arr) {
        Trajectory t;
        for (const json& row : arr) {
            if (!row.is_array() || row.size() != 3)
                throw ProtocolError("trajectory waypoint must be [t, x, y]");
            t.waypoints.push_back(
                {row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
        }
        t.validate();
        return t;
    };
    s.pred = read_traj(j["pred"]);
    s.gt = read_traj(j["gt"]);

    if (j.contains("obstacles")) {
        for (const json& jo : j["obstacles"]) {
            Obstacle o;
            if (!jo.contains("vertices")) throw ProtocolError("obstacle missing vertices");
            for (const json& v : jo["vertices"]) {
                if (!v.is_array() || v.size() != 2)
                    throw ProtocolError("obstacle vertex must be [x, y]");
                o.footprint.vertices.push_back({v[0].get<double>(), v[1].get<double>()});
            }
            if (jo.contains("poses")) {
                for (const json& p : jo["poses"]) {
                    if (!p.is_array() || p.size() != 4)
                        throw ProtocolError("obstacle pose must be [t, x, y, heading]");
                    o.poses.push_back({p[0].get<double>(), p[1].get<double>(),
                                       p[2].get<double>(), p[3].get<double>()});
                }
            }
            o.validate();
            s.obstacles.obstacles.push_back(std::move(o));
        }
    }
    if (j.contains("frames")) {
        for (const json& f : j["frames"]) {
            if (!f.is_array() || f.size() != 2)
                throw ProtocolError("comm frame must be [payload_bytes, interval_seconds]");
            s.frames.push_back({f[0].get<double>(), f[1].get<double>()});
        }
    }
    return s;
}

namespace {

struct SampleEval {
    std::vector<double> l2; // one per horizon
    bool collided = false;
    double bits = 0.0;
    double seconds = 0.0;
};

MetricBlock fold_block(const std::vector<SampleEval>& evals, const std::vector<std::size_t>& idx,
                       const std::vector<double>& horizons) {
    MetricBlock block;
    block.count = idx.size();
    block.l2.reserve(horizons.size());
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        double sum = 0.0;
        for (std::size_t i : idx) sum += evals[i].l2[h];
        block.l2.push_back({horizons[h], sum / static_cast<double>(idx.size())});
    }
    std::size_t hits = 0;
    for (std::size_t i : idx) {
        if (evals[i].collided) ++hits;
        block.comm_total_bits += evals[i].bits;
        block.comm_total_seconds += evals[i].seconds;
    }
    block.collision_rate = static_cast<double>(hits) / static_cast<double>(idx.size());
    block.comm_cost_bps =
        block.comm_total_seconds > 0.0 ? block.comm_total_bits / block.comm_total_seconds : 0.0;
    return block;
}

} // namespace

EvalReport scenario_report(const std::vector<EvalSample>& samples, const ReportOptions& options) {
    if (samples.empty()) throw ContractError("scenario_report needs at least one sample");
    options.footprint.validate();
    if (options.horizons.empty()) throw ConfigError("scenario_report needs at least one horizon");

    using clock = std::chrono::steady_clock;
    using ms = std::chrono::duration<double, std::milli>;

    auto t0 = clock::now();
    std::vector<SampleEval> evals(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        evals[i].l2.reserve(options.horizons.size());
        for (double h : options.horizons)
            evals[i].l2.push_back(
                l2_at_horizon(samples[i].pred, samples[i].gt, h, options.point_at_horizon));
        for (const CommFrame& f : samples[i].frames) {
            if (!(f.interval_seconds > 0.0)) throw DomainError("frame interval must be positive");
            evals[i].bits += f.payload_bytes * 8.0;
            evals[i].seconds += f.interval_seconds;
        }
    }
    auto t1 = clock::now();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double rate =
            collision_rate({{samples[i].pred, samples[i].obstacles}}, options.footprint);
        evals[i].collided = rate > 0.5;
    }
    auto t2 = clock::now();

    EvalReport report;
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) all[i] = i;
    report.overall = fold_block(evals, all, options.horizons);

    for (Scenario sc : kAllScenarios) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].label == sc) idx.push_back(i);
        if (!idx.empty())
            report.per_scenario.emplace_back(sc, fold_block(evals, idx, options.horizons));
    }
    auto t3 = clock::now();

    double metric_ms = ms(t1 - t0).count();
    double collision_ms = ms(t2 - t1).count();
    double aggregate_ms = ms(t3 - t2).count();
    double total = metric_ms + collision_ms + aggregate_ms;
    report.timing = {
        {"metrics", metric_ms, 0.0},
        {"collision", collision_ms, 0.0},
        {"aggregation", aggregate_ms, 0.0},
    };
    if (total > 0.0) {
        for (TimingStage& stage : report.timing)
            stage.proportion_pct = stage.milliseconds / total * 100.0;
    } else {
        for (TimingStage& stage : report.timing)
            stage.proportion_pct = 100.0 / static_cast<double>(report.timing.size());
    }
    return report;
}

namespace {

json block_json(const MetricBlock& b) {
    json l2 = json::array();
    for (const HorizonMetric& m : b.l2)
        l2.push_back({{"horizon_s", m.horizon_s}, {"meters", m.meters}});
    return json{
        {"count", b.count},
        {"l2", l2},
        {"collision_rate", b.collision_rate},
        {"comm_total_bits", b.comm_total_bits},
        {"comm_total_seconds", b.comm_total_seconds},
        {"comm_cost_bps", b.comm_cost_bps},
    };
}

MetricBlock block_from_json(const json& j) {
    MetricBlock b;
    b.count = j.at("count").get<std::size_t>();
    for (const json& m : j.at("l2"))
        b.l2.push_back({m.at("horizon_s").get<double>(), m.at("meters").get<double>()});
    b.collision_rate = j.at("collision_rate").get<double>();
    b.comm_total_bits = j.at("comm_total_bits").get<double>();
    b.comm_total_seconds = j.at("comm_total_seconds").get<double>();
    b.comm_cost_bps = j.at("comm_cost_bps").get<double>();
    return b;
}

} // namespace

std::string eval_report_json(const EvalReport& report) {
    json per = json::array();
    for (const auto& [sc, block] : report.per_scenario) {
        json entry = block_json(block);
        entry["scenario"] = scenario_name(sc);
        per.push_back(entry);
    }
    json timing = json::array();
    for (const TimingStage& s : report.timing)
        timing.push_back({{"stage", s.stage},
                          {"milliseconds", s.milliseconds},
                          {"proportion_pct", s.proportion_pct}});
    json j = {
        {"overall", block_json(report.overall)},
        {"per_scenario", per},
        {"timing", timing},
    };
    return j.dump(2);
}

EvalReport eval_report_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("unparseable eval report: ") + e.what());
    }
    EvalReport report;
    report.overall = block_from_json(j.at("overall"));
    for (const json& entry : j.at("per_scenario"))
        report.per_scenario.emplace_back(
            scenario_from_name(entry.at("scenario").get<std::string>()),
            block_from_json(entry));
    for (const json& s : j.at("timing"))
        report.timing.push_back({s.at("stage").get<std::string>(),
                                 s.at("milliseconds").get<double>(),
                                 s.at("proportion_pct").get<double>()});
    return report;
}

} // namespace realm
