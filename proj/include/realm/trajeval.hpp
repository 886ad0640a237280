#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "realm/scenario.hpp"

namespace realm {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

struct Waypoint {
    double t = 0.0; // seconds
    double x = 0.0; // meters, planar ego-aligned frame
    double y = 0.0;
};

struct Trajectory {
    std::vector<Waypoint> waypoints; // t strictly increasing

    void validate() const;
    double t_min() const;
    double t_max() const;
    // Linear interpolation between waypoints; exact at nodes.
    Waypoint at_time(double t) const; // CoverageError outside [t_min, t_max]
};

// Counter-clockwise convex polygon with positive area.
struct ConvexPolygon {
    std::vector<Vec2> vertices;

    void validate() const;
    double area() const; // signed shoelace area
};

// Footprint rectangle centered on the origin, length along +x (heading axis).
ConvexPolygon rectangle_footprint(double width, double length);

ConvexPolygon transform_polygon(const ConvexPolygon& local, double x, double y, double heading);

// Convex overlap via the separating-axis test. Separation requires a strict
// gap, so polygons that merely touch count as intersecting.
bool polygons_intersect(const ConvexPolygon& a, const ConvexPolygon& b);

struct ObstaclePose {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0; // radians
};

struct Obstacle {
    ConvexPolygon footprint; // world frame when poses is empty, local otherwise
    std::vector<ObstaclePose> poses; // optional, t strictly increasing

    void validate() const;
    // Footprint placed at time t; poses are interpolated and clamped at the ends.
    ConvexPolygon at_time(double t) const;
};

struct ObstacleSet {
    std::vector<Obstacle> obstacles;

    void validate() const;
};

// Mean Euclidean distance over predicted waypoints from t=0 up to and
// including the horizon, with the ground truth linearly interpolated at the
// predicted timestamps. point_at_horizon switches to the displacement of the
// interpolated positions at exactly t=horizon.
double l2_at_horizon(const Trajectory& pred, const Trajectory& gt, double horizon,
                     bool point_at_horizon = false);

// Heading of the ego at each waypoint from central finite differences of the
// waypoint positions; the first and last use one-sided differences.
std::vector<double> waypoint_headings(const Trajectory& traj);

// Fraction of trajectories with at least one timestep where the ego
// footprint, translated to the waypoint and rotated to the local heading,
// intersects any obstacle. Each trajectory counts at most once.
double collision_rate(const std::vector<std::pair<Trajectory, ObstacleSet>>& preds,
                      const ConvexPolygon& ego_footprint);

struct CommFrame {
    double payload_bytes = 0.0;
    double interval_seconds = 0.0;
};

// Total payload bits divided by total elapsed seconds.
double communication_cost(const std::vector<CommFrame>& frames);

struct EvalSample {
    std::string scene_id;
    Scenario label = Scenario::Normal;
    Trajectory pred;
    Trajectory gt;
    ObstacleSet obstacles;
    std::vector<CommFrame> frames; // optional transmission log
};

EvalSample parse_eval_sample(const std::string& json_line);

struct HorizonMetric {
    double horizon_s = 0.0;
    double meters = 0.0;
};

struct MetricBlock {
    std::size_t count = 0;
    std::vector<HorizonMetric> l2;
    double collision_rate = 0.0;
    double comm_total_bits = 0.0;
    double comm_total_seconds = 0.0;
    double comm_cost_bps = 0.0; // 0 when the block logged no frames
};

struct TimingStage {
    std::string stage;
    double milliseconds = 0.0;
    double proportion_pct = 0.0; // proportions sum to 100
};

struct EvalReport {
    MetricBlock overall;
    // Scenarios actually present, ordered Normal, Snow, Fog.
    std::vector<std::pair<Scenario, MetricBlock>> per_scenario;
    std::vector<TimingStage> timing;
};

struct ReportOptions {
    std::vector<double> horizons = {2.5, 3.5, 4.5};
    ConvexPolygon footprint = rectangle_footprint(2.0, 4.6);
    bool point_at_horizon = false;
};

// Overall and per-scenario aggregation of every metric, with wall-clock
// timing of the evaluation stages.
EvalReport scenario_report(const std::vector<EvalSample>& samples,
                           const ReportOptions& options = {});

std::string eval_report_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

} // namespace realm
