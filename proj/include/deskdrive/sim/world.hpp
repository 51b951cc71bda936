#pragma once

// Deterministic 2D driving world: kinematic bicycle ego, scripted actors,
// straight-segment lanes, sparse-key-point routes, seeded scenario
// constructors and infraction detection.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "deskdrive/config.hpp"
#include "deskdrive/control.hpp"
#include "deskdrive/fusion.hpp"
#include "deskdrive/geometry.hpp"

namespace deskdrive {

enum class ActorKind { Vehicle, Pedestrian, Obstacle };

struct ActorScript {
    enum class Type { Static, Cruise, CruiseStop, Cross };
    Type type = Type::Static;
    Vec2 dir{1, 0};           // unit motion direction
    double speed = 0.0;       // m/s while moving
    double stop_time = -1.0;  // CruiseStop: halt at this time...
    double resume_time = -1.0;  // ...and move again at this one (-1 = never)
    double start_time = 0.0;  // Cross: stand still until this time
    double span = 0.0;        // Cross: distance to travel before stopping
};

struct Actor {
    ActorKind kind = ActorKind::Vehicle;
    Vec2 pos;
    double heading = 0.0;
    double speed = 0.0;
    Vec2 half_extent{1.0, 0.8};  // along heading, across heading
    ActorScript script;
    double travelled = 0.0;  // Cross bookkeeping
};

// straight centerline segment
struct Lane {
    Vec2 a, b;
    double width = 4.0;
};

struct CommandZone {
    double s_begin = 0.0, s_end = 0.0;  // arc positions along the route
    Command command = Command::FollowLane;
};

enum class ScenarioKind {
    Follow,
    LeadVehicleStop,
    PedestrianCrossing,
    IntersectionTurn,
    LaneChange,
    DenseTraffic,
};

inline const char* scenario_name(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::Follow: return "follow";
        case ScenarioKind::LeadVehicleStop: return "lead-vehicle-stop";
        case ScenarioKind::PedestrianCrossing: return "pedestrian-crossing";
        case ScenarioKind::IntersectionTurn: return "intersection-turn";
        case ScenarioKind::LaneChange: return "lane-change";
        case ScenarioKind::DenseTraffic: return "dense-traffic";
    }
    return "?";
}

inline ScenarioKind scenario_from_name(const std::string& name) {
    for (ScenarioKind k : {ScenarioKind::Follow, ScenarioKind::LeadVehicleStop,
                           ScenarioKind::PedestrianCrossing, ScenarioKind::IntersectionTurn,
                           ScenarioKind::LaneChange, ScenarioKind::DenseTraffic})
        if (name == scenario_name(k)) return k;
    throw std::invalid_argument("unknown scenario kind: " + name);
}

struct ScenarioSpec {
    ScenarioKind kind = ScenarioKind::Follow;
    std::uint64_t seed = 0;
};

struct EgoState {
    Vec2 pos;
    double heading = 0.0;
    double speed = 0.0;
};

struct WorldState {
    double time = 0.0;
    EgoState ego;
    std::vector<Actor> actors;
    std::vector<Lane> lanes;
    std::vector<Vec2> route;  // sparse key points, first at the start pose
    std::vector<CommandZone> command_zones;
    ScenarioKind kind = ScenarioKind::Follow;
    std::uint64_t seed = 0;
    double timeout = 120.0;      // s
    double low_speed_time = 0.0; // accumulated contiguous seconds below 0.1 m/s
    double ego_radius = 1.0;
};

enum class InfractionKind {
    CollisionPedestrian,
    CollisionVehicle,
    CollisionLayout,
    OffRoad,
    RouteDeviation,
    Blocked,
    Timeout,
};

inline const char* infraction_name(InfractionKind k) {
    switch (k) {
        case InfractionKind::CollisionPedestrian: return "collision-pedestrian";
        case InfractionKind::CollisionVehicle: return "collision-vehicle";
        case InfractionKind::CollisionLayout: return "collision-layout";
        case InfractionKind::OffRoad: return "off-road";
        case InfractionKind::RouteDeviation: return "route-deviation";
        case InfractionKind::Blocked: return "blocked";
        case InfractionKind::Timeout: return "timeout";
    }
    return "?";
}

struct InfractionEvent {
    InfractionKind kind;
    double time = 0.0;
    Vec2 position;
};

// ---------------------------------------------------------------------------
// route helpers

inline double route_length(const std::vector<Vec2>& route) {
    double len = 0.0;
    for (std::size_t i = 1; i < route.size(); ++i) len += (route[i] - route[i - 1]).norm();
    return len;
}

// arc position of the closest point on the polyline, plus lateral distance
struct RouteProjection {
    double s = 0.0;
    double lateral = 0.0;
};

inline RouteProjection project_onto_route(const std::vector<Vec2>& route, Vec2 p) {
    RouteProjection best{0.0, std::numeric_limits<double>::infinity()};
    double s_acc = 0.0;
    for (std::size_t i = 1; i < route.size(); ++i) {
        const Vec2 a = route[i - 1], b = route[i];
        const Vec2 ab = b - a;
        const double len = ab.norm();
        if (len < 1e-12) continue;
        double t = dot(p - a, ab) / (len * len);
        t = clamp(t, 0.0, 1.0);
        const Vec2 q = a + ab * t;
        const double d = (p - q).norm();
        if (d < best.lateral) best = {s_acc + t * len, d};
        s_acc += len;
    }
    return best;
}

// point at arc position s (clamped to the ends)
inline Vec2 route_point_at(const std::vector<Vec2>& route, double s) {
    if (s <= 0.0) return route.front();
    double s_acc = 0.0;
    for (std::size_t i = 1; i < route.size(); ++i) {
        const Vec2 a = route[i - 1], b = route[i];
        const double len = (b - a).norm();
        if (s_acc + len >= s && len > 1e-12) return a + (b - a) * ((s - s_acc) / len);
        s_acc += len;
    }
    return route.back();
}

// like route_point_at, but extrapolates past the last key point along the
// final segment direction (used by the expert so its plan never collapses at
// the finish line)
inline Vec2 route_point_at_extended(const std::vector<Vec2>& route, double s) {
    const double len = route_length(route);
    if (s <= len) return route_point_at(route, s);
    const Vec2 a = route[route.size() - 2], b = route.back();
    const Vec2 d = b - a;
    const double dn = d.norm();
    if (dn < 1e-12) return b;
    return b + d * ((s - len) / dn);
}

// heading change of the route over [s, s+window]
inline double route_turn_within(const std::vector<Vec2>& route, double s, double window) {
    const Vec2 p0 = route_point_at(route, s);
    const Vec2 p1 = route_point_at(route, s + window * 0.5);
    const Vec2 p2 = route_point_at(route, s + window);
    const Vec2 d1 = p1 - p0, d2 = p2 - p1;
    if (d1.norm() < 1e-9 || d2.norm() < 1e-9) return 0.0;
    return std::abs(wrap_angle(std::atan2(d2.y, d2.x) - std::atan2(d1.y, d1.x)));
}

inline Command current_command(const WorldState& w) {
    const double s = project_onto_route(w.route, w.ego.pos).s;
    for (const CommandZone& z : w.command_zones)
        if (s >= z.s_begin && s < z.s_end) return z.command;
    return Command::FollowLane;
}

// next sparse key point strictly ahead of the ego's progress, in ego frame
inline GoalPoint goal_point(const WorldState& w) {
    const double s = project_onto_route(w.route, w.ego.pos).s;
    double s_acc = 0.0;
    Vec2 goal = w.route.back();
    for (std::size_t i = 1; i < w.route.size(); ++i) {
        s_acc += (w.route[i] - w.route[i - 1]).norm();
        if (s_acc > s + 1.0) { goal = w.route[i]; break; }
    }
    return world_to_frame(goal, w.ego.pos, w.ego.heading);
}

inline double route_completion_pct(const WorldState& w, double max_progress_s) {
    const double len = route_length(w.route);
    return clamp(100.0 * max_progress_s / len, 0.0, 100.0);
}

// ---------------------------------------------------------------------------
// stepping

inline void advance_actor(Actor& a, double time, double dt) {
    switch (a.script.type) {
        case ActorScript::Type::Static:
            a.speed = 0.0;
            break;
        case ActorScript::Type::Cruise:
            a.speed = a.script.speed;
            a.pos = a.pos + a.script.dir * (a.speed * dt);
            break;
        case ActorScript::Type::CruiseStop: {
            const bool stopped = a.script.stop_time >= 0.0 && time >= a.script.stop_time &&
                                 (a.script.resume_time < 0.0 || time < a.script.resume_time);
            a.speed = stopped ? 0.0 : a.script.speed;
            a.pos = a.pos + a.script.dir * (a.speed * dt);
            break;
        }
        case ActorScript::Type::Cross: {
            if (time >= a.script.start_time && a.travelled < a.script.span) {
                a.speed = a.script.speed;
                const double step = std::min(a.speed * dt, a.script.span - a.travelled);
                a.pos = a.pos + a.script.dir * step;
                a.travelled += step;
            } else {
                a.speed = 0.0;
            }
            break;
        }
    }
}

// Kinematic bicycle step with the acceleration rate cap. Steering sign:
// positive steer turns right (heading decreases), matching the [-1,1]
// actuator convention with -1 = full left.
inline WorldState step_world(const WorldState& w, ControlAction act, double dt,
                             const RunConfig& cfg) {
    require(dt > 0.0 && dt <= 0.1, "step_world: dt must be in (0, 0.1]");
    WorldState n = w;
    n.time = w.time + dt;

    // engine acceleration, rate-capped going up; braking is allowed the
    // vehicle's full deceleration authority
    const double engine_accel = 4.0, brake_accel = 4.0;
    double accel = act.throttle >= 0.0
                       ? std::min(act.throttle * engine_accel, cfg.max_accel)
                       : std::max(act.throttle * brake_accel, -brake_accel);
    double v = std::max(0.0, w.ego.speed + accel * dt);

    const double steer = clamp(act.steer, -1.0, 1.0);
    const double delta = -steer * cfg.max_steer_deg * M_PI / 180.0;
    const double theta_dot = v * std::tan(delta) / cfg.wheelbase;
    const double th0 = w.ego.heading;
    if (std::abs(theta_dot) > 1e-12) {
        // exact arc: the ego moves on a circle of radius v / theta_dot
        const double th1 = th0 + theta_dot * dt;
        const double r = v / theta_dot;
        n.ego.pos.x = w.ego.pos.x + r * (std::sin(th1) - std::sin(th0));
        n.ego.pos.y = w.ego.pos.y - r * (std::cos(th1) - std::cos(th0));
        n.ego.heading = wrap_angle(th1);
    } else {
        n.ego.pos.x = w.ego.pos.x + v * std::cos(th0) * dt;
        n.ego.pos.y = w.ego.pos.y + v * std::sin(th0) * dt;
        n.ego.heading = th0;
    }
    n.ego.speed = v;

    for (Actor& a : n.actors) advance_actor(a, w.time, dt);

    n.low_speed_time = v < 0.1 ? w.low_speed_time + dt : 0.0;
    return n;
}

// ---------------------------------------------------------------------------
// geometry checks

inline bool circle_hits_actor(Vec2 center, double radius, const Actor& a) {
    // circle vs oriented rectangle, tested in the actor frame
    const Vec2 local = world_to_frame(center, a.pos, a.heading);
    const double dx = std::max(std::abs(local.x) - a.half_extent.x, 0.0);
    const double dy = std::max(std::abs(local.y) - a.half_extent.y, 0.0);
    return dx * dx + dy * dy <= radius * radius;
}

inline bool on_any_lane(const std::vector<Lane>& lanes, Vec2 p) {
    for (const Lane& l : lanes) {
        const Vec2 ab = l.b - l.a;
        const double len = ab.norm();
        if (len < 1e-12) continue;
        const double t = clamp(dot(p - l.a, ab) / (len * len), 0.0, 1.0);
        const Vec2 q = l.a + ab * t;
        if ((p - q).norm() <= l.width * 0.5) return true;
    }
    return false;
}

constexpr double kRouteDeviationLimit = 30.0;  // m
constexpr double kBlockedAfter = 90.0;         // s below 0.1 m/s

// Edge-triggered events between two consecutive states: each contiguous
// violation is reported exactly once.
inline std::vector<InfractionEvent> detect_infractions(const WorldState& prev,
                                                       const WorldState& next) {
    std::vector<InfractionEvent> events;
    require(prev.actors.size() == next.actors.size(), "detect_infractions: actor list changed");

    for (std::size_t i = 0; i < next.actors.size(); ++i) {
        const bool hit_now = circle_hits_actor(next.ego.pos, next.ego_radius, next.actors[i]);
        const bool hit_before = circle_hits_actor(prev.ego.pos, prev.ego_radius, prev.actors[i]);
        if (hit_now && !hit_before) {
            InfractionKind kind = InfractionKind::CollisionLayout;
            if (next.actors[i].kind == ActorKind::Vehicle) kind = InfractionKind::CollisionVehicle;
            if (next.actors[i].kind == ActorKind::Pedestrian)
                kind = InfractionKind::CollisionPedestrian;
            events.push_back({kind, next.time, next.ego.pos});
        }
    }

    const bool off_now = !on_any_lane(next.lanes, next.ego.pos);
    const bool off_before = !on_any_lane(prev.lanes, prev.ego.pos);
    if (off_now && !off_before) events.push_back({InfractionKind::OffRoad, next.time, next.ego.pos});

    const double dev_now = project_onto_route(next.route, next.ego.pos).lateral;
    const double dev_before = project_onto_route(prev.route, prev.ego.pos).lateral;
    if (dev_now > kRouteDeviationLimit && dev_before <= kRouteDeviationLimit)
        events.push_back({InfractionKind::RouteDeviation, next.time, next.ego.pos});

    if (next.low_speed_time >= kBlockedAfter && prev.low_speed_time < kBlockedAfter)
        events.push_back({InfractionKind::Blocked, next.time, next.ego.pos});

    if (next.time >= next.timeout && prev.time < prev.timeout)
        events.push_back({InfractionKind::Timeout, next.time, next.ego.pos});

    return events;
}

// ---------------------------------------------------------------------------
// scenario construction

namespace detail {

inline Actor make_vehicle(Vec2 pos, double heading) {
    Actor a;
    a.kind = ActorKind::Vehicle;
    a.pos = pos;
    a.heading = heading;
    a.half_extent = {2.2, 0.9};
    return a;
}

inline Actor make_pedestrian(Vec2 pos) {
    Actor a;
    a.kind = ActorKind::Pedestrian;
    a.pos = pos;
    a.half_extent = {0.35, 0.35};
    return a;
}

inline Actor make_obstacle(Vec2 pos) {
    Actor a;
    a.kind = ActorKind::Obstacle;
    a.pos = pos;
    a.half_extent = {0.8, 0.8};
    return a;
}

inline void add_straight_road(WorldState& w, double x0, double x1, bool with_left_lane) {
    w.lanes.push_back({{x0, 0.0}, {x1, 0.0}, 4.0});
    if (with_left_lane) w.lanes.push_back({{x0, 3.5}, {x1, 3.5}, 4.0});
}

}  // namespace detail

// Seeded deterministic construction: identical (kind, seed) gives an
// identical initial WorldState.
inline WorldState make_scenario(const ScenarioSpec& spec, const RunConfig& cfg) {
    Rng rng(spec.seed * 6007 + static_cast<std::uint64_t>(spec.kind) * 7919 + 17);
    WorldState w;
    w.kind = spec.kind;
    w.seed = spec.seed;
    w.ego = {{0.0, 0.0}, 0.0, 0.0};

    using detail::add_straight_road;
    using detail::make_obstacle;
    using detail::make_pedestrian;
    using detail::make_vehicle;

    switch (spec.kind) {
        case ScenarioKind::Follow: {
            const double len = 180.0 + rng.uniform(0.0, 60.0);
            add_straight_road(w, -20.0, len + 40.0, true);
            w.route = {{0, 0}, {len * 0.5, 0}, {len, 0}};
            if (rng.uniform() < 0.7) {
                Actor lead = make_vehicle({30.0 + rng.uniform(0.0, 25.0), 0.0}, 0.0);
                lead.script = {ActorScript::Type::Cruise, {1, 0}, 3.5 + rng.uniform(0.0, 1.5)};
                w.actors.push_back(lead);
            }
            break;
        }
        case ScenarioKind::LeadVehicleStop: {
            const double len = 170.0 + rng.uniform(0.0, 50.0);
            add_straight_road(w, -20.0, len + 40.0, true);
            w.route = {{0, 0}, {len * 0.5, 0}, {len, 0}};
            Actor lead = make_vehicle({28.0 + rng.uniform(0.0, 15.0), 0.0}, 0.0);
            lead.script.type = ActorScript::Type::CruiseStop;
            lead.script.dir = {1, 0};
            lead.script.speed = 3.0 + rng.uniform(0.0, 1.5);
            lead.script.stop_time = 10.0 + rng.uniform(0.0, 10.0);
            lead.script.resume_time = lead.script.stop_time + 8.0 + rng.uniform(0.0, 8.0);
            w.actors.push_back(lead);
            break;
        }
        case ScenarioKind::PedestrianCrossing: {
            const double len = 160.0 + rng.uniform(0.0, 40.0);
            add_straight_road(w, -20.0, len + 40.0, false);
            w.route = {{0, 0}, {len * 0.5, 0}, {len, 0}};
            const std::size_t count = 1 + rng.index(2);
            for (std::size_t i = 0; i < count; ++i) {
                const double x = 45.0 + rng.uniform(0.0, 60.0) + 25.0 * static_cast<double>(i);
                const bool from_right = rng.uniform() < 0.5;
                Actor ped = make_pedestrian({x, from_right ? -5.5 : 5.5});
                ped.script.type = ActorScript::Type::Cross;
                ped.script.dir = {0.0, from_right ? 1.0 : -1.0};
                ped.script.speed = 1.0 + rng.uniform(0.0, 0.5);
                ped.script.start_time = 8.0 + rng.uniform(0.0, 14.0);
                ped.script.span = 11.0;
                w.actors.push_back(ped);
            }
            break;
        }
        case ScenarioKind::IntersectionTurn: {
            const double xc = 60.0 + rng.uniform(0.0, 25.0);
            const bool left = rng.uniform() < 0.5;
            const double side = left ? 1.0 : -1.0;
            const double leg = 60.0 + rng.uniform(0.0, 20.0);
            w.lanes.push_back({{-20.0, 0.0}, {xc + 2.0, 0.0}, 4.0});
            w.lanes.push_back({{xc, -6.0 * side}, {xc, side * (leg + 20.0)}, 4.0});
            w.route = {{0, 0}, {xc, 0}, {xc, side * leg}};
            const double s_corner = xc;
            w.command_zones.push_back(
                {s_corner - 25.0, s_corner + 10.0, left ? Command::TurnLeft : Command::TurnRight});
            if (rng.uniform() < 0.5)
                w.actors.push_back(make_obstacle({xc + 6.0, -6.0 * side}));
            break;
        }
        case ScenarioKind::LaneChange: {
            const double len = 170.0 + rng.uniform(0.0, 40.0);
            const bool to_left = rng.uniform() < 0.7;
            const double lane_y = to_left ? 3.5 : -3.5;
            w.lanes.push_back({{-20.0, 0.0}, {len + 40.0, 0.0}, 4.0});
            w.lanes.push_back({{-20.0, lane_y}, {len + 40.0, lane_y}, 4.0});
            const double x_obs = 60.0 + rng.uniform(0.0, 30.0);
            Actor blocker = make_vehicle({x_obs, 0.0}, 0.0);  // parked in the ego lane
            w.actors.push_back(blocker);
            w.route = {{0, 0}, {x_obs - 30.0, 0.0}, {x_obs - 8.0, lane_y}, {len, lane_y}};
            const double s_change = x_obs - 30.0;
            w.command_zones.push_back({s_change - 5.0, s_change + 25.0,
                                       to_left ? Command::ChangeLeft : Command::ChangeRight});
            break;
        }
        case ScenarioKind::DenseTraffic: {
            const double len = 150.0 + rng.uniform(0.0, 30.0);
            add_straight_road(w, -20.0, len + 40.0, true);
            w.route = {{0, 0}, {len * 0.5, 0}, {len, 0}};
            // slow lead traffic in the ego lane (all within 50 m of the start)
            double x = 15.0 + rng.uniform(0.0, 5.0);
            for (int i = 0; i < 3; ++i) {
                Actor v = make_vehicle({x, 0.0}, 0.0);
                v.script = {ActorScript::Type::Cruise, {1, 0}, 1.8 + rng.uniform(0.0, 1.0)};
                w.actors.push_back(v);
                x += 10.0 + rng.uniform(0.0, 4.0);
            }
            // adjacent-lane traffic
            for (int i = 0; i < 2; ++i) {
                Actor v = make_vehicle({22.0 + 14.0 * i + rng.uniform(0.0, 6.0), 3.5}, 0.0);
                v.script = {ActorScript::Type::Cruise, {1, 0}, 2.5 + rng.uniform(0.0, 1.0)};
                w.actors.push_back(v);
            }
            // crossing pedestrians
            const std::size_t peds = 2 + rng.index(2);
            for (std::size_t i = 0; i < peds; ++i) {
                const double px = 30.0 + rng.uniform(0.0, 70.0);
                const bool from_right = rng.uniform() < 0.5;
                Actor ped = make_pedestrian({px, from_right ? -5.5 : 5.5});
                ped.script.type = ActorScript::Type::Cross;
                ped.script.dir = {0.0, from_right ? 1.0 : -1.0};
                ped.script.speed = 1.0 + rng.uniform(0.0, 0.5);
                ped.script.start_time = 5.0 + rng.uniform(0.0, 30.0);
                ped.script.span = 11.0;
                w.actors.push_back(ped);
            }
            // roadside obstacle
            w.actors.push_back(make_obstacle({30.0 + rng.uniform(0.0, 15.0), -5.8}));
            break;
        }
    }

    const double len = route_length(w.route);
    // generous budget: the rate cap makes the first 90 m slow
    w.timeout = 60.0 + len / (cfg.cruise_speed * 0.45);
    return w;
}

}  // namespace deskdrive
