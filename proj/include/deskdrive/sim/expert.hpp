#pragma once

// Privileged rule-based expert: pure pursuit along the route polyline with a
// corridor stop rule. It reads simulator ground truth directly and produces
// the same (waypoints, action) interface as the learned agents.

#include <cmath>
#include <utility>

#include "deskdrive/config.hpp"
#include "deskdrive/control.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive {

namespace expert_detail {

constexpr double kStandoff = 7.0;        // stop this far before a blockage, m
constexpr double kApproachDecel = 1.2;   // comfort decel for the speed curve, m/s^2
constexpr double kVehicleClearance = 2.0;   // corridor half-width for vehicles/obstacles, m
constexpr double kPedestrianClearance = 3.2;  // pedestrians get a wider berth, m
constexpr double kTurnWindow = 14.0;     // m of path checked for curvature
constexpr double kTurnSpeed = 2.5;       // m/s through sharp turns
constexpr double kRecoverySpeed = 2.0;   // m/s while off the lane band

// arc distance along the route (from s) to the first actor inside the
// corridor, or +inf. Pedestrians are checked both where they are now and
// where their script will have carried them by the time the ego reaches the
// sampled path point; a purely positional check lets a crossing pedestrian
// step into the corridor after the ego has committed.
inline double corridor_blockage(const WorldState& w, double s, double lookahead,
                                double ego_speed) {
    for (double ds = 0.5; ds <= lookahead; ds += 0.5) {
        const Vec2 p = route_point_at(w.route, s + ds);
        const double t_reach = std::min(ds / std::max(ego_speed, 1.0), 3.0);
        for (const Actor& a : w.actors) {
            const double clearance =
                a.kind == ActorKind::Pedestrian ? kPedestrianClearance : kVehicleClearance;
            if ((a.pos - p).norm() < clearance) return ds;
            if (a.kind == ActorKind::Pedestrian) {
                const Vec2 ahead = a.pos + a.script.dir * (a.speed * t_reach);
                if ((ahead - p).norm() < clearance) return ds;
            }
        }
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace expert_detail

struct ExpertPlan {
    WaypointPlan waypoints;  // K ego-frame points, index 0 nearest the goal
    double target_speed = 0.0;
};

inline ExpertPlan expert_plan(const WorldState& w, const RunConfig& cfg) {
    using namespace expert_detail;
    require(w.route.size() >= 2, "expert: route needs at least two key points");
    const RouteProjection proj = project_onto_route(w.route, w.ego.pos);

    double v = cfg.cruise_speed;
    if (route_turn_within(w.route, proj.s, kTurnWindow) > 0.3) v = std::min(v, kTurnSpeed);
    // off all lanes: slow recovery toward the centerline (the waypoints below
    // already point back onto the path)
    if (proj.lateral > 2.5) v = std::min(v, kRecoverySpeed);

    const double lookahead = 10.0 + w.ego.speed * w.ego.speed / (2.0 * 1.0);
    const double blocked_at = corridor_blockage(w, proj.s, lookahead, w.ego.speed);
    if (std::isfinite(blocked_at)) {
        const double gap = std::max(0.0, blocked_at - kStandoff);
        v = std::min(v, std::sqrt(2.0 * kApproachDecel * gap));
    }

    ExpertPlan plan;
    plan.target_speed = v;
    const double spacing = v * cfg.waypoint_dt;
    const std::size_t k = cfg.waypoints;
    plan.waypoints.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double ds = static_cast<double>(k - i) * spacing;
        plan.waypoints[i] = world_to_frame(route_point_at_extended(w.route, proj.s + ds),
                                           w.ego.pos, w.ego.heading);
    }
    return plan;
}

// full expert step: plan plus the actuator command through the shared
// controller (which is stateful and owned by the caller)
inline std::pair<WaypointPlan, ControlAction> expert_policy(const WorldState& w,
                                                            const RunConfig& cfg,
                                                            VehicleController& ctl, double dt) {
    ExpertPlan p = expert_plan(w, cfg);
    ControlAction a = ctl.act(p.waypoints, w.ego.speed, dt);
    return {std::move(p.waypoints), a};
}

}  // namespace deskdrive
