#pragma once

// Small 2D helpers shared by the planner, controller and simulator.
// Convention throughout: x forward (m), y left (m), heading CCW from +x (rad).

#include <cmath>
#include <vector>

namespace deskdrive {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::hypot(x, y); }
    bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

inline Vec2 rotate(Vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// world point -> frame of a pose at `origin` with `heading`
inline Vec2 world_to_frame(Vec2 p, Vec2 origin, double heading) {
    return rotate(p - origin, -heading);
}
inline Vec2 frame_to_world(Vec2 p, Vec2 origin, double heading) {
    return origin + rotate(p, heading);
}

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

// K ego-frame points ordered from the target point back to the ego position
// (index 0 nearest the goal).
using WaypointPlan = std::vector<Vec2>;
using GoalPoint = Vec2;

}  // namespace deskdrive
