#pragma once

// Waypoint plan -> actuator commands: aim point, desired speed, heading
// angle, and two PID loops (lateral on heading, longitudinal on speed).

#include <deque>
#include <stdexcept>

#include "deskdrive/config.hpp"
#include "deskdrive/geometry.hpp"

namespace deskdrive {

struct ControlAction {
    double steer = 0.0;     // [-1,1], -1 = full left
    double throttle = 0.0;  // [-1, max_throttle], negative = brake
};

// mean of the plan points
inline Vec2 aim_point(const WaypointPlan& plan) {
    require(!plan.empty(), "aim_point: empty plan");
    Vec2 sum{0, 0};
    for (Vec2 w : plan) sum = sum + w;
    return sum * (1.0 / static_cast<double>(plan.size()));
}

// mean consecutive segment length over the waypoint time spacing
inline double desired_speed(const WaypointPlan& plan, double dt) {
    require(plan.size() >= 2, "desired_speed: need at least two waypoints");
    require(dt > 0.0, "desired_speed: dt must be positive");
    double sum = 0.0;
    for (std::size_t k = 1; k < plan.size(); ++k) sum += (plan[k] - plan[k - 1]).norm() / dt;
    return sum / static_cast<double>(plan.size() - 1);
}

// quadrant-correct angle to the aim point; (0,0) is degenerate and maps to 0
inline double heading_angle(Vec2 p, bool* degenerate = nullptr) {
    if (p.x == 0.0 && p.y == 0.0) {
        if (degenerate) *degenerate = true;
        return 0.0;
    }
    if (degenerate) *degenerate = false;
    return std::atan2(p.y, p.x);
}

// out = Kp*e + Ki*mean(window) + Kd*(e - e_prev); the window holds the last
// n errors including the current one
class PidController {
public:
    PidController(double kp, double ki, double kd, std::size_t n)
        : kp_(kp), ki_(ki), kd_(kd), n_(n) {
        require(n >= 1, "pid window must hold at least one error");
    }

    double step(double error, double dt) {
        require(dt > 0.0, "pid step requires dt > 0");
        buffer_.push_back(error);
        if (buffer_.size() > n_) buffer_.pop_front();
        double mean = 0.0;
        for (double e : buffer_) mean += e;
        mean /= static_cast<double>(buffer_.size());
        const double out = kp_ * error + ki_ * mean + kd_ * (error - last_error_);
        last_error_ = error;
        return out;
    }

    void reset() {
        buffer_.clear();
        last_error_ = 0.0;
    }

    std::size_t window_fill() const { return buffer_.size(); }

private:
    double kp_, ki_, kd_;
    std::size_t n_;
    std::deque<double> buffer_;
    double last_error_ = 0.0;
};

// One vehicle's controller pair. Stateful and single-owner.
class VehicleController {
public:
    explicit VehicleController(const RunConfig& cfg)
        : lateral_(cfg.lat_kp, cfg.lat_ki, cfg.lat_kd, cfg.lat_n),
          longitudinal_(cfg.lon_kp, cfg.lon_ki, cfg.lon_kd, cfg.lon_n),
          max_throttle_(cfg.max_throttle), waypoint_dt_(cfg.waypoint_dt) {}

    // steer from the heading to the aim point (left target -> negative
    // steer), throttle from the speed tracking error; a stationary plan
    // forces braking
    ControlAction act(const WaypointPlan& plan, double ego_speed, double dt) {
        require(plan.size() >= 2, "act: plan needs at least two points");
        const Vec2 p = aim_point(plan);
        const double delta = heading_angle(p);
        const double v_des = desired_speed(plan, waypoint_dt_);

        ControlAction a;
        a.steer = clamp(lateral_.step(-delta, dt), -1.0, 1.0);
        a.throttle = clamp(longitudinal_.step(v_des - ego_speed, dt), -1.0, max_throttle_);
        if (v_des < 0.1) a.throttle = clamp(std::min(a.throttle, -0.2), -1.0, 0.0);
        return a;
    }

    void reset() {
        lateral_.reset();
        longitudinal_.reset();
    }

private:
    PidController lateral_;
    PidController longitudinal_;
    double max_throttle_;
    double waypoint_dt_;
};

}  // namespace deskdrive
