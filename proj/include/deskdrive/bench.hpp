#pragma once

// Leaderboard-style scoring: per-route driving score as completion times the
// product of per-event penalties, aggregate report with the standard metric
// rows, CSV/event-log/SVG emission.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deskdrive/config.hpp"
#include "deskdrive/sim/episode.hpp"

namespace deskdrive {

struct RouteResult {
    std::string scenario;
    std::uint64_t seed = 0;
    double completion = 0.0;  // percent
    std::vector<InfractionEvent> events;
    double duration = 0.0;  // s
    double km = 0.0;
    std::vector<Vec2> path;       // ego trajectory for plotting
    std::vector<Vec2> route;      // route key points for plotting
};

inline RouteResult route_result_from_episode(const EpisodeResult& e,
                                             const std::vector<Vec2>& route) {
    RouteResult r;
    r.scenario = e.scenario;
    r.seed = e.seed;
    r.completion = e.completion;
    r.events = e.events;
    r.duration = e.duration;
    r.km = e.km;
    r.path = e.path;
    r.route = route;
    return r;
}

// multiplicative penalty per event kind; episode-ending kinds carry no extra
// multiplier because they already cap completion
inline double infraction_penalty(InfractionKind kind, const RunConfig& cfg) {
    switch (kind) {
        case InfractionKind::CollisionPedestrian: return cfg.penalty_pedestrian;
        case InfractionKind::CollisionVehicle: return cfg.penalty_vehicle;
        case InfractionKind::CollisionLayout: return cfg.penalty_layout;
        case InfractionKind::OffRoad: return 0.7;
        case InfractionKind::RouteDeviation: return 1.0;
        case InfractionKind::Blocked: return 1.0;
        case InfractionKind::Timeout: return 1.0;
    }
    throw std::invalid_argument("infraction_penalty: unknown event kind");
}

inline double penalty_product(const std::vector<InfractionEvent>& events, const RunConfig& cfg) {
    double p = 1.0;
    for (const InfractionEvent& e : events) p *= infraction_penalty(e.kind, cfg);
    return p;
}

// DS = completion x product of penalties
inline double score_route(const RouteResult& r, const RunConfig& cfg) {
    require(r.completion >= 0.0 && r.completion <= 100.0, "score_route: completion out of range");
    return r.completion * penalty_product(r.events, cfg);
}

struct BenchmarkReport {
    std::vector<RouteResult> routes;
    double driving_score = 0.0;      // mean of per-route driving scores
    double route_completion = 0.0;   // mean completion
    double infraction_penalty = 0.0; // mean per-route penalty product
    double total_km = 0.0;
    std::map<std::string, double> rate_per_km;  // per infraction kind
};

inline BenchmarkReport aggregate_report(std::vector<RouteResult> routes, const RunConfig& cfg) {
    require(!routes.empty(), "aggregate_report: no routes");
    BenchmarkReport rep;
    rep.routes = std::move(routes);
    std::map<std::string, std::size_t> counts;
    for (InfractionKind k :
         {InfractionKind::CollisionPedestrian, InfractionKind::CollisionVehicle,
          InfractionKind::CollisionLayout, InfractionKind::OffRoad,
          InfractionKind::RouteDeviation, InfractionKind::Blocked, InfractionKind::Timeout})
        counts[infraction_name(k)] = 0;
    for (const RouteResult& r : rep.routes) {
        rep.driving_score += score_route(r, cfg);
        rep.route_completion += r.completion;
        rep.infraction_penalty += penalty_product(r.events, cfg);
        rep.total_km += r.km;
        for (const InfractionEvent& e : r.events) counts[infraction_name(e.kind)] += 1;
    }
    const auto n = static_cast<double>(rep.routes.size());
    rep.driving_score /= n;
    rep.route_completion /= n;
    rep.infraction_penalty /= n;
    for (const auto& [kind, c] : counts)
        rep.rate_per_km[kind] =
            rep.total_km > 0.0 ? static_cast<double>(c) / rep.total_km : 0.0;
    return rep;
}

inline BenchmarkReport run_benchmark(Agent& agent, const std::vector<ScenarioSpec>& suite,
                                     const RunConfig& cfg) {
    require(!suite.empty(), "run_benchmark: empty scenario suite");
    std::vector<RouteResult> routes;
    routes.reserve(suite.size());
    for (const ScenarioSpec& spec : suite) {
        const WorldState w0 = make_scenario(spec, cfg);
        EpisodeResult e = run_episode(agent, spec, cfg);
        routes.push_back(route_result_from_episode(e, w0.route));
    }
    return aggregate_report(std::move(routes), cfg);
}

// ---------------------------------------------------------------------------
// emission: CSV metrics table, event log, one SVG per route

// fixed header rows; red light / stop sign are zero-filled placeholders (the
// world has no traffic lights) so the table keeps the standard shape
inline std::vector<std::pair<std::string, double>> report_rows(const BenchmarkReport& rep) {
    return {
        {"Driving score", rep.driving_score},
        {"Route completion", rep.route_completion},
        {"Infraction penalty", rep.infraction_penalty},
        {"Collisions pedestrians", rep.rate_per_km.at("collision-pedestrian")},
        {"Collisions vehicles", rep.rate_per_km.at("collision-vehicle")},
        {"Collisions layout", rep.rate_per_km.at("collision-layout")},
        {"Red light infractions", 0.0},
        {"Stop sign infractions", 0.0},
        {"Off-road infractions", rep.rate_per_km.at("off-road")},
        {"Route deviations", rep.rate_per_km.at("route-deviation")},
        {"Route timeouts", rep.rate_per_km.at("timeout")},
        {"Agent blocked", rep.rate_per_km.at("blocked")},
    };
}

inline void write_metrics_csv(const BenchmarkReport& rep, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open metrics table for writing: " + path);
    f.precision(17);
    f << "metric,value\n";
    for (const auto& [name, value] : report_rows(rep)) f << name << "," << value << "\n";
    require(f.good(), "metrics write failed: " + path);
}

inline std::vector<std::pair<std::string, double>> read_metrics_csv(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "cannot open metrics table: " + path);
    std::string line;
    std::getline(f, line);
    require(line == "metric,value", "bad metrics header in " + path);
    std::vector<std::pair<std::string, double>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        require(comma != std::string::npos, "malformed metrics row: " + line);
        rows.emplace_back(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return rows;
}

inline void write_event_log(const BenchmarkReport& rep, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "cannot open event log for writing: " + path);
    f.precision(17);
    for (const RouteResult& r : rep.routes)
        for (const InfractionEvent& e : r.events)
            f << r.scenario << " " << r.seed << " " << infraction_name(e.kind) << " " << e.time
              << " " << e.position.x << " " << e.position.y << "\n";
    require(f.good(), "event log write failed: " + path);
}

// trajectory plot: route polyline (gray), ego path (blue), one red marker per
// infraction event
inline void write_route_svg(const RouteResult& r, const std::string& path) {
    double min_x = 1e18, min_y = 1e18, max_x = -1e18, max_y = -1e18;
    auto grow = [&](Vec2 p) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    };
    for (Vec2 p : r.route) grow(p);
    for (Vec2 p : r.path) grow(p);
    for (const auto& e : r.events) grow(e.position);
    const double margin = 5.0;
    min_x -= margin, min_y -= margin, max_x += margin, max_y += margin;
    const double w = 640.0, h = 360.0;
    const double sx = w / (max_x - min_x), sy = h / (max_y - min_y);
    const double sc = std::min(sx, sy);
    // world y (left) points up in the plot
    auto px = [&](Vec2 p) { return (p.x - min_x) * sc; };
    auto py = [&](Vec2 p) { return h - (p.y - min_y) * sc; };

    std::ofstream f(path);
    require(f.good(), "cannot open plot for writing: " + path);
    f.precision(6);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto polyline = [&](const std::vector<Vec2>& pts, const char* stroke, double width) {
        if (pts.size() < 2) return;
        f << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << width
          << "\" points=\"";
        for (Vec2 p : pts) f << px(p) << "," << py(p) << " ";
        f << "\"/>\n";
    };
    polyline(r.route, "#999999", 2.0);
    polyline(r.path, "#1f77b4", 1.5);
    for (const InfractionEvent& e : r.events)
        f << "<circle cx=\"" << px(e.position) << "\" cy=\"" << py(e.position)
          << "\" r=\"5\" fill=\"#d62728\"><title>" << infraction_name(e.kind) << " t="
          << e.time << "</title></circle>\n";
    f << "<text x=\"8\" y=\"16\" font-size=\"13\">" << r.scenario << " seed " << r.seed
      << " completion " << r.completion << "%</text>\n";
    f << "</svg>\n";
    require(f.good(), "plot write failed: " + path);
}

// metrics.csv + events.log + one SVG per route, under `dir`
inline void emit_report(const BenchmarkReport& rep, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    require(!ec && std::filesystem::is_directory(dir), "cannot create report directory: " + dir);
    write_metrics_csv(rep, dir + "/metrics.csv");
    write_event_log(rep, dir + "/events.log");
    for (const RouteResult& r : rep.routes)
        write_route_svg(r, dir + "/route_" + r.scenario + "_" + std::to_string(r.seed) + ".svg");
}

}  // namespace deskdrive
