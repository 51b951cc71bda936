#pragma once

// Run configuration: one human-editable key=value file, every key validated,
// unknown keys rejected. Defaults are the desk-scale setup.

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "deskdrive/tensor.hpp"

namespace deskdrive {

struct RunConfig {
    std::uint64_t seed = 0;

    // model dims
    std::size_t image_size = 64;        // H0 == W0, divisible by 32
    std::size_t backbone_channels = 64; // c
    std::size_t model_dim = 32;         // d
    std::size_t heads = 4;
    std::size_t encoder_layers = 2;
    std::size_t decoder_layers = 2;
    std::size_t num_queries = 16;       // N
    std::size_t fused_dim = 64;         // c_f
    std::size_t gru_hidden = 64;
    std::size_t waypoints = 4;          // K

    // control
    double lat_kp = 1.25, lat_ki = 0.75, lat_kd = 0.3;
    std::size_t lat_n = 30;
    double lon_kp = 5.0, lon_ki = 0.5, lon_kd = 1.0;
    std::size_t lon_n = 40;
    double max_throttle = 0.75;
    double max_accel = 0.2;             // m/s^2 rate cap, applied in the simulator

    // simulator
    double sim_dt = 0.05;               // s
    double wheelbase = 2.5;             // m
    double max_steer_deg = 35.0;
    double cruise_speed = 6.0;          // m/s
    double waypoint_dt = 0.5;           // s between consecutive plan points
    double control_hz = 10.0;           // network replan rate for learned agents

    // training
    double lr = 1e-4;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    std::size_t dagger_rounds = 3;
    std::size_t offline_rounds = 1;
    double sample_rate = 2.0;           // Hz

    // detector pretraining
    std::size_t pretrain_images = 320;
    std::size_t pretrain_steps = 3000;
    double pretrain_lr = 1e-3;
    std::size_t pretrain_batch = 8;

    // scoring penalties (leaderboard-convention defaults)
    double penalty_pedestrian = 0.50;
    double penalty_vehicle = 0.60;
    double penalty_layout = 0.65;

    // suite
    std::vector<std::string> suite = {"follow", "lead-vehicle-stop", "pedestrian-crossing",
                                      "intersection-turn", "lane-change", "dense-traffic"};
    std::size_t suite_seeds = 5;

    std::string out_dir = "out";

    void validate() const {
        require(image_size % 32 == 0 && image_size >= 32, "image_size must be a positive multiple of 32");
        require(backbone_channels >= 8 && backbone_channels % 8 == 0, "backbone_channels must be a multiple of 8");
        require(model_dim % 2 == 0, "model_dim must be even");
        require(model_dim % heads == 0, "model_dim must divide evenly over heads");
        require(num_queries >= 1, "num_queries must be >= 1");
        require(waypoints >= 2, "waypoints must be >= 2");
        require(gru_hidden >= 2 && fused_dim >= 2, "hidden widths must be >= 2");
        require(sim_dt > 0.0 && sim_dt <= 0.1, "sim_dt must be in (0, 0.1]");
        require(wheelbase > 0.0 && max_steer_deg > 0.0 && max_steer_deg < 90.0, "bad vehicle geometry");
        require(cruise_speed > 0.0 && waypoint_dt > 0.0, "bad speed configuration");
        require(lr >= 0.0 && pretrain_lr >= 0.0, "learning rates must be >= 0");
        require(batch_size >= 1 && epochs >= 1, "bad training configuration");
        require(max_throttle > 0.0 && max_throttle <= 1.0, "max_throttle must be in (0,1]");
        require(max_accel > 0.0, "max_accel must be positive");
        require(lat_n >= 1 && lon_n >= 1, "pid window must be >= 1");
        require(sample_rate > 0.0, "sample_rate must be positive");
        const double steps_per_sample = 1.0 / (sample_rate * sim_dt);
        require(std::abs(steps_per_sample - std::round(steps_per_sample)) < 1e-9,
                "sample_rate must divide the simulation rate");
        require(penalty_pedestrian > 0.0 && penalty_vehicle > 0.0 && penalty_layout > 0.0,
                "penalties must be positive");
        require(!suite.empty(), "scenario suite must not be empty");
        require(suite_seeds >= 1, "suite_seeds must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

// Parse `key = value` lines; '#' starts a comment. Throws with the offending
// key on any unknown or malformed entry.
inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream f(path);
    require(f.good(), "cannot open config file: " + path);
    RunConfig cfg = base;

    std::map<std::string, std::function<void(const std::string&)>> setters;
    auto set_u64 = [](std::uint64_t& dst) {
        return [&dst](const std::string& v) { dst = std::stoull(v); };
    };
    auto set_sz = [](std::size_t& dst) {
        return [&dst](const std::string& v) { dst = std::stoul(v); };
    };
    auto set_d = [](double& dst) {
        return [&dst](const std::string& v) { dst = std::stod(v); };
    };
    setters["seed"] = set_u64(cfg.seed);
    setters["image_size"] = set_sz(cfg.image_size);
    setters["backbone_channels"] = set_sz(cfg.backbone_channels);
    setters["model_dim"] = set_sz(cfg.model_dim);
    setters["heads"] = set_sz(cfg.heads);
    setters["encoder_layers"] = set_sz(cfg.encoder_layers);
    setters["decoder_layers"] = set_sz(cfg.decoder_layers);
    setters["num_queries"] = set_sz(cfg.num_queries);
    setters["fused_dim"] = set_sz(cfg.fused_dim);
    setters["gru_hidden"] = set_sz(cfg.gru_hidden);
    setters["waypoints"] = set_sz(cfg.waypoints);
    setters["lat_kp"] = set_d(cfg.lat_kp);
    setters["lat_ki"] = set_d(cfg.lat_ki);
    setters["lat_kd"] = set_d(cfg.lat_kd);
    setters["lat_n"] = set_sz(cfg.lat_n);
    setters["lon_kp"] = set_d(cfg.lon_kp);
    setters["lon_ki"] = set_d(cfg.lon_ki);
    setters["lon_kd"] = set_d(cfg.lon_kd);
    setters["lon_n"] = set_sz(cfg.lon_n);
    setters["max_throttle"] = set_d(cfg.max_throttle);
    setters["max_accel"] = set_d(cfg.max_accel);
    setters["sim_dt"] = set_d(cfg.sim_dt);
    setters["wheelbase"] = set_d(cfg.wheelbase);
    setters["max_steer_deg"] = set_d(cfg.max_steer_deg);
    setters["cruise_speed"] = set_d(cfg.cruise_speed);
    setters["waypoint_dt"] = set_d(cfg.waypoint_dt);
    setters["control_hz"] = set_d(cfg.control_hz);
    setters["lr"] = set_d(cfg.lr);
    setters["epochs"] = set_sz(cfg.epochs);
    setters["batch_size"] = set_sz(cfg.batch_size);
    setters["dagger_rounds"] = set_sz(cfg.dagger_rounds);
    setters["offline_rounds"] = set_sz(cfg.offline_rounds);
    setters["sample_rate"] = set_d(cfg.sample_rate);
    setters["pretrain_images"] = set_sz(cfg.pretrain_images);
    setters["pretrain_steps"] = set_sz(cfg.pretrain_steps);
    setters["pretrain_lr"] = set_d(cfg.pretrain_lr);
    setters["pretrain_batch"] = set_sz(cfg.pretrain_batch);
    setters["penalty_pedestrian"] = set_d(cfg.penalty_pedestrian);
    setters["penalty_vehicle"] = set_d(cfg.penalty_vehicle);
    setters["penalty_layout"] = set_d(cfg.penalty_layout);
    setters["suite_seeds"] = set_sz(cfg.suite_seeds);
    setters["out_dir"] = [&cfg](const std::string& v) { cfg.out_dir = v; };
    setters["suite"] = [&cfg](const std::string& v) {
        cfg.suite.clear();
        std::istringstream is(v);
        std::string item;
        while (std::getline(is, item, ',')) {
            item = detail::trim(item);
            if (!item.empty()) cfg.suite.push_back(item);
        }
    };

    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos,
                path + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        auto it = setters.find(key);
        require(it != setters.end(), path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        try {
            it->second(value);
        } catch (const std::invalid_argument&) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": bad value for '" +
                                        key + "': " + value);
        }
    }
    cfg.validate();
    return cfg;
}

inline std::string config_to_string(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "seed = " << c.seed << "\n";
    os << "image_size = " << c.image_size << "\n";
    os << "backbone_channels = " << c.backbone_channels << "\n";
    os << "model_dim = " << c.model_dim << "\n";
    os << "heads = " << c.heads << "\n";
    os << "encoder_layers = " << c.encoder_layers << "\n";
    os << "decoder_layers = " << c.decoder_layers << "\n";
    os << "num_queries = " << c.num_queries << "\n";
    os << "fused_dim = " << c.fused_dim << "\n";
    os << "gru_hidden = " << c.gru_hidden << "\n";
    os << "waypoints = " << c.waypoints << "\n";
    os << "lat_kp = " << c.lat_kp << "\nlat_ki = " << c.lat_ki << "\nlat_kd = " << c.lat_kd
       << "\nlat_n = " << c.lat_n << "\n";
    os << "lon_kp = " << c.lon_kp << "\nlon_ki = " << c.lon_ki << "\nlon_kd = " << c.lon_kd
       << "\nlon_n = " << c.lon_n << "\n";
    os << "max_throttle = " << c.max_throttle << "\nmax_accel = " << c.max_accel << "\n";
    os << "sim_dt = " << c.sim_dt << "\nwheelbase = " << c.wheelbase
       << "\nmax_steer_deg = " << c.max_steer_deg << "\ncruise_speed = " << c.cruise_speed
       << "\nwaypoint_dt = " << c.waypoint_dt << "\ncontrol_hz = " << c.control_hz << "\n";
    os << "lr = " << c.lr << "\nepochs = " << c.epochs << "\nbatch_size = " << c.batch_size
       << "\ndagger_rounds = " << c.dagger_rounds << "\noffline_rounds = " << c.offline_rounds
       << "\nsample_rate = " << c.sample_rate << "\n";
    os << "pretrain_images = " << c.pretrain_images << "\npretrain_steps = " << c.pretrain_steps
       << "\npretrain_lr = " << c.pretrain_lr << "\npretrain_batch = " << c.pretrain_batch << "\n";
    os << "penalty_pedestrian = " << c.penalty_pedestrian
       << "\npenalty_vehicle = " << c.penalty_vehicle << "\npenalty_layout = " << c.penalty_layout
       << "\n";
    os << "suite = ";
    for (std::size_t i = 0; i < c.suite.size(); ++i) os << (i ? ", " : "") << c.suite[i];
    os << "\nsuite_seeds = " << c.suite_seeds << "\n";
    os << "out_dir = " << c.out_dir << "\n";
    return os.str();
}

}  // namespace deskdrive
