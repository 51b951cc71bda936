#pragma once

// Schematic front-view rasterizer: a pinhole projection of the ground plane
// (sky, grass, road band, dashed lane boundaries) with actors drawn as
// class-colored axis-aligned rectangles. The ground-truth boxes returned are
// exactly the integer pixel rectangles painted.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "deskdrive/config.hpp"
#include "deskdrive/perception.hpp"
#include "deskdrive/sim/world.hpp"

namespace deskdrive {

struct RenderResult {
    Tensor image;                  // (3, S, S), values in [0, 1]
    std::vector<Detection> truth;  // exact normalized boxes drawn
};

namespace render_detail {

constexpr double kCamHeight = 1.5;      // m above the ground plane
constexpr double kHorizonFrac = 0.4;    // horizon row as a fraction of S
constexpr double kNearClip = 2.0;       // m
constexpr double kFarClip = 60.0;       // m

struct Rgb {
    double r, g, b;
};

inline Rgb class_color(ActorKind k) {
    switch (k) {
        case ActorKind::Vehicle: return {0.85, 0.15, 0.15};
        case ActorKind::Pedestrian: return {0.10, 0.75, 0.20};
        case ActorKind::Obstacle: return {0.90, 0.55, 0.10};
    }
    return {1, 0, 1};
}

inline double actor_height(ActorKind k) {
    switch (k) {
        case ActorKind::Vehicle: return 1.5;
        case ActorKind::Pedestrian: return 1.8;
        case ActorKind::Obstacle: return 1.0;
    }
    return 1.0;
}

inline ObjectClass actor_class(ActorKind k) {
    switch (k) {
        case ActorKind::Vehicle: return ObjectClass::Vehicle;
        case ActorKind::Pedestrian: return ObjectClass::Pedestrian;
        case ActorKind::Obstacle: return ObjectClass::Obstacle;
    }
    return ObjectClass::NoObject;
}

inline void put(Tensor& img, std::size_t r, std::size_t c, Rgb color) {
    const std::size_t s = img.shape[1];
    img.data[0 * s * s + r * s + c] = color.r;
    img.data[1 * s * s + r * s + c] = color.g;
    img.data[2 * s * s + r * s + c] = color.b;
}

}  // namespace render_detail

inline RenderResult render_front_view(const WorldState& w, const RunConfig& cfg) {
    using namespace render_detail;
    const std::size_t s = cfg.image_size;
    const double fs = static_cast<double>(s);
    const double f = fs / 2.0;          // focal length in pixels (90 deg FOV)
    const double horizon = kHorizonFrac * fs;

    RenderResult out;
    out.image = Tensor({3, s, s});
    Tensor& img = out.image;

    const Rgb sky{0.55, 0.75, 0.95};
    const Rgb grass{0.45, 0.62, 0.35};
    const Rgb road{0.33, 0.33, 0.36};
    const Rgb dash{0.95, 0.92, 0.60};

    // ground plane: every pixel below the horizon back-projects to one world
    // point, which is classified as road / boundary dash / grass
    for (std::size_t r = 0; r < s; ++r) {
        const double vc = static_cast<double>(r) + 0.5;
        if (vc <= horizon + 0.5) {
            for (std::size_t c = 0; c < s; ++c) put(img, r, c, sky);
            continue;
        }
        const double depth = f * kCamHeight / (vc - horizon);
        for (std::size_t c = 0; c < s; ++c) {
            const double lateral = (fs / 2.0 - (static_cast<double>(c) + 0.5)) * depth / f;
            const Vec2 world = frame_to_world({depth, lateral}, w.ego.pos, w.ego.heading);
            Rgb color = grass;
            for (const Lane& lane : w.lanes) {
                const Vec2 ab = lane.b - lane.a;
                const double len = ab.norm();
                if (len < 1e-12) continue;
                const double t = clamp(dot(world - lane.a, ab) / (len * len), 0.0, 1.0);
                const Vec2 q = lane.a + ab * t;
                const double d = (world - q).norm();
                if (d <= lane.width * 0.5) {
                    color = road;
                    // dashed boundary lines
                    if (lane.width * 0.5 - d < 0.3 && std::fmod(t * len, 4.0) < 2.0) color = dash;
                }
            }
            put(img, r, c, color);
        }
    }

    // actors, far to near so near ones paint on top
    std::vector<std::pair<double, std::size_t>> order;  // (depth, actor index)
    for (std::size_t i = 0; i < w.actors.size(); ++i) {
        const Vec2 e = world_to_frame(w.actors[i].pos, w.ego.pos, w.ego.heading);
        if (e.x >= kNearClip && e.x <= kFarClip) order.emplace_back(e.x, i);
    }
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::pair<double, Detection>> boxes;  // (depth, box)
    for (const auto& [depth, idx] : order) {
        const Actor& a = w.actors[idx];
        const Vec2 e = world_to_frame(a.pos, w.ego.pos, w.ego.heading);
        const double world_w = 2.0 * a.half_extent.y;
        const double world_h = actor_height(a.kind);
        const double uc = fs / 2.0 - f * e.y / e.x;
        const double v_bottom = horizon + f * kCamHeight / e.x;
        const double sw = f * world_w / e.x;
        const double sh = f * world_h / e.x;

        const auto r0 = static_cast<long>(std::floor(v_bottom - sh));
        const auto r1 = static_cast<long>(std::ceil(v_bottom)) - 1;
        const auto c0 = static_cast<long>(std::floor(uc - sw / 2.0));
        const auto c1 = static_cast<long>(std::ceil(uc + sw / 2.0)) - 1;
        const long cr0 = std::max(r0, 0L), cr1 = std::min(r1, static_cast<long>(s) - 1);
        const long cc0 = std::max(c0, 0L), cc1 = std::min(c1, static_cast<long>(s) - 1);
        if (cr1 < cr0 || cc1 < cc0) continue;
        if ((cr1 - cr0 + 1) * (cc1 - cc0 + 1) < 2) continue;

        const Rgb color = class_color(a.kind);
        for (long r = cr0; r <= cr1; ++r)
            for (long c = cc0; c <= cc1; ++c)
                put(img, static_cast<std::size_t>(r), static_cast<std::size_t>(c), color);

        Detection d;
        d.label = class_to_label(actor_class(a.kind));
        d.box[0] = (static_cast<double>(cc0 + cc1) + 1.0) / (2.0 * fs);  // cx
        d.box[1] = (static_cast<double>(cr0 + cr1) + 1.0) / (2.0 * fs);  // cy
        d.box[2] = static_cast<double>(cc1 - cc0 + 1) / fs;              // w
        d.box[3] = static_cast<double>(cr1 - cr0 + 1) / fs;              // h
        boxes.emplace_back(e.x, d);
    }

    // at most num_queries boxes: keep the nearest
    std::sort(boxes.begin(), boxes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (boxes.size() > cfg.num_queries) boxes.resize(cfg.num_queries);
    for (const auto& [depth, d] : boxes) out.truth.push_back(d);
    return out;
}

}  // namespace deskdrive
