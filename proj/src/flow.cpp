#include "moca/flow.hpp"

#include <cmath>

#include "moca/core/error.hpp"

namespace moca {

namespace {

// Standard HSV -> RGB with h in [0, 360), s and v in [0,1].
std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
    double c = v * s;
    double hp = h / 60.0;
    double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else             { r = c; b = x; }
    double m = v - c;
    return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

}  // namespace

VideoTensor flow_to_rgb(const FlowField& flow) {
    const int64_t T = flow.t(), H = flow.h(), W = flow.w();
    for (float x : flow.vectors.data) {
        if (!std::isfinite(x)) throw runtime_failure("flow_to_rgb: non-finite flow");
    }
    double maxmag = 0.0;
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double u = flow.vectors.at4(t, 0, y, x), v = flow.vectors.at4(t, 1, y, x);
                maxmag = std::max(maxmag, std::hypot(u, v));
            }

    VideoTensor out;
    out.frames = Tensor({T, 3, H, W});
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                double u = flow.vectors.at4(t, 0, y, x), v = flow.vectors.at4(t, 1, y, x);
                double mag = std::hypot(u, v);
                double sat = maxmag > 0.0 ? mag / maxmag : 0.0;
                double ang = std::atan2(v, u);  // [-pi, pi]
                double hue = ang * (180.0 / M_PI);
                if (hue < 0.0) hue += 360.0;
                if (hue >= 360.0) hue = 0.0;
                auto rgb = hsv_to_rgb(hue, sat, 1.0);
                for (int64_t c = 0; c < 3; ++c)
                    out.frames.at4(t, c, y, x) = rgb[static_cast<size_t>(c)];
            }
        }
    }
    return out;
}

double avg_flow_magnitude(const FlowField& flow) {
    const int64_t T = flow.t(), H = flow.h(), W = flow.w();
    double sum = 0.0;
    for (int64_t t = 0; t < T; ++t)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                sum += std::hypot(flow.vectors.at4(t, 0, y, x), flow.vectors.at4(t, 1, y, x));
    return sum / static_cast<double>(T * H * W);
}

FlowField synthetic_flow(const SceneSpec& scene, int t, int h, int w) {
    scene.validate(t, h, w);
    FlowField f;
    f.vectors = Tensor({t, 2, h, w});
    // entries 0..t-2 carry frame->next-frame motion; the last duplicates t-2
    for (int i = 0; i + 1 < t; ++i) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (in_shape(scene, i, x, y)) {
                    f.vectors.at4(i, 0, y, x) = static_cast<float>(scene.vx);
                    f.vectors.at4(i, 1, y, x) = static_cast<float>(scene.vy);
                }
            }
        }
    }
    if (t >= 2) {
        int64_t plane = 2LL * h * w;
        for (int64_t i = 0; i < plane; ++i)
            f.vectors[(t - 1) * plane + i] = f.vectors[(t - 2) * plane + i];
    }
    return f;
}

}  // namespace moca
