#pragma once

#include "moca/codec.hpp"
#include "moca/scene.hpp"

namespace moca {

// Per-frame motion field in pixels/frame, shape T x 2 x H x W (u = channel 0,
// v = channel 1). Entry t is the flow from frame t to t+1; the last entry
// duplicates the previous one so the clip stays length-T.
struct FlowField {
    Tensor vectors;

    int64_t t() const { return vectors.dim(0); }
    int64_t h() const { return vectors.dim(2); }
    int64_t w() const { return vectors.dim(3); }
};

// Seam for flow extraction from pixels (the full-scale system would put a
// learned estimator here).
struct FlowEstimator {
    virtual ~FlowEstimator() = default;
    virtual FlowField estimate(const VideoTensor& video) = 0;
};

// HSV wheel encoding: hue = flow angle, saturation = |flow| / max |flow| over
// the whole clip, value = 1. All-zero clips come out pure white.
VideoTensor flow_to_rgb(const FlowField& flow);

// Mean of sqrt(u^2 + v^2) over all T*H*W positions (the scalar c_M input).
double avg_flow_magnitude(const FlowField& flow);

// Ground-truth flow of a rendered scene: the scene velocity on the shape's
// support at each frame, zero on the static background.
FlowField synthetic_flow(const SceneSpec& scene, int t, int h, int w);

}  // namespace moca
