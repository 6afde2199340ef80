#pragma once

#include <string>
#include <vector>

#include "moca/benchmark.hpp"
#include "moca/flow.hpp"
#include "moca/guidance.hpp"

namespace moca {

// One training item: pixel clip, its prompt, and the motion field used for
// conditioning.
struct TrainExample {
    VideoTensor video;
    std::string prompt;
    FlowField flow;
};

// In-memory training set. Clips are small enough at this scale to hold
// decoded; loading parallelizes across scenes, access is read-only.
class ClipCorpus {
  public:
    ClipCorpus() = default;
    explicit ClipCorpus(std::vector<TrainExample> items) : items_(std::move(items)) {}

    // Reads every scenes/*/source clip of a generated benchmark directory,
    // with prompts from the scene sidecars and flow from flow.bin.
    static ClipCorpus from_benchmark(const std::string& dir, int jobs = 1);

    // Renders fresh scenes directly, no files involved (8 frames, 64x64).
    static ClipCorpus synthetic(int n_clips, uint64_t seed);

    int64_t size() const { return static_cast<int64_t>(items_.size()); }
    const TrainExample& at(int64_t i) const { return items_[static_cast<size_t>(i)]; }

  private:
    std::vector<TrainExample> items_;
};

struct TrainConfig {
    DenoiserConfig model;
    CodecConfig codec;
    DropoutPolicy dropout;
    ScheduleBase schedule_base = ScheduleBase::linear;
    int batch_size = 16;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 1.0;
    uint64_t seed = 0;

    void validate() const;
};

// Owns the model, optimizer moments and rng stream of one training run.
// Deterministic: a fixed (config, corpus) pair yields a bitwise-identical
// loss sequence, and save/load resumes the exact stream.
class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    // One optimizer step on a random batch; returns the MSE loss. Throws
    // runtime_failure before touching parameters when the loss is not finite.
    double step(const ClipCorpus& corpus);

    int64_t steps_done() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    Denoiser& model() { return den_; }
    const Denoiser& model() const { return den_; }
    const NoiseSchedule& schedule() const { return sched_; }

    // Single-file checkpoint: versioned header, config + rng as JSON, then
    // named tensors (parameters and Adam moments).
    void save(const std::string& path) const;
    static Trainer load(const std::string& path);

  private:
    TrainConfig cfg_;
    Denoiser den_;
    NoiseSchedule sched_;
    Rng rng_;
    int64_t step_ = 0;
    std::vector<Tensor> adam_m_, adam_v_;
};

struct EditRequest {
    VideoTensor source;
    std::string source_prompt;
    std::string edit_prompt;
    EditType type = EditType::object;
    GuidanceScales scales;
    SamplerConfig sampler;
    uint64_t seed = 0;
};

// Pluggable first-frame editing step (the full-scale system would put P2P or
// SDEdit here).
struct FirstFrameEditor {
    virtual ~FirstFrameEditor() = default;
    // frame is [3, H, W] in [0,1]; the result must keep shape and range.
    virtual Tensor edit(const Tensor& frame, const std::string& source_prompt,
                        const std::string& edit_prompt, EditType type) = 0;
};

struct IdentityEditor : FirstFrameEditor {
    Tensor edit(const Tensor& frame, const std::string&, const std::string&, EditType) override {
        return frame;
    }
};

// Analytic editor for synthetic scenes: parses the edit prompt and re-renders
// frame 0 with the prompted colors/style, exact to the pixel. Motion-only
// edits keep the source frame untouched.
class RecolorOracleEditor : public FirstFrameEditor {
  public:
    explicit RecolorOracleEditor(SceneSpec source_scene) : scene_(source_scene) {}
    Tensor edit(const Tensor& frame, const std::string& source_prompt,
                const std::string& edit_prompt, EditType type) override;

  private:
    SceneSpec scene_;
};

struct EditStats {
    bool motion_conditioned = false;
    double magnitude = 0.0;
    SampleStats sampling;
};

// First-frame edit -> conditional animation. Spatial edits estimate the source
// flow and condition on it; motion edits never touch the estimator and sample
// with a null motion slot and s_motion = 0.
VideoTensor moca_edit(const EditRequest& req, const Denoiser& den, const NoiseSchedule& sched,
                      const CodecConfig& codec, FlowEstimator* estimator, FirstFrameEditor& editor,
                      EditStats* stats = nullptr);

}  // namespace moca
