#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "moca/core/rng.hpp"
#include "moca/flow.hpp"
#include "moca/scene.hpp"

namespace moca {

enum class EditType { style, background, object, motion, multi_spatial, multi_motion };
inline constexpr int kNumEditTypes = 6;

const char* edit_type_word(EditType t);
EditType edit_type_from_word(const std::string& w);
// True for motion and multi-motion: edits where the sampler drops the
// source-flow conditioning.
bool is_motion_edit(EditType t);

struct EditTaskRecord {
    std::string id;
    std::string dataset;  // LOVEU-TGVE | Dreamix | Custom | Synthetic
    std::string video;    // path relative to the manifest file
    std::string source_prompt;
    std::string edit_prompt;
    EditType edit_type = EditType::style;
};

struct Manifest {
    std::vector<EditTaskRecord> records;
    bool faces_filtered = false;
};

// One JSON object per line with fields exactly (id, dataset, video,
// source_prompt, edit_prompt, edit_type); an optional leading header object
// {"faces_filtered": bool}. Schema violations report the line number;
// duplicate ids are rejected. Video paths are not opened here — fixture
// manifests carry placeholders.
Manifest load_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& manifest);

struct DatasetStats {
    struct Row {
        std::array<int64_t, kNumEditTypes> by_type{};
        int64_t total = 0;
        int64_t unique_videos = 0;
        double avg_edits_per_video = 0.0;
    };
    std::map<std::string, Row> by_dataset;
    Row overall;

    int64_t count(const std::string& dataset, EditType t) const;
};

DatasetStats compute_stats(const std::vector<EditTaskRecord>& records);

// SceneSpec <-> JSON sidecar.
std::string scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const std::string& text);

// Random valid source scene: plain style, distinct colors that stay
// distinguishable under grayscale, moving at speed 1-3, placed so the shape
// never leaves the frame.
SceneSpec sample_scene(Rng& rng, int t, int h, int w);

// Derives the edited scene for one task: recolors, restyles, or revectors the
// source spec per the edit type. Deterministic in rng.
SceneSpec derive_edit(const SceneSpec& source, EditType type, int t, int h, int w, Rng& rng);

// Writes, under out_dir: manifest.jsonl (n_scenes x 6 tasks), and per scene a
// source clip (8 frames, 64x64), its analytic flow, a SceneSpec sidecar, and
// a ground-truth edited clip + sidecar per edit type. Bitwise deterministic
// under seed for any jobs count.
void generate_synthetic_benchmark(const std::string& out_dir, int n_scenes, uint64_t seed,
                                  int jobs = 1);

struct VideoAttributes {
    ColorName shape_color = ColorName::black;
    ColorName bg_color = ColorName::white;
    StyleKind style = StyleKind::plain;
    double vx = 0.0, vy = 0.0;                      // mean centroid step, px/frame
    std::vector<std::array<double, 2>> centroids;   // per-frame foreground centroid (x, y)
};

// Classifies every pixel against the 24 styled palette colors (8 colors x 3
// styles, ties -> plain), takes the modal class as background, and reads the
// moving shape off the rest: modal foreground class + per-frame centroids.
// Throws runtime_failure when a frame has no foreground.
VideoAttributes extract_attributes(const VideoTensor& video);

// Flow by foreground-centroid differencing: frame t's flow is the centroid
// step to t+1 painted over frame t's foreground, zero on background, last
// frame duplicated. Exact on rendered scenes.
class CentroidFlowEstimator : public FlowEstimator {
  public:
    FlowField estimate(const VideoTensor& video) override;
};

}  // namespace moca
