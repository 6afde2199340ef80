#include "moca/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "moca/io/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace moca {

namespace {

constexpr int kClipT = 8, kClipH = 64, kClipW = 64;

const char* kEditWords[kNumEditTypes] = {"style",  "background",    "object",
                                         "motion", "multi-spatial", "multi-motion"};

const char* kDatasets[] = {"LOVEU-TGVE", "Dreamix", "Custom", "Synthetic"};

bool known_dataset(const std::string& d) {
    for (const char* k : kDatasets)
        if (d == k) return true;
    return false;
}

std::string line_err(const std::string& path, int line, const std::string& what) {
    return path + ":" + std::to_string(line) + ": " + what;
}

}  // namespace

const char* edit_type_word(EditType t) { return kEditWords[static_cast<int>(t)]; }

EditType edit_type_from_word(const std::string& w) {
    for (int i = 0; i < kNumEditTypes; ++i)
        if (w == kEditWords[i]) return static_cast<EditType>(i);
    throw usage_error("unknown edit type '" + w + "'");
}

bool is_motion_edit(EditType t) {
    return t == EditType::motion || t == EditType::multi_motion;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("manifest not found: " + path);
    Manifest out;
    std::set<std::string> seen_ids;
    std::string line;
    int lineno = 0;
    bool first_object = true;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw runtime_failure(line_err(path, lineno, std::string("bad JSON: ") + e.what()));
        }
        if (!j.is_object())
            throw runtime_failure(line_err(path, lineno, "expected a JSON object"));
        if (first_object && j.size() == 1 && j.contains("faces_filtered")) {
            if (!j["faces_filtered"].is_boolean())
                throw runtime_failure(line_err(path, lineno, "faces_filtered must be a boolean"));
            out.faces_filtered = j["faces_filtered"].get<bool>();
            first_object = false;
            continue;
        }
        first_object = false;
        static const char* kFields[] = {"id",            "dataset",     "video",
                                        "source_prompt", "edit_prompt", "edit_type"};
        for (const char* k : kFields) {
            if (!j.contains(k))
                throw runtime_failure(line_err(path, lineno, std::string("missing field '") + k + "'"));
            if (!j[k].is_string())
                throw runtime_failure(line_err(path, lineno, std::string("field '") + k + "' must be a string"));
        }
        if (j.size() != 6)
            for (auto& [k, v] : j.items())
                if (std::find_if(std::begin(kFields), std::end(kFields),
                                 [&](const char* f2) { return k == f2; }) == std::end(kFields))
                    throw runtime_failure(line_err(path, lineno, "unknown field '" + k + "'"));
        EditTaskRecord r;
        r.id = j["id"].get<std::string>();
        r.dataset = j["dataset"].get<std::string>();
        r.video = j["video"].get<std::string>();
        r.source_prompt = j["source_prompt"].get<std::string>();
        r.edit_prompt = j["edit_prompt"].get<std::string>();
        try {
            r.edit_type = edit_type_from_word(j["edit_type"].get<std::string>());
        } catch (const usage_error& e) {
            throw runtime_failure(line_err(path, lineno, std::string("field 'edit_type': ") + e.what()));
        }
        if (r.id.empty()) throw runtime_failure(line_err(path, lineno, "field 'id' is empty"));
        if (!known_dataset(r.dataset))
            throw runtime_failure(line_err(path, lineno, "field 'dataset': unknown dataset '" + r.dataset + "'"));
        if (!seen_ids.insert(r.id).second)
            throw runtime_failure(line_err(path, lineno, "duplicate id '" + r.id + "'"));
        out.records.push_back(std::move(r));
    }
    return out;
}

void write_manifest(const std::string& path, const Manifest& manifest) {
    std::ofstream f(path);
    if (!f) throw runtime_failure("cannot write manifest: " + path);
    f << json{{"faces_filtered", manifest.faces_filtered}}.dump() << "\n";
    for (const auto& r : manifest.records) {
        json j{{"id", r.id},
               {"dataset", r.dataset},
               {"video", r.video},
               {"source_prompt", r.source_prompt},
               {"edit_prompt", r.edit_prompt},
               {"edit_type", edit_type_word(r.edit_type)}};
        f << j.dump() << "\n";
    }
    if (!f) throw runtime_failure("write failed: " + path);
}

int64_t DatasetStats::count(const std::string& dataset, EditType t) const {
    auto it = by_dataset.find(dataset);
    if (it == by_dataset.end()) return 0;
    return it->second.by_type[static_cast<size_t>(t)];
}

DatasetStats compute_stats(const std::vector<EditTaskRecord>& records) {
    DatasetStats stats;
    std::map<std::string, std::set<std::string>> vids;
    std::set<std::string> all_vids;
    for (const auto& r : records) {
        auto& row = stats.by_dataset[r.dataset];
        row.by_type[static_cast<size_t>(r.edit_type)]++;
        row.total++;
        stats.overall.by_type[static_cast<size_t>(r.edit_type)]++;
        stats.overall.total++;
        vids[r.dataset].insert(r.video);
        all_vids.insert(r.dataset + "\x1f" + r.video);
    }
    for (auto& [name, row] : stats.by_dataset) {
        row.unique_videos = static_cast<int64_t>(vids[name].size());
        row.avg_edits_per_video = double(row.total) / double(row.unique_videos);
    }
    stats.overall.unique_videos = static_cast<int64_t>(all_vids.size());
    if (stats.overall.unique_videos > 0)
        stats.overall.avg_edits_per_video =
            double(stats.overall.total) / double(stats.overall.unique_videos);
    return stats;
}

std::string scene_to_json(const SceneSpec& s) {
    json j{{"shape", shape_word(s.shape)},
           {"shape_color", color_word(s.shape_color)},
           {"bg_color", color_word(s.bg_color)},
           {"size", s.size},
           {"x0", s.x0},
           {"y0", s.y0},
           {"vx", s.vx},
           {"vy", s.vy},
           {"style", style_word(s.style)}};
    return j.dump(2);
}

SceneSpec scene_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw runtime_failure(std::string("bad scene JSON: ") + e.what());
    }
    static const char* kStr[] = {"shape", "shape_color", "bg_color", "style"};
    static const char* kInt[] = {"size", "x0", "y0", "vx", "vy"};
    for (const char* k : kStr)
        if (!j.contains(k) || !j[k].is_string())
            throw runtime_failure(std::string("scene JSON: missing string field '") + k + "'");
    for (const char* k : kInt)
        if (!j.contains(k) || !j[k].is_number_integer())
            throw runtime_failure(std::string("scene JSON: missing integer field '") + k + "'");
    SceneSpec s;
    s.shape = shape_from_word(j["shape"].get<std::string>());
    s.shape_color = color_from_word(j["shape_color"].get<std::string>());
    s.bg_color = color_from_word(j["bg_color"].get<std::string>());
    s.size = j["size"].get<int>();
    s.x0 = j["x0"].get<int>();
    s.y0 = j["y0"].get<int>();
    s.vx = j["vx"].get<int>();
    s.vy = j["vy"].get<int>();
    s.style = style_from_word(j["style"].get<std::string>());
    return s;
}

namespace {

// A grayscale render only pins down the style when some region moves off the
// gray fixed points (black and white).
bool style_visible(StyleKind style, ColorName fg, ColorName bg) {
    if (style != StyleKind::grayscale) return true;
    auto fixed = [](ColorName c) { return c == ColorName::black || c == ColorName::white; };
    return !(fixed(fg) && fixed(bg));
}

ColorName random_color_except(Rng& rng, std::initializer_list<ColorName> excluded) {
    for (;;) {
        auto c = static_cast<ColorName>(rng.uniform_int(kNumColors));
        bool bad = false;
        for (ColorName e : excluded) bad = bad || (c == e);
        if (!bad) return c;
    }
}

// First eight Direction values move; `still` is last.
Direction random_moving_direction(Rng& rng) {
    return static_cast<Direction>(rng.uniform_int(8));
}

void rewrite_velocity(SceneSpec& s, const SceneSpec& source, int t, int h, int w, Rng& rng) {
    Direction src_dir = direction_of(source.vx, source.vy);
    for (int attempt = 0; attempt < 256; ++attempt) {
        Direction d = random_moving_direction(rng);
        if (d == src_dir) continue;
        int speed = 1 + static_cast<int>(rng.uniform_int(3));
        auto v = velocity_of(d, speed);
        SceneSpec trial = s;
        trial.vx = v[0];
        trial.vy = v[1];
        try {
            trial.validate(t, h, w);
        } catch (const usage_error&) {
            continue;
        }
        s = trial;
        return;
    }
    throw runtime_failure("no in-bounds velocity change exists for this scene");
}

StyleKind random_other_style(StyleKind current, Rng& rng) {
    StyleKind all[] = {StyleKind::plain, StyleKind::grayscale, StyleKind::sepia};
    StyleKind options[2];
    int n = 0;
    for (StyleKind s : all)
        if (s != current) options[n++] = s;
    return options[rng.uniform_int(2)];
}

}  // namespace

SceneSpec derive_edit(const SceneSpec& source, EditType type, int t, int h, int w, Rng& rng) {
    SceneSpec e = source;
    switch (type) {
        case EditType::style:
            for (int i = 0; i < 64; ++i) {
                e.style = random_other_style(source.style, rng);
                if (style_visible(e.style, e.shape_color, e.bg_color)) break;
            }
            if (!style_visible(e.style, e.shape_color, e.bg_color))
                throw usage_error("style edit is invisible for this color pair");
            break;
        case EditType::background:
            e.bg_color = random_color_except(rng, {source.bg_color, source.shape_color});
            break;
        case EditType::object:
            e.shape_color = random_color_except(rng, {source.shape_color, source.bg_color});
            break;
        case EditType::motion:
            rewrite_velocity(e, source, t, h, w, rng);
            break;
        case EditType::multi_spatial:
        case EditType::multi_motion: {
            for (int i = 0; i < 256; ++i) {
                e.style = random_other_style(source.style, rng);
                e.bg_color = random_color_except(rng, {source.bg_color});
                e.shape_color = random_color_except(rng, {source.shape_color, e.bg_color});
                if (style_visible(e.style, e.shape_color, e.bg_color)) break;
            }
            if (type == EditType::multi_motion) rewrite_velocity(e, source, t, h, w, rng);
            break;
        }
    }
    e.validate(t, h, w);
    return e;
}

SceneSpec sample_scene(Rng& rng, int t, int h, int w) {
    SceneSpec s;
    s.shape = static_cast<ShapeKind>(rng.uniform_int(3));
    do {
        s.shape_color = static_cast<ColorName>(rng.uniform_int(kNumColors));
        s.bg_color = random_color_except(rng, {s.shape_color});
    } while (!style_visible(StyleKind::grayscale, s.shape_color, s.bg_color));
    s.size = 10 + static_cast<int>(rng.uniform_int(7));
    auto v = velocity_of(random_moving_direction(rng), 1 + static_cast<int>(rng.uniform_int(3)));
    s.vx = v[0];
    s.vy = v[1];
    auto place = [&](int vel, int extent) {
        int lo = std::max(0, -vel * (t - 1));
        int hi = extent - s.size - std::max(0, vel * (t - 1));
        return lo + static_cast<int>(rng.uniform_int(hi - lo + 1));
    };
    s.x0 = place(s.vx, w);
    s.y0 = place(s.vy, h);
    s.style = StyleKind::plain;
    s.validate(t, h, w);
    return s;
}

namespace {

std::string scene_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%04d", index);
    return buf;
}

std::string truth_dir_name(EditType type) {
    std::string w = edit_type_word(type);
    std::replace(w.begin(), w.end(), '-', '_');
    return "truth_" + w;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    f << text << "\n";
    if (!f) throw runtime_failure("write failed: " + path.string());
}

}  // namespace

void generate_synthetic_benchmark(const std::string& out_dir, int n_scenes, uint64_t seed,
                                  int jobs) {
    if (n_scenes < 1) throw usage_error("gen-data: need at least one scene");
    if (jobs < 1) throw usage_error("gen-data: jobs must be positive");
    fs::create_directories(fs::path(out_dir) / "scenes");

    std::vector<EditTaskRecord> rows(static_cast<size_t>(n_scenes) * kNumEditTypes);
    std::atomic<int> next{0};
    std::mutex err_mu;
    std::exception_ptr first_err;

    auto worker = [&] {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_scenes) return;
            try {
                Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
                SceneSpec spec = sample_scene(rng, kClipT, kClipH, kClipW);
                fs::path sdir = fs::path(out_dir) / "scenes" / scene_dir_name(i);
                fs::create_directories(sdir);
                io::write_video_dir((sdir / "source").string(),
                                    render_scene(spec, kClipT, kClipH, kClipW));
                io::write_tensor((sdir / "flow.bin").string(),
                                 synthetic_flow(spec, kClipT, kClipH, kClipW).vectors);
                write_text(sdir / "scene.json", scene_to_json(spec));
                for (int k = 0; k < kNumEditTypes; ++k) {
                    auto type = static_cast<EditType>(k);
                    SceneSpec edited = derive_edit(spec, type, kClipT, kClipH, kClipW, rng);
                    std::string tdir = truth_dir_name(type);
                    io::write_video_dir((sdir / tdir).string(),
                                        render_scene(edited, kClipT, kClipH, kClipW));
                    write_text(sdir / (tdir + ".json"), scene_to_json(edited));
                    EditTaskRecord& r = rows[static_cast<size_t>(i) * kNumEditTypes + k];
                    r.id = scene_dir_name(i) + "." + edit_type_word(type);
                    r.dataset = "Synthetic";
                    r.video = "scenes/" + scene_dir_name(i) + "/source";
                    r.source_prompt = prompt_for(spec);
                    r.edit_prompt = prompt_for(edited);
                    r.edit_type = type;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_err) first_err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, n_scenes); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_err) std::rethrow_exception(first_err);

    Manifest m;
    m.records = std::move(rows);
    m.faces_filtered = false;
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), m);
}

namespace {

struct StyledPalette {
    // 24 entries, plain block first so exact ties resolve to plain.
    std::array<std::array<float, 3>, kNumColors * 3> rgb;

    StyledPalette() {
        StyleKind styles[] = {StyleKind::plain, StyleKind::grayscale, StyleKind::sepia};
        for (int s = 0; s < 3; ++s)
            for (int c = 0; c < kNumColors; ++c)
                rgb[s * kNumColors + c] = apply_style(styles[s], rgb_of(static_cast<ColorName>(c)));
    }

    int classify(float r, float g, float b) const {
        int best = 0;
        float best_d = 1e30f;
        for (int i = 0; i < kNumColors * 3; ++i) {
            float dr = r - rgb[i][0], dg = g - rgb[i][1], db = b - rgb[i][2];
            float d = dr * dr + dg * dg + db * db;
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    static ColorName color_of(int cls) { return static_cast<ColorName>(cls % kNumColors); }
    static StyleKind style_of(int cls) {
        StyleKind styles[] = {StyleKind::plain, StyleKind::grayscale, StyleKind::sepia};
        return styles[cls / kNumColors];
    }
};

struct Segmentation {
    int bg_class = 0;
    int fg_class = 0;
    std::vector<std::vector<uint8_t>> masks;          // per frame, H*W
    std::vector<std::array<double, 2>> centroids;     // per frame (x, y)
};

Segmentation segment(const VideoTensor& video) {
    const Tensor& fr = video.frames;
    if (fr.ndim() != 4 || fr.dim(1) != 3)
        throw runtime_failure("extract_attributes: video must be [T,3,H,W], got " + fr.shape_str());
    const int64_t T = fr.dim(0), H = fr.dim(2), W = fr.dim(3);
    if (T < 1) throw runtime_failure("extract_attributes: empty clip");
    static const StyledPalette palette;

    std::vector<int> cls(static_cast<size_t>(T) * H * W);
    std::array<int64_t, kNumColors * 3> histogram{};
    for (int64_t t = 0; t < T; ++t) {
        const float* r = fr.ptr() + ((t * 3 + 0) * H) * W;
        const float* g = fr.ptr() + ((t * 3 + 1) * H) * W;
        const float* b = fr.ptr() + ((t * 3 + 2) * H) * W;
        for (int64_t i = 0; i < H * W; ++i) {
            int c = palette.classify(r[i], g[i], b[i]);
            cls[static_cast<size_t>(t * H * W + i)] = c;
            histogram[static_cast<size_t>(c)]++;
        }
    }
    Segmentation seg;
    seg.bg_class = static_cast<int>(
        std::max_element(histogram.begin(), histogram.end()) - histogram.begin());

    std::array<int64_t, kNumColors * 3> fg_hist{};
    seg.masks.resize(static_cast<size_t>(T));
    seg.centroids.resize(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        auto& mask = seg.masks[static_cast<size_t>(t)];
        mask.assign(static_cast<size_t>(H * W), 0);
        double sx = 0, sy = 0;
        int64_t n = 0;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                int c = cls[static_cast<size_t>(t * H * W + y * W + x)];
                if (c == seg.bg_class) continue;
                mask[static_cast<size_t>(y * W + x)] = 1;
                fg_hist[static_cast<size_t>(c)]++;
                sx += double(x);
                sy += double(y);
                ++n;
            }
        if (n == 0)
            throw runtime_failure("extract_attributes: frame " + std::to_string(t) +
                                  " has no foreground");
        seg.centroids[static_cast<size_t>(t)] = {sx / double(n), sy / double(n)};
    }
    seg.fg_class = static_cast<int>(
        std::max_element(fg_hist.begin(), fg_hist.end()) - fg_hist.begin());
    return seg;
}

}  // namespace

VideoAttributes extract_attributes(const VideoTensor& video) {
    Segmentation seg = segment(video);
    VideoAttributes a;
    a.shape_color = StyledPalette::color_of(seg.fg_class);
    a.bg_color = StyledPalette::color_of(seg.bg_class);
    StyleKind fg_style = StyledPalette::style_of(seg.fg_class);
    StyleKind bg_style = StyledPalette::style_of(seg.bg_class);
    a.style = fg_style != StyleKind::plain ? fg_style : bg_style;
    a.centroids = seg.centroids;
    const auto T = static_cast<int64_t>(seg.centroids.size());
    if (T > 1) {
        for (int64_t t = 0; t + 1 < T; ++t) {
            a.vx += seg.centroids[size_t(t + 1)][0] - seg.centroids[size_t(t)][0];
            a.vy += seg.centroids[size_t(t + 1)][1] - seg.centroids[size_t(t)][1];
        }
        a.vx /= double(T - 1);
        a.vy /= double(T - 1);
    }
    return a;
}

FlowField CentroidFlowEstimator::estimate(const VideoTensor& video) {
    Segmentation seg = segment(video);
    const int64_t T = video.t(), H = video.h(), W = video.w();
    FlowField flow;
    flow.vectors = Tensor({T, 2, H, W});
    for (int64_t t = 0; t + 1 < T; ++t) {
        double dx = seg.centroids[size_t(t + 1)][0] - seg.centroids[size_t(t)][0];
        double dy = seg.centroids[size_t(t + 1)][1] - seg.centroids[size_t(t)][1];
        const auto& mask = seg.masks[static_cast<size_t>(t)];
        float* u = flow.vectors.ptr() + ((t * 2 + 0) * H) * W;
        float* v = flow.vectors.ptr() + ((t * 2 + 1) * H) * W;
        for (int64_t i = 0; i < H * W; ++i) {
            if (!mask[static_cast<size_t>(i)]) continue;
            u[i] = static_cast<float>(dx);
            v[i] = static_cast<float>(dy);
        }
    }
    if (T >= 2) {
        int64_t plane = 2 * H * W;
        float* d = flow.vectors.ptr();
        std::copy(d + (T - 2) * plane, d + (T - 1) * plane, d + (T - 1) * plane);
    }
    return flow;
}

}  // namespace moca
