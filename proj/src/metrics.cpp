#include "moca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "moca/io/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace moca {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b, const char* where) {
    if (a.size() != b.size())
        throw runtime_failure(std::string(where) + ": embedding dimensions differ (" +
                              std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

void normalize(std::vector<double>& a) {
    double n = norm(a);
    if (n < 1e-12) {
        // degenerate input: fall back to a fixed unit vector
        std::fill(a.begin(), a.end(), 1.0 / std::sqrt(double(a.size())));
        return;
    }
    for (double& v : a) v /= n;
}

std::vector<std::string> words_of(const std::string& text) {
    std::string clean = text;
    for (char& c : clean)
        if (std::string(",.;:!?").find(c) != std::string::npos) c = ' ';
    std::istringstream ss(clean);
    std::vector<std::string> out;
    std::string w;
    while (ss >> w) out.push_back(w);
    return out;
}

std::string line_err(const std::string& path, int line, const std::string& what) {
    return path + ":" + std::to_string(line) + ": " + what;
}

}  // namespace

double EmbeddingBackend::video_similarity(const VideoTensor& a, const VideoTensor& b) const {
    return dot(embed_video(a), embed_video(b), "video_similarity");
}

namespace {

std::vector<double> oracle_encode(ColorName shape_color, ColorName bg_color, StyleKind style,
                                  Direction dir) {
    std::vector<double> v(OracleEmbedder::kDim, 0.0);
    v[static_cast<size_t>(shape_color)] = 1.0;
    v[kNumColors + static_cast<size_t>(bg_color)] = 1.0;
    v[2 * kNumColors + static_cast<size_t>(style)] = 1.0;
    if (dir != Direction::still) {
        auto vel = velocity_of(dir, 1);
        double n = std::sqrt(double(vel[0] * vel[0] + vel[1] * vel[1]));
        v[2 * kNumColors + 3] = vel[0] / n;
        v[2 * kNumColors + 4] = vel[1] / n;
    }
    normalize(v);
    return v;
}

}  // namespace

std::vector<double> OracleEmbedder::embed_video(const VideoTensor& video) const {
    VideoAttributes a = extract_attributes(video);
    Direction dir = direction_of(std::round(a.vx), std::round(a.vy));
    return oracle_encode(a.shape_color, a.bg_color, a.style, dir);
}

std::vector<double> OracleEmbedder::embed_text(const std::string& text) const {
    PromptAttrs a = parse_prompt(text);
    return oracle_encode(a.shape_color, a.bg_color, a.style, a.direction);
}

namespace {

std::vector<double> frame_feature(const Tensor& frames, int64_t t) {
    const int64_t H = frames.dim(2), W = frames.dim(3);
    std::vector<double> f(FrameAvgBackend::kDim, 0.0);
    std::vector<int64_t> count(16, 0);
    for (int64_t y = 0; y < H; ++y) {
        int64_t gy = y * 4 / H;
        for (int64_t x = 0; x < W; ++x) {
            int64_t gx = x * 4 / W;
            int64_t cell = gy * 4 + gx;
            count[static_cast<size_t>(cell)]++;
            for (int64_t c = 0; c < 3; ++c)
                f[static_cast<size_t>(cell * 3 + c)] += frames.at4(t, c, y, x);
        }
    }
    for (int64_t cell = 0; cell < 16; ++cell)
        for (int64_t c = 0; c < 3; ++c)
            f[static_cast<size_t>(cell * 3 + c)] /= double(count[static_cast<size_t>(cell)]);
    normalize(f);
    return f;
}

}  // namespace

std::vector<double> FrameAvgBackend::embed_video(const VideoTensor& video) const {
    const Tensor& fr = video.frames;
    if (fr.ndim() != 4 || fr.dim(1) != 3 || fr.dim(0) < 1)
        throw runtime_failure("frame-avg backend: video must be [T,3,H,W], got " + fr.shape_str());
    std::vector<double> acc(kDim, 0.0);
    for (int64_t t = 0; t < fr.dim(0); ++t) {
        auto f = frame_feature(fr, t);
        for (int i = 0; i < kDim; ++i) acc[static_cast<size_t>(i)] += f[static_cast<size_t>(i)];
    }
    for (double& v : acc) v /= double(fr.dim(0));
    normalize(acc);
    return acc;
}

std::vector<double> FrameAvgBackend::embed_text(const std::string& text) const {
    std::array<double, 3> mean{0.5, 0.5, 0.5};
    std::array<double, 3> sum{};
    int found = 0;
    for (const auto& w : words_of(text)) {
        for (int c = 0; c < kNumColors; ++c) {
            if (w == color_word(static_cast<ColorName>(c))) {
                auto rgb = rgb_of(static_cast<ColorName>(c));
                for (int k = 0; k < 3; ++k) sum[static_cast<size_t>(k)] += rgb[static_cast<size_t>(k)];
                ++found;
            }
        }
    }
    if (found > 0)
        for (int k = 0; k < 3; ++k) mean[static_cast<size_t>(k)] = sum[static_cast<size_t>(k)] / found;
    std::vector<double> v(kDim);
    for (int cell = 0; cell < 16; ++cell)
        for (int k = 0; k < 3; ++k) v[static_cast<size_t>(cell * 3 + k)] = mean[static_cast<size_t>(k)];
    normalize(v);
    return v;
}

double FrameAvgBackend::video_similarity(const VideoTensor& a, const VideoTensor& b) const {
    if (mode_ == SimMode::embed_avg) return EmbeddingBackend::video_similarity(a, b);
    if (a.frames.ndim() != 4 || b.frames.ndim() != 4)
        throw runtime_failure("frame-avg backend: videos must be [T,3,H,W]");
    if (a.t() != b.t())
        throw runtime_failure("frame-avg backend: per-frame scoring needs equal frame counts, got " +
                              std::to_string(a.t()) + " vs " + std::to_string(b.t()));
    double s = 0.0;
    for (int64_t t = 0; t < a.t(); ++t) {
        auto fa = frame_feature(a.frames, t);
        auto fb = frame_feature(b.frames, t);
        s += dot(fa, fb, "video_similarity");
    }
    return s / double(a.t());
}

double m_sim(const VideoTensor& source, const VideoTensor& edit, const EmbeddingBackend& backend) {
    return backend.video_similarity(source, edit);
}

double m_dir(const VideoTensor& source, const VideoTensor& edit, const std::string& source_prompt,
             const std::string& edit_prompt, const EmbeddingBackend& backend) {
    auto vs = backend.embed_video(source);
    auto ve = backend.embed_video(edit);
    auto ts = backend.embed_text(source_prompt);
    auto te = backend.embed_text(edit_prompt);
    if (vs.size() != ve.size() || ts.size() != te.size() || vs.size() != ts.size())
        throw runtime_failure("m_dir: embedding dimensions differ");
    std::vector<double> dv(vs.size()), dt(ts.size());
    for (size_t i = 0; i < vs.size(); ++i) dv[i] = ve[i] - vs[i];
    for (size_t i = 0; i < ts.size(); ++i) dt[i] = te[i] - ts[i];
    double nv = norm(dv), nt = norm(dt);
    if (nv < 1e-9 || nt < 1e-9) return 0.0;
    return dot(dv, dt, "m_dir") / (nv * nt);
}

double m_geo(double sim, double dir) { return std::sqrt(std::max(0.0, sim * dir)); }

VoteSummary majority_vote(const std::vector<Vote>& votes) {
    if (votes.empty() || votes.size() % 2 == 0)
        throw usage_error("majority vote needs an odd number of votes, got " +
                          std::to_string(votes.size()));
    int a = 0;
    for (const Vote& v : votes) {
        if (!v.align && !v.consistency) throw usage_error("vote cites no reason");
        a += (v.choice == Choice::A);
    }
    VoteSummary s;
    s.total_votes = static_cast<int>(votes.size());
    s.winner = (2 * a > s.total_votes) ? Choice::A : Choice::B;
    int n_align = 0, n_cons = 0, n_both = 0;
    for (const Vote& v : votes) {
        if (v.choice != s.winner) continue;
        s.winner_votes++;
        if (v.align && v.consistency)
            n_both++;
        else if (v.align)
            n_align++;
        else
            n_cons++;
    }
    s.frac_align = double(n_align) / s.winner_votes;
    s.frac_consistency = double(n_cons) / s.winner_votes;
    s.frac_both = double(n_both) / s.winner_votes;
    return s;
}

namespace {

std::map<std::string, double> parse_score_map(const json& j, const std::string& ctx) {
    std::map<std::string, double> out;
    if (!j.is_object()) throw runtime_failure(ctx + " must be an object");
    for (auto& [k, v] : j.items()) {
        if (!v.is_number()) throw runtime_failure(ctx + "['" + k + "'] must be a number");
        out[k] = v.get<double>();
    }
    return out;
}

}  // namespace

std::vector<PairedComparison> load_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("labels file not found: " + path);
    std::vector<PairedComparison> out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw runtime_failure("expected a JSON object");
            static const char* kKeys[] = {"task_id", "method_a", "method_b",
                                          "score_a", "score_b", "votes"};
            for (auto& [k, v] : j.items())
                if (std::find_if(std::begin(kKeys), std::end(kKeys),
                                 [&](const char* t) { return k == t; }) == std::end(kKeys))
                    throw runtime_failure("unknown field '" + k + "'");
            for (const char* k : {"task_id", "method_a", "method_b"})
                if (!j.contains(k) || !j[k].is_string())
                    throw runtime_failure(std::string("missing string field '") + k + "'");
            if (!j.contains("votes") || !j["votes"].is_array())
                throw runtime_failure("missing array field 'votes'");
            PairedComparison c;
            c.task_id = j["task_id"].get<std::string>();
            c.method_a = j["method_a"].get<std::string>();
            c.method_b = j["method_b"].get<std::string>();
            if (j.contains("score_a")) c.score_a = parse_score_map(j["score_a"], "score_a");
            if (j.contains("score_b")) c.score_b = parse_score_map(j["score_b"], "score_b");
            for (const auto& vj : j["votes"]) {
                if (!vj.is_object()) throw runtime_failure("votes entries must be objects");
                for (auto& [k, v] : vj.items())
                    if (k != "choice" && k != "align" && k != "consistency")
                        throw runtime_failure("unknown vote field '" + k + "'");
                if (!vj.contains("choice") || !vj["choice"].is_string())
                    throw runtime_failure("vote missing string field 'choice'");
                std::string ch = vj["choice"].get<std::string>();
                if (ch != "A" && ch != "B")
                    throw runtime_failure("vote choice must be 'A' or 'B', got '" + ch + "'");
                Vote v;
                v.choice = ch == "A" ? Choice::A : Choice::B;
                v.align = vj.value("align", false);
                v.consistency = vj.value("consistency", false);
                c.votes.push_back(v);
            }
            (void)majority_vote(c.votes);  // enforces odd count + reasons
            out.push_back(std::move(c));
        } catch (const std::exception& e) {
            throw runtime_failure(line_err(path, lineno, e.what()));
        }
    }
    return out;
}

double metric_classification_accuracy(const std::vector<PairedComparison>& comparisons,
                                      const std::string& metric) {
    if (comparisons.empty()) throw usage_error("classification accuracy needs comparisons");
    double correct = 0.0;
    for (const auto& c : comparisons) {
        auto ia = c.score_a.find(metric), ib = c.score_b.find(metric);
        if (ia == c.score_a.end() || ib == c.score_b.end())
            throw runtime_failure("comparison '" + c.task_id + "': missing score '" + metric + "'");
        Choice human = majority_vote(c.votes).winner;
        if (ia->second == ib->second)
            correct += 0.5;
        else if ((ia->second > ib->second) == (human == Choice::A))
            correct += 1.0;
    }
    return correct / double(comparisons.size());
}

namespace {

std::vector<double> mean_ranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        double rank = 0.5 * double(i + j) + 1.0;  // mean of 1-based positions i..j
        for (size_t k = i; k <= j; ++k) r[idx[k]] = rank;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw usage_error("spearman: length mismatch (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
    if (x.size() < 2) throw usage_error("spearman: need at least two points");
    auto rx = mean_ranks(x), ry = mean_ranks(y);
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw runtime_failure("spearman undefined: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

ScoreTable load_scores(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("scores file not found: " + path);
    ScoreTable out;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw runtime_failure("expected a JSON object");
            for (auto& [k, v] : j.items())
                if (k != "method" && k != "task_id" && k != "m_sim" && k != "m_dir" && k != "m_geo")
                    throw runtime_failure("unknown field '" + k + "'");
            for (const char* k : {"method", "task_id"})
                if (!j.contains(k) || !j[k].is_string())
                    throw runtime_failure(std::string("missing string field '") + k + "'");
            std::string method = j["method"].get<std::string>();
            std::string task = j["task_id"].get<std::string>();
            auto& slot = out.scores[method];
            if (slot.count(task))
                throw runtime_failure("duplicate score row for " + method + "/" + task);
            auto& cell = slot[task];
            for (const char* k : {"m_sim", "m_dir", "m_geo"}) {
                if (!j.contains(k)) continue;
                if (!j[k].is_number())
                    throw runtime_failure(std::string("field '") + k + "' must be a number");
                cell[k] = j[k].get<double>();
            }
            if (cell.empty()) throw runtime_failure("row carries no scores");
        } catch (const std::exception& e) {
            throw runtime_failure(line_err(path, lineno, e.what()));
        }
    }
    return out;
}

ScoreTable compute_scores(const Manifest& manifest, const std::string& manifest_dir,
                          const std::string& edits_root, const std::vector<std::string>& methods,
                          const EmbeddingBackend& backend) {
    ScoreTable out;
    std::map<std::string, VideoTensor> sources;
    for (const auto& method : methods) {
        for (const auto& r : manifest.records) {
            fs::path edit_dir = fs::path(edits_root) / method / r.id;
            if (!fs::exists(edit_dir / "meta.json")) {
                out.missing.push_back(method + "/" + r.id);
                continue;
            }
            auto it = sources.find(r.video);
            if (it == sources.end()) {
                fs::path src = fs::path(manifest_dir) / r.video;
                it = sources.emplace(r.video, io::read_video_dir(src.string())).first;
            }
            VideoTensor edit = io::read_video_dir(edit_dir.string());
            double sim = m_sim(it->second, edit, backend);
            double dir = m_dir(it->second, edit, r.source_prompt, r.edit_prompt, backend);
            auto& cell = out.scores[method][r.id];
            cell["m_sim"] = sim;
            cell["m_dir"] = dir;
            cell["m_geo"] = m_geo(sim, dir);
        }
    }
    return out;
}

namespace {

constexpr const char* kMetricNames[] = {"m_sim", "m_dir", "m_geo"};

void fill_rect(io::ImageU8& img, int x0, int y0, int x1, int y1, std::array<uint8_t, 3> rgb) {
    x0 = std::max(0, x0);
    y0 = std::max(0, y0);
    x1 = std::min(img.width, x1);
    y1 = std::min(img.height, y1);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            for (int c = 0; c < 3; ++c)
                img.rgb[static_cast<size_t>((y * img.width + x) * 3 + c)] = rgb[static_cast<size_t>(c)];
}

void write_reason_chart(const std::string& path,
                        const std::map<std::string, std::array<double, 3>>& groups) {
    const int n = std::max<int>(1, static_cast<int>(groups.size()));
    io::ImageU8 img;
    img.height = 220;
    img.width = 40 + 110 * n;
    img.rgb.assign(static_cast<size_t>(img.width) * img.height * 3, 255);
    const int base = 190, top = 20;
    fill_rect(img, 20, base, img.width - 10, base + 2, {0, 0, 0});
    const std::array<std::array<uint8_t, 3>, 3> colors{{{60, 100, 220}, {220, 120, 40}, {70, 170, 70}}};
    int g = 0;
    for (const auto& [name, fr] : groups) {
        (void)name;
        for (int k = 0; k < 3; ++k) {
            int h = static_cast<int>(std::lround(fr[static_cast<size_t>(k)] * (base - top)));
            int x0 = 40 + 110 * g + 30 * k;
            fill_rect(img, x0, base - h, x0 + 24, base, colors[static_cast<size_t>(k)]);
        }
        ++g;
    }
    io::write_png(path, img);
}

std::string fmt(double v) {
    if (std::isnan(v)) return "   -  ";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.3f", v);
    return buf;
}

}  // namespace

MetricReport build_report(const Manifest& manifest, const ScoreTable& scores,
                          const std::vector<PairedComparison>& labels,
                          const std::string& out_dir) {
    std::map<std::string, EditType> task_type;
    for (const auto& r : manifest.records) task_type[r.id] = r.edit_type;

    MetricReport rep;
    rep.missing = scores.missing;
    for (const auto& [method, per_task] : scores.scores) {
        rep.methods.push_back(method);
        auto& dirs = rep.per_type_dir[method];
        auto& geos = rep.per_type_geo[method];
        auto& ns = rep.per_type_n[method];
        std::array<double, kNumEditTypes> dir_sum{}, geo_sum{};
        std::array<int64_t, kNumEditTypes> dir_n{}, geo_n{};
        double odir = 0, ogeo = 0;
        int64_t odir_n = 0, ogeo_n = 0;
        for (const auto& [task, cell] : per_task) {
            auto it = task_type.find(task);
            if (it == task_type.end())
                throw runtime_failure("scores reference unknown task '" + task + "'");
            auto k = static_cast<size_t>(it->second);
            ns[k]++;
            if (auto s = cell.find("m_dir"); s != cell.end()) {
                dir_sum[k] += s->second;
                dir_n[k]++;
                odir += s->second;
                odir_n++;
            }
            if (auto s = cell.find("m_geo"); s != cell.end()) {
                geo_sum[k] += s->second;
                geo_n[k]++;
                ogeo += s->second;
                ogeo_n++;
            }
        }
        for (size_t k = 0; k < kNumEditTypes; ++k) {
            dirs[k] = dir_n[k] ? dir_sum[k] / double(dir_n[k]) : std::nan("");
            geos[k] = geo_n[k] ? geo_sum[k] / double(geo_n[k]) : std::nan("");
        }
        if (odir_n) rep.overall_dir[method] = odir / double(odir_n);
        if (ogeo_n) rep.overall_geo[method] = ogeo / double(ogeo_n);
    }
    for (const auto& [method, v] : rep.overall_geo) {
        (void)v;
        rep.ranking_by_geo.push_back(method);
    }
    std::stable_sort(rep.ranking_by_geo.begin(), rep.ranking_by_geo.end(),
                     [&](const std::string& a, const std::string& b) {
                         return rep.overall_geo.at(a) > rep.overall_geo.at(b);
                     });

    if (!labels.empty()) {
        rep.has_labels = true;
        std::map<EditType, std::vector<PairedComparison>> by_type;
        for (const auto& c : labels) {
            auto it = task_type.find(c.task_id);
            if (it == task_type.end())
                throw runtime_failure("labels reference unknown task '" + c.task_id + "'");
            by_type[it->second].push_back(c);
        }
        for (const char* metric : kMetricNames) {
            bool have_all = true;
            for (const auto& c : labels)
                have_all = have_all && c.score_a.count(metric) && c.score_b.count(metric);
            if (!have_all) continue;
            rep.accuracy_overall[metric] = metric_classification_accuracy(labels, metric);
            auto& per_type = rep.accuracy_per_type[metric];
            per_type.fill(std::nan(""));
            for (const auto& [type, cs] : by_type)
                per_type[static_cast<size_t>(type)] = metric_classification_accuracy(cs, metric);
            std::vector<double> gap, human;
            for (const auto& c : labels) {
                gap.push_back(c.score_a.at(metric) - c.score_b.at(metric));
                int a = 0;
                for (const Vote& v : c.votes) a += (v.choice == Choice::A);
                human.push_back(double(a) / double(c.votes.size()));
            }
            try {
                rep.rho_overall[metric] = spearman(gap, human);
            } catch (const runtime_failure&) {
                // degenerate labels (constant ranks): rho undefined, omitted
            }
        }
        std::map<std::string, std::array<double, 3>> counts;
        std::array<double, 3> total{};
        for (const auto& c : labels) {
            VoteSummary s = majority_vote(c.votes);
            std::array<double, 3> add{s.frac_align * s.winner_votes,
                                      s.frac_consistency * s.winner_votes,
                                      s.frac_both * s.winner_votes};
            auto& slot = counts[c.method_b];
            for (int k = 0; k < 3; ++k) {
                slot[static_cast<size_t>(k)] += add[static_cast<size_t>(k)];
                total[static_cast<size_t>(k)] += add[static_cast<size_t>(k)];
            }
        }
        double tn = total[0] + total[1] + total[2];
        if (tn > 0) {
            rep.frac_align = total[0] / tn;
            rep.frac_consistency = total[1] / tn;
            rep.frac_both = total[2] / tn;
        }
        for (auto& [method, slot] : counts) {
            double n = slot[0] + slot[1] + slot[2];
            if (n > 0)
                rep.reasons_by_baseline[method] = {slot[0] / n, slot[1] / n, slot[2] / n};
        }
    }

    fs::create_directories(out_dir);

    json j;
    j["methods"] = rep.methods;
    j["ranking_by_geo"] = rep.ranking_by_geo;
    for (const auto& method : rep.methods) {
        json row;
        for (int k = 0; k < kNumEditTypes; ++k) {
            const char* type = edit_type_word(static_cast<EditType>(k));
            row["per_type"][type]["m_dir"] = rep.per_type_dir.at(method)[static_cast<size_t>(k)];
            row["per_type"][type]["m_geo"] = rep.per_type_geo.at(method)[static_cast<size_t>(k)];
            row["per_type"][type]["n"] = rep.per_type_n.at(method)[static_cast<size_t>(k)];
        }
        if (rep.overall_dir.count(method)) row["overall"]["m_dir"] = rep.overall_dir.at(method);
        if (rep.overall_geo.count(method)) row["overall"]["m_geo"] = rep.overall_geo.at(method);
        j["scores"][method] = row;
    }
    j["missing"] = rep.missing;
    j["alignment"]["available"] = rep.has_labels;
    if (rep.has_labels) {
        for (const auto& [metric, acc] : rep.accuracy_overall) {
            j["alignment"]["accuracy"][metric]["overall"] = acc;
            for (int k = 0; k < kNumEditTypes; ++k)
                j["alignment"]["accuracy"][metric]["per_type"][edit_type_word(static_cast<EditType>(k))] =
                    rep.accuracy_per_type.at(metric)[static_cast<size_t>(k)];
        }
        for (const auto& [metric, rho] : rep.rho_overall)
            j["alignment"]["spearman"][metric] = rho;
        j["reasons"]["align"] = rep.frac_align;
        j["reasons"]["consistency"] = rep.frac_consistency;
        j["reasons"]["both"] = rep.frac_both;
        for (const auto& [method, fr] : rep.reasons_by_baseline)
            j["reasons"]["by_baseline"][method] = {fr[0], fr[1], fr[2]};
    }
    {
        std::ofstream f(fs::path(out_dir) / "report.json");
        f << j.dump(2) << "\n";
        if (!f) throw runtime_failure("cannot write report.json in " + out_dir);
    }

    {
        std::ofstream f(fs::path(out_dir) / "overall.txt");
        f << "method            m_dir   m_geo\n";
        for (const auto& method : rep.ranking_by_geo) {
            double d = rep.overall_dir.count(method) ? rep.overall_dir.at(method) : std::nan("");
            f << method;
            for (size_t p = method.size(); p < 16; ++p) f << ' ';
            f << "  " << fmt(d) << "  " << fmt(rep.overall_geo.at(method)) << "\n";
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "by_type.txt");
        f << "m_geo per edit type\n";
        f << "method            ";
        for (int k = 0; k < kNumEditTypes; ++k) {
            std::string w = edit_type_word(static_cast<EditType>(k));
            f << w.substr(0, 8);
            for (size_t p = std::min<size_t>(w.size(), 8); p < 9; ++p) f << ' ';
        }
        f << "\n";
        for (const auto& method : rep.methods) {
            f << method;
            for (size_t p = method.size(); p < 16; ++p) f << ' ';
            f << "  ";
            for (int k = 0; k < kNumEditTypes; ++k)
                f << fmt(rep.per_type_geo.at(method)[static_cast<size_t>(k)]) << "   ";
            f << "\n";
        }
    }
    {
        std::ofstream f(fs::path(out_dir) / "alignment.txt");
        if (!rep.has_labels) {
            f << "no labels\n";
        } else {
            f << "classification accuracy vs human majority\n";
            for (const auto& [metric, acc] : rep.accuracy_overall) {
                f << metric << "  overall " << fmt(acc) << "  per-type ";
                for (int k = 0; k < kNumEditTypes; ++k)
                    f << fmt(rep.accuracy_per_type.at(metric)[static_cast<size_t>(k)]) << " ";
                f << "\n";
            }
            f << "spearman rho (score gap vs A-vote share)\n";
            for (const auto& [metric, rho] : rep.rho_overall)
                f << metric << "  " << fmt(rho) << "\n";
            f << "reasons: align " << fmt(rep.frac_align) << "  consistency "
              << fmt(rep.frac_consistency) << "  both " << fmt(rep.frac_both) << "\n";
        }
    }
    if (rep.has_labels && !rep.reasons_by_baseline.empty())
        write_reason_chart((fs::path(out_dir) / "reasons.png").string(), rep.reasons_by_baseline);

    return rep;
}

}  // namespace moca
