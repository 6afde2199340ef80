#include "moca/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "moca/io/tensor_io.hpp"
#include "moca/kernels/kernels.hpp"

namespace moca {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kClipT = 8, kClipH = 64, kClipW = 64;

}  // namespace

ClipCorpus ClipCorpus::from_benchmark(const std::string& dir, int jobs) {
    if (jobs < 1) throw usage_error("corpus: jobs must be positive");
    fs::path scenes = fs::path(dir) / "scenes";
    if (!fs::is_directory(scenes)) throw usage_error("corpus: no scenes directory under " + dir);
    std::vector<fs::path> scene_dirs;
    for (const auto& e : fs::directory_iterator(scenes))
        if (e.is_directory()) scene_dirs.push_back(e.path());
    std::sort(scene_dirs.begin(), scene_dirs.end());
    if (scene_dirs.empty()) throw usage_error("corpus: no scenes under " + dir);

    std::vector<TrainExample> items(scene_dirs.size());
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= scene_dirs.size()) return;
            try {
                const fs::path& sd = scene_dirs[i];
                std::ifstream jf(sd / "scene.json");
                if (!jf) throw runtime_failure("corpus: missing scene.json in " + sd.string());
                std::string text((std::istreambuf_iterator<char>(jf)),
                                 std::istreambuf_iterator<char>());
                SceneSpec spec = scene_from_json(text);
                TrainExample ex;
                ex.video = io::read_video_dir((sd / "source").string());
                ex.prompt = prompt_for(spec);
                ex.flow.vectors = io::read_tensor((sd / "flow.bin").string());
                if (ex.flow.vectors.ndim() != 4 || ex.flow.vectors.dim(0) != ex.video.t() ||
                    ex.flow.vectors.dim(1) != 2 || ex.flow.vectors.dim(2) != ex.video.h() ||
                    ex.flow.vectors.dim(3) != ex.video.w()) {
                    throw runtime_failure("corpus: flow shape " + ex.flow.vectors.shape_str() +
                                          " does not match clip in " + sd.string());
                }
                items[i] = std::move(ex);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                return;
            }
        }
    };
    size_t n_workers = std::min<size_t>(static_cast<size_t>(jobs), scene_dirs.size());
    std::vector<std::thread> pool;
    for (size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
    return ClipCorpus(std::move(items));
}

ClipCorpus ClipCorpus::synthetic(int n_clips, uint64_t seed) {
    if (n_clips < 1) throw usage_error("corpus: need at least one clip");
    std::vector<TrainExample> items;
    items.reserve(static_cast<size_t>(n_clips));
    for (int i = 0; i < n_clips; ++i) {
        Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
        SceneSpec spec = sample_scene(rng, kClipT, kClipH, kClipW);
        TrainExample ex;
        ex.video = render_scene(spec, kClipT, kClipH, kClipW);
        ex.prompt = prompt_for(spec);
        ex.flow = synthetic_flow(spec, kClipT, kClipH, kClipW);
        items.push_back(std::move(ex));
    }
    return ClipCorpus(std::move(items));
}

void TrainConfig::validate() const {
    model.validate();
    codec.validate();
    dropout.validate();
    if (codec.kind != CodecKind::identity_patch) {
        throw usage_error("train: the trainer runs on the identity-patch codec");
    }
    if (model.latent_channels != codec.latent_channels) {
        throw usage_error("train: model latent_channels " + std::to_string(model.latent_channels) +
                          " != codec latent_channels " + std::to_string(codec.latent_channels));
    }
    if (batch_size < 1) throw usage_error("train: batch_size must be positive");
    if (lr <= 0) throw usage_error("train: lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
        throw usage_error("train: betas must lie in [0,1)");
    }
    if (adam_eps <= 0) throw usage_error("train: adam_eps must be positive");
    if (grad_clip <= 0) throw usage_error("train: grad_clip must be positive");
}

namespace {

TrainConfig validated(TrainConfig c) {
    c.validate();
    return c;
}

constexpr uint64_t kTrainStreamTag = 0x747261696eULL;  // decorrelates init vs batch draws

}  // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      den_(cfg_.model, cfg_.seed),
      sched_(make_schedule(cfg_.model.num_train_steps, cfg_.schedule_base)),
      rng_(Rng::derive(cfg_.seed, kTrainStreamTag)) {
    auto ps = den_.params();
    adam_m_.reserve(ps.size());
    adam_v_.reserve(ps.size());
    for (const auto& pr : ps) {
        adam_m_.emplace_back(pr.p->v.shape);
        adam_v_.emplace_back(pr.p->v.shape);
    }
}

double Trainer::step(const ClipCorpus& corpus) {
    if (corpus.size() < 1) throw usage_error("train: empty corpus");
    const int B = cfg_.batch_size;
    std::vector<Denoiser::Sample> batch;
    batch.reserve(static_cast<size_t>(B));
    std::vector<Tensor> targets;
    targets.reserve(static_cast<size_t>(B));
    int64_t total = 0;
    for (int b = 0; b < B; ++b) {
        const TrainExample& ex = corpus.at(rng_.uniform_int(corpus.size()));
        LatentVideo z0 = encode_video(ex.video, cfg_.codec);

        ConditioningBundle full;
        full.has_text = true;
        full.text_ids = den_.tokenize(ex.prompt);
        full.has_image = true;
        Tensor frame0({3, ex.video.h(), ex.video.w()});
        std::copy_n(ex.video.frames.ptr(), frame0.numel(), frame0.ptr());
        full.image = encode_frame(frame0, cfg_.codec);
        full.has_motion = true;
        full.motion = encode_video(flow_to_rgb(ex.flow), cfg_.codec).latents;
        full.magnitude = avg_flow_magnitude(ex.flow);
        DropMask mask = sample_dropout_mask(cfg_.dropout, rng_);

        int t = 1 + static_cast<int>(rng_.uniform_int(sched_.num_train_steps));
        Tensor eps(z0.latents.shape);
        for (auto& v : eps.data) v = rng_.normal_f();
        LatentVideo zt = add_noise(z0, eps, t, sched_);
        targets.push_back(v_target(z0, eps, t, sched_));
        total += targets.back().numel();
        batch.push_back({std::move(zt.latents), t, apply_dropout(full, mask)});
    }

    Denoiser::Cache cache;
    Tensor out = den_.forward(batch, &cache);
    double loss = 0.0;
    Tensor dout(out.shape);
    const double inv = 1.0 / static_cast<double>(total);
    int64_t off = 0;
    for (const Tensor& tgt : targets) {
        for (int64_t i = 0; i < tgt.numel(); ++i) {
            double e = static_cast<double>(out[off + i]) - static_cast<double>(tgt[i]);
            loss += e * e;
            dout[off + i] = static_cast<float>(2.0 * e * inv);
        }
        off += tgt.numel();
    }
    loss *= inv;
    if (!std::isfinite(loss)) {
        throw runtime_failure("train step " + std::to_string(step_ + 1) +
                              ": non-finite loss; parameters left untouched");
    }

    den_.zero_grads();
    den_.backward(dout, batch, cache);

    const auto& K = kernels::active();
    auto ps = den_.params();
    double sumsq = 0.0;
    for (const auto& pr : ps) sumsq += K.reduce_sumsq(pr.p->g.numel(), pr.p->g.ptr());
    double gnorm = std::sqrt(sumsq);
    if (!std::isfinite(gnorm)) {
        throw runtime_failure("train step " + std::to_string(step_ + 1) +
                              ": non-finite gradient norm; parameters left untouched");
    }
    float gscale = gnorm > cfg_.grad_clip ? static_cast<float>(cfg_.grad_clip / gnorm) : 1.0f;

    step_ += 1;
    float step_size =
        static_cast<float>(cfg_.lr / (1.0 - std::pow(cfg_.beta1, static_cast<double>(step_))));
    float inv_bc2 =
        static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta2, static_cast<double>(step_))));
    for (size_t i = 0; i < ps.size(); ++i) {
        nn::P& p = *ps[i].p;
        if (gscale != 1.0f) K.scale(p.g.numel(), gscale, p.g.ptr());
        K.adam_step(p.v.numel(), p.v.ptr(), adam_m_[i].ptr(), adam_v_[i].ptr(), p.g.ptr(),
                    static_cast<float>(cfg_.beta1), static_cast<float>(cfg_.beta2), step_size,
                    inv_bc2, static_cast<float>(cfg_.adam_eps));
    }
    return loss;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'M', 'O', 'C', 'A', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

uint32_t get_u32(std::istream& is, const std::string& path) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw runtime_failure(path + ": truncated checkpoint");
    return v;
}
uint64_t get_u64(std::istream& is, const std::string& path) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw runtime_failure(path + ": truncated checkpoint");
    return v;
}

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}
uint64_t unhex64(const std::string& s, const std::string& path) {
    if (s.size() != 16 || s.find_first_not_of("0123456789abcdef") != std::string::npos) {
        throw runtime_failure(path + ": malformed rng state");
    }
    return std::stoull(s, nullptr, 16);
}

const char* codec_kind_word(CodecKind k) {
    return k == CodecKind::identity_patch ? "identity-patch" : "learned-tiny";
}
CodecKind codec_kind_from_word(const std::string& w, const std::string& path) {
    if (w == "identity-patch") return CodecKind::identity_patch;
    if (w == "learned-tiny") return CodecKind::learned_tiny;
    throw runtime_failure(path + ": unknown codec kind '" + w + "'");
}

const char* schedule_base_word(ScheduleBase b) {
    return b == ScheduleBase::linear ? "linear" : "cosine";
}
ScheduleBase schedule_base_from_word(const std::string& w, const std::string& path) {
    if (w == "linear") return ScheduleBase::linear;
    if (w == "cosine") return ScheduleBase::cosine;
    throw runtime_failure(path + ": unknown schedule base '" + w + "'");
}

json train_config_json(const TrainConfig& c) {
    return json{
        {"model",
         {{"latent_channels", c.model.latent_channels},
          {"base_width", c.model.base_width},
          {"temporal_depth", c.model.temporal_depth},
          {"feat_width", c.model.feat_width},
          {"emb_width", c.model.emb_width},
          {"text_width", c.model.text_width},
          {"max_frames", c.model.max_frames},
          {"max_text_len", c.model.max_text_len},
          {"num_train_steps", c.model.num_train_steps},
          {"groups", c.model.groups},
          {"vocab", c.model.vocab}}},
        {"codec",
         {{"kind", codec_kind_word(c.codec.kind)},
          {"factor", c.codec.factor},
          {"latent_channels", c.codec.latent_channels}}},
        {"dropout", {{"p_combo", c.dropout.p_combo}, {"p_extra_motion", c.dropout.p_extra_motion}}},
        {"schedule_base", schedule_base_word(c.schedule_base)},
        {"batch_size", c.batch_size},
        {"lr", c.lr},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"adam_eps", c.adam_eps},
        {"grad_clip", c.grad_clip},
        {"seed", c.seed},
    };
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
    TrainConfig c;
    try {
        const json& m = j.at("model");
        c.model.latent_channels = m.at("latent_channels").get<int>();
        c.model.base_width = m.at("base_width").get<int>();
        c.model.temporal_depth = m.at("temporal_depth").get<int>();
        c.model.feat_width = m.at("feat_width").get<int>();
        c.model.emb_width = m.at("emb_width").get<int>();
        c.model.text_width = m.at("text_width").get<int>();
        c.model.max_frames = m.at("max_frames").get<int>();
        c.model.max_text_len = m.at("max_text_len").get<int>();
        c.model.num_train_steps = m.at("num_train_steps").get<int>();
        c.model.groups = m.at("groups").get<int>();
        c.model.vocab = m.at("vocab").get<std::vector<std::string>>();
        const json& k = j.at("codec");
        c.codec.kind = codec_kind_from_word(k.at("kind").get<std::string>(), path);
        c.codec.factor = k.at("factor").get<int>();
        c.codec.latent_channels = k.at("latent_channels").get<int>();
        c.dropout.p_combo = j.at("dropout").at("p_combo").get<double>();
        c.dropout.p_extra_motion = j.at("dropout").at("p_extra_motion").get<double>();
        c.schedule_base = schedule_base_from_word(j.at("schedule_base").get<std::string>(), path);
        c.batch_size = j.at("batch_size").get<int>();
        c.lr = j.at("lr").get<double>();
        c.beta1 = j.at("beta1").get<double>();
        c.beta2 = j.at("beta2").get<double>();
        c.adam_eps = j.at("adam_eps").get<double>();
        c.grad_clip = j.at("grad_clip").get<double>();
        c.seed = j.at("seed").get<uint64_t>();
    } catch (const json::exception& e) {
        throw runtime_failure(path + ": bad checkpoint config: " + e.what());
    }
    return c;
}

void write_named_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) put_u64(os, static_cast<uint64_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.ptr()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void read_named_tensor_into(std::istream& is, const std::string& path,
                            std::map<std::string, Tensor*>& slots) {
    uint32_t name_len = get_u32(is, path);
    if (name_len > 4096) throw runtime_failure(path + ": absurd tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw runtime_failure(path + ": truncated checkpoint");
    uint32_t ndim = get_u32(is, path);
    if (ndim > 8) throw runtime_failure(path + ": absurd tensor rank for '" + name + "'");
    std::vector<int64_t> shape(ndim);
    for (auto& d : shape) d = static_cast<int64_t>(get_u64(is, path));
    auto it = slots.find(name);
    if (it == slots.end()) throw runtime_failure(path + ": unexpected tensor '" + name + "'");
    Tensor* dst = it->second;
    if (dst == nullptr) throw runtime_failure(path + ": duplicate tensor '" + name + "'");
    if (dst->shape != shape) {
        throw runtime_failure(path + ": tensor '" + name + "' has shape " +
                              Tensor(shape).shape_str() + ", expected " + dst->shape_str());
    }
    is.read(reinterpret_cast<char*>(dst->ptr()),
            static_cast<std::streamsize>(dst->numel() * sizeof(float)));
    if (!is) throw runtime_failure(path + ": truncated checkpoint");
    it->second = nullptr;  // each name may appear once
}

}  // namespace

void Trainer::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw usage_error("checkpoint: cannot open " + path + " for writing");
    f.write(kMagic, 8);
    put_u32(f, kCkptVersion);

    json j = {
        {"schema", "moca.checkpoint.v1"},
        {"step", step_},
        {"train", train_config_json(cfg_)},
        {"rng",
         {{"s", {hex64(rng_.s[0]), hex64(rng_.s[1]), hex64(rng_.s[2]), hex64(rng_.s[3])}},
          {"have_spare", rng_.have_spare},
          {"spare_bits", hex64(std::bit_cast<uint64_t>(rng_.spare))}}},
    };
    std::string jtext = j.dump();
    put_u64(f, jtext.size());
    f.write(jtext.data(), static_cast<std::streamsize>(jtext.size()));

    auto ps = const_cast<Trainer*>(this)->den_.params();
    put_u64(f, ps.size() * 3);
    for (size_t i = 0; i < ps.size(); ++i) {
        write_named_tensor(f, "param." + ps[i].name, ps[i].p->v);
        write_named_tensor(f, "adam.m." + ps[i].name, adam_m_[i]);
        write_named_tensor(f, "adam.v." + ps[i].name, adam_v_[i]);
    }
    if (!f) throw runtime_failure("checkpoint: write failed for " + path);
}

Trainer Trainer::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw usage_error("checkpoint not found: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0) {
        throw runtime_failure(path + ": not a checkpoint file");
    }
    uint32_t version = get_u32(f, path);
    if (version != kCkptVersion) {
        throw runtime_failure(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    uint64_t jlen = get_u64(f, path);
    if (jlen > (64ULL << 20)) throw runtime_failure(path + ": absurd config length");
    std::string jtext(jlen, '\0');
    f.read(jtext.data(), static_cast<std::streamsize>(jlen));
    if (!f) throw runtime_failure(path + ": truncated checkpoint");
    json j;
    try {
        j = json::parse(jtext);
    } catch (const json::exception& e) {
        throw runtime_failure(path + ": bad checkpoint config: " + e.what());
    }

    Trainer tr(train_config_from_json(j.at("train"), path));
    try {
        tr.step_ = j.at("step").get<int64_t>();
        const json& r = j.at("rng");
        for (int i = 0; i < 4; ++i)
            tr.rng_.s[static_cast<size_t>(i)] =
                unhex64(r.at("s").at(i).get<std::string>(), path);
        tr.rng_.have_spare = r.at("have_spare").get<bool>();
        tr.rng_.spare = std::bit_cast<double>(unhex64(r.at("spare_bits").get<std::string>(), path));
    } catch (const json::exception& e) {
        throw runtime_failure(path + ": bad checkpoint config: " + e.what());
    }

    auto ps = tr.den_.params();
    std::map<std::string, Tensor*> slots;
    for (size_t i = 0; i < ps.size(); ++i) {
        slots["param." + ps[i].name] = &ps[i].p->v;
        slots["adam.m." + ps[i].name] = &tr.adam_m_[i];
        slots["adam.v." + ps[i].name] = &tr.adam_v_[i];
    }
    uint64_t count = get_u64(f, path);
    if (count != slots.size()) {
        throw runtime_failure(path + ": checkpoint holds " + std::to_string(count) +
                              " tensors, model needs " + std::to_string(slots.size()));
    }
    for (uint64_t i = 0; i < count; ++i) read_named_tensor_into(f, path, slots);
    return tr;
}

// ---- editing ----

Tensor RecolorOracleEditor::edit(const Tensor& frame, const std::string& /*source_prompt*/,
                                 const std::string& edit_prompt, EditType type) {
    if (frame.ndim() != 3 || frame.dim(0) != 3) {
        throw runtime_failure("recolor editor: frame must be [3,H,W], got " + frame.shape_str());
    }
    if (type == EditType::motion) return frame;  // motion-only: keep the source frame
    PromptAttrs a = parse_prompt(edit_prompt);
    SceneSpec edited = scene_;
    edited.shape = a.shape;
    edited.shape_color = a.shape_color;
    edited.bg_color = a.bg_color;
    edited.style = a.style;
    const int h = static_cast<int>(frame.dim(1)), w = static_cast<int>(frame.dim(2));
    edited.validate(1, h, w);
    VideoTensor v = render_scene(edited, 1, h, w);
    Tensor out = std::move(v.frames);
    out.reshape({3, h, w});
    return out;
}

VideoTensor moca_edit(const EditRequest& req, const Denoiser& den, const NoiseSchedule& sched,
                      const CodecConfig& codec, FlowEstimator* estimator, FirstFrameEditor& editor,
                      EditStats* stats) {
    codec.validate();
    req.scales.validate();
    req.sampler.validate(sched.num_train_steps);
    const bool motion_edit = is_motion_edit(req.type);

    ConditioningBundle cond;
    cond.has_text = true;
    cond.text_ids = den.tokenize(req.edit_prompt);

    Tensor frame0({3, req.source.h(), req.source.w()});
    std::copy_n(req.source.frames.ptr(), frame0.numel(), frame0.ptr());
    Tensor edited = editor.edit(frame0, req.source_prompt, req.edit_prompt, req.type);
    if (edited.shape != frame0.shape) {
        throw runtime_failure("first-frame editor changed shape from " + frame0.shape_str() +
                              " to " + edited.shape_str());
    }
    for (int64_t i = 0; i < edited.numel(); ++i) {
        if (!(edited[i] >= 0.0f && edited[i] <= 1.0f)) {
            throw runtime_failure("first-frame editor output leaves [0,1]");
        }
    }
    cond.has_image = true;
    cond.image = encode_frame(edited, codec);

    GuidanceScales scales = req.scales;
    if (motion_edit) {
        scales.s_motion = 0.0;  // motion edits sample with motion conditioning dropped
    } else {
        if (estimator == nullptr) throw usage_error("moca_edit: spatial edit needs a flow estimator");
        FlowField flow = estimator->estimate(req.source);
        cond.has_motion = true;
        cond.motion = encode_video(flow_to_rgb(flow), codec).latents;
        cond.magnitude = avg_flow_magnitude(flow);
    }
    if (cond.has_motion == motion_edit) {
        throw runtime_failure("moca_edit: motion slot must be null exactly for motion-type edits");
    }
    if (stats) {
        stats->motion_conditioned = cond.has_motion;
        stats->magnitude = cond.magnitude;
    }

    Rng rng(req.seed);
    std::vector<int64_t> shape = {req.source.t(), codec.latent_channels,
                                  req.source.h() / codec.factor, req.source.w() / codec.factor};
    LatentVideo z = cfg_sample(den, sched, req.sampler, shape, cond, scales, rng,
                               stats ? &stats->sampling : nullptr);
    VideoTensor out = decode_video(z, codec);
    out.fps = req.source.fps;
    return out;
}

}  // namespace moca
