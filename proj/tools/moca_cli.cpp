// moca — motion-conditioned image animation at desk scale.
//
// Verbs: gen-data (synthetic benchmark), train (conditional denoiser), edit
// (first-frame edit -> guided animation, with a candidate sweep), eval
// (CLIP-style metrics over an edits tree), report (tables + human-label
// alignment). Settings resolve flag > config file > built-in default; the
// config file is JSON with schema "moca.config.v1" and the MOCA_CONFIG
// environment variable names the default config path.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "moca/benchmark.hpp"
#include "moca/core/error.hpp"
#include "moca/metrics.hpp"
#include "moca/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace moca;

namespace {

constexpr const char* kConfigSchema = "moca.config.v1";

// Flat key/value run config shared by all verbs. Unknown keys are rejected so
// a typo cannot silently fall back to a default.
struct RunConfig {
    json values = json::object();

    bool has(const std::string& key) const { return values.contains(key); }

    int64_t geti(const std::string& key) const {
        const json& v = values.at(key);
        if (!v.is_number_integer())
            throw usage_error("config key '" + key + "' must be an integer");
        return v.get<int64_t>();
    }
    uint64_t getu(const std::string& key) const {
        int64_t v = geti(key);
        if (v < 0) throw usage_error("config key '" + key + "' must be non-negative");
        return static_cast<uint64_t>(v);
    }
    double getf(const std::string& key) const {
        const json& v = values.at(key);
        if (!v.is_number()) throw usage_error("config key '" + key + "' must be a number");
        return v.get<double>();
    }
    std::string gets(const std::string& key) const {
        const json& v = values.at(key);
        if (!v.is_string()) throw usage_error("config key '" + key + "' must be a string");
        return v.get<std::string>();
    }
};

RunConfig load_run_config(const std::string& path) {
    static const std::set<std::string> kKeys = {
        "schema",      "seed",       "jobs",         "scenes",     "steps",
        "batch_size",  "lr",         "grad_clip",    "log_every",  "scale_image",
        "scale_text",  "scale_motion", "sample_steps", "eta",      "candidates",
        "backend",     "editor"};
    std::ifstream f(path);
    if (!f) throw usage_error("config file not found: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const std::exception& e) {
        throw usage_error(path + ": " + e.what());
    }
    if (!j.is_object()) throw usage_error(path + ": config must be a JSON object");
    for (auto& [k, v] : j.items()) {
        (void)v;
        if (!kKeys.count(k)) throw usage_error(path + ": unknown config key '" + k + "'");
    }
    if (!j.contains("schema") || !j["schema"].is_string() ||
        j["schema"].get<std::string>() != kConfigSchema)
        throw usage_error(path + ": config schema must be \"" + std::string(kConfigSchema) + "\"");
    return RunConfig{std::move(j)};
}

// --config wins; otherwise MOCA_CONFIG names a default config; otherwise the
// config layer is empty and built-in defaults apply.
RunConfig resolve_config(const CLI::Option* opt, const std::string& flag_path) {
    if (opt->count()) return load_run_config(flag_path);
    const char* env = std::getenv("MOCA_CONFIG");
    if (env && *env) return load_run_config(env);
    return {};
}

// One settings layer lookup: explicit flag > config key > fallback.
int64_t pick_i(const CLI::Option* opt, int64_t flag_val, const RunConfig& rc,
               const std::string& key, int64_t fallback) {
    if (opt->count()) return flag_val;
    if (rc.has(key)) return rc.geti(key);
    return fallback;
}
uint64_t pick_u(const CLI::Option* opt, uint64_t flag_val, const RunConfig& rc,
                const std::string& key, uint64_t fallback) {
    if (opt->count()) return flag_val;
    if (rc.has(key)) return rc.getu(key);
    return fallback;
}
double pick_f(const CLI::Option* opt, double flag_val, const RunConfig& rc,
              const std::string& key, double fallback) {
    if (opt->count()) return flag_val;
    if (rc.has(key)) return rc.getf(key);
    return fallback;
}
std::string pick_s(const CLI::Option* opt, const std::string& flag_val, const RunConfig& rc,
                   const std::string& key, const std::string& fallback) {
    if (opt->count()) return flag_val;
    if (rc.has(key)) return rc.gets(key);
    return fallback;
}

std::unique_ptr<EmbeddingBackend> make_backend(const std::string& word) {
    if (word == "oracle") return std::make_unique<OracleEmbedder>();
    if (word == "frames")
        return std::make_unique<FrameAvgBackend>(FrameAvgBackend::SimMode::score_avg);
    if (word == "frames-embed")
        return std::make_unique<FrameAvgBackend>(FrameAvgBackend::SimMode::embed_avg);
    throw usage_error("unknown backend '" + word + "' (oracle | frames | frames-embed)");
}

std::unique_ptr<FirstFrameEditor> make_editor(const std::string& word, const SceneSpec& scene) {
    if (word == "oracle") return std::make_unique<RecolorOracleEditor>(scene);
    if (word == "identity") return std::make_unique<IdentityEditor>();
    throw usage_error("unknown editor '" + word + "' (oracle | identity)");
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw usage_error("file not found: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Index-sharded worker pool; rethrows the first worker exception.
void parallel_for(int64_t n, int64_t jobs, const std::function<void(int64_t)>& body) {
    jobs = std::max<int64_t>(1, std::min(jobs, n));
    if (jobs == 1) {
        for (int64_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int64_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_err;
    auto worker = [&] {
        for (;;) {
            int64_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!first_err) first_err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int64_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_err) std::rethrow_exception(first_err);
}

// ---------------------------------------------------------------------------
// gen-data

int run_gen_data(const std::string& out, int64_t scenes, uint64_t seed, int64_t jobs) {
    generate_synthetic_benchmark(out, static_cast<int>(scenes), seed, static_cast<int>(jobs));
    std::cout << "wrote " << scenes << " scenes (" << scenes * kNumEditTypes << " tasks) under "
              << out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string corpus, out, resume;
    int64_t steps = 0, batch = 0, log_every = 0, jobs = 0;
    double lr = 0.0, grad_clip = 0.0;
    uint64_t seed = 0;
    bool resume_conflicts = false;  // batch/lr/seed given explicitly alongside --resume
};

int run_train(const TrainArgs& a) {
    if (a.steps < 0) throw usage_error("train: steps must be non-negative");
    fs::create_directories(a.out);
    ClipCorpus corpus = ClipCorpus::from_benchmark(a.corpus, static_cast<int>(a.jobs));

    std::unique_ptr<Trainer> tr;
    if (!a.resume.empty()) {
        if (a.resume_conflicts)
            throw usage_error(
                "train: --batch-size, --lr and --seed come from the checkpoint when resuming");
        tr = std::make_unique<Trainer>(Trainer::load(a.resume));
        std::cout << "resumed " << a.resume << " at step " << tr->steps_done() << "\n";
    } else {
        TrainConfig cfg;
        cfg.batch_size = static_cast<int>(a.batch);
        cfg.lr = a.lr;
        cfg.grad_clip = a.grad_clip;
        cfg.seed = a.seed;
        tr = std::make_unique<Trainer>(cfg);
    }
    std::cout << "training on " << corpus.size() << " clips, batch "
              << tr->config().batch_size << ", lr " << tr->config().lr << ", target step "
              << a.steps << "\n";

    const std::string ckpt = (fs::path(a.out) / "checkpoint.ckpt").string();
    std::ofstream lossf(fs::path(a.out) / "loss.csv", std::ios::trunc);
    if (!lossf) throw runtime_failure("train: cannot write " + a.out + "/loss.csv");
    lossf << "step,loss\n";

    while (tr->steps_done() < a.steps) {
        double loss;
        try {
            loss = tr->step(corpus);
        } catch (const runtime_failure&) {
            // step() throws before touching parameters, so this checkpoint
            // holds the last good state.
            lossf.flush();
            tr->save(ckpt);
            std::cerr << "moca: train: last good parameters kept at " << ckpt << "\n";
            throw;
        }
        const int64_t s = tr->steps_done();
        lossf << s << "," << fmt_double(loss) << "\n";
        if (a.log_every > 0 && (s % a.log_every == 0 || s == a.steps))
            std::printf("step %6lld  loss %.6f\n", static_cast<long long>(s), loss);
    }
    lossf.flush();
    tr->save(ckpt);
    std::cout << "saved " << ckpt << " at step " << tr->steps_done() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// edit

struct EditArgs {
    std::string checkpoint, corpus, task, out, type_word, backend = "oracle", editor = "oracle";
    double s_image = 1.0, s_text = 1.0, s_motion = 1.0, eta = 0.0;
    int64_t steps = 64, candidates = 1, jobs = 1;
    uint64_t seed = 0;
};

int run_edit(const EditArgs& a) {
    if (a.candidates < 1) throw usage_error("edit: candidates must be positive");
    Trainer tr = Trainer::load(a.checkpoint);
    const std::string manifest_path = (fs::path(a.corpus) / "manifest.jsonl").string();
    Manifest man = load_manifest(manifest_path);
    const EditTaskRecord* rec = nullptr;
    for (const auto& r : man.records)
        if (r.id == a.task) rec = &r;
    if (!rec) throw usage_error("edit: task '" + a.task + "' not in " + manifest_path);

    const fs::path video_path = fs::path(a.corpus) / rec->video;
    VideoTensor source = io::read_video_dir(video_path.string());
    EditType type = a.type_word.empty() ? rec->edit_type : edit_type_from_word(a.type_word);

    SceneSpec scene;
    if (a.editor == "oracle")
        scene = scene_from_json(read_text_file((video_path.parent_path() / "scene.json").string()));

    GuidanceScales scales;
    scales.s_image = a.s_image;
    scales.s_text = a.s_text;
    scales.s_motion = a.s_motion;
    SamplerConfig scfg;
    scfg.num_inference_steps = static_cast<int>(a.steps);
    scfg.eta = a.eta;

    std::cout << "task " << rec->id << " [" << edit_type_word(type) << "]: \""
              << rec->edit_prompt << "\"\n";
    if (is_motion_edit(type))
        std::cout << "motion edit: motion conditioning dropped (null motion slot, s_motion = 0)\n";

    struct Candidate {
        std::string name;
        uint64_t seed = 0;
        double sim = 0.0, dir = 0.0, geo = 0.0;
        VideoTensor video;
        EditStats stats;
    };
    std::vector<Candidate> cands(static_cast<size_t>(a.candidates));
    auto backend = make_backend(a.backend);

    parallel_for(a.candidates, a.jobs, [&](int64_t k) {
        Candidate& c = cands[static_cast<size_t>(k)];
        char name[32];
        std::snprintf(name, sizeof(name), "candidate_%02lld", static_cast<long long>(k));
        c.name = name;
        c.seed = a.seed + static_cast<uint64_t>(k);

        EditRequest req;
        req.source = source;
        req.source_prompt = rec->source_prompt;
        req.edit_prompt = rec->edit_prompt;
        req.type = type;
        req.scales = scales;
        req.sampler = scfg;
        req.seed = c.seed;

        CentroidFlowEstimator estimator;
        std::unique_ptr<FirstFrameEditor> editor = make_editor(a.editor, scene);
        c.video = moca_edit(req, tr.model(), tr.schedule(), tr.config().codec, &estimator,
                            *editor, &c.stats);
        c.sim = m_sim(source, c.video, *backend);
        c.dir = m_dir(source, c.video, rec->source_prompt, rec->edit_prompt, *backend);
        c.geo = m_geo(c.sim, c.dir);
    });

    fs::create_directories(a.out);
    for (const Candidate& c : cands)
        io::write_video_dir((fs::path(a.out) / c.name).string(), c.video);

    std::vector<const Candidate*> order;
    for (const Candidate& c : cands) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(),
                     [](const Candidate* x, const Candidate* y) { return x->geo > y->geo; });

    const std::string rank_path = (fs::path(a.out) / "ranking.jsonl").string();
    std::ofstream rank(rank_path, std::ios::trunc);
    if (!rank) throw runtime_failure("edit: cannot write " + rank_path);
    for (const Candidate* c : order) {
        nlohmann::ordered_json row;
        row["candidate"] = c->name;
        row["seed"] = c->seed;
        row["m_sim"] = c->sim;
        row["m_dir"] = c->dir;
        row["m_geo"] = c->geo;
        rank << row.dump() << "\n";
    }
    rank.flush();

    for (size_t i = 0; i < order.size(); ++i)
        std::printf("%2zu. %s  seed=%llu  m_geo=%.6f  (m_sim=%.6f m_dir=%.6f)\n", i + 1,
                    order[i]->name.c_str(), static_cast<unsigned long long>(order[i]->seed),
                    order[i]->geo, order[i]->sim, order[i]->dir);
    std::cout << "wrote " << a.candidates << " candidate(s) + " << rank_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<std::string> method_dirs(const std::string& root) {
    if (!fs::is_directory(root)) throw usage_error("eval: edits directory not found: " + root);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

int run_eval(const std::string& manifest_path, const std::string& edits,
             const std::string& methods_csv, const std::string& out_path,
             const std::string& backend_word, bool allow_missing) {
    Manifest man = load_manifest(manifest_path);
    std::vector<std::string> methods =
        methods_csv.empty() ? method_dirs(edits) : split_csv(methods_csv);
    if (methods.empty()) throw usage_error("eval: no methods to score under " + edits);

    auto backend = make_backend(backend_word);
    const std::string manifest_dir = fs::path(manifest_path).parent_path().string();
    ScoreTable table = compute_scores(man, manifest_dir.empty() ? "." : manifest_dir, edits,
                                      methods, *backend);

    for (const std::string& m : table.missing) std::cout << "missing edit: " << m << "\n";
    if (!table.missing.empty() && !allow_missing)
        throw runtime_failure("eval: " + std::to_string(table.missing.size()) +
                              " task(s) without an edit video (pass --allow-missing to skip them)");

    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw runtime_failure("eval: cannot write " + out_path);
    int64_t rows = 0;
    for (const auto& [method, tasks] : table.scores)
        for (const auto& [task, cell] : tasks) {
            nlohmann::ordered_json row;
            row["method"] = method;
            row["task_id"] = task;
            for (const char* k : {"m_sim", "m_dir", "m_geo"})
                if (cell.count(k)) row[k] = cell.at(k);
            f << row.dump() << "\n";
            ++rows;
        }
    f.flush();
    std::cout << "scored " << methods.size() << " method(s), " << rows << " rows -> " << out_path
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report

int run_report(const std::string& manifest_path, const std::string& scores_path,
               const std::string& labels_path, const std::string& out_dir) {
    Manifest man = load_manifest(manifest_path);
    ScoreTable scores = load_scores(scores_path);
    std::vector<PairedComparison> labels;
    if (!labels_path.empty()) labels = load_labels(labels_path);

    MetricReport rep = build_report(man, scores, labels, out_dir);

    std::cout << "ranking by overall M_geo:\n";
    for (size_t i = 0; i < rep.ranking_by_geo.size(); ++i) {
        const std::string& m = rep.ranking_by_geo[i];
        std::printf("%2zu. %-16s %.3f\n", i + 1, m.c_str(), rep.overall_geo.at(m));
    }
    if (rep.has_labels) {
        std::cout << "metric-vs-human accuracy:";
        for (const auto& [metric, acc] : rep.accuracy_overall)
            std::printf("  %s=%.3f", metric.c_str(), acc);
        std::cout << "\n";
    } else {
        std::cout << "no labels: alignment sections marked absent\n";
    }
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-conditioned image animation: synthetic benchmark, training, editing, "
                 "evaluation"};
    app.name("moca");
    app.require_subcommand(1);

    // gen-data ------------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic edit benchmark");
    std::string gen_out, gen_config;
    int64_t gen_scenes = 16, gen_jobs = 1;
    uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "Output corpus directory")->required();
    auto* gen_scenes_o = gen->add_option("--scenes", gen_scenes, "Scene count (6 tasks each)");
    auto* gen_seed_o = gen->add_option("--seed", gen_seed, "Generation seed");
    auto* gen_jobs_o = gen->add_option("--jobs", gen_jobs, "Worker threads");
    auto* gen_config_o = gen->add_option("--config", gen_config, "Run config file (JSON)");

    // train ---------------------------------------------------------------
    auto* train = app.add_subcommand("train", "Train the conditional denoiser on a corpus");
    TrainArgs ta;
    std::string train_config;
    train->add_option("--corpus", ta.corpus, "Benchmark directory from gen-data")->required();
    train->add_option("--out", ta.out, "Output directory (checkpoint.ckpt, loss.csv)")->required();
    auto* tr_steps_o = train->add_option("--steps", ta.steps, "Total optimizer steps");
    auto* tr_batch_o = train->add_option("--batch-size", ta.batch, "Clips per step");
    auto* tr_lr_o = train->add_option("--lr", ta.lr, "Learning rate");
    auto* tr_seed_o = train->add_option("--seed", ta.seed, "Training seed");
    auto* tr_log_o = train->add_option("--log-every", ta.log_every, "Loss print period, 0 = quiet");
    auto* tr_jobs_o = train->add_option("--jobs", ta.jobs, "Corpus loading threads");
    train->add_option("--resume", ta.resume, "Checkpoint to continue from");
    auto* tr_config_o = train->add_option("--config", train_config, "Run config file (JSON)");

    // edit ----------------------------------------------------------------
    auto* edit = app.add_subcommand("edit", "Animate a first-frame edit for one benchmark task");
    EditArgs ea;
    std::string edit_config;
    edit->add_option("--checkpoint", ea.checkpoint, "Trained checkpoint")->required();
    edit->add_option("--corpus", ea.corpus, "Benchmark directory with manifest.jsonl")->required();
    edit->add_option("--task", ea.task, "Task id from the manifest")->required();
    edit->add_option("--out", ea.out, "Output directory (candidates + ranking.jsonl)")->required();
    edit->add_option("--type", ea.type_word,
                     "Override the task's edit type (style|background|object|motion|"
                     "multi_spatial|multi_motion)");
    auto* ed_simg_o = edit->add_option("--scale-image", ea.s_image, "Image guidance scale");
    auto* ed_stxt_o = edit->add_option("--scale-text", ea.s_text, "Text guidance scale");
    auto* ed_smot_o = edit->add_option("--scale-motion", ea.s_motion, "Motion guidance scale");
    auto* ed_steps_o =
        edit->add_option("--steps", ea.steps, "DDIM steps (config key sample_steps)");
    auto* ed_eta_o = edit->add_option("--eta", ea.eta, "DDIM stochasticity");
    auto* ed_cand_o =
        edit->add_option("--candidates", ea.candidates, "Candidate count; seeds seed..seed+K-1");
    auto* ed_seed_o = edit->add_option("--seed", ea.seed, "Sampling seed of the first candidate");
    auto* ed_jobs_o = edit->add_option("--jobs", ea.jobs, "Candidate worker threads");
    auto* ed_backend_o = edit->add_option(
        "--backend", ea.backend, "Ranking backend (oracle | frames | frames-embed)");
    auto* ed_editor_o =
        edit->add_option("--editor", ea.editor, "First-frame editor (oracle | identity)");
    auto* ed_config_o = edit->add_option("--config", edit_config, "Run config file (JSON)");

    // eval ----------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "Score edit videos against a manifest");
    std::string ev_manifest, ev_edits, ev_methods, ev_out, ev_backend = "oracle", ev_config;
    bool ev_allow_missing = false;
    eval->add_option("--manifest", ev_manifest, "Benchmark manifest.jsonl")->required();
    eval->add_option("--edits", ev_edits, "Edits root: <edits>/<method>/<task id>/")->required();
    eval->add_option("--out", ev_out, "Scores output (JSONL)")->required();
    eval->add_option("--methods", ev_methods,
                     "Comma-separated method names (default: subdirectories of --edits)");
    auto* ev_backend_o = eval->add_option(
        "--backend", ev_backend, "Embedding backend (oracle | frames | frames-embed)");
    eval->add_flag("--allow-missing", ev_allow_missing, "Skip tasks without an edit video");
    auto* ev_config_o = eval->add_option("--config", ev_config, "Run config file (JSON)");

    // report --------------------------------------------------------------
    auto* report = app.add_subcommand("report", "Aggregate scores (and labels) into tables");
    std::string rp_manifest, rp_scores, rp_labels, rp_out, rp_config;
    report->add_option("--manifest", rp_manifest, "Benchmark manifest.jsonl")->required();
    report->add_option("--scores", rp_scores, "Scores file from eval")->required();
    report->add_option("--out", rp_out, "Report output directory")->required();
    report->add_option("--labels", rp_labels, "Human pairwise labels (JSONL)");
    auto* rp_config_o = report->add_option("--config", rp_config, "Run config file (JSON)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            RunConfig rc = resolve_config(gen_config_o, gen_config);
            return run_gen_data(gen_out, pick_i(gen_scenes_o, gen_scenes, rc, "scenes", 16),
                                pick_u(gen_seed_o, gen_seed, rc, "seed", 0),
                                pick_i(gen_jobs_o, gen_jobs, rc, "jobs", 1));
        }
        if (*train) {
            RunConfig rc = resolve_config(tr_config_o, train_config);
            TrainConfig defaults;
            ta.steps = pick_i(tr_steps_o, ta.steps, rc, "steps", 2000);
            ta.batch = pick_i(tr_batch_o, ta.batch, rc, "batch_size", defaults.batch_size);
            ta.lr = pick_f(tr_lr_o, ta.lr, rc, "lr", defaults.lr);
            ta.grad_clip = rc.has("grad_clip") ? rc.getf("grad_clip") : defaults.grad_clip;
            ta.seed = pick_u(tr_seed_o, ta.seed, rc, "seed", 0);
            ta.log_every = pick_i(tr_log_o, ta.log_every, rc, "log_every", 100);
            ta.jobs = pick_i(tr_jobs_o, ta.jobs, rc, "jobs", 1);
            ta.resume_conflicts =
                tr_batch_o->count() > 0 || tr_lr_o->count() > 0 || tr_seed_o->count() > 0;
            return run_train(ta);
        }
        if (*edit) {
            RunConfig rc = resolve_config(ed_config_o, edit_config);
            ea.s_image = pick_f(ed_simg_o, ea.s_image, rc, "scale_image", 1.0);
            ea.s_text = pick_f(ed_stxt_o, ea.s_text, rc, "scale_text", 1.0);
            ea.s_motion = pick_f(ed_smot_o, ea.s_motion, rc, "scale_motion", 1.0);
            ea.steps = pick_i(ed_steps_o, ea.steps, rc, "sample_steps", 64);
            ea.eta = pick_f(ed_eta_o, ea.eta, rc, "eta", 0.0);
            ea.candidates = pick_i(ed_cand_o, ea.candidates, rc, "candidates", 1);
            ea.seed = pick_u(ed_seed_o, ea.seed, rc, "seed", 0);
            ea.jobs = pick_i(ed_jobs_o, ea.jobs, rc, "jobs", 1);
            ea.backend = pick_s(ed_backend_o, ea.backend, rc, "backend", "oracle");
            ea.editor = pick_s(ed_editor_o, ea.editor, rc, "editor", "oracle");
            return run_edit(ea);
        }
        if (*eval) {
            RunConfig rc = resolve_config(ev_config_o, ev_config);
            return run_eval(ev_manifest, ev_edits, ev_methods, ev_out,
                            pick_s(ev_backend_o, ev_backend, rc, "backend", "oracle"),
                            ev_allow_missing);
        }
        if (*report) {
            resolve_config(rp_config_o, rp_config);  // validated even though report has no keys
            return run_report(rp_manifest, rp_scores, rp_labels, rp_out);
        }
    } catch (const usage_error& e) {
        std::cerr << "moca: " << e.what() << "\n";
        return 2;
    } catch (const runtime_failure& e) {
        std::cerr << "moca: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "moca: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
