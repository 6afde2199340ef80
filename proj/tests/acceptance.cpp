// Acceptance gate: ten criteria, one PASS/FAIL line each with the measured
// value next to its tolerance. Exit code = number of failed criteria.
//
// The expensive middle (criterion 4 trains the full model for 2000 steps on
// 512 clips; criterion 5 samples 64 videos with the result; criterion 10
// runs the CLI workflow twice) dominates the runtime — about an hour on one
// CPU core. Everything else is seconds.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "moca/benchmark.hpp"
#include "moca/core/error.hpp"
#include "moca/metrics.hpp"
#include "moca/pipeline.hpp"

using namespace moca;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double now_s() {
    using clock = std::chrono::steady_clock;
    static const clock::time_point t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

void report(int id, const char* name, bool pass, const std::string& detail, double secs) {
    std::printf("%s  %2d. %-24s %s  [%.1f s]\n", pass ? "PASS" : "FAIL", id, name,
                detail.c_str(), secs);
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v, int prec = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

Tensor randn(const std::vector<int64_t>& shape, Rng& rng) {
    Tensor t(shape);
    for (float& v : t.data) v = rng.normal_f();
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[static_cast<size_t>(i)]) -
                                 b.data[static_cast<size_t>(i)]));
    return m;
}

// ---------------------------------------------------------------------------
// 1. Guidance algebra

void criterion_1() {
    double t0 = now_s();
    Rng rng(101);
    double worst_full = 0.0, worst_unc = 0.0;
    for (int i = 0; i < 1000; ++i) {
        Tensor u000 = randn({2, 3, 4, 4}, rng), u00i = randn({2, 3, 4, 4}, rng);
        Tensor u0ti = randn({2, 3, 4, 4}, rng), umti = randn({2, 3, 4, 4}, rng);
        worst_full = std::max(
            worst_full, max_abs_diff(compose_guidance(u000, u00i, u0ti, umti, {1, 1, 1}), umti));
        worst_unc = std::max(
            worst_unc, max_abs_diff(compose_guidance(u000, u00i, u0ti, umti, {0, 0, 0}), u000));
    }
    Tensor s0({1}, {0.0f}), s1({1}, {1.0f}), s3({1}, {3.0f}), s7({1}, {7.0f});
    double stub = compose_guidance(s0, s1, s3, s7, {2.0, 1.0, 0.5}).data[0];

    double secs = now_s() - t0;
    bool pass = worst_full <= 1e-6 && worst_unc <= 1e-6 && stub == 6.0 && secs < 5.0;
    report(1, "guidance algebra", pass,
           "1000 draws: s=(1,1,1) vs conditioned max|d|=" + fmt(worst_full) +
               ", s=(0,0,0) vs unconditional max|d|=" + fmt(worst_unc) +
               " (tol 1e-6); stub (0,1,3,7 @ 2,1,0.5)=" + fmt(stub) + " (=6 exactly); <5s",
           secs);
}

// ---------------------------------------------------------------------------
// 2. Schedule correctness

void criterion_2() {
    double t0 = now_s();
    NoiseSchedule sched = make_schedule(1000);
    const int N = sched.num_train_steps;

    bool terminal_zero = sched.alpha_bar[static_cast<size_t>(N)] == 0.0;
    double worst_unit = 0.0;
    for (int t = 0; t <= N; ++t) {
        double a = sched.alpha(t), s = sched.sigma(t);
        worst_unit = std::max(worst_unit, std::abs(a * a + s * s - 1.0));
    }

    Rng rng(202);
    double worst_rt = 0.0;
    for (int i = 0; i < 1000; ++i) {
        int t = 1 + static_cast<int>(rng.uniform_int(N));
        LatentVideo x0{randn({1, 1, 2, 2}, rng)};
        Tensor eps = randn({1, 1, 2, 2}, rng);
        LatentVideo zt = add_noise(x0, eps, t, sched);
        Tensor v = v_target(x0, eps, t, sched);
        worst_rt = std::max(worst_rt, max_abs_diff(predict_x0_from_v(zt, v, t, sched).latents,
                                                   x0.latents));
        worst_rt = std::max(worst_rt, max_abs_diff(predict_eps_from_v(zt, v, t, sched), eps));
    }

    // Oracle DDIM: a denoiser that knows x0 exactly must carry 64 eta=0 steps
    // from pure noise back to x0.
    LatentVideo x0{randn({1, 1, 2, 2}, rng)};
    LatentVideo z{randn({1, 1, 2, 2}, rng)};
    SamplerConfig scfg;
    std::vector<int> ts = inference_timesteps(N, scfg.num_inference_steps);
    for (size_t i = 0; i < ts.size(); ++i) {
        int t = ts[i], t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        double a = sched.alpha(t), s = sched.sigma(t);
        Tensor eps_implied({1, 1, 2, 2});
        for (size_t k = 0; k < eps_implied.data.size(); ++k)
            eps_implied.data[k] =
                static_cast<float>((z.latents.data[k] - a * x0.latents.data[k]) / s);
        Tensor v = v_target(x0, eps_implied, t, sched);
        z = ddim_step(z, v, t, t_prev, sched, scfg, rng);
    }
    double ddim_err = max_abs_diff(z.latents, x0.latents);

    double secs = now_s() - t0;
    bool pass = terminal_zero && worst_unit <= 1e-9 && worst_rt <= 1e-6 && ddim_err <= 1e-4 &&
                secs < 10.0;
    report(2, "schedule", pass,
           "terminal alpha_bar=" + fmt(sched.alpha_bar[static_cast<size_t>(N)]) +
               " (=0 exactly); max|a^2+s^2-1|=" + fmt(worst_unit) +
               " (tol 1e-9); v-roundtrip max|d|=" + fmt(worst_rt) +
               " (tol 1e-6, 1000 draws); 64-step oracle DDIM |x0_hat-x0|=" + fmt(ddim_err) +
               " (tol 1e-4); <10s",
           secs);
}

// ---------------------------------------------------------------------------
// 3. Dropout policy

void criterion_3() {
    double t0 = now_s();
    DropoutPolicy policy;
    Rng rng(303);
    const int n = 1'000'000;
    int64_t drop_m = 0, drop_t = 0, drop_i = 0, drop_all = 0;
    for (int i = 0; i < n; ++i) {
        DropMask m = sample_dropout_mask(policy, rng);
        drop_m += m.drop_motion;
        drop_t += m.drop_text;
        drop_i += m.drop_image;
        drop_all += m.drop_motion && m.drop_text && m.drop_image;
    }
    double pm = double(drop_m) / n, pt = double(drop_t) / n, pi = double(drop_i) / n;
    double pall = double(drop_all) / n;

    double secs = now_s() - t0;
    bool pass = std::abs(pm - 0.5) <= 0.003 && std::abs(pt - 0.3) <= 0.003 &&
                std::abs(pi - 0.3) <= 0.003 && pall > 0.02 && secs < 30.0;
    report(3, "dropout policy", pass,
           "10^6 draws: P(motion null)=" + fmt(pm, 4) + " (0.500+-0.003), P(text)=" + fmt(pt, 4) +
               " (0.300+-0.003), P(image)=" + fmt(pi, 4) + " (0.300+-0.003), P(all)=" +
               fmt(pall, 4) + " (>0.02); <30s",
           secs);
}

// ---------------------------------------------------------------------------
// 4. Toy training (shares its model with criterion 5)

struct TrainOutcome {
    std::unique_ptr<Trainer> trainer;
    double step0 = 0.0, final_loss = 0.0, tail_mean = 0.0;
    bool deterministic = false;
    double secs = 0.0;
};

TrainOutcome criterion_4() {
    double t0 = now_s();
    ClipCorpus corpus = ClipCorpus::synthetic(512, 1);
    TrainConfig cfg;
    cfg.seed = 2024;

    TrainOutcome out;
    out.trainer = std::make_unique<Trainer>(cfg);
    std::vector<double> losses;
    losses.reserve(2000);
    for (int i = 0; i < 2000; ++i) losses.push_back(out.trainer->step(corpus));
    out.step0 = losses.front();
    out.final_loss = losses.back();
    out.tail_mean = std::accumulate(losses.end() - 100, losses.end(), 0.0) / 100.0;

    // Seeded determinism: a fresh run reproduces the loss stream bitwise
    // over a 50-step prefix.
    Trainer again(cfg);
    out.deterministic = true;
    for (int i = 0; i < 50; ++i)
        if (again.step(corpus) != losses[static_cast<size_t>(i)]) out.deterministic = false;

    out.secs = now_s() - t0;
    bool pass = std::abs(out.step0 - 1.0) <= 0.2 && out.final_loss <= 0.5 * out.step0 &&
                out.deterministic && out.secs <= 4.0 * 3600.0;
    report(4, "toy training", pass,
           "512 clips, 2000 steps: step-0 loss=" + fmt(out.step0) +
               " (1.0+-0.2), final=" + fmt(out.final_loss) + " <= 50% of step-0 (last-100 mean " +
               fmt(out.tail_mean) + "); 50-step rerun bitwise equal=" +
               (out.deterministic ? "yes" : "no") + "; <=4h CPU",
           out.secs);
    return out;
}

// ---------------------------------------------------------------------------
// 5. Motion-conditioning ablation

void criterion_5(const Trainer& tr) {
    double t0 = now_s();
    const int kTasks = 32;

    // Spatial edits, s_M = 2: the generated clip must follow the source
    // trajectory.
    double mae_sum = 0.0;
    int mae_ok = 0;
    for (int i = 0; i < kTasks; ++i) {
        Rng rng = Rng::derive(9000, static_cast<uint64_t>(i));
        SceneSpec src = sample_scene(rng, 8, 64, 64);
        EditType ty = std::array<EditType, 3>{EditType::style, EditType::background,
                                              EditType::object}[i % 3];
        SceneSpec ed = derive_edit(src, ty, 8, 64, 64, rng);

        EditRequest req;
        req.source = render_scene(src, 8, 64, 64);
        req.source_prompt = prompt_for(src);
        req.edit_prompt = prompt_for(ed);
        req.type = ty;
        req.scales.s_motion = 2.0;
        req.seed = 7000 + static_cast<uint64_t>(i);

        CentroidFlowEstimator est;
        RecolorOracleEditor editor(src);
        VideoTensor gen = moca_edit(req, tr.model(), tr.schedule(), tr.config().codec, &est,
                                    editor, nullptr);
        double mae;
        try {
            VideoAttributes va_src = extract_attributes(req.source);
            VideoAttributes va_gen = extract_attributes(gen);
            double acc = 0.0;
            for (size_t f = 0; f < va_src.centroids.size(); ++f)
                acc += std::hypot(va_gen.centroids[f][0] - va_src.centroids[f][0],
                                  va_gen.centroids[f][1] - va_src.centroids[f][1]);
            mae = acc / static_cast<double>(va_src.centroids.size());
        } catch (const runtime_failure&) {
            mae = std::hypot(64.0, 64.0);  // no extractable shape: worst case
        }
        mae_sum += mae;
        mae_ok += (mae <= 2.0);
    }
    double mae_mean = mae_sum / kTasks;

    // Motion edits, s_M = 0: the text prompt alone must set the direction.
    int dir_ok = 0;
    double cos_sum = 0.0;
    for (int i = 0; i < kTasks; ++i) {
        Rng rng = Rng::derive(9500, static_cast<uint64_t>(i));
        SceneSpec src = sample_scene(rng, 8, 64, 64);
        SceneSpec ed = derive_edit(src, EditType::motion, 8, 64, 64, rng);

        EditRequest req;
        req.source = render_scene(src, 8, 64, 64);
        req.source_prompt = prompt_for(src);
        req.edit_prompt = prompt_for(ed);
        req.type = EditType::motion;
        req.scales.s_motion = 0.0;
        req.seed = 7500 + static_cast<uint64_t>(i);

        CentroidFlowEstimator est;
        RecolorOracleEditor editor(src);
        VideoTensor gen = moca_edit(req, tr.model(), tr.schedule(), tr.config().codec, &est,
                                    editor, nullptr);
        double c = -1.0;
        try {
            VideoAttributes va = extract_attributes(gen);
            double speed = std::hypot(va.vx, va.vy);
            std::array<int, 2> want = velocity_of(direction_of(ed.vx, ed.vy), 1);
            double wn = std::hypot(double(want[0]), double(want[1]));
            if (speed >= 0.05 && wn > 0)
                c = (va.vx * want[0] + va.vy * want[1]) / (speed * wn);
        } catch (const runtime_failure&) {
        }
        cos_sum += std::max(c, -1.0);
        dir_ok += (c >= 0.8);
    }
    double frac_dir = double(dir_ok) / kTasks;

    double secs = now_s() - t0;
    bool pass = mae_mean <= 2.0 && frac_dir >= 0.75;
    report(5, "motion ablation", pass,
           "32 spatial tasks s_M=2: centroid MAE=" + fmt(mae_mean, 4) + " px/frame (tol 2.0, " +
               std::to_string(mae_ok) + "/32 within); 32 motion tasks s_M=0: cos>=0.8 on " +
               std::to_string(dir_ok) + "/32=" + fmt(frac_dir, 3) + " (need >=0.75, mean cos " +
               fmt(cos_sum / kTasks, 3) + ")",
           secs);
}

// ---------------------------------------------------------------------------
// 6. Metrics vs oracle

double spearman_reference(const std::vector<double>& x, const std::vector<double>& y) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<long double> r(v.size());
        for (size_t i = 0; i < v.size(); ++i) {
            long double less = 0, eq = 0;
            for (size_t j = 0; j < v.size(); ++j) {
                less += (v[j] < v[i]);
                eq += (v[j] == v[i]);
            }
            r[i] = 1.0L + less + 0.5L * (eq - 1.0L);
        }
        return r;
    };
    std::vector<long double> rx = ranks(x), ry = ranks(y);
    long double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= rx.size();
    my /= ry.size();
    long double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return static_cast<double>(num / std::sqrt(dx * dy));
}

void criterion_6() {
    double t0 = now_s();
    OracleEmbedder oracle;

    int correct_wins = 0;
    const int kPairs = 200;
    for (int i = 0; i < kPairs; ++i) {
        Rng rng = Rng::derive(600, static_cast<uint64_t>(i));
        SceneSpec src = sample_scene(rng, 8, 64, 64);
        EditType ty = static_cast<EditType>(i % kNumEditTypes);
        SceneSpec good = derive_edit(src, ty, 8, 64, 64, rng);

        // Corruptions cycle: unedited source, an edit of a different type,
        // a differently-parameterized edit of the same type.
        SceneSpec bad = src;
        switch (i % 3) {
            case 0:
                break;
            case 1:
                bad = derive_edit(src, static_cast<EditType>((i + 2) % kNumEditTypes), 8, 64, 64,
                                  rng);
                break;
            case 2: {
                Rng other = Rng::derive(601, static_cast<uint64_t>(i));
                bad = derive_edit(src, ty, 8, 64, 64, other);
                break;
            }
        }

        VideoTensor vs = render_scene(src, 8, 64, 64);
        VideoTensor vg = render_scene(good, 8, 64, 64);
        VideoTensor vb = render_scene(bad, 8, 64, 64);
        std::string ps = prompt_for(src), pe = prompt_for(good);
        double d_good = m_dir(vs, vg, ps, pe, oracle);
        double d_bad = m_dir(vs, vb, ps, pe, oracle);
        correct_wins += (d_good > d_bad);
    }

    bool geo_exact = m_geo(0.25, 0.04) == 0.1;

    double worst_rho = 0.0;
    int checked = 0;
    for (int n = 2; n <= 6; ++n) {
        std::vector<double> x(static_cast<size_t>(n)), perm(static_cast<size_t>(n));
        std::iota(x.begin(), x.end(), 1.0);
        std::iota(perm.begin(), perm.end(), 1.0);
        do {
            worst_rho = std::max(worst_rho,
                                 std::abs(spearman(x, perm) - spearman_reference(x, perm)));
            ++checked;
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
    Rng rng(606);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(8), y(8);
        bool ok = false;
        while (!ok) {
            for (auto& v : x) v = static_cast<double>(rng.uniform_int(4));
            for (auto& v : y) v = static_cast<double>(rng.uniform_int(4));
            auto var = [](const std::vector<double>& v) {
                double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size(), s = 0;
                for (double e : v) s += (e - m) * (e - m);
                return s;
            };
            ok = var(x) > 0 && var(y) > 0;
        }
        worst_rho = std::max(worst_rho, std::abs(spearman(x, y) - spearman_reference(x, y)));
    }

    double secs = now_s() - t0;
    bool pass = correct_wins >= 190 && geo_exact && worst_rho <= 1e-12 && secs < 60.0;
    report(6, "metrics vs oracle", pass,
           "M_dir ranks correct edit higher on " + std::to_string(correct_wins) + "/200 (need " +
               ">=190); m_geo(0.25,0.04)=" + fmt(m_geo(0.25, 0.04), 17) +
               " (=0.1 exactly); spearman vs oracle max|d|=" + fmt(worst_rho) + " over " +
               std::to_string(checked) + " permutations + 100 tied (tol 1e-12); <1min",
           secs);
}

// ---------------------------------------------------------------------------
// 7. Dataset fixture

void criterion_7() {
    double t0 = now_s();
    Manifest m = load_manifest(std::string(TEST_DATA_DIR) + "/paper_manifest.jsonl");
    DatasetStats s = compute_stats(m.records);

    auto cell = [&](const char* ds, EditType ty) { return s.count(ds, ty); };
    bool pass = m.records.size() == 271 && s.overall.total == 271 &&
                s.overall.unique_videos == 81;
    // Published per-dataset rows (every printed cell; the Dreamix object
    // count is the reconciled 10 that makes the printed margins add up).
    pass = pass && cell("LOVEU-TGVE", EditType::style) == 35 &&
           cell("LOVEU-TGVE", EditType::background) == 35 &&
           cell("LOVEU-TGVE", EditType::object) == 35 &&
           cell("LOVEU-TGVE", EditType::motion) == 0 &&
           cell("LOVEU-TGVE", EditType::multi_spatial) == 35 &&
           cell("LOVEU-TGVE", EditType::multi_motion) == 0;
    pass = pass && cell("Dreamix", EditType::style) == 1 &&
           cell("Dreamix", EditType::background) == 1 && cell("Dreamix", EditType::motion) == 2 &&
           cell("Dreamix", EditType::multi_spatial) == 0 &&
           cell("Dreamix", EditType::multi_motion) == 0 &&
           s.by_dataset.at("Dreamix").total == 14;
    pass = pass && cell("Custom", EditType::style) == 11 &&
           cell("Custom", EditType::background) == 7 && cell("Custom", EditType::object) == 14 &&
           cell("Custom", EditType::motion) == 68 &&
           cell("Custom", EditType::multi_spatial) == 0 &&
           cell("Custom", EditType::multi_motion) == 17 &&
           s.by_dataset.at("Custom").total == 117;
    pass = pass && s.by_dataset.at("LOVEU-TGVE").total == 140 &&
           s.by_dataset.at("LOVEU-TGVE").unique_videos == 35 &&
           s.by_dataset.at("Dreamix").unique_videos == 9 &&
           s.by_dataset.at("Custom").unique_videos == 37;
    double avg_l = s.by_dataset.at("LOVEU-TGVE").avg_edits_per_video;
    double avg_d = s.by_dataset.at("Dreamix").avg_edits_per_video;
    double avg_c = s.by_dataset.at("Custom").avg_edits_per_video;
    pass = pass && avg_l == 4.0 && std::round(avg_d * 100) / 100 == 1.56 &&
           std::round(avg_c * 100) / 100 == 3.16;

    report(7, "dataset fixture", pass,
           "manifest: 271 records, motion row 0/2/68, unique videos 35/9/37 (81 overall), "
           "avg edits " + fmt(avg_l, 3) + "/" + fmt(avg_d, 3) + "/" + fmt(avg_c, 3) +
               " -> 4.00/1.56/3.16; all published cells exact",
           now_s() - t0);
}

// ---------------------------------------------------------------------------
// 8. Report fixture

void criterion_8() {
    double t0 = now_s();
    Manifest m = load_manifest(std::string(TEST_DATA_DIR) + "/paper_manifest.jsonl");
    fs::path tmp = fs::temp_directory_path() / "moca_acceptance_report";
    fs::remove_all(tmp);

    ScoreTable overall = load_scores(std::string(TEST_DATA_DIR) + "/paper_scores_overall.jsonl");
    MetricReport rep = build_report(m, overall, {}, (tmp / "overall").string());
    const std::vector<std::string> want = {"MoCA",    "VideoComposer", "Tune-a-Video", "Gen-1",
                                           "Dreamix", "TokenFlow",     "MasaCtrl"};
    const std::vector<double> want_geo = {0.301, 0.278, 0.265, 0.254, 0.252, 0.235, 0.231};
    bool rank_ok = rep.ranking_by_geo == want;
    double worst = 0.0;
    for (size_t i = 0; i < want.size() && rank_ok; ++i)
        worst = std::max(worst, std::abs(rep.overall_geo.at(want[i]) - want_geo[i]));

    ScoreTable by_type = load_scores(std::string(TEST_DATA_DIR) + "/paper_scores_by_type.jsonl");
    MetricReport rep2 = build_report(m, by_type, {}, (tmp / "by_type").string());
    std::string best;
    double best_v = -1.0;
    for (const auto& method : rep2.methods) {
        double v = rep2.per_type_geo.at(method)[static_cast<size_t>(EditType::motion)];
        if (v > best_v) {
            best_v = v;
            best = method;
        }
    }
    fs::remove_all(tmp);

    double secs = now_s() - t0;
    bool pass = rank_ok && worst <= 1e-9 && best == "VideoComposer" &&
                std::abs(best_v - 0.187) <= 1e-9;
    report(8, "report fixture", pass,
           "overall ranking = published order (MoCA 0.301 ... MasaCtrl 0.231, max|d|=" +
               fmt(worst) + ", tol 1e-9); motion-column max = " + best + " " + fmt(best_v, 3) +
               " (VideoComposer 0.187)",
           secs);
}

// ---------------------------------------------------------------------------
// 9. Human-label aggregation

void criterion_9() {
    double t0 = now_s();
    auto v = [](Choice c, bool al, bool co) {
        Vote x;
        x.choice = c;
        x.align = al;
        x.consistency = co;
        return x;
    };

    VoteSummary s1 = majority_vote({v(Choice::A, true, false), v(Choice::A, false, true),
                                    v(Choice::A, true, true), v(Choice::B, true, false),
                                    v(Choice::B, true, false)});
    bool f1 = s1.winner == Choice::A && s1.winner_votes == 3 && s1.total_votes == 5 &&
              s1.frac_align == 1.0 / 3.0 && s1.frac_consistency == 1.0 / 3.0 &&
              s1.frac_both == 1.0 / 3.0;

    VoteSummary s2 = majority_vote({v(Choice::B, true, false), v(Choice::B, true, false),
                                    v(Choice::B, true, true), v(Choice::A, false, true),
                                    v(Choice::A, false, true)});
    bool f2 = s2.winner == Choice::B && s2.winner_votes == 3 && s2.frac_align == 2.0 / 3.0 &&
              s2.frac_both == 1.0 / 3.0 && s2.frac_consistency == 0.0;

    bool even_rejected = false;
    try {
        majority_vote({v(Choice::A, true, false), v(Choice::A, true, false),
                       v(Choice::B, true, false), v(Choice::B, true, false)});
    } catch (const usage_error&) {
        even_rejected = true;
    }
    bool empty_rejected = false;
    try {
        majority_vote({});
    } catch (const usage_error&) {
        empty_rejected = true;
    }

    bool pass = f1 && f2 && even_rejected && empty_rejected;
    report(9, "human labels", pass,
           std::string("5-vote fixtures: majority winners and reason fractions (1/3,1/3,1/3 and "
                       "2/3,0,1/3) exact=") +
               ((f1 && f2) ? "yes" : "no") + "; even and empty vote counts rejected=" +
               ((even_rejected && empty_rejected) ? "yes" : "no"),
           now_s() - t0);
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism through the CLI

int shell(const std::string& cmd) {
    int status = std::system(("MOCA_CONFIG= " + cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

uint64_t tree_digest(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    uint64_t h = 1469598103934665603ull;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) h = (h ^ c) * 1099511628211ull;
    };
    for (const auto& f : files) {
        mix(fs::relative(f, root).string());
        std::ifstream in(f, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        mix(ss.str());
    }
    return h;
}

void criterion_10() {
    double t0 = now_s();
    const std::string bin = MOCA_CLI_PATH;
    fs::path base = fs::temp_directory_path() / "moca_acceptance_e2e";
    fs::remove_all(base);

    bool steps_ok = true;
    for (const char* run : {"a", "b"}) {
        fs::path d = base / run;
        fs::create_directories(d);
        auto sh = [&](const std::string& args) {
            int rc = shell(bin + " " + args);
            if (rc != 0) steps_ok = false;
            return rc == 0;
        };
        if (!sh("gen-data --out " + (d / "corpus").string() + " --scenes 8 --seed 11")) break;
        if (!sh("train --corpus " + (d / "corpus").string() + " --out " + (d / "run").string() +
                " --steps 100 --seed 4 --log-every 0"))
            break;
        if (!sh("edit --checkpoint " + (d / "run" / "checkpoint.ckpt").string() + " --corpus " +
                (d / "corpus").string() +
                " --task scene_0000.object --out " + (d / "edit").string() +
                " --candidates 2 --seed 9"))
            break;
        fs::create_directories(d / "edits" / "moca");
        fs::copy(d / "edit" / "candidate_00", d / "edits" / "moca" / "scene_0000.object",
                 fs::copy_options::recursive);
        if (!sh("eval --manifest " + (d / "corpus" / "manifest.jsonl").string() + " --edits " +
                (d / "edits").string() + " --out " + (d / "scores.jsonl").string() +
                " --allow-missing"))
            break;
    }

    bool identical = false;
    if (steps_ok) identical = tree_digest(base / "a") == tree_digest(base / "b");
    fs::remove_all(base);

    double secs = now_s() - t0;
    report(10, "end-to-end determinism", steps_ok && identical,
           std::string("gen-data -> train(100) -> edit -> eval twice under seed: all commands "
                       "exit 0=") +
               (steps_ok ? "yes" : "no") + ", artifact trees byte-identical=" +
               (identical ? "yes" : "no"),
           secs);
}

}  // namespace

template <typename F>
void guarded(int id, const char* name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what(), 0.0);
    }
}

int main() {
    std::printf("acceptance: 10 criteria\n");
    guarded(1, "guidance algebra", criterion_1);
    guarded(2, "schedule", criterion_2);
    guarded(3, "dropout policy", criterion_3);
    TrainOutcome trained;
    guarded(4, "toy training", [&] { trained = criterion_4(); });
    if (trained.trainer)
        guarded(5, "motion ablation", [&] { criterion_5(*trained.trainer); });
    else
        report(5, "motion ablation", false, "skipped: criterion 4 produced no model", 0.0);
    guarded(6, "metrics vs oracle", criterion_6);
    guarded(7, "dataset fixture", criterion_7);
    guarded(8, "report fixture", criterion_8);
    guarded(9, "human labels", criterion_9);
    guarded(10, "end-to-end determinism", criterion_10);
    std::printf("%d/10 criteria passed\n", 10 - g_failures);
    return g_failures;
}
