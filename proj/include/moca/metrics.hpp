#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "moca/benchmark.hpp"
#include "moca/codec.hpp"

namespace moca {

// Embedding seam standing in for VideoCLIP / ImageCLIP: videos and texts map
// into one space as unit vectors.
struct EmbeddingBackend {
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<double> embed_video(const VideoTensor& video) const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
    // Default: dot of the two video embeddings. Frame-scored backends
    // override this with per-frame score averaging.
    virtual double video_similarity(const VideoTensor& a, const VideoTensor& b) const;
};

// Closed-form backend over the synthetic scene attributes: one-hot shape
// color (8) | one-hot background color (8) | one-hot style (3) | unit
// velocity direction (2), L2-normalized. Texts parse the scene prompt
// grammar into the same encoding, so a correct edit has identical video and
// text deltas.
class OracleEmbedder : public EmbeddingBackend {
  public:
    std::vector<double> embed_video(const VideoTensor& video) const override;
    std::vector<double> embed_text(const std::string& text) const override;

    static constexpr int kDim = 2 * kNumColors + 3 + 2;
};

// Toy stand-in for the ImageCLIP protocol: per-frame 4x4 block-mean RGB
// features (48 dims). Texts embed the color words they mention spread over
// the grid. score_avg averages per-frame similarity scores; embed_avg
// compares averaged embeddings (deltas always use averaged embeddings).
class FrameAvgBackend : public EmbeddingBackend {
  public:
    enum class SimMode { score_avg, embed_avg };

    explicit FrameAvgBackend(SimMode mode = SimMode::score_avg) : mode_(mode) {}

    std::vector<double> embed_video(const VideoTensor& video) const override;
    std::vector<double> embed_text(const std::string& text) const override;
    double video_similarity(const VideoTensor& a, const VideoTensor& b) const override;

    static constexpr int kDim = 48;

  private:
    SimMode mode_;
};

double m_sim(const VideoTensor& source, const VideoTensor& edit, const EmbeddingBackend& backend);

// Cosine of (video delta, text delta); either delta below 1e-9 in norm gives
// 0 — "no change" has no direction.
double m_dir(const VideoTensor& source, const VideoTensor& edit, const std::string& source_prompt,
             const std::string& edit_prompt, const EmbeddingBackend& backend);

// sqrt(max(0, sim * dir)).
double m_geo(double sim, double dir);

enum class Choice { A, B };

struct Vote {
    Choice choice = Choice::A;
    bool align = false;        // better alignment with the edit prompt
    bool consistency = false;  // better consistency with the source video
};

struct VoteSummary {
    Choice winner = Choice::A;
    int winner_votes = 0;
    int total_votes = 0;
    // Fractions over the winner's votes; exclusive categories, sum to 1.
    double frac_align = 0.0;
    double frac_consistency = 0.0;
    double frac_both = 0.0;
};

// Requires an odd vote count and at least one reason per vote.
VoteSummary majority_vote(const std::vector<Vote>& votes);

struct PairedComparison {
    std::string task_id;
    std::string method_a;
    std::string method_b;
    std::map<std::string, double> score_a;  // metric name -> value
    std::map<std::string, double> score_b;
    std::vector<Vote> votes;
};

// One JSON object per line; enforces the Vote invariants. Errors carry line
// numbers.
std::vector<PairedComparison> load_labels(const std::string& path);

// Fraction of comparisons where the higher-scoring side matches the human
// majority; exact score ties count 0.5.
double metric_classification_accuracy(const std::vector<PairedComparison>& comparisons,
                                      const std::string& metric);

// Spearman rank correlation with mean ranks for ties. Zero variance in
// either argument is undefined and throws.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// scores[method][task_id][metric name] = value.
struct ScoreTable {
    std::map<std::string, std::map<std::string, std::map<std::string, double>>> scores;
    std::vector<std::string> missing;  // "method/task_id" rows without an edit video
};

ScoreTable load_scores(const std::string& path);

// Scores every (method, manifest row) pair: source video at
// manifest_dir/<record.video>, edit at edits_root/<method>/<task id>.
// Missing edits are skipped and listed in `missing`.
ScoreTable compute_scores(const Manifest& manifest, const std::string& manifest_dir,
                          const std::string& edits_root, const std::vector<std::string>& methods,
                          const EmbeddingBackend& backend);

struct MetricReport {
    std::vector<std::string> methods;
    // method -> per edit type mean (NaN where no tasks) and overall mean.
    std::map<std::string, std::array<double, kNumEditTypes>> per_type_dir, per_type_geo;
    std::map<std::string, std::array<int64_t, kNumEditTypes>> per_type_n;
    std::map<std::string, double> overall_dir, overall_geo;
    std::vector<std::string> ranking_by_geo;  // descending overall M_geo

    bool has_labels = false;
    std::map<std::string, double> accuracy_overall;  // metric -> accuracy
    std::map<std::string, std::array<double, kNumEditTypes>> accuracy_per_type;
    std::map<std::string, double> rho_overall;  // metric -> Spearman rho (score gap vs A-vote share)
    double frac_align = 0.0, frac_consistency = 0.0, frac_both = 0.0;
    std::map<std::string, std::array<double, 3>> reasons_by_baseline;  // method_b -> fractions

    std::vector<std::string> missing;
};

// Aggregates scores + labels into the report and writes report.json, plain
// text tables, and a reason-breakdown chart under out_dir.
MetricReport build_report(const Manifest& manifest, const ScoreTable& scores,
                          const std::vector<PairedComparison>& labels,
                          const std::string& out_dir);

}  // namespace moca
