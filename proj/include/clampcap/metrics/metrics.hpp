#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace clampcap::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
  std::string clip_id;
  Tokens candidate;
  std::vector<Tokens> references;
};

// Corpus scores below are fractions (CIDEr-D tops out at 10).

/// Corpus BLEU with uniform weights over 1..n, clipped n-gram precision and
/// brevity penalty against the closest reference length. No smoothing.
double bleu_n(std::span<const EvalPair> corpus, int n);

/// LCS-based F-measure (beta = 1.2), best reference per clip, mean over clips.
double rouge_l(std::span<const EvalPair> corpus);
double rouge_l_pair(const Tokens& candidate, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Exact-token alignment with the most matches, and among those the fewest
/// chunks.
Alignment meteor_align(const Tokens& candidate, const Tokens& reference);
double meteor_pair(const Tokens& candidate, const Tokens& reference);
/// METEOR restricted to exact matches: best reference per clip, mean over clips.
double meteor_exact(std::span<const EvalPair> corpus);

struct CiderOptions {
  int max_n = 4;
  double sigma = 6.0;
};

/// CIDEr-D. `degenerate` is set when the corpus has a single clip (every IDF
/// is zero).
double cider_d(std::span<const EvalPair> corpus, const CiderOptions& opts = {},
               bool* degenerate = nullptr);

/// Mean of CIDEr and SPICE on a common scale. Throws MissingSpice without SPICE.
double spider(double cider, std::optional<double> spice);
double spider(double cider, double spice);

/// Fraction of content words present in the references that the candidate
/// also contains, pooled over clips. A word counts as present when any
/// reference of the clip holds it.
double content_word_recall(std::span<const EvalPair> corpus, std::span<const std::string> content);

struct MetricReport {
  // Percentages.
  double bleu[4] = {0, 0, 0, 0};
  double rouge_l = 0;
  double meteor = 0;
  double cider = 0;
  std::optional<double> spice;
  std::optional<double> spider;
  bool cider_degenerate = false;
  std::size_t clips = 0;

  /// Named scores in table order; absent optionals are skipped.
  std::vector<std::pair<std::string, double>> entries() const;
};

/// `spice_by_clip` holds per-clip SPICE fractions; the corpus SPICE is their
/// mean over the scored clips.
MetricReport score_corpus(std::span<const EvalPair> corpus,
                          const std::map<std::string, double>* spice_by_clip = nullptr);

nlohmann::json to_json(const MetricReport& report);
MetricReport report_from_json(const nlohmann::json& j);

/// (s - s_base) / s_base per metric present in both with a nonzero baseline.
std::vector<std::pair<std::string, double>> relative_improvement(const MetricReport& report,
                                                                 const MetricReport& baseline);

/// Aligned plain-text table, one row per metric; extra columns for a
/// baseline and the relative change when `baseline` is given.
std::string format_table(const MetricReport& report, const MetricReport* baseline = nullptr);

/// Candidates CSV (file_name,caption_predicted), references CSV in Clotho
/// layout, optional SPICE CSV (file_name,spice).
std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& candidates,
                                      const std::filesystem::path& references);
std::map<std::string, double> load_spice_scores(const std::filesystem::path& path);

MetricReport evaluate_corpus(const std::filesystem::path& candidates,
                             const std::filesystem::path& references,
                             const std::optional<std::filesystem::path>& spice = std::nullopt);

}  // namespace clampcap::metrics
