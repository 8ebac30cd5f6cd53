#include "clampcap/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

#include "clampcap/error.hpp"
#include "clampcap/text/corpus.hpp"
#include "clampcap/text/csv.hpp"

namespace clampcap::metrics {

namespace {

using NgramCounts = std::map<std::string, double>;

std::string ngram_key(const Tokens& t, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) key += '\x1f';
    key += t[start + i];
  }
  return key;
}

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) out[ngram_key(t, i, n)] += 1.0;
  return out;
}

}  // namespace

double bleu_n(std::span<const EvalPair> corpus, int n) {
  if (n < 1 || n > 4) fail(ErrorKind::InvalidConfig, "BLEU order must be 1..4");
  std::vector<double> matched(static_cast<std::size_t>(n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(n), 0.0);
  double cand_len = 0.0, ref_len = 0.0;

  for (const auto& pair : corpus) {
    const double c = static_cast<double>(pair.candidate.size());
    cand_len += c;
    // Closest reference length; ties go to the shorter one.
    double best = -1.0;
    for (const auto& ref : pair.references) {
      const double r = static_cast<double>(ref.size());
      if (best < 0 || std::abs(r - c) < std::abs(best - c) ||
          (std::abs(r - c) == std::abs(best - c) && r < best)) {
        best = r;
      }
    }
    ref_len += std::max(best, 0.0);

    for (int k = 1; k <= n; ++k) {
      const auto cand = ngrams(pair.candidate, static_cast<std::size_t>(k));
      NgramCounts max_ref;
      for (const auto& ref : pair.references) {
        for (const auto& [g, cnt] : ngrams(ref, static_cast<std::size_t>(k))) {
          max_ref[g] = std::max(max_ref[g], cnt);
        }
      }
      for (const auto& [g, cnt] : cand) {
        total[k - 1] += cnt;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[k - 1] += std::min(cnt, it->second);
      }
    }
  }

  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[k] == 0.0 || total[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / n);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_pair(const Tokens& candidate, const Tokens& reference) {
  constexpr double beta = 1.2;
  if (candidate.empty() || reference.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0.0) return 0.0;
  const double r = l / static_cast<double>(reference.size());
  const double p = l / static_cast<double>(candidate.size());
  return (1.0 + beta * beta) * r * p / (r + beta * beta * p);
}

namespace {

template <typename PairScore>
double mean_best_over_references(std::span<const EvalPair> corpus, PairScore score) {
  if (corpus.empty()) return 0.0;
  std::vector<double> per_clip(corpus.size(), 0.0);
  const auto count = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic) if (count >= 64)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto& pair = corpus[static_cast<std::size_t>(i)];
    double best = 0.0;
    for (const auto& ref : pair.references) best = std::max(best, score(pair.candidate, ref));
    per_clip[static_cast<std::size_t>(i)] = best;
  }
  double sum = 0.0;
  for (double v : per_clip) sum += v;
  return sum / static_cast<double>(corpus.size());
}

struct AlignKey {
  std::uint64_t used;
  std::uint32_t cand_pos;
  std::uint32_t prev_ref;
  bool operator==(const AlignKey&) const = default;
};

struct AlignKeyHash {
  std::size_t operator()(const AlignKey& k) const {
    return std::hash<std::uint64_t>()(k.used) ^ (std::size_t(k.cand_pos) << 40) ^
           (std::size_t(k.prev_ref) << 20);
  }
};

class AlignmentSearch {
 public:
  AlignmentSearch(const Tokens& c, const Tokens& r) : cand_(c), ref_(r) {
    options_.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = 0; j < r.size(); ++j)
        if (c[i] == r[j]) options_[i].push_back(static_cast<std::uint32_t>(j));
  }

  Alignment solve() {
    const auto [m, ch] = best(0, 0, kNone);
    return {m, ch};
  }

 private:
  static constexpr std::uint32_t kNone = 0xFFFFFFFFu;
  using Score = std::pair<std::size_t, std::size_t>;  // (matches, chunks)

  static bool better(const Score& a, const Score& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  }

  // Best (matches, chunks) for candidate positions >= i.
  Score best(std::uint32_t i, std::uint64_t used, std::uint32_t prev) {
    if (i == cand_.size()) return {0, 0};
    const AlignKey key{used, i, prev};
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Score result = best(i + 1, used, kNone);
    for (std::uint32_t j : options_[i]) {
      if (used & (std::uint64_t{1} << j)) continue;
      Score rest = best(i + 1, used | (std::uint64_t{1} << j), j);
      const bool continues = prev != kNone && j == prev + 1;
      rest.first += 1;
      // A continuing match merges with the chunk opened at i - 1.
      if (!continues) rest.second += 1;
      if (better(rest, result)) result = rest;
    }
    memo_.emplace(key, result);
    return result;
  }

  const Tokens& cand_;
  const Tokens& ref_;
  std::vector<std::vector<std::uint32_t>> options_;
  std::unordered_map<AlignKey, Score, AlignKeyHash> memo_;
};

}  // namespace

double rouge_l(std::span<const EvalPair> corpus) {
  return mean_best_over_references(corpus, rouge_l_pair);
}

Alignment meteor_align(const Tokens& candidate, const Tokens& reference) {
  if (reference.size() <= 64) return AlignmentSearch(candidate, reference).solve();
  // Greedy left-to-right fallback for very long references.
  std::vector<bool> used(reference.size(), false);
  Alignment a;
  std::size_t prev = SIZE_MAX;
  for (const auto& w : candidate) {
    std::size_t pick = SIZE_MAX;
    if (prev != SIZE_MAX && prev + 1 < reference.size() && !used[prev + 1] && reference[prev + 1] == w) {
      pick = prev + 1;
    } else {
      for (std::size_t j = 0; j < reference.size(); ++j)
        if (!used[j] && reference[j] == w) { pick = j; break; }
    }
    if (pick == SIZE_MAX) { prev = SIZE_MAX; continue; }
    used[pick] = true;
    ++a.matches;
    if (!(prev != SIZE_MAX && pick == prev + 1)) ++a.chunks;
    prev = pick;
  }
  return a;
}

double meteor_pair(const Tokens& candidate, const Tokens& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const Alignment a = meteor_align(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(a.chunks) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return f_mean * (1.0 - penalty);
}

double meteor_exact(std::span<const EvalPair> corpus) {
  return mean_best_over_references(corpus, meteor_pair);
}

namespace {

struct TfIdf {
  std::vector<std::map<std::string, double>> vec;  // per order
  std::vector<double> sq_norm;
  double length = 0.0;
};

TfIdf tfidf(const Tokens& t, int max_n, const std::map<std::string, double>& doc_freq,
            double log_m) {
  TfIdf out;
  out.vec.resize(static_cast<std::size_t>(max_n));
  out.sq_norm.assign(static_cast<std::size_t>(max_n), 0.0);
  out.length = static_cast<double>(t.size());
  for (int n = 1; n <= max_n; ++n) {
    for (const auto& [g, tf] : ngrams(t, static_cast<std::size_t>(n))) {
      auto it = doc_freq.find(g);
      const double df = it == doc_freq.end() ? 1.0 : std::max(1.0, it->second);
      const double v = tf * (log_m - std::log(df));
      out.vec[n - 1][g] = v;
      out.sq_norm[n - 1] += v * v;
    }
  }
  return out;
}

}  // namespace

double cider_d(std::span<const EvalPair> corpus, const CiderOptions& opts, bool* degenerate) {
  if (degenerate) *degenerate = corpus.size() <= 1;
  if (corpus.empty()) return 0.0;

  std::map<std::string, double> doc_freq;
  for (const auto& pair : corpus) {
    std::set<std::string> seen;
    for (const auto& ref : pair.references)
      for (int n = 1; n <= opts.max_n; ++n)
        for (const auto& [g, c] : ngrams(ref, static_cast<std::size_t>(n))) seen.insert(g);
    for (const auto& g : seen) doc_freq[g] += 1.0;
  }
  const double log_m = std::log(static_cast<double>(corpus.size()));
  const double two_sigma_sq = 2.0 * opts.sigma * opts.sigma;

  std::vector<double> per_clip(corpus.size(), 0.0);
  const auto count = static_cast<std::ptrdiff_t>(corpus.size());
#pragma omp parallel for schedule(dynamic) if (count >= 64)
  for (std::ptrdiff_t ci = 0; ci < count; ++ci) {
    const auto& pair = corpus[static_cast<std::size_t>(ci)];
    if (pair.references.empty()) continue;
    const TfIdf cand = tfidf(pair.candidate, opts.max_n, doc_freq, log_m);
    double total = 0.0;
    for (const auto& ref_tokens : pair.references) {
      const TfIdf ref = tfidf(ref_tokens, opts.max_n, doc_freq, log_m);
      const double delta = cand.length - ref.length;
      const double length_penalty = std::exp(-(delta * delta) / two_sigma_sq);
      double sim = 0.0;
      for (int n = 0; n < opts.max_n; ++n) {
        double dot = 0.0;
        for (const auto& [g, v] : cand.vec[n]) {
          auto it = ref.vec[n].find(g);
          if (it != ref.vec[n].end()) dot += std::min(v, it->second) * it->second;
        }
        // sqrt of the product keeps an identical pair at exactly 1.
        const double denom = std::sqrt(cand.sq_norm[n] * ref.sq_norm[n]);
        if (denom != 0.0) sim += dot / denom * length_penalty;
      }
      total += sim / opts.max_n;
    }
    per_clip[static_cast<std::size_t>(ci)] =
        10.0 * total / static_cast<double>(pair.references.size());
  }
  double sum = 0.0;
  for (double v : per_clip) sum += v;
  return sum / static_cast<double>(corpus.size());
}

double spider(double cider, double spice) { return (cider + spice) / 2.0; }

double spider(double cider, std::optional<double> spice) {
  if (!spice) fail(ErrorKind::MissingSpice, "SPIDEr needs SPICE scores; none were supplied");
  return spider(cider, *spice);
}

double content_word_recall(std::span<const EvalPair> corpus, std::span<const std::string> content) {
  const std::set<std::string> words(content.begin(), content.end());
  double hit = 0.0, total = 0.0;
  for (const auto& pair : corpus) {
    std::set<std::string> expected;
    for (const auto& ref : pair.references)
      for (const auto& w : ref)
        if (words.contains(w)) expected.insert(w);
    const std::set<std::string> produced(pair.candidate.begin(), pair.candidate.end());
    for (const auto& w : expected) {
      total += 1.0;
      if (produced.contains(w)) hit += 1.0;
    }
  }
  return total == 0.0 ? 0.0 : hit / total;
}

std::vector<std::pair<std::string, double>> MetricReport::entries() const {
  std::vector<std::pair<std::string, double>> out = {
      {"BLEU_1", bleu[0]}, {"BLEU_2", bleu[1]}, {"BLEU_3", bleu[2]}, {"BLEU_4", bleu[3]},
      {"ROUGE_L", rouge_l}, {"METEOR", meteor}, {"CIDEr", cider}};
  if (spice) out.emplace_back("SPICE", *spice);
  if (spider) out.emplace_back("SPIDEr", *spider);
  return out;
}

MetricReport score_corpus(std::span<const EvalPair> corpus,
                          const std::map<std::string, double>* spice_by_clip) {
  MetricReport r;
  r.clips = corpus.size();
  for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = 100.0 * bleu_n(corpus, n);
  r.rouge_l = 100.0 * rouge_l(corpus);
  r.meteor = 100.0 * meteor_exact(corpus);
  r.cider = 100.0 * cider_d(corpus, {}, &r.cider_degenerate);
  if (spice_by_clip) {
    double sum = 0.0;
    for (const auto& pair : corpus) {
      auto it = spice_by_clip->find(pair.clip_id);
      if (it == spice_by_clip->end()) {
        fail(ErrorKind::MissingSpice, "no SPICE score for clip " + pair.clip_id);
      }
      sum += it->second;
    }
    r.spice = corpus.empty() ? 0.0 : 100.0 * sum / static_cast<double>(corpus.size());
    r.spider = spider(r.cider, r.spice);
  }
  return r;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json j;
  for (const auto& [name, value] : report.entries()) j[name] = value;
  j["clips"] = report.clips;
  j["cider_degenerate"] = report.cider_degenerate;
  return j;
}

MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    for (int n = 1; n <= 4; ++n) r.bleu[n - 1] = j.at("BLEU_" + std::to_string(n)).get<double>();
    r.rouge_l = j.at("ROUGE_L").get<double>();
    r.meteor = j.at("METEOR").get<double>();
    r.cider = j.at("CIDEr").get<double>();
    if (j.contains("SPICE")) r.spice = j.at("SPICE").get<double>();
    if (j.contains("SPIDEr")) r.spider = j.at("SPIDEr").get<double>();
    r.clips = j.value("clips", std::size_t{0});
    r.cider_degenerate = j.value("cider_degenerate", false);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, std::string("metric report: ") + e.what());
  }
  return r;
}

std::vector<std::pair<std::string, double>> relative_improvement(const MetricReport& report,
                                                                 const MetricReport& baseline) {
  std::vector<std::pair<std::string, double>> out;
  const auto base = baseline.entries();
  for (const auto& [name, value] : report.entries()) {
    auto it = std::find_if(base.begin(), base.end(), [&](const auto& e) { return e.first == name; });
    if (it == base.end() || it->second == 0.0) continue;
    out.emplace_back(name, (value - it->second) / it->second);
  }
  return out;
}

std::string format_table(const MetricReport& report, const MetricReport* baseline) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << std::left << std::setw(10) << "Metric";
  if (baseline) os << std::right << std::setw(10) << "Baseline";
  os << std::right << std::setw(10) << "System";
  if (baseline) os << std::setw(10) << "Rel.";
  os << '\n';
  const auto rel = baseline ? relative_improvement(report, *baseline)
                            : std::vector<std::pair<std::string, double>>{};
  const auto base_entries = baseline ? baseline->entries() : std::vector<std::pair<std::string, double>>{};
  for (const auto& [name, value] : report.entries()) {
    os << std::left << std::setw(10) << name;
    if (baseline) {
      auto b = std::find_if(base_entries.begin(), base_entries.end(),
                            [&](const auto& e) { return e.first == name; });
      os << std::right << std::setw(10);
      if (b != base_entries.end()) os << b->second; else os << "-";
    }
    os << std::right << std::setw(10) << value;
    if (baseline) {
      auto r = std::find_if(rel.begin(), rel.end(), [&](const auto& e) { return e.first == name; });
      os << std::setw(10);
      if (r != rel.end()) {
        std::ostringstream pct;
        pct << std::fixed << std::setprecision(1) << std::showpos << 100.0 * r->second << "%";
        os << pct.str();
      } else {
        os << "-";
      }
    }
    os << '\n';
  }
  return os.str();
}

std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& candidates,
                                      const std::filesystem::path& references) {
  const auto cand_rows = text::read_csv(candidates);
  const auto ref_rows = text::read_csv(references);
  std::map<std::string, Tokens> cands;
  for (std::size_t i = 1; i < cand_rows.size(); ++i) {
    const auto& row = cand_rows[i];
    if (row.size() < 2) fail(ErrorKind::MalformedRow, candidates.string() + ": row " + std::to_string(i + 1));
    cands[row[0]] = text::normalize_words(row[1]);
  }
  if (cands.empty()) fail(ErrorKind::MissingCandidate, candidates.string() + " holds no candidates");

  std::vector<EvalPair> pairs;
  std::set<std::string> ref_ids;
  for (std::size_t i = 1; i < ref_rows.size(); ++i) {
    const auto& row = ref_rows[i];
    if (row.size() < 2) fail(ErrorKind::MalformedRow, references.string() + ": row " + std::to_string(i + 1));
    EvalPair pair;
    pair.clip_id = row[0];
    for (std::size_t c = 1; c < row.size(); ++c) {
      auto words = text::normalize_words(row[c]);
      if (!words.empty()) pair.references.push_back(std::move(words));
    }
    auto it = cands.find(pair.clip_id);
    if (it == cands.end()) fail(ErrorKind::MissingCandidate, "no candidate for clip " + pair.clip_id);
    pair.candidate = it->second;
    ref_ids.insert(pair.clip_id);
    pairs.push_back(std::move(pair));
  }
  for (const auto& [id, tokens] : cands) {
    if (!ref_ids.contains(id)) fail(ErrorKind::IdMismatch, "candidate clip " + id + " has no references");
  }
  return pairs;
}

std::map<std::string, double> load_spice_scores(const std::filesystem::path& path) {
  std::map<std::string, double> out;
  const auto rows = text::read_csv(path);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) fail(ErrorKind::MalformedRow, path.string() + ": row " + std::to_string(i + 1));
    try {
      out[rows[i][0]] = std::stod(rows[i][1]);
    } catch (const std::exception&) {
      fail(ErrorKind::MalformedRow, path.string() + ": bad SPICE value '" + rows[i][1] + "'");
    }
  }
  return out;
}

MetricReport evaluate_corpus(const std::filesystem::path& candidates,
                             const std::filesystem::path& references,
                             const std::optional<std::filesystem::path>& spice) {
  const auto pairs = load_eval_pairs(candidates, references);
  if (!spice) return score_corpus(pairs);
  const auto scores = load_spice_scores(*spice);
  return score_corpus(pairs, &scores);
}

}  // namespace clampcap::metrics
