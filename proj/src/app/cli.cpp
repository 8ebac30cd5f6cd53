#include "clampcap/app/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "clampcap/app/config.hpp"
#include "clampcap/app/pipeline.hpp"
#include "clampcap/app/synth.hpp"
#include "clampcap/error.hpp"
#include "clampcap/kernels.hpp"
#include "clampcap/metrics/metrics.hpp"
#include "clampcap/text/corpus.hpp"

namespace clampcap::app {

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string variant;
  std::string spice_scores;
  std::string baseline_report;
  std::string output_dir;
  std::vector<std::string> overrides;

  // per command
  bool dry_run = false;
  std::string checkpoint;
  std::string split = "validation";
  std::string candidates;
  std::string references;
  std::vector<std::string> reports;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig resolve(const Flags& f, const std::string& command) {
  ExperimentConfig cfg = f.config.empty() ? parse_config("") : load_config(f.config);
  for (const auto& o : f.overrides) apply_override(cfg, o);
  if (f.seed) {
    if (command == "synth-data") cfg.synth.seed = *f.seed; else cfg.train.seed = *f.seed;
  }
  if (f.jobs) cfg.jobs = *f.jobs;
  if (!f.variant.empty()) cfg.variant = variant_from(f.variant);
  if (!f.output_dir.empty()) cfg.paths.output_dir = f.output_dir;
  cfg.validate();
  if (cfg.jobs > 0) kernels::set_jobs(cfg.jobs);
  return cfg;
}

void freeze(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "resolved_config.cfg", to_ini(cfg));
}

int cmd_synth(const ExperimentConfig& cfg, std::ostream& out) {
  const auto root = cfg.paths.dataset_root.empty() ? cfg.paths.output_dir : cfg.paths.dataset_root;
  const auto ds = synth_dataset(cfg.synth);
  write_dataset(ds, root);
  freeze(cfg, root);
  out << "wrote " << ds.development.size() << " development and " << ds.validation.size()
      << " evaluation clips to " << root.string() << '\n';
  return 0;
}

int cmd_extract(const ExperimentConfig& cfg, std::ostream& out) {
  const auto& p = cfg.paths;
  const auto dir = p.output_dir / "features";
  std::filesystem::create_directories(dir);
  std::size_t total = 0;
  for (const auto& [csv, audio] : {std::pair{p.captions_csv, p.audio_dir},
                                   std::pair{p.validation_captions_csv, p.validation_audio_dir}}) {
    auto manifest = ingest_clotho_csv(p.in_dataset(csv), p.in_dataset(audio));
    attach_feature_paths(manifest, dir);
    for (const auto& e : manifest) std::filesystem::remove(e.feature_path);
    total += extract_features(manifest, cfg.frontend, true).size();
  }
  freeze(cfg, p.output_dir);
  out << "extracted features for " << total << " clips into " << dir.string() << '\n';
  return 0;
}

text::CorpusInfo corpus_from(const ExperimentConfig& cfg) {
  const auto& p = cfg.paths;
  const auto dev = ingest_clotho_csv(p.in_dataset(p.captions_csv), p.in_dataset(p.audio_dir));
  const auto stop = text::read_word_list(p.stop_list);
  if (p.content_words.empty()) return prepare_corpus(dev, stop, nullptr);
  const auto content = text::read_word_list(p.content_words);
  return prepare_corpus(dev, stop, &content);
}

int cmd_prepare(const ExperimentConfig& cfg, std::ostream& out) {
  const auto corpus = corpus_from(cfg);
  std::filesystem::create_directories(cfg.paths.output_dir);
  text::save_corpus(cfg.paths.output_dir / "corpus.json", corpus);
  freeze(cfg, cfg.paths.output_dir);
  out << "vocabulary " << corpus.vocab.size() << " words, " << corpus.content.size()
      << " content words, longest caption " << corpus.max_caption_len << " tokens\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const Flags& f, std::ostream& out) {
  out << to_ini(cfg);
  out.flush();
  if (f.dry_run) return 0;
  const auto dir = cfg.paths.output_dir;
  freeze(cfg, dir);
  const auto data = prepare_data(cfg);
  text::save_corpus(dir / "corpus.json", data.corpus);
  spdlog::info("{} training examples from {} clips, {} validation clips, vocabulary {}",
               data.examples.size(), data.development.size(), data.validation_clips.size(),
               data.corpus.vocab.size());
  const auto result = run_training(cfg, data, dir);
  write_text(dir / "validation_report.json", metrics::to_json(result.best_report).dump(2) + "\n");
  out << "best epoch " << result.loop.best_epoch << " of " << result.loop.epochs_run << ", "
      << train::to_string(cfg.train.early_stop_metric) << ' ' << result.loop.best_metric << '\n';
  return 0;
}

int cmd_infer(const ExperimentConfig& cfg, const Flags& f, std::ostream& out) {
  const auto& p = cfg.paths;
  const auto corpus = text::load_corpus(p.output_dir / "corpus.json");
  const auto ckpt_path = f.checkpoint.empty() ? p.output_dir / "best.ckpt" : std::filesystem::path(f.checkpoint);
  const auto ckpt = model::load_checkpoint(ckpt_path, model_config_for(cfg, corpus));

  std::filesystem::path csv, audio;
  if (f.split == "validation") {
    csv = p.validation_captions_csv;
    audio = p.validation_audio_dir;
  } else if (f.split == "development") {
    csv = p.captions_csv;
    audio = p.audio_dir;
  } else {
    fail(ErrorKind::BadFlag, "--split must be validation or development");
  }
  auto manifest = ingest_clotho_csv(p.in_dataset(csv), p.in_dataset(audio));
  attach_feature_paths(manifest, p.output_dir / "features");
  const auto features = extract_features(manifest, cfg.frontend, false);
  const auto clips = make_validation(manifest, features);
  const auto captions = train::caption_clips(ckpt.params, ckpt.config, clips, corpus.max_caption_len,
                                             corpus.vocab, cfg.train.batch_size);
  std::vector<std::string> ids;
  for (const auto& e : manifest) ids.push_back(e.clip_id);
  write_text(p.output_dir / "candidates.csv", candidates_csv(ids, captions));
  freeze(cfg, p.output_dir);
  out << "wrote " << captions.size() << " captions to " << (p.output_dir / "candidates.csv").string() << '\n';
  return 0;
}

metrics::MetricReport load_report(const std::filesystem::path& path) {
  try {
    return metrics::report_from_json(nlohmann::json::parse(read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptFile, path.string() + ": " + e.what());
  }
}

int cmd_evaluate(const ExperimentConfig& cfg, const Flags& f, std::ostream& out) {
  const auto& p = cfg.paths;
  const std::filesystem::path candidates =
      f.candidates.empty() ? p.output_dir / "candidates.csv" : std::filesystem::path(f.candidates);
  const std::filesystem::path references =
      f.references.empty() ? p.in_dataset(p.validation_captions_csv) : std::filesystem::path(f.references);
  std::optional<std::filesystem::path> spice;
  if (!f.spice_scores.empty()) spice = f.spice_scores;
  const auto report = metrics::evaluate_corpus(candidates, references, spice);
  std::optional<metrics::MetricReport> baseline;
  if (!f.baseline_report.empty()) baseline = load_report(f.baseline_report);

  std::filesystem::create_directories(p.output_dir);
  write_text(p.output_dir / "report.json", metrics::to_json(report).dump(2) + "\n");
  const std::string table = metrics::format_table(report, baseline ? &*baseline : nullptr);
  write_text(p.output_dir / "report.txt", table);
  freeze(cfg, p.output_dir);
  if (report.cider_degenerate) spdlog::warn("CIDEr-D is degenerate on a single-clip corpus");
  out << table;
  return 0;
}

int cmd_report(const ExperimentConfig& cfg, const Flags& f, std::ostream& out) {
  std::vector<std::filesystem::path> paths(f.reports.begin(), f.reports.end());
  if (!f.baseline_report.empty()) paths.insert(paths.begin(), f.baseline_report);
  if (paths.size() != 2) {
    fail(ErrorKind::BadFlag, "report needs a baseline report and a system report");
  }
  const auto baseline = load_report(paths[0]);
  const auto system = load_report(paths[1]);
  const std::string table = metrics::format_table(system, &baseline);
  std::filesystem::create_directories(cfg.paths.output_dir);
  write_text(cfg.paths.output_dir / "comparison.txt", table);
  freeze(cfg, cfg.paths.output_dir);
  out << table;
  return 0;
}

void error_line(std::ostream& err, ErrorKind kind, const std::string& message) {
  err << "error: kind=" << to_string(kind) << " message=" << nlohmann::json(message).dump() << '\n';
}

}  // namespace

void configure_logging() {
  auto logger = spdlog::get("clampcap");
  if (!logger) logger = spdlog::stderr_color_mt("clampcap");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  const char* level = std::getenv("CLAMPCAP_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"clampcap: audio captioning with content-word regularization", "clampcap"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", f.config, "experiment config file (INI)");
  app.add_option("--seed", f.seed, "training seed (synth-data: generator seed)");
  app.add_option("--jobs", f.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--variant", f.variant, "baseline, CWR-CAPS or CWR-WL-CAPS");
  app.add_option("--spice-scores", f.spice_scores, "per-clip SPICE CSV (file_name,spice)");
  app.add_option("--baseline-report", f.baseline_report, "baseline report.json for comparison");
  app.add_option("--output-dir", f.output_dir, "overrides paths.output_dir");
  app.add_option("--set", f.overrides, "section.key=value override (repeatable)");

  app.add_subcommand("synth-data", "generate a synthetic dataset in Clotho layout");
  app.add_subcommand("extract-features", "compute log-mel feature files");
  app.add_subcommand("prepare-corpus", "build vocabulary, weights and content words");
  auto* train = app.add_subcommand("train", "train with early stopping");
  train->add_flag("--dry-run", f.dry_run, "echo the resolved config and stop");
  auto* infer = app.add_subcommand("infer", "caption a split with a checkpoint");
  infer->add_option("--checkpoint", f.checkpoint, "checkpoint (default: <output>/best.ckpt)");
  infer->add_option("--split", f.split, "validation or development");
  auto* evaluate = app.add_subcommand("evaluate", "score candidates against references");
  evaluate->add_option("--candidates", f.candidates, "candidates CSV (default: <output>/candidates.csv)");
  evaluate->add_option("--references", f.references, "references CSV (default: validation captions)");
  auto* report = app.add_subcommand("report", "compare two reports");
  report->add_option("reports", f.reports, "baseline.json system.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(err, ErrorKind::BadFlag, e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const ExperimentConfig cfg = resolve(f, command);
    if (command == "synth-data") return cmd_synth(cfg, out);
    if (command == "extract-features") return cmd_extract(cfg, out);
    if (command == "prepare-corpus") return cmd_prepare(cfg, out);
    if (command == "train") return cmd_train(cfg, f, out);
    if (command == "infer") return cmd_infer(cfg, f, out);
    if (command == "evaluate") return cmd_evaluate(cfg, f, out);
    if (command == "report") return cmd_report(cfg, f, out);
    fail(ErrorKind::BadFlag, "unknown command " + command);
  } catch (const Error& e) {
    error_line(err, e.kind(), e.what());
    return e.kind() == ErrorKind::BadFlag ? 2 : 1;
  } catch (const std::exception& e) {
    error_line(err, ErrorKind::Io, e.what());
    return 1;
  }
}

}  // namespace clampcap::app
