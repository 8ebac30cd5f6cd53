#include "clampcap/app/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "clampcap/error.hpp"
#include "clampcap/metrics/metrics.hpp"
#include "clampcap/text/csv.hpp"

namespace clampcap::app {

Manifest ingest_clotho_csv(const std::filesystem::path& captions_csv,
                           const std::filesystem::path& audio_dir) {
  if (!std::filesystem::exists(captions_csv)) {
    fail(ErrorKind::Io, "captions file " + captions_csv.string() + " does not exist");
  }
  const auto rows = text::read_csv(captions_csv);
  Manifest out;
  if (rows.empty()) {
    spdlog::warn("{} is empty; no clips ingested", captions_csv.string());
    return out;
  }
  const auto& header = rows.front();
  bool header_ok = header.size() >= 2 && header[0] == "file_name";
  for (std::size_t c = 1; header_ok && c < header.size(); ++c) {
    header_ok = header[c] == "caption_" + std::to_string(c);
  }
  if (!header_ok) {
    fail(ErrorKind::MalformedRow,
         captions_csv.string() + ": header must be file_name,caption_1,...,caption_n");
  }
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = captions_csv.string() + ": row " + std::to_string(i + 1);
    if (row.size() != header.size()) {
      fail(ErrorKind::MalformedRow, where + " has " + std::to_string(row.size()) + " fields, expected " +
                                        std::to_string(header.size()));
    }
    if (row[0].empty()) fail(ErrorKind::MalformedRow, where + " has an empty file_name");
    if (!seen.insert(row[0]).second) fail(ErrorKind::MalformedRow, where + " repeats " + row[0]);
    ManifestEntry e;
    e.clip_id = row[0];
    e.audio_path = audio_dir / row[0];
    if (!std::filesystem::exists(e.audio_path)) {
      fail(ErrorKind::MissingAudio, "audio file " + e.audio_path.string() + " not found (" + where + ")");
    }
    for (std::size_t c = 1; c < row.size(); ++c) {
      auto seq = text::preprocess_caption(row[c]);
      if (seq.size() <= 2) fail(ErrorKind::MalformedRow, where + ": caption_" + std::to_string(c) + " is empty");
      e.raw_captions.push_back(row[c]);
      e.captions.push_back(std::move(seq));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void attach_feature_paths(Manifest& manifest, const std::filesystem::path& features_dir) {
  for (auto& e : manifest) {
    e.feature_path = features_dir / std::filesystem::path(e.clip_id).replace_extension(".feat");
  }
}

namespace {

bool same_frontend(const dsp::FrontendConfig& a, const dsp::FrontendConfig& b) {
  return a.n_mels == b.n_mels && a.window_ms == b.window_ms && a.overlap == b.overlap &&
         a.log_floor == b.log_floor;
}

}  // namespace

FeatureMap extract_features(const Manifest& manifest, const dsp::FrontendConfig& cfg,
                            bool write_missing) {
  cfg.validate();
  std::vector<std::shared_ptr<const dsp::MelSpectrogram>> mels(manifest.size());
  std::vector<std::string> errors(manifest.size());
  std::vector<ErrorKind> kinds(manifest.size(), ErrorKind::Io);
  const long n = static_cast<long>(manifest.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    const auto& e = manifest[static_cast<std::size_t>(i)];
    try {
      if (!e.feature_path.empty() && std::filesystem::exists(e.feature_path)) {
        dsp::FeatureFileInfo info;
        auto mel = dsp::read_feature_file(e.feature_path, &info);
        if (same_frontend(info.config, cfg)) {
          mel.clip_id = e.clip_id;
          mels[static_cast<std::size_t>(i)] = std::make_shared<dsp::MelSpectrogram>(std::move(mel));
          continue;
        }
      }
      const auto clip = dsp::load_wav(e.audio_path);
      auto mel = dsp::log_mel_energies(clip, cfg);
      mel.clip_id = e.clip_id;
      // Same precision as a reloaded feature file, so cached and fresh runs agree.
      for (double& v : mel.values.values()) v = static_cast<float>(v);
      if (write_missing && !e.feature_path.empty()) {
        dsp::write_feature_file(e.feature_path, mel, clip.sample_rate, cfg);
      }
      mels[static_cast<std::size_t>(i)] = std::make_shared<dsp::MelSpectrogram>(std::move(mel));
    } catch (const Error& err) {
      kinds[static_cast<std::size_t>(i)] = err.kind();
      errors[static_cast<std::size_t>(i)] = e.audio_path.string() + ": " + err.what();
    } catch (const std::exception& err) {
      errors[static_cast<std::size_t>(i)] = e.audio_path.string() + ": " + err.what();
    }
  }
  FeatureMap out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (!errors[i].empty()) fail(kinds[i], errors[i]);
    out[manifest[i].clip_id] = mels[i];
  }
  return out;
}

text::CorpusInfo prepare_corpus(const Manifest& development,
                                const std::vector<std::string>& stop_list,
                                const std::vector<std::string>* content_words) {
  std::vector<text::TokenSeq> all;
  for (const auto& e : development) all.insert(all.end(), e.captions.begin(), e.captions.end());
  if (all.empty()) fail(ErrorKind::InvalidConfig, "development split holds no captions");
  text::CorpusInfo info;
  info.vocab = text::build_vocabulary(all);
  info.counts = text::count_words(all);
  info.weights = text::compute_class_weights(info.counts, info.vocab);
  if (content_words) {
    std::vector<std::string> words;
    for (const auto& w : *content_words) {
      if (!info.vocab.contains(w)) {
        spdlog::warn("content word '{}' never occurs in the development captions", w);
      }
      words.push_back(w);
    }
    info.content = text::ContentWordList(std::move(words));
  } else {
    info.content = text::content_words_from(info.vocab, stop_list);
  }
  if (info.content.size() == 0) fail(ErrorKind::InvalidConfig, "content word list is empty");
  for (const auto& seq : all) info.max_caption_len = std::max(info.max_caption_len, seq.size());
  return info;
}

std::vector<text::Example> make_examples(const Manifest& manifest, const FeatureMap& features,
                                         const text::CorpusInfo& corpus) {
  std::vector<text::Example> out;
  for (const auto& e : manifest) {
    const auto& mel = features.at(e.clip_id);
    for (const auto& seq : e.captions) {
      text::Example ex;
      ex.features = mel;
      ex.caption = seq;
      ex.content = text::extract_content_words(seq, corpus.content);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<train::ValidationClip> make_validation(const Manifest& manifest,
                                                   const FeatureMap& features) {
  std::vector<train::ValidationClip> out;
  for (const auto& e : manifest) {
    train::ValidationClip v;
    v.features = features.at(e.clip_id);
    for (const auto& seq : e.captions) v.references.push_back(seq.words());
    out.push_back(std::move(v));
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d;
  const auto& p = cfg.paths;
  d.development = ingest_clotho_csv(p.in_dataset(p.captions_csv), p.in_dataset(p.audio_dir));
  d.validation = ingest_clotho_csv(p.in_dataset(p.validation_captions_csv),
                                   p.in_dataset(p.validation_audio_dir));
  const auto features_dir = p.output_dir / "features";
  attach_feature_paths(d.development, features_dir);
  attach_feature_paths(d.validation, features_dir);
  auto dev = extract_features(d.development, cfg.frontend, false);
  auto val = extract_features(d.validation, cfg.frontend, false);
  d.features = std::move(dev);
  d.features.merge(val);

  const auto stop = text::read_word_list(p.stop_list);
  std::vector<std::string> content;
  if (!p.content_words.empty()) content = text::read_word_list(p.content_words);
  d.corpus = prepare_corpus(d.development, stop, p.content_words.empty() ? nullptr : &content);
  d.examples = make_examples(d.development, d.features, d.corpus);
  d.validation_clips = make_validation(d.validation, d.features);
  return d;
}

model::ModelConfig model_config_for(const ExperimentConfig& cfg, const text::CorpusInfo& corpus) {
  model::ModelConfig mc = cfg.model;
  mc.n_mels = static_cast<std::size_t>(cfg.frontend.n_mels);
  mc.vocab_size = corpus.vocab.size();
  mc.content_size = corpus.content.size();
  mc.validate();
  return mc;
}

RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data,
                       const std::filesystem::path& output_dir) {
  cfg.validate();
  const auto settings = cfg.settings();
  train::TrainConfig tc = cfg.train;
  tc.content_loss_scale = settings.lambda;
  if (tc.early_stop_metric == train::StopMetric::SPIDEr && cfg.spice_command.empty()) {
    spdlog::warn("no spice_command configured; early stopping on CIDEr instead of SPIDEr");
    tc.early_stop_metric = train::StopMetric::CIDEr;
  }
  const text::ClassWeights weights = settings.inverse_frequency_weights
                                         ? data.corpus.weights
                                         : text::unit_class_weights(data.corpus.vocab.size());

  RunResult result;
  result.model_config = model_config_for(cfg, data.corpus);
  train::TrainState state;
  state.model_config = result.model_config;
  state.params = model::make_params(result.model_config, tc.seed);

  if (!output_dir.empty()) std::filesystem::create_directories(output_dir);
  train::LoopHooks hooks;
  hooks.on_epoch = [](const train::EpochRecord& rec) {
    spdlog::info("epoch {:4d}  caption {:.5f}  content {:.5f}  ratio {:.4f}  CIDEr {:.3f}", rec.epoch,
                 rec.caption_loss, rec.content_loss, rec.ratio.value_or(0.0),
                 rec.score("CIDEr").value_or(0.0));
  };
  if (!output_dir.empty()) {
    hooks.on_improvement = [&](std::size_t epoch, const model::ModelParams& params, double metric) {
      model::save_checkpoint(output_dir / "best.ckpt", {result.model_config, params, epoch, metric});
    };
  }
  if (!cfg.spice_command.empty()) {
    hooks.spice = external_spice(cfg.spice_command, output_dir.empty() ? std::filesystem::temp_directory_path()
                                                                       : output_dir);
  }

  result.loop = train::early_stop_loop(state, data.examples, data.validation_clips, data.corpus.vocab,
                                       weights, data.corpus.max_caption_len, tc, hooks);

  const auto captions = train::caption_clips(result.loop.best_params, result.model_config,
                                             data.validation_clips, data.corpus.max_caption_len,
                                             data.corpus.vocab, tc.batch_size);
  const auto pairs = train::eval_pairs(data.validation_clips, captions);
  result.best_report = metrics::score_corpus(pairs);
  result.best_recall = metrics::content_word_recall(pairs, data.corpus.content.words());

  if (!output_dir.empty()) {
    std::ofstream hist(output_dir / "history.csv", std::ios::binary);
    if (!hist) fail(ErrorKind::Io, "cannot write " + (output_dir / "history.csv").string());
    hist << train::history_csv(result.loop.history);
    model::save_checkpoint(output_dir / "last.ckpt",
                           {result.model_config, state.params, result.loop.epochs_run,
                            result.loop.history.empty() ? 0.0 : result.loop.history.back().score("CIDEr").value_or(0.0)});
  }
  return result;
}

std::string candidates_csv(const std::vector<std::string>& clip_ids,
                           const std::vector<std::string>& captions) {
  std::string out = text::csv_line({"file_name", "caption_predicted"}) + "\n";
  for (std::size_t i = 0; i < clip_ids.size(); ++i) {
    out += text::csv_line({clip_ids[i], captions.at(i)}) + "\n";
  }
  return out;
}

namespace {

std::string join_tokens(const metrics::Tokens& t) {
  std::string s;
  for (const auto& w : t) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

}  // namespace

train::SpiceScorer external_spice(const std::string& command, const std::filesystem::path& scratch) {
  return [command, scratch](std::span<const metrics::EvalPair> pairs) {
    const auto cand_path = scratch / "spice_candidates.csv";
    const auto ref_path = scratch / "spice_references.csv";
    {
      std::ofstream cand(cand_path, std::ios::binary), ref(ref_path, std::ios::binary);
      if (!cand || !ref) fail(ErrorKind::Io, "cannot write SPICE inputs under " + scratch.string());
      cand << text::csv_line({"file_name", "caption_predicted"}) << '\n';
      std::size_t refs = 0;
      for (const auto& p : pairs) refs = std::max(refs, p.references.size());
      text::CsvRow header{"file_name"};
      for (std::size_t c = 1; c <= refs; ++c) header.push_back("caption_" + std::to_string(c));
      ref << text::csv_line(header) << '\n';
      for (const auto& p : pairs) {
        cand << text::csv_line({p.clip_id, join_tokens(p.candidate)}) << '\n';
        text::CsvRow row{p.clip_id};
        for (const auto& r : p.references) row.push_back(join_tokens(r));
        row.resize(refs + 1);
        ref << text::csv_line(row) << '\n';
      }
    }
    const std::string full = command + " '" + cand_path.string() + "' '" + ref_path.string() + "'";
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) fail(ErrorKind::MissingSpice, "cannot run SPICE command: " + command);
    std::string output;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, got);
    if (::pclose(pipe) != 0) fail(ErrorKind::MissingSpice, "SPICE command failed: " + command);
    const auto rows = text::parse_csv(output);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() < 2) continue;
      try {
        sum += std::stod(rows[i][1]);
        ++n;
      } catch (const std::exception&) {
        fail(ErrorKind::MalformedRow, "SPICE output row " + std::to_string(i + 1) + " is not numeric");
      }
    }
    if (n == 0) fail(ErrorKind::MissingSpice, "SPICE command produced no scores");
    return sum / static_cast<double>(n);
  };
}

}  // namespace clampcap::app
