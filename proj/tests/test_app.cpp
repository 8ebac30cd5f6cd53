#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "clampcap/app/cli.hpp"
#include "clampcap/app/config.hpp"
#include "clampcap/app/pipeline.hpp"
#include "clampcap/app/synth.hpp"
#include "clampcap/text/csv.hpp"
#include "support.hpp"

using namespace clampcap;
using namespace clampcap::app;
using testing::thrown_kind;
namespace fs = std::filesystem;

namespace {

fs::path source_dir() {
  const char* env = std::getenv("CLAMPCAP_SOURCE_DIR");
  return env ? fs::path(env) : fs::current_path();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliRun {
  int status;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "clampcap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

SynthSpec tiny_spec() {
  SynthSpec s;
  s.n_clips = 16;
  s.n_validation_clips = 8;
  s.captions_per_clip = 5;
  return s;
}

}  // namespace

TEST_CASE("config parsing, overrides and echo") {
  const ExperimentConfig defaults;
  const ExperimentConfig again = parse_config(to_ini(defaults));
  CHECK(to_ini(again) == to_ini(defaults));

  ExperimentConfig c = parse_config("[train]\nlr = 0.003\nbatch_size = 8\ncontent_loss_scale = 0\n"
                                    "[experiment]\nvariant = baseline\n");
  CHECK(c.train.lr == 0.003);
  CHECK(c.train.batch_size == 8);
  CHECK(c.variant == Variant::Baseline);
  apply_override(c, "model.hidden=7");
  CHECK(c.model.hidden == 7);
  CHECK(thrown_kind([&] { apply_override(c, "model.hidden"); }) == "BadFlag");
  CHECK(thrown_kind([&] { apply_override(c, "model.hiden=3"); }) == "InvalidConfig");
  CHECK(thrown_kind([] { parse_config("[model]\ncolour = red\n"); }) == "InvalidConfig");
  CHECK(thrown_kind([] { parse_config("[model]\nhidden = many\n"); }) == "InvalidConfig");
  CHECK(thrown_kind([] { load_config("/nonexistent/x.cfg"); }) == "MissingConfig");

  c = parse_config("[frontend]\nn_mels = 12\n");
  CHECK(c.model.n_mels == 12);
}

TEST_CASE("variant settings") {
  ExperimentConfig c;
  c.variant = Variant::Baseline;
  CHECK(c.settings().lambda == 0.0);
  CHECK_FALSE(c.settings().inverse_frequency_weights);
  c.train.content_loss_scale = 1.0;
  c.variant = Variant::CwrCaps;
  CHECK(c.settings().lambda == 1.0);
  CHECK_FALSE(c.settings().inverse_frequency_weights);
  c.variant = Variant::CwrWlCaps;
  CHECK(c.settings().lambda == 1.0);
  CHECK(c.settings().inverse_frequency_weights);
  c.train.content_loss_scale = 0.0;
  CHECK(thrown_kind([&] { c.validate(); }) == "InvalidConfig");
  CHECK(variant_from("cwr-wl-caps") == Variant::CwrWlCaps);
  CHECK(to_string(Variant::CwrCaps) == "CWR-CAPS");
  CHECK(thrown_kind([] { variant_from("fancy"); }) == "InvalidConfig");
}

TEST_CASE("shipped full-scale config") {
  const ExperimentConfig c = load_config(source_dir() / "configs" / "clotho-full.cfg");
  CHECK(c.frontend.n_mels == 64);
  CHECK(c.frontend.window_ms == 46.0);
  CHECK(c.frontend.overlap == 0.5);
  CHECK(c.model.encoder_layers == 3);
  CHECK(c.model.hidden == 512);
  CHECK(c.model.decoder_width() == 512);
  CHECK(c.model.dropout_p == 0.25);
  CHECK(c.train.batch_size == 32);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.max_epochs == 300);
  CHECK(c.train.patience == 100);
  CHECK(c.train.clip_norm == 1.0);
  CHECK(c.train.early_stop_metric == train::StopMetric::SPIDEr);
  CHECK(c.variant == Variant::CwrWlCaps);
  CHECK_NOTHROW(load_config(source_dir() / "configs" / "desk.cfg"));
}

TEST_CASE("synthetic dataset") {
  const SynthSpec spec = tiny_spec();
  const SynthDataset ds = synth_dataset(spec);
  CHECK(ds.development.size() == 16);
  CHECK(ds.validation.size() == 8);

  SUBCASE("same seed gives byte-identical files") {
    const auto a = testing::scratch_dir("synth_a");
    const auto b = testing::scratch_dir("synth_b");
    write_dataset(ds, a);
    write_dataset(synth_dataset(spec), b);
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), a);
      CHECK(slurp(entry.path()) == slurp(b / rel));
    }
    SynthSpec other = spec;
    other.seed = 8;
    CHECK(synth_dataset(other).development[0].samples != ds.development[0].samples);
  }
  SUBCASE("function words everywhere, content words in exact fractions") {
    const auto events = spec.active_events();
    std::map<std::string, std::size_t> counts;
    std::size_t captions = 0;
    for (const auto& clip : ds.development) {
      for (const auto& cap : clip.captions) {
        ++captions;
        const auto words = text::normalize_words(cap);
        CHECK(std::count(words.begin(), words.end(), "is") == 1);
        CHECK((words[0] == "a" || words[0] == "the"));
        for (const auto& w : std::set<std::string>(words.begin(), words.end())) ++counts[w];
        for (const auto& cw : events[clip.event].content_words)
          CHECK(std::find(words.begin(), words.end(), cw) != words.end());
      }
    }
    CHECK(captions == 80);
    CHECK(counts["is"] == 80);
    for (const auto& ev : events)
      for (const auto& cw : ev.content_words) CHECK(counts[cw] * 8 == captions);  // 12.5% each
  }
}

TEST_CASE("Clotho CSV ingestion") {
  const auto dir = testing::scratch_dir("ingest");
  fs::create_directories(dir / "audio");
  dsp::write_wav16(dir / "audio" / "one.wav", std::vector<double>(800, 0.1), 8000);
  dsp::write_wav16(dir / "audio" / "two.wav", std::vector<double>(1200, -0.1), 8000);
  const std::string header = "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n";
  std::ofstream(dir / "ok.csv") << header << "one.wav,A dog barks.,A dog is barking,Dog barking,The dog barks,A dog\n"
                                << "two.wav,Rain,Rain falls,Heavy rain,Rain on a roof,\"Rain, falling\"\n";
  Manifest m = ingest_clotho_csv(dir / "ok.csv", dir / "audio");
  REQUIRE(m.size() == 2);
  CHECK(m[0].clip_id == "one.wav");
  CHECK(m[0].captions.size() == 5);
  CHECK(m[1].captions[4].joined_words() == "rain falling");

  SUBCASE("five captions share one feature matrix") {
    attach_feature_paths(m, dir / "features");
    fs::create_directories(dir / "features");
    CHECK(m[0].feature_path == dir / "features" / "one.feat");
    dsp::FrontendConfig fc;
    fc.n_mels = 8;
    const FeatureMap features = extract_features(m, fc, true);
    CHECK(fs::exists(m[0].feature_path));
    const std::vector<std::string> stop{"a", "the", "is", "on"};
    const auto corpus = prepare_corpus(m, stop, nullptr);
    CHECK(corpus.max_caption_len == 6);
    const auto examples = make_examples(m, features, corpus);
    REQUIRE(examples.size() == 10);
    for (std::size_t i = 1; i < 5; ++i) CHECK(examples[i].features.get() == examples[0].features.get());
    CHECK(examples[5].features.get() != examples[0].features.get());
    const FeatureMap reused = extract_features(m, fc, false);
    CHECK(reused.at("one.wav")->values == features.at("one.wav")->values);
  }
  SUBCASE("absent audio") {
    std::ofstream(dir / "missing.csv") << header << "ghost.wav,a,b,c,d,e\n";
    const std::string kind = thrown_kind([&] { ingest_clotho_csv(dir / "missing.csv", dir / "audio"); });
    CHECK(kind == "MissingAudio");
    try {
      ingest_clotho_csv(dir / "missing.csv", dir / "audio");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("ghost.wav") != std::string::npos);
    }
  }
  SUBCASE("malformed rows") {
    std::ofstream(dir / "short.csv") << header << "one.wav,a,b,c\n";
    CHECK(thrown_kind([&] { ingest_clotho_csv(dir / "short.csv", dir / "audio"); }) == "MalformedRow");
    std::ofstream(dir / "badhead.csv") << "name,text\none.wav,a\n";
    CHECK(thrown_kind([&] { ingest_clotho_csv(dir / "badhead.csv", dir / "audio"); }) == "MalformedRow");
    std::ofstream(dir / "dup.csv") << header << "one.wav,a,b,c,d,e\none.wav,a,b,c,d,e\n";
    CHECK(thrown_kind([&] { ingest_clotho_csv(dir / "dup.csv", dir / "audio"); }) == "MalformedRow");
  }
  SUBCASE("empty file") {
    std::ofstream(dir / "empty.csv");
    CHECK(ingest_clotho_csv(dir / "empty.csv", dir / "audio").empty());
  }
}

TEST_CASE("command line") {
  const auto dir = testing::scratch_dir("cli");
  SUBCASE("unknown command") {
    const CliRun r = cli({"dance"});
    CHECK(r.status == 2);
    CHECK(r.err.rfind("error: kind=BadFlag message=", 0) == 0);
  }
  SUBCASE("missing config") {
    const CliRun r = cli({"--config", (dir / "none.cfg").string(), "prepare-corpus"});
    CHECK(r.status == 1);
    CHECK(r.err.find("kind=MissingConfig") != std::string::npos);
  }
  SUBCASE("full config echo") {
    const CliRun r = cli({"--config", (source_dir() / "configs" / "clotho-full.cfg").string(), "--output-dir",
                          (dir / "echo").string(), "train", "--dry-run"});
    CHECK(r.status == 0);
    for (const char* line : {"batch_size = 32", "lr = 1e-04", "max_epochs = 300", "patience = 100",
                             "n_mels = 64", "window_ms = 46", "hidden = 512", "encoder_layers = 3"})
      CHECK_MESSAGE(r.out.find(line) != std::string::npos, std::string(line));
  }
  SUBCASE("evaluate identical candidates") {
    std::ofstream(dir / "refs.csv") << "file_name,caption_1,caption_2\n"
                                       "a.wav,a dog barks loudly,a dog\nb.wav,rain falls on a roof,rain\n";
    std::ofstream(dir / "cands.csv") << "file_name,caption_predicted\na.wav,a dog barks loudly\nb.wav,rain falls on a roof\n";
    const CliRun r = cli({"--output-dir", (dir / "eval").string(), "evaluate", "--candidates",
                          (dir / "cands.csv").string(), "--references", (dir / "refs.csv").string()});
    CHECK(r.status == 0);
    CHECK(r.out.find("BLEU_1") != std::string::npos);
    CHECK(r.out.find("100.0") != std::string::npos);
    CHECK(fs::exists(dir / "eval" / "report.json"));
    CHECK(fs::exists(dir / "eval" / "resolved_config.cfg"));
    const auto rep = metrics::report_from_json(nlohmann::json::parse(slurp(dir / "eval" / "report.json")));
    CHECK(rep.bleu[0] == doctest::Approx(100.0));
    CHECK(rep.rouge_l == doctest::Approx(100.0));
  }
}

TEST_CASE("end-to-end pipeline through the command line") {
  const auto dir = testing::scratch_dir("e2e");
  const std::string stop = (source_dir() / "data" / "stoplist.txt").string();
  const std::vector<std::string> common{"--set", "paths.dataset_root=" + (dir / "data").string(),
                                        "--set", "paths.stop_list=" + stop,
                                        "--set", "synth.n_clips=16",
                                        "--set", "synth.n_validation_clips=8",
                                        "--set", "frontend.n_mels=8",
                                        "--set", "model.hidden=6",
                                        "--set", "model.encoder_layers=1",
                                        "--set", "train.max_epochs=3",
                                        "--set", "train.patience=3",
                                        "--set", "train.batch_size=16",
                                        "--set", "train.lr=0.003",
                                        "--set", "train.early_stop_metric=CIDEr",
                                        "--output-dir", (dir / "run").string()};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = common;
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  CliRun r = with({"synth-data"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(dir / "data" / "clotho_captions_development.csv"));
  r = with({"extract-features"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  r = with({"prepare-corpus"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  r = with({"--variant", "baseline", "--set", "train.content_loss_scale=0", "train"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  for (const char* f : {"history.csv", "best.ckpt", "last.ckpt", "corpus.json", "validation_report.json",
                        "resolved_config.cfg"})
    CHECK_MESSAGE(fs::exists(dir / "run" / f), f);
  CHECK(slurp(dir / "run" / "resolved_config.cfg").find("variant = baseline") != std::string::npos);
  r = with({"infer"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto rows = text::read_csv(dir / "run" / "candidates.csv");
  CHECK(rows.size() == 9);
  r = with({"evaluate"});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  fs::copy_file(dir / "run" / "report.json", dir / "baseline.json");
  r = with({"--baseline-report", (dir / "baseline.json").string(), "report", (dir / "run" / "report.json").string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(fs::exists(dir / "run" / "comparison.txt"));
  r = with({"infer", "--split", "test"});
  CHECK(r.status == 2);
}
