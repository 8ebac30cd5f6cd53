#include "clampcap/app/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "clampcap/error.hpp"

namespace clampcap::app {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  is >> out;
  if (!is || !is.eof()) {
    fail(ErrorKind::InvalidConfig, key + ": cannot parse '" + value + "'");
  }
  if constexpr (std::is_unsigned_v<T>) {
    if (value.find('-') != std::string::npos) fail(ErrorKind::InvalidConfig, key + " must be non-negative");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::InvalidConfig, key + ": expected a boolean, got '" + value + "'");
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Table of every key in section order; drives parsing, overrides and echo.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  auto size_field = [](auto member) {
    return Field{[member](C& c, const std::string& v) { member(c) = parse_number<std::size_t>("", v); },
                 [member](const C& c) { return std::to_string(member(const_cast<C&>(c))); }};
  };
  auto int_field = [](auto member) {
    return Field{[member](C& c, const std::string& v) { member(c) = parse_number<int>("", v); },
                 [member](const C& c) { return std::to_string(member(const_cast<C&>(c))); }};
  };
  auto u64_field = [](auto member) {
    return Field{[member](C& c, const std::string& v) { member(c) = parse_number<std::uint64_t>("", v); },
                 [member](const C& c) { return std::to_string(member(const_cast<C&>(c))); }};
  };
  auto double_field = [](auto member) {
    return Field{[member](C& c, const std::string& v) { member(c) = parse_number<double>("", v); },
                 [member](const C& c) { return format_double(member(const_cast<C&>(c))); }};
  };
  auto path_field = [](auto member) {
    return Field{[member](C& c, const std::string& v) { member(c) = v; },
                 [member](const C& c) { return member(const_cast<C&>(c)).generic_string(); }};
  };

  static const std::vector<std::pair<std::string, Field>> table = {
      {"frontend.n_mels", int_field([](C& c) -> int& { return c.frontend.n_mels; })},
      {"frontend.window_ms", double_field([](C& c) -> double& { return c.frontend.window_ms; })},
      {"frontend.overlap", double_field([](C& c) -> double& { return c.frontend.overlap; })},
      {"frontend.log_floor", double_field([](C& c) -> double& { return c.frontend.log_floor; })},

      {"model.hidden", size_field([](C& c) -> std::size_t& { return c.model.hidden; })},
      {"model.decoder_hidden", size_field([](C& c) -> std::size_t& { return c.model.decoder_hidden; })},
      {"model.encoder_layers", size_field([](C& c) -> std::size_t& { return c.model.encoder_layers; })},
      {"model.dropout", double_field([](C& c) -> double& { return c.model.dropout_p; })},

      {"train.batch_size", size_field([](C& c) -> std::size_t& { return c.train.batch_size; })},
      {"train.max_epochs", size_field([](C& c) -> std::size_t& { return c.train.max_epochs; })},
      {"train.patience", size_field([](C& c) -> std::size_t& { return c.train.patience; })},
      {"train.lr", double_field([](C& c) -> double& { return c.train.lr; })},
      {"train.clip_norm", double_field([](C& c) -> double& { return c.train.clip_norm; })},
      {"train.seed", u64_field([](C& c) -> std::uint64_t& { return c.train.seed; })},
      {"train.early_stop_metric",
       Field{[](C& c, const std::string& v) { c.train.early_stop_metric = train::stop_metric_from(v); },
             [](const C& c) { return train::to_string(c.train.early_stop_metric); }}},
      {"train.content_loss_scale", double_field([](C& c) -> double& { return c.train.content_loss_scale; })},
      {"train.accumulate_gradients",
       Field{[](C& c, const std::string& v) { c.train.accumulate_gradients = parse_bool("", v); },
             [](const C& c) { return std::string(c.train.accumulate_gradients ? "true" : "false"); }}},
      {"train.spice_command",
       Field{[](C& c, const std::string& v) { c.spice_command = v; },
             [](const C& c) { return c.spice_command; }}},

      {"paths.dataset_root", path_field([](C& c) -> std::filesystem::path& { return c.paths.dataset_root; })},
      {"paths.captions_csv", path_field([](C& c) -> std::filesystem::path& { return c.paths.captions_csv; })},
      {"paths.audio_dir", path_field([](C& c) -> std::filesystem::path& { return c.paths.audio_dir; })},
      {"paths.validation_captions_csv",
       path_field([](C& c) -> std::filesystem::path& { return c.paths.validation_captions_csv; })},
      {"paths.validation_audio_dir",
       path_field([](C& c) -> std::filesystem::path& { return c.paths.validation_audio_dir; })},
      {"paths.stop_list", path_field([](C& c) -> std::filesystem::path& { return c.paths.stop_list; })},
      {"paths.content_words", path_field([](C& c) -> std::filesystem::path& { return c.paths.content_words; })},
      {"paths.output_dir", path_field([](C& c) -> std::filesystem::path& { return c.paths.output_dir; })},

      {"experiment.variant",
       Field{[](C& c, const std::string& v) { c.variant = variant_from(v); },
             [](const C& c) { return to_string(c.variant); }}},
      {"experiment.jobs", int_field([](C& c) -> int& { return c.jobs; })},

      {"synth.n_clips", size_field([](C& c) -> std::size_t& { return c.synth.n_clips; })},
      {"synth.n_validation_clips", size_field([](C& c) -> std::size_t& { return c.synth.n_validation_clips; })},
      {"synth.sample_rate", int_field([](C& c) -> int& { return c.synth.sample_rate; })},
      {"synth.min_duration_s", double_field([](C& c) -> double& { return c.synth.min_duration_s; })},
      {"synth.max_duration_s", double_field([](C& c) -> double& { return c.synth.max_duration_s; })},
      {"synth.captions_per_clip", size_field([](C& c) -> std::size_t& { return c.synth.captions_per_clip; })},
      {"synth.n_events", size_field([](C& c) -> std::size_t& { return c.synth.n_events; })},
      {"synth.templates_per_event", size_field([](C& c) -> std::size_t& { return c.synth.templates_per_event; })},
      {"synth.noise_level", double_field([](C& c) -> double& { return c.synth.noise_level; })},
      {"synth.seed", u64_field([](C& c) -> std::uint64_t& { return c.synth.seed; })},
  };
  return table;
}

void set_field(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name != key) continue;
    try {
      field.set(cfg, trim(value));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InvalidConfig) throw;
      const std::string msg = e.what();
      fail(ErrorKind::InvalidConfig, key + (msg.starts_with(":") ? "" : ": ") + msg);
    }
    return;
  }
  fail(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Baseline: return "baseline";
    case Variant::CwrCaps: return "CWR-CAPS";
    case Variant::CwrWlCaps: return "CWR-WL-CAPS";
  }
  return "?";
}

Variant variant_from(const std::string& name) {
  const std::string n = lower(name);
  if (n == "baseline") return Variant::Baseline;
  if (n == "cwr-caps") return Variant::CwrCaps;
  if (n == "cwr-wl-caps") return Variant::CwrWlCaps;
  fail(ErrorKind::InvalidConfig,
       "variant must be baseline, CWR-CAPS or CWR-WL-CAPS, got '" + name + "'");
}

std::filesystem::path Paths::in_dataset(const std::filesystem::path& p) const {
  return dataset_root.empty() ? p : dataset_root / p;
}

void ExperimentConfig::validate() const {
  frontend.validate();
  if (model.hidden < 1 || model.encoder_layers < 1) {
    fail(ErrorKind::InvalidConfig, "model hidden and encoder_layers must be >= 1");
  }
  if (!(model.dropout_p >= 0.0 && model.dropout_p < 1.0)) {
    fail(ErrorKind::InvalidConfig, "model dropout must lie in [0, 1)");
  }
  if (static_cast<std::size_t>(frontend.n_mels) != model.n_mels) {
    fail(ErrorKind::InvalidConfig, "model input width must equal frontend n_mels");
  }
  train.validate();
  if (variant != Variant::Baseline && !(train.content_loss_scale > 0.0)) {
    fail(ErrorKind::InvalidConfig, to_string(variant) + " needs content_loss_scale > 0");
  }
  if (jobs < 0) fail(ErrorKind::InvalidConfig, "jobs must be >= 0");
}

VariantSettings ExperimentConfig::settings() const {
  switch (variant) {
    case Variant::Baseline: return {0.0, false};
    case Variant::CwrCaps: return {train.content_loss_scale, false};
    case Variant::CwrWlCaps: return {train.content_loss_scale, true};
  }
  return {};
}

ExperimentConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::InvalidConfig, std::string("config: ") + e.message() + " at line " +
                                       std::to_string(e.line()));
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      fail(ErrorKind::InvalidConfig, "config key '" + section + "' is outside any section");
    }
    for (const auto& [key, value] : body) set_field(cfg, section + "." + key, value.data());
  }
  cfg.model.n_mels = static_cast<std::size_t>(std::max(cfg.frontend.n_mels, 0));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MissingConfig, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    fail(ErrorKind::BadFlag, "override '" + assignment + "' is not of the form section.key=value");
  }
  set_field(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
  cfg.model.n_mels = static_cast<std::size_t>(std::max(cfg.frontend.n_mels, 0));
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string current;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << section << "]\n";
      current = section;
    }
    os << name.substr(dot + 1) << " = " << field.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace clampcap::app
