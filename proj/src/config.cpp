#include "bundleforge/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "bundleforge/errors.hpp"

namespace bundleforge::cli {

namespace {

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, int line)> set;
};

template <class T>
T parse_number(const std::string& value, const char* key, int line);

template <>
std::uint64_t parse_number(const std::string& value, const char* key, int line) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: unparsable value for '") + key +
                      "' at line " + std::to_string(line) + ": '" + value + "'");
  }
}

template <>
int parse_number(const std::string& value, const char* key, int line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: unparsable value for '") + key +
                      "' at line " + std::to_string(line) + ": '" + value + "'");
  }
}

template <>
double parse_number(const std::string& value, const char* key, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError(std::string("config: unparsable value for '") + key +
                      "' at line " + std::to_string(line) + ": '" + value + "'");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

#define STRING_FIELD(name)                                                  \
  Field{#name, [](const ExperimentConfig& c) { return c.name; },            \
        [](ExperimentConfig& c, const std::string& v, int) { c.name = v; }}
#define INT_FIELD(name)                                                     \
  Field{#name,                                                              \
        [](const ExperimentConfig& c) { return std::to_string(c.name); },   \
        [](ExperimentConfig& c, const std::string& v, int line) {           \
          c.name = parse_number<int>(v, #name, line);                       \
        }}
#define U64_FIELD(name)                                                     \
  Field{#name,                                                              \
        [](const ExperimentConfig& c) { return std::to_string(c.name); },   \
        [](ExperimentConfig& c, const std::string& v, int line) {           \
          c.name = parse_number<std::uint64_t>(v, #name, line);             \
        }}
#define DOUBLE_FIELD(name)                                                  \
  Field{#name,                                                              \
        [](const ExperimentConfig& c) { return format_double(c.name); },    \
        [](ExperimentConfig& c, const std::string& v, int line) {           \
          c.name = parse_number<double>(v, #name, line);                    \
        }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      U64_FIELD(seed),
      STRING_FIELD(data_dir),
      STRING_FIELD(out_dir),
      INT_FIELD(d),
      INT_FIELD(layers_item),
      INT_FIELD(layers_bundle),
      DOUBLE_FIELD(temperature),
      DOUBLE_FIELD(lambda),
      DOUBLE_FIELD(beta),
      DOUBLE_FIELD(lr),
      INT_FIELD(batch_size),
      INT_FIELD(epochs),
      INT_FIELD(patience),
      INT_FIELD(cases_per_bundle),
      STRING_FIELD(distill),
      STRING_FIELD(kd_direction),
      STRING_FIELD(fd_similarity),
      STRING_FIELD(ablation),
      DOUBLE_FIELD(head_ratio),
      DOUBLE_FIELD(tail_ratio),
      STRING_FIELD(scenario),
      STRING_FIELD(ks),
      STRING_FIELD(eval_model),
      STRING_FIELD(sweep_ratios),
      INT_FIELD(report_cases),
      INT_FIELD(n_items),
      INT_FIELD(n_users),
      INT_FIELD(n_bundles),
      INT_FIELD(bundle_min),
      INT_FIELD(bundle_max),
      DOUBLE_FIELD(zipf_exponent),
      INT_FIELD(d_t),
      INT_FIELD(d_m),
      INT_FIELD(n_themes),
      INT_FIELD(latent_dim),
      DOUBLE_FIELD(z_spread),
      DOUBLE_FIELD(proximity_tau),
      DOUBLE_FIELD(feature_noise),
      DOUBLE_FIELD(promo_decile_frac),
      DOUBLE_FIELD(promo_wide_frac),
      INT_FIELD(promo_head_max),
      INT_FIELD(promo_tail_max),
      DOUBLE_FIELD(organic_pop_exponent),
      DOUBLE_FIELD(theme_boost),
      INT_FIELD(user_min_items),
      INT_FIELD(user_max_items),
      INT_FIELD(fb_dim),
      INT_FIELD(fb_layers),
      INT_FIELD(fb_epochs),
      DOUBLE_FIELD(fb_lr),
      INT_FIELD(fb_neg_per_pos),
      INT_FIELD(fb_batch),
      DOUBLE_FIELD(fb_reg),
      STRING_FIELD(teacher_checkpoint),
      STRING_FIELD(student_checkpoint),
      STRING_FIELD(backbone_checkpoint),
  };
  return table;
}

#undef STRING_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef DOUBLE_FIELD

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ": line " + std::to_string(line_no) +
                        " is not key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(cfg, value, line_no);
        found = true;
        break;
      }
    }
    if (!found)
      throw ConfigError(origin + ": unknown key '" + key + "' at line " +
                        std::to_string(line_no));
  }
  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string dump_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << '=' << f.get(cfg) << '\n';
  return out.str();
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.temperature <= 0.0)
    throw ConfigError("config: temperature must be positive");
  if (cfg.lambda < 0.0) throw ConfigError("config: lambda must be non-negative");
  if (cfg.beta < 0.0) throw ConfigError("config: beta must be non-negative");
  if (cfg.lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (cfg.d < 1 || cfg.layers_item < 1 || cfg.layers_bundle < 1)
    throw ConfigError("config: d and layer counts must be at least 1");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (cfg.epochs < 0 || cfg.patience < 1)
    throw ConfigError("config: epochs must be >= 0 and patience >= 1");
  if (cfg.head_ratio < 0.0 || cfg.tail_ratio < 0.0 ||
      cfg.head_ratio + cfg.tail_ratio > 1.0)
    throw ConfigError("config: head/tail ratios must be non-negative with sum <= 1");
  if (cfg.fb_dim < 1 || cfg.fb_layers < 0 || cfg.fb_epochs < 0 ||
      cfg.fb_batch < 1 || cfg.fb_neg_per_pos < 1)
    throw ConfigError("config: invalid feedback settings");
  diet::distill_from_name(cfg.distill);
  diet::ablation_from_name(cfg.ablation);
  if (cfg.kd_direction != "teacher_to_student" &&
      cfg.kd_direction != "student_to_teacher")
    throw ConfigError("config: kd_direction must be teacher_to_student or student_to_teacher");
  if (cfg.fd_similarity != "cosine" && cfg.fd_similarity != "dot")
    throw ConfigError("config: fd_similarity must be cosine or dot");
  if (cfg.eval_model != "student" && cfg.eval_model != "teacher" &&
      cfg.eval_model != "content")
    throw ConfigError("config: eval_model must be student, teacher or content");
  if (cfg.scenario != "all") corpus::scenario_from_name(cfg.scenario);
  const_cast<ExperimentConfig&>(cfg).k_list();
  const_cast<ExperimentConfig&>(cfg).ratio_list();
}

corpus::SynthConfig ExperimentConfig::synth_config() const {
  corpus::SynthConfig s;
  s.n_items = n_items;
  s.n_users = n_users;
  s.n_bundles = n_bundles;
  s.bundle_min = bundle_min;
  s.bundle_max = bundle_max;
  s.zipf_exponent = zipf_exponent;
  s.d_t = d_t;
  s.d_m = d_m;
  s.seed = seed;
  s.n_themes = n_themes;
  s.latent_dim = latent_dim;
  s.z_spread = z_spread;
  s.proximity_tau = proximity_tau;
  s.feature_noise = feature_noise;
  s.promo_decile_frac = promo_decile_frac;
  s.promo_wide_frac = promo_wide_frac;
  s.promo_head_max = promo_head_max;
  s.promo_tail_max = promo_tail_max;
  s.organic_pop_exponent = organic_pop_exponent;
  s.theme_boost = theme_boost;
  s.user_min_items = user_min_items;
  s.user_max_items = user_max_items;
  return s;
}

diet::TrainConfig ExperimentConfig::train_config() const {
  diet::TrainConfig t;
  t.d = d;
  t.layers_item = layers_item;
  t.layers_bundle = layers_bundle;
  t.temperature = static_cast<float>(temperature);
  t.lambda = static_cast<float>(lambda);
  t.beta = static_cast<float>(beta);
  t.lr = static_cast<float>(lr);
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.patience = patience;
  t.cases_per_bundle = cases_per_bundle;
  t.seed = seed;
  t.distill = diet::distill_from_name(distill);
  t.kd_direction = kd_direction == "teacher_to_student"
                       ? diet::KdDirection::teacher_to_student
                       : diet::KdDirection::student_to_teacher;
  t.fd_similarity = fd_similarity == "cosine" ? diet::FdSimilarity::cosine
                                              : diet::FdSimilarity::dot;
  t.ablation = diet::ablation_from_name(ablation);
  return t;
}

std::vector<int> ExperimentConfig::k_list() const {
  std::vector<int> out;
  std::stringstream ss(ks);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    const int k = parse_number<int>(cell, "ks", 0);
    if (k <= 0) throw ConfigError("config: ks entries must be positive");
    out.push_back(k);
  }
  if (out.empty()) throw ConfigError("config: ks must list at least one cutoff");
  return out;
}

std::vector<double> ExperimentConfig::ratio_list() const {
  std::vector<double> out;
  std::stringstream ss(sweep_ratios);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    const double r = parse_number<double>(cell, "sweep_ratios", 0);
    if (r <= 0.0 || r > 0.5)
      throw ConfigError("config: sweep ratios must lie in (0, 0.5]");
    out.push_back(r);
  }
  if (out.empty())
    throw ConfigError("config: sweep_ratios must list at least one ratio");
  return out;
}

}  // namespace bundleforge::cli
