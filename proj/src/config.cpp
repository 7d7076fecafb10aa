#include "srlm/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "srlm/parallel.hpp"

namespace srlm {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out{};
  ss >> out;
  if (ss.fail() || !ss.eof()) throw ConfigError("config: bad number for " + key + ": " + v);
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_num<double>(item, "list"));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_num<int>(item, "list"));
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "model.decoder") model_decoder = value;
  else if (key == "model.latent_dim") model_latent_dim = parse_num<int>(value, key);
  else if (key == "model.hidden") model_hidden = parse_num<int>(value, key);
  else if (key == "model.embedding") model_embedding = parse_num<int>(value, key);
  else if (key == "model.level") model_level = value;
  else if (key == "model.lowercase") model_lowercase = parse_bool(value, key);
  else if (key == "model.use_latent") model_use_latent = parse_bool(value, key);
  else if (key == "model.lg_data_dim") model_lg_data_dim = parse_num<int>(value, key);
  else if (key == "model.lg_sigma2") model_lg_sigma2 = parse_num<double>(value, key);
  else if (key == "sri.steps") sri_steps = parse_num<int>(value, key);
  else if (key == "sri.step_size") sri_step_size = parse_num<double>(value, key);
  else if (key == "sri.grid") sri_grid = value;
  else if (key == "sri.grid_samples") sri_grid_samples = parse_num<int>(value, key);
  else if (key == "sri.step_interval") sri_step_interval = parse_num<int>(value, key);
  else if (key == "sri.divergence_norm") sri_divergence_norm = parse_num<double>(value, key);
  else if (key == "train.iterations") train_iterations = parse_num<int>(value, key);
  else if (key == "train.batch") train_batch = parse_num<int>(value, key);
  else if (key == "train.lr") train_lr = parse_num<double>(value, key);
  else if (key == "train.lr_decay") train_lr_decay = parse_num<double>(value, key);
  else if (key == "train.optimizer") train_optimizer = value;
  else if (key == "train.clip_norm") train_clip_norm = parse_num<double>(value, key);
  else if (key == "train.samples") train_samples = parse_num<int>(value, key);
  else if (key == "train.seed") train_seed = parse_num<std::uint64_t>(value, key);
  else if (key == "train.checkpoint_every") train_checkpoint_every = parse_num<int>(value, key);
  else if (key == "train.freeze") train_freeze = value;
  else if (key == "eval.importance_samples") eval_importance_samples = parse_num<int>(value, key);
  else if (key == "eval.posterior_samples") eval_posterior_samples = parse_num<int>(value, key);
  else if (key == "eval.au_threshold") eval_au_threshold = parse_num<double>(value, key);
  else if (key == "paths.corpus") paths_corpus = value;
  else if (key == "paths.out") paths_out = value;
  else if (key == "paths.checkpoint") paths_checkpoint = value;
  else if (key == "paths.vocab") paths_vocab = value;
  else if (key == "threads") threads = parse_num<int>(value, key);
  else throw ConfigError("config: unknown key: " + key);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  out << "eval.au_threshold = " << fmt(eval_au_threshold) << "\n";
  out << "eval.importance_samples = " << eval_importance_samples << "\n";
  out << "eval.posterior_samples = " << eval_posterior_samples << "\n";
  out << "model.decoder = " << model_decoder << "\n";
  out << "model.embedding = " << model_embedding << "\n";
  out << "model.hidden = " << model_hidden << "\n";
  out << "model.latent_dim = " << model_latent_dim << "\n";
  out << "model.level = " << model_level << "\n";
  out << "model.lg_data_dim = " << model_lg_data_dim << "\n";
  out << "model.lg_sigma2 = " << fmt(model_lg_sigma2) << "\n";
  out << "model.lowercase = " << (model_lowercase ? "true" : "false") << "\n";
  out << "model.use_latent = " << (model_use_latent ? "true" : "false") << "\n";
  out << "sri.divergence_norm = " << fmt(sri_divergence_norm) << "\n";
  out << "sri.grid = " << sri_grid << "\n";
  out << "sri.grid_samples = " << sri_grid_samples << "\n";
  out << "sri.step_interval = " << sri_step_interval << "\n";
  out << "sri.step_size = " << fmt(sri_step_size) << "\n";
  out << "sri.steps = " << sri_steps << "\n";
  out << "train.batch = " << train_batch << "\n";
  out << "train.checkpoint_every = " << train_checkpoint_every << "\n";
  out << "train.clip_norm = " << fmt(train_clip_norm) << "\n";
  out << "train.freeze = " << train_freeze << "\n";
  out << "train.iterations = " << train_iterations << "\n";
  out << "train.lr = " << fmt(train_lr) << "\n";
  out << "train.lr_decay = " << fmt(train_lr_decay) << "\n";
  out << "train.optimizer = " << train_optimizer << "\n";
  out << "train.samples = " << train_samples << "\n";
  out << "train.seed = " << train_seed << "\n";
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void RunConfig::validate() const {
  if (model_decoder != "recurrent" && model_decoder != "linear_gaussian") {
    throw ConfigError("config: model.decoder must be recurrent or linear_gaussian");
  }
  if (model_level != "char" && model_level != "word") {
    throw ConfigError("config: model.level must be char or word");
  }
  if (train_optimizer != "sgd" && train_optimizer != "adam") {
    throw ConfigError("config: train.optimizer must be sgd or adam");
  }
  if (model_latent_dim < 1) throw ConfigError("config: model.latent_dim must be >= 1");
  if (eval_au_threshold <= 0.0) throw ConfigError("config: eval.au_threshold must be > 0");
  if (train_iterations < 0) throw ConfigError("config: train.iterations must be >= 0");
  if (train_batch < 1) throw ConfigError("config: train.batch must be >= 1");
  if (train_lr <= 0.0) throw ConfigError("config: train.lr must be > 0");
  if (sri_step_interval < 1) throw ConfigError("config: sri.step_interval must be >= 1");
  if (sri_steps < 0) throw ConfigError("config: sri.steps must be >= 0");
  if (sri_step_size <= 0.0) throw ConfigError("config: sri.step_size must be > 0");
  if (eval_importance_samples < 1 || eval_posterior_samples < 1) {
    throw ConfigError("config: eval sample counts must be >= 1");
  }
  StepSizeGrid grid = step_size_grid();
  grid.validate();
}

SriConfig RunConfig::sri_config() const {
  SriConfig cfg;
  cfg.steps = sri_steps;
  cfg.step_size = sri_step_size;
  cfg.divergence_norm = sri_divergence_norm;
  return cfg;
}

StepSizeGrid RunConfig::step_size_grid() const {
  StepSizeGrid grid;
  grid.candidates = parse_double_list(sri_grid);
  grid.samples_per_example = sri_grid_samples;
  return grid;
}

std::vector<std::string> RunConfig::freeze_list() const {
  std::vector<std::string> out;
  std::istringstream ss(train_freeze);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int RunConfig::effective_threads() const {
  return threads > 0 ? threads : hardware_threads();
}

}  // namespace srlm
