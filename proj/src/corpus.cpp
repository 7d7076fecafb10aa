#include "srlm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace srlm {

std::vector<std::string> tokenize_line(const std::string& line, bool char_level, bool lowercase) {
  std::string text = line;
  if (lowercase) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  }
  std::vector<std::string> tokens;
  if (char_level) {
    tokens.reserve(text.size());
    for (char c : text) tokens.emplace_back(1, c);
  } else {
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  }
  return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, bool char_level) {
  std::map<std::string, long long> counts;
  for (const auto& line : lines) {
    for (auto& tok : tokenize_line(line, char_level, false)) {
      if (tok == kEosToken || tok == kUnkToken) continue;  // reserved literals
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, long long>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  v.char_level_ = char_level;
  for (auto& [tok, _] : order) {
    v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(tok);
  }
  v.eos_id_ = static_cast<int>(v.tokens_.size());
  v.index_.emplace(kEosToken, v.eos_id_);
  v.tokens_.emplace_back(kEosToken);
  v.unk_id_ = static_cast<int>(v.tokens_.size());
  v.index_.emplace(kUnkToken, v.unk_id_);
  v.tokens_.emplace_back(kUnkToken);
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::token(int id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

void Vocabulary::save(const std::string& path) const {
  nlohmann::json j;
  j["char_level"] = char_level_;
  j["tokens"] = tokens_;
  j["eos_id"] = eos_id_;
  j["unk_id"] = unk_id_;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("vocabulary: cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocabulary: cannot open: " + path);
  nlohmann::json j;
  in >> j;
  Vocabulary v;
  v.char_level_ = j.at("char_level").get<bool>();
  v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  v.eos_id_ = j.at("eos_id").get<int>();
  v.unk_id_ = j.at("unk_id").get<int>();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    v.index_.emplace(v.tokens_[i], static_cast<int>(i));
  }
  if (v.eos_id_ < 0 || v.eos_id_ >= v.size() || v.unk_id_ < 0 || v.unk_id_ >= v.size()) {
    throw std::runtime_error("vocabulary: corrupt special ids in " + path);
  }
  return v;
}

Sentence encode_line(const std::string& line, const Vocabulary& vocab, bool lowercase) {
  Sentence s;
  for (auto& tok : tokenize_line(line, vocab.char_level(), lowercase)) {
    s.ids.push_back(vocab.id(tok));
  }
  s.ids.push_back(vocab.eos_id());
  return s;
}

std::string decode_sentence(const Sentence& s, const Vocabulary& vocab) {
  std::string out;
  bool first = true;
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    const int id = s.ids[i];
    if (id == vocab.eos_id() && i + 1 == s.ids.size()) break;
    if (!vocab.char_level() && !first) out += ' ';
    out += vocab.token(id);
    first = false;
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("corpus: cannot open: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

Corpus load_corpus(const std::string& path, std::optional<Vocabulary> vocab, bool lowercase,
                   bool char_level, std::string split) {
  std::vector<std::string> lines = read_lines(path);
  std::erase_if(lines, [](const std::string& l) { return l.empty(); });
  if (lines.empty()) throw std::runtime_error("corpus: no sentences in " + path);

  Corpus corpus;
  if (vocab.has_value()) {
    if (vocab->char_level() != char_level) {
      throw std::runtime_error("corpus: vocabulary level does not match requested level");
    }
    corpus.vocab = std::move(*vocab);
  } else {
    std::vector<std::string> source = lines;
    if (lowercase) {
      for (auto& l : source) {
        std::transform(l.begin(), l.end(), l.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      }
    }
    corpus.vocab = Vocabulary::build(source, char_level);
  }
  corpus.split = std::move(split);
  corpus.sentences.reserve(lines.size());
  for (const auto& line : lines) {
    corpus.sentences.push_back(encode_line(line, corpus.vocab, lowercase));
  }
  return corpus;
}

std::string toy_grammar_line(RngStream& rng, int max_n) {
  const int n = 1 + rng.uniform_int(max_n);
  std::string line(static_cast<std::size_t>(n), 'a');
  line.append(static_cast<std::size_t>(n), 'b');
  line.push_back('c');
  return line;
}

bool toy_grammar_valid(const std::string& line) {
  std::size_t i = 0;
  while (i < line.size() && line[i] == 'a') ++i;
  const std::size_t as = i;
  while (i < line.size() && line[i] == 'b') ++i;
  const std::size_t bs = i - as;
  return as >= 1 && as == bs && i + 1 == line.size() && line[i] == 'c';
}

void write_toy_grammar_corpus(const std::string& path, int lines, RngStream& rng, int max_n) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("corpus: cannot open for writing: " + path);
  for (int i = 0; i < lines; ++i) out << toy_grammar_line(rng, max_n) << "\n";
}

void write_vector_corpus(const std::string& path, const std::vector<Eigen::VectorXd>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("corpus: cannot open for writing: " + path);
  char buf[40];
  for (const auto& row : rows) {
    for (Eigen::Index i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      if (i > 0) out << ' ';
      out << buf;
    }
    out << "\n";
  }
}

std::vector<Eigen::VectorXd> load_vector_corpus(const std::string& path) {
  std::vector<Eigen::VectorXd> rows;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> vals;
    double v = 0.0;
    while (ss >> v) vals.push_back(v);
    if (vals.empty()) continue;
    rows.push_back(Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  if (rows.empty()) throw std::runtime_error("corpus: no vectors in " + path);
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) {
      throw std::runtime_error("corpus: ragged vector rows in " + path);
    }
  }
  return rows;
}

std::vector<Eigen::VectorXd> sample_lg_corpus(const LinearGaussianSpec& spec, int n,
                                              RngStream& rng) {
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(static_cast<std::size_t>(n));
  const double sd = std::sqrt(spec.sigma2);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = rng.normal_vec(spec.latent_dim());
    rows.push_back(spec.W * z + sd * rng.normal_vec(spec.data_dim()));
  }
  return rows;
}

}  // namespace srlm
