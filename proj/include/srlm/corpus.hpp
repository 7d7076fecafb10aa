#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "srlm/linear_gaussian.hpp"
#include "srlm/model.hpp"
#include "srlm/rng.hpp"

namespace srlm {

inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

// Token <-> id bijection. Corpus tokens are ordered by (frequency desc,
// token lexicographic); the end-of-sentence and unknown markers follow.
class Vocabulary {
 public:
  static Vocabulary build(const std::vector<std::string>& lines, bool char_level);

  int id(const std::string& token) const;   // unknown id when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  int eos_id() const { return eos_id_; }
  int unk_id() const { return unk_id_; }
  bool char_level() const { return char_level_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int eos_id_ = -1;
  int unk_id_ = -1;
  bool char_level_ = false;
};

struct Corpus {
  std::vector<Sentence> sentences;
  Vocabulary vocab;
  std::string split;  // train / valid / test

  std::vector<Observation> observations() const {
    return std::vector<Observation>(sentences.begin(), sentences.end());
  }
  long long token_count() const {
    long long n = 0;
    for (const auto& s : sentences) n += s.length();
    return n;
  }
};

std::vector<std::string> tokenize_line(const std::string& line, bool char_level, bool lowercase);

// Loads a one-sentence-per-line UTF-8 text corpus. When `vocab` is absent a
// deterministic vocabulary is built from the file; otherwise out-of-vocabulary
// tokens map to the unknown id. Every sentence ends with the eos id.
Corpus load_corpus(const std::string& path, std::optional<Vocabulary> vocab, bool lowercase,
                   bool char_level, std::string split = "train");

Sentence encode_line(const std::string& line, const Vocabulary& vocab, bool lowercase);
// Inverse of encode_line modulo unknown-token mapping; drops the eos marker.
std::string decode_sentence(const Sentence& s, const Vocabulary& vocab);

// Synthetic toy grammar a^n b^n c with n uniform on [1, max_n].
std::string toy_grammar_line(RngStream& rng, int max_n = 8);
bool toy_grammar_valid(const std::string& line);
void write_toy_grammar_corpus(const std::string& path, int lines, RngStream& rng, int max_n = 8);

// Vector corpora for the linear-Gaussian decoder: one observation per line,
// space-separated decimal floats.
void write_vector_corpus(const std::string& path, const std::vector<Eigen::VectorXd>& rows);
std::vector<Eigen::VectorXd> load_vector_corpus(const std::string& path);
std::vector<Eigen::VectorXd> sample_lg_corpus(const LinearGaussianSpec& spec, int n,
                                              RngStream& rng);

}  // namespace srlm
