#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace srlm {

struct ParamBlock {
  std::string name;
  Eigen::MatrixXd value;
};

// Named parameter blocks with a flat scalar view. Block order is fixed at
// construction; the flat index runs over blocks in order, column-major within
// each block, so block<->flat round trips are lossless.
class ModelParams {
 public:
  ModelParams() = default;

  void add_block(std::string name, Eigen::MatrixXd value) {
    for (const auto& b : blocks_) {
      if (b.name == name) throw std::invalid_argument("duplicate block: " + name);
    }
    blocks_.push_back({std::move(name), std::move(value)});
  }

  bool has(const std::string& name) const {
    for (const auto& b : blocks_) {
      if (b.name == name) return true;
    }
    return false;
  }

  const Eigen::MatrixXd& block(const std::string& name) const {
    for (const auto& b : blocks_) {
      if (b.name == name) return b.value;
    }
    throw std::out_of_range("no such block: " + name);
  }

  Eigen::MatrixXd& block(const std::string& name) {
    for (auto& b : blocks_) {
      if (b.name == name) return b.value;
    }
    throw std::out_of_range("no such block: " + name);
  }

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t block_count() const { return blocks_.size(); }

  Eigen::Index flat_size() const {
    Eigen::Index n = 0;
    for (const auto& b : blocks_) n += b.value.size();
    return n;
  }

  Eigen::VectorXd to_flat() const {
    Eigen::VectorXd out(flat_size());
    Eigen::Index at = 0;
    for (const auto& b : blocks_) {
      out.segment(at, b.value.size()) =
          Eigen::Map<const Eigen::VectorXd>(b.value.data(), b.value.size());
      at += b.value.size();
    }
    return out;
  }

  void from_flat(const Eigen::VectorXd& flat) {
    if (flat.size() != flat_size()) throw std::invalid_argument("from_flat: size mismatch");
    Eigen::Index at = 0;
    for (auto& b : blocks_) {
      Eigen::Map<Eigen::VectorXd>(b.value.data(), b.value.size()) =
          flat.segment(at, b.value.size());
      at += b.value.size();
    }
  }

  // In-place theta += alpha * delta over the flat view.
  void axpy(double alpha, const Eigen::VectorXd& delta) {
    if (delta.size() != flat_size()) throw std::invalid_argument("axpy: size mismatch");
    Eigen::Index at = 0;
    for (auto& b : blocks_) {
      Eigen::Map<Eigen::VectorXd>(b.value.data(), b.value.size()) +=
          alpha * delta.segment(at, b.value.size());
      at += b.value.size();
    }
  }

  // Flat offset of a named block (for masking block ranges in flat vectors).
  std::pair<Eigen::Index, Eigen::Index> flat_span(const std::string& name) const {
    Eigen::Index at = 0;
    for (const auto& b : blocks_) {
      if (b.name == name) return {at, b.value.size()};
      at += b.value.size();
    }
    throw std::out_of_range("no such block: " + name);
  }

 private:
  std::vector<ParamBlock> blocks_;
};

}  // namespace srlm
