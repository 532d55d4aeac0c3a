#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace grl {

class Rng;

/// Running FNV-1a hash of every discrete branch taken during a forward pass
/// (ReLU masks, max-pool winners, nearest-neighbor choices). Two
/// evaluations with equal traces lie on the same smooth piece of the loss.
class BranchTrace {
 public:
  void add(std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (value >> (8 * i)) & 0xFF;
      hash_ *= 0x100000001B3ULL;
    }
  }
  void add_mask(const Eigen::MatrixXd& pre) {
    std::uint64_t word = 0;
    int bits = 0;
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      word = (word << 1) | (pre.data()[i] > 0.0 ? 1U : 0U);
      if (++bits == 64) {
        add(word);
        word = 0;
        bits = 0;
      }
    }
    add(word);
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

/// y = x W^T + b, rows are samples.
struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out)
      : weight(Eigen::MatrixXd::Zero(out, in)), bias(Eigen::VectorXd::Zero(out)) {}

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Linear& grad) const;

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  void init_uniform(Rng& rng);
};

/// Shared per-point MLP; ReLU between layers and optionally after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<Eigen::Index>& sizes, bool relu_output);

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr,
                          BranchTrace* trace = nullptr) const;
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy, Mlp& grad) const;

  void init_uniform(Rng& rng);
  Mlp zeros_like() const;

  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }

 private:
  std::vector<Linear> layers_;
  bool relu_output_ = false;
};

/// A named parameter tensor, viewed in place.
struct ParamView {
  std::string name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
};

void append_params(std::vector<ParamView>& out, const std::string& prefix, Linear& layer);
void append_params(std::vector<ParamView>& out, const std::string& prefix, Mlp& mlp);

}  // namespace grl
