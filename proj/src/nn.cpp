#include "grl/nn.hpp"

#include <cmath>

#include "grl/rng.hpp"

namespace grl {

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd y = x * weight.transpose();
  y.rowwise() += bias.transpose();
  return y;
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy,
                                 Linear& grad) const {
  grad.weight.noalias() += dy.transpose() * x;
  grad.bias += dy.colwise().sum().transpose();
  return dy * weight;
}

void Linear::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim()));
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < bias.size(); ++i) bias[i] = rng.uniform(-bound, bound);
}

Mlp::Mlp(const std::vector<Eigen::Index>& sizes, bool relu_output) : relu_output_(relu_output) {
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) layers_.emplace_back(sizes[i], sizes[i + 1]);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache, BranchTrace* trace) const {
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd pre = layers_[i].forward(a);
    const bool relu = i + 1 < layers_.size() || relu_output_;
    if (cache) {
      cache->inputs.push_back(a);
      cache->pre.push_back(pre);
    }
    if (relu) {
      if (trace) trace->add_mask(pre);
      a = pre.cwiseMax(0.0);
    } else {
      a = std::move(pre);
    }
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& dy, Mlp& grad) const {
  Eigen::MatrixXd d = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool relu = i + 1 < layers_.size() || relu_output_;
    if (relu) d = (cache.pre[i].array() > 0.0).select(d.array(), 0.0).matrix();
    d = layers_[i].backward(cache.inputs[i], d, grad.layers_[i]);
  }
  return d;
}

void Mlp::init_uniform(Rng& rng) {
  for (Linear& layer : layers_) layer.init_uniform(rng);
}

Mlp Mlp::zeros_like() const {
  Mlp out = *this;
  for (Linear& layer : out.layers_) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  return out;
}

void append_params(std::vector<ParamView>& out, const std::string& prefix, Linear& layer) {
  out.push_back({prefix + ".weight", layer.weight.data(), layer.weight.rows(), layer.weight.cols()});
  out.push_back({prefix + ".bias", layer.bias.data(), layer.bias.size(), 1});
}

void append_params(std::vector<ParamView>& out, const std::string& prefix, Mlp& mlp) {
  for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
    append_params(out, prefix + "." + std::to_string(i), mlp.layers()[i]);
  }
}

}  // namespace grl
