#include "hstf/nn/optim.hpp"

#include <cmath>
#include <string>

#include "hstf/error.hpp"

namespace hstf::nn {

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error(Errc::InvalidArgument, "unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

std::string_view to_string(OptimizerKind kind) noexcept { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {}

void Optimizer::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads) {
  if (params.size() != grads.size()) throw Error(Errc::ShapeMismatch, "optimizer params/grads count differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k]->shape()) {
      throw Error(Errc::ShapeMismatch, "optimizer gradient shape mismatch at tensor " + std::to_string(k));
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::Sgd) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      double* p = params[k]->data();
      const double* g = grads[k]->data();
      for (std::size_t j = 0; j < params[k]->size(); ++j) p[j] -= lr * g[j];
    }
    return;
  }

  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  } else if (m_.size() != params.size()) {
    throw Error(Errc::ShapeMismatch, "optimizer parameter list changed between steps");
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k]->data();
    const double* g = grads[k]->data();
    double* m = m_[k].data();
    double* v = v_[k].data();
    for (std::size_t j = 0; j < params[k]->size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace hstf::nn
