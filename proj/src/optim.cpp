#include "slstm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace slstm {

AdamState AdamState::init(const ParamMap& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& [name, t] : params) {
    s.m.emplace(name, Tensor::zeros(t.shape));
    s.v.emplace(name, Tensor::zeros(t.shape));
  }
  return s;
}

double clip_global_norm(GradMap& grads, double max_norm) {
  if (max_norm <= 0.0)
    throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.v) x *= s;
  }
  return norm;
}

void adam_step(ParamMap& params, const GradMap& grads, AdamState& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor& g = git->second;
    require_same_shape(p, g, "adam_step");
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m.v[i] = state.beta1 * m.v[i] + (1.0 - state.beta1) * g.v[i];
      v.v[i] = state.beta2 * v.v[i] + (1.0 - state.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace slstm
