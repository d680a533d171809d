#pragma once

#include <map>
#include <string>

#include "slstm/tensor.hpp"

namespace slstm {

// Named parameter table. std::map keeps iteration order deterministic,
// which checkpointing and Adam rely on.
using ParamMap = std::map<std::string, Tensor>;
using GradMap = std::map<std::string, Tensor>;

struct AdamState {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  ParamMap m;  // first moments, keyed like the parameters
  ParamMap v;  // second moments

  static AdamState init(const ParamMap& params, double lr);
};

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm. Returns the pre-clip norm.
double clip_global_norm(GradMap& grads, double max_norm);

// Standard Adam update with bias correction, in place.
void adam_step(ParamMap& params, const GradMap& grads, AdamState& state);

}  // namespace slstm
