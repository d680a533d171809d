#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slstm/data.hpp"
#include "slstm/graph.hpp"
#include "slstm/optim.hpp"
#include "slstm/rng.hpp"
#include "slstm/scenegrid.hpp"

namespace slstm::model {

struct ModelConfig {
  int hidden = 128;
  int embed = 64;
  grid::GridConfig grid;
  grid::Variant variant = grid::Variant::Nonlinear;
  bool use_scene = true;  // false = vanilla offset-LSTM baseline
  double dropout = 0.2;
  bool peephole_ct = false;  // output-gate peephole reads c_t instead of c_{t-1}
};

// Parameter names, by prefix:
//   ped.W_ie, ped.lstm.*            pedestrian embedding and LSTM
//   head.W, head.b                  bivariate-Gaussian output head
//   sdf.W, sdf.b                    soft-filter gate
//   scene.<j>.lstm.*                per-grid-cell scene LSTMs
ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed);

// Binds a ParamMap to a Graph, creating one leaf per parameter on first
// use; afterwards hands back gradients for the touched parameters.
class ParamLeaves {
 public:
  ParamLeaves(ad::Graph& g, const ParamMap& params) : g_(&g), params_(&params) {}

  ad::Graph::NodeId get(const std::string& name);
  bool touched(const std::string& name) const { return ids_.count(name) > 0; }

  GradMap collect_grads(bool include_untouched = false) const;

 private:
  ad::Graph* g_;
  const ParamMap* params_;
  std::map<std::string, ad::Graph::NodeId> ids_;
};

struct LstmState {
  ad::Graph::NodeId h;
  ad::Graph::NodeId c;
};

// Peephole LSTM step; gate peepholes read c_{t-1} (c_t for the output
// gate when peephole_ct is set).
LstmState lstm_step(ad::Graph& g, ParamLeaves& pl, const std::string& prefix,
                    ad::Graph::NodeId x, LstmState state, bool peephole_ct);

struct GaussianParams {
  double mu_x = 0.0, mu_y = 0.0;
  double sigma_x = 1.0, sigma_y = 1.0;
  double rho = 0.0;
};

struct GaussianNodes {
  ad::Graph::NodeId mu_x, mu_y, sigma_x, sigma_y, rho;
  GaussianParams values(const ad::Graph& g) const;
};

// raw 5-vector -> (mu, exp sigma, tanh rho)
GaussianNodes gaussian_head(ad::Graph& g, ad::Graph::NodeId raw5);

// -log bivariate normal density at the target offset, in log space
ad::Graph::NodeId nll_loss(ad::Graph& g, const GaussianNodes& p, double dx,
                           double dy);
double nll_value(const GaussianParams& p, double dx, double dy);

// Cholesky draw from the 2x2 covariance
data::Vec2 sample_offset(const GaussianParams& p, Rng& rng);

enum class Mode { Train, PredictMean, PredictSample };

struct WindowResult {
  double loss = 0.0;
  ad::Graph::NodeId loss_node = -1;
  // predictions[i][k] is the position of batch target i at frame t_obs+k
  std::vector<std::vector<data::Vec2>> predictions;
};

// One T-frame window through the coupled networks. Train mode teacher
// forces true offsets and sums the NLL over the whole window; predict
// modes observe t_obs frames and roll the remaining t_pred forward on the
// model's own offsets, with grid lookups at the predicted positions. The
// bank's cell states are advanced in place (through the observation phase
// only in predict modes).
WindowResult forward_window(ad::Graph& g, ParamLeaves& pl,
                            const data::Batch& batch, grid::GridBank& bank,
                            const ModelConfig& cfg, Mode mode,
                            Rng* sample_rng = nullptr,
                            Rng* dropout_rng = nullptr);

// Least-squares line fit per axis over the observed positions,
// extrapolated t_pred steps.
std::vector<data::Vec2> linear_baseline(const std::vector<data::Vec2>& observed,
                                        int t_pred);

}  // namespace slstm::model
