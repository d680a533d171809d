#include "slstm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace slstm::model {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

const char* kLstmMatrices[] = {"W_ix", "W_ih", "W_ic", "W_fx", "W_fh", "W_fc",
                               "W_cx", "W_ch", "W_ox", "W_oh", "W_oc"};
const char* kLstmBiases[] = {"b_i", "b_f", "b_c", "b_o"};

void add_lstm_params(std::vector<std::pair<std::string, Tensor>>& out,
                     const std::string& prefix, std::size_t in_dim,
                     std::size_t hidden) {
  for (const char* m : kLstmMatrices) {
    const bool takes_x = m[3] == 'x';
    const std::size_t cols = takes_x ? in_dim : hidden;
    out.emplace_back(prefix + m, Tensor({hidden, cols}));
  }
  for (const char* b : kLstmBiases) out.emplace_back(prefix + b, Tensor({hidden}));
}

}  // namespace

ParamMap init_params(const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t H = cfg.hidden;
  const std::size_t E = cfg.embed;
  std::vector<std::pair<std::string, Tensor>> specs;
  specs.emplace_back("ped.W_ie", Tensor({E, 2}));
  add_lstm_params(specs, "ped.lstm.", E, H);
  specs.emplace_back("head.W", Tensor({5, H}));
  specs.emplace_back("head.b", Tensor({5}));
  specs.emplace_back("sdf.W", Tensor({H, E + H}));
  specs.emplace_back("sdf.b", Tensor({H}));
  const std::size_t scene_in = cfg.grid.subcells() + H;
  for (int j = 0; j < cfg.grid.cells(); ++j)
    add_lstm_params(specs, "scene." + std::to_string(j) + ".lstm.", scene_in, H);

  Rng rng(seed);
  ParamMap params;
  for (auto& [name, t] : specs) {
    if (t.rank() == 2) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1]));
      for (double& v : t.v) v = rng.uniform(-bound, bound);
    }
    // biases stay zero, except the soft-filter gate which starts open
    // (like forget-gate bias tricks) so scene gradients flow from the
    // first epochs; the gate can still learn to close
    if (name == "sdf.b")
      for (double& v : t.v) v = 2.0;
    params.emplace(name, std::move(t));
  }
  return params;
}

ad::Graph::NodeId ParamLeaves::get(const std::string& name) {
  auto it = ids_.find(name);
  if (it != ids_.end()) return it->second;
  auto pit = params_->find(name);
  if (pit == params_->end())
    throw std::invalid_argument("unknown parameter: " + name);
  const auto id = g_->leaf(pit->second);
  ids_.emplace(name, id);
  return id;
}

GradMap ParamLeaves::collect_grads(bool include_untouched) const {
  GradMap grads;
  for (const auto& [name, id] : ids_) grads.emplace(name, g_->grad(id));
  if (include_untouched) {
    for (const auto& [name, t] : *params_)
      if (!grads.count(name)) grads.emplace(name, Tensor::zeros(t.shape));
  }
  return grads;
}

LstmState lstm_step(ad::Graph& g, ParamLeaves& pl, const std::string& prefix,
                    ad::Graph::NodeId x, LstmState s, bool peephole_ct) {
  auto W = [&](const char* n) { return pl.get(prefix + n); };
  auto gate_pre = [&](const char* wx, const char* wh, const char* b) {
    return g.add(g.add(g.matvec(W(wx), x), g.matvec(W(wh), s.h)), pl.get(prefix + b));
  };
  const auto i =
      g.sigmoid(g.add(gate_pre("W_ix", "W_ih", "b_i"), g.matvec(W("W_ic"), s.c)));
  const auto f =
      g.sigmoid(g.add(gate_pre("W_fx", "W_fh", "b_f"), g.matvec(W("W_fc"), s.c)));
  const auto cand = g.tanh(gate_pre("W_cx", "W_ch", "b_c"));
  const auto c_new = g.add(g.mul(f, s.c), g.mul(i, cand));
  const auto o = g.sigmoid(g.add(gate_pre("W_ox", "W_oh", "b_o"),
                                 g.matvec(W("W_oc"), peephole_ct ? c_new : s.c)));
  const auto h_new = g.mul(o, g.tanh(c_new));
  return {h_new, c_new};
}

GaussianParams GaussianNodes::values(const ad::Graph& g) const {
  return {g.value(mu_x).v[0], g.value(mu_y).v[0], g.value(sigma_x).v[0],
          g.value(sigma_y).v[0], g.value(rho).v[0]};
}

GaussianNodes gaussian_head(ad::Graph& g, ad::Graph::NodeId raw5) {
  if (g.value(raw5).numel() != 5)
    throw std::invalid_argument("gaussian_head: expected a 5-vector");
  GaussianNodes out;
  out.mu_x = g.pick(raw5, 0);
  out.mu_y = g.pick(raw5, 1);
  out.sigma_x = g.exp(g.pick(raw5, 2));
  out.sigma_y = g.exp(g.pick(raw5, 3));
  out.rho = g.tanh(g.pick(raw5, 4));
  return out;
}

ad::Graph::NodeId nll_loss(ad::Graph& g, const GaussianNodes& p, double dx,
                           double dy) {
  const auto tx = g.leaf(Tensor::scalar(dx));
  const auto ty = g.leaf(Tensor::scalar(dy));
  const auto one = g.leaf(Tensor::scalar(1.0));
  const auto zx = g.div(g.sub(tx, p.mu_x), p.sigma_x);
  const auto zy = g.div(g.sub(ty, p.mu_y), p.sigma_y);
  const auto omr = g.sub(one, g.mul(p.rho, p.rho));  // 1 - rho^2
  const auto quad =
      g.sub(g.add(g.mul(zx, zx), g.mul(zy, zy)),
            g.scale(g.mul(p.rho, g.mul(zx, zy)), 2.0));
  const auto log_det = g.add(g.add(g.log(p.sigma_x), g.log(p.sigma_y)),
                             g.scale(g.log(omr), 0.5));
  const auto const_term = g.leaf(Tensor::scalar(std::log(kTwoPi)));
  return g.add(g.add(const_term, log_det), g.scale(g.div(quad, omr), 0.5));
}

double nll_value(const GaussianParams& p, double dx, double dy) {
  const double zx = (dx - p.mu_x) / p.sigma_x;
  const double zy = (dy - p.mu_y) / p.sigma_y;
  const double omr = 1.0 - p.rho * p.rho;
  const double quad = zx * zx + zy * zy - 2.0 * p.rho * zx * zy;
  return std::log(kTwoPi) + std::log(p.sigma_x) + std::log(p.sigma_y) +
         0.5 * std::log(omr) + 0.5 * quad / omr;
}

data::Vec2 sample_offset(const GaussianParams& p, Rng& rng) {
  const double z1 = rng.gaussian();
  const double z2 = rng.gaussian();
  return {p.mu_x + p.sigma_x * z1,
          p.mu_y + p.sigma_y * (p.rho * z1 + std::sqrt(1.0 - p.rho * p.rho) * z2)};
}

namespace {

struct TargetState {
  LstmState ped;
  data::Vec2 pos;     // current position used for grid lookup
  data::Vec2 offset;  // offset fed at the current frame
};

}  // namespace

WindowResult forward_window(ad::Graph& g, ParamLeaves& pl,
                            const data::Batch& batch, grid::GridBank& bank,
                            const ModelConfig& cfg, Mode mode, Rng* sample_rng,
                            Rng* dropout_rng) {
  if (batch.targets.empty())
    throw std::invalid_argument("forward_window: batch has zero targets");
  if (mode == Mode::PredictSample && !sample_rng)
    throw std::invalid_argument("forward_window: sampling needs an rng");
  const bool train = mode == Mode::Train;
  if (train && cfg.dropout > 0.0 && !dropout_rng)
    throw std::invalid_argument("forward_window: training dropout needs an rng");
  const int T = batch.total();
  const std::size_t H = cfg.hidden;
  const std::size_t n = batch.targets.size();

  const auto zero_h = g.leaf(Tensor::zeros({H}));
  const auto zero_f = g.leaf(Tensor::zeros({H}));

  std::vector<TargetState> st(n);
  for (std::size_t i = 0; i < n; ++i) {
    st[i].ped = {zero_h, zero_h};
    st[i].pos = batch.targets[i].positions[0];
  }

  // grid cell states live as graph nodes while the window runs
  std::map<int, LstmState> live_cells;
  std::map<int, LstmState> obs_snapshot;  // states at end of observation

  WindowResult res;
  res.predictions.assign(n, {});
  ad::Graph::NodeId loss = -1;

  for (int t = 0; t < T; ++t) {
    const bool predicting = !train && t >= batch.t_obs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& tgt = batch.targets[i];
      TargetState& ts = st[i];
      if (!predicting) {
        ts.pos = tgt.positions[t];
        ts.offset = tgt.offsets[t];
      }
      const auto x =
          g.leaf(Tensor({2}, {ts.offset.x, ts.offset.y}));
      const auto e = g.relu(g.matvec(pl.get("ped.W_ie"), x));

      ad::Graph::NodeId F = zero_f;
      if (cfg.use_scene) {
        const auto loc = grid::locate(cfg.grid, ts.pos.x, ts.pos.y);
        auto cell_it = live_cells.find(loc.cell);
        if (cell_it == live_cells.end()) {
          LstmState cs{g.leaf(bank.h(loc.cell)), g.leaf(bank.c(loc.cell))};
          cell_it = live_cells.emplace(loc.cell, cs).first;
        }
        const auto v = g.leaf(grid::one_hot(cfg.grid, loc.subcell));
        const std::string prefix = "scene." + std::to_string(loc.cell) + ".lstm.";
        const LstmState cs = lstm_step(g, pl, prefix, g.concat(v, ts.ped.h),
                                       cell_it->second, cfg.peephole_ct);
        cell_it->second = cs;
        const auto hard = g.mul(g.relu(cs.h), g.leaf(bank.k(loc.cell)));
        const auto gate = g.sigmoid(
            g.add(g.matvec(pl.get("sdf.W"), g.concat(e, ts.ped.h)),
                  pl.get("sdf.b")));
        F = g.mul(gate, hard);
      }

      const LstmState ns =
          lstm_step(g, pl, "ped.lstm.", e, ts.ped, cfg.peephole_ct);
      const auto h_state = g.relu(ns.h);
      ts.ped = {h_state, ns.c};

      auto head_in = h_state;
      if (train && cfg.dropout > 0.0) {
        Tensor mask({H});
        const double keep = 1.0 - cfg.dropout;
        for (double& m : mask.v)
          m = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        head_in = g.mul(head_in, g.leaf(std::move(mask)));
      }
      const auto raw = g.add(g.matvec(pl.get("head.W"), g.add(head_in, F)),
                             pl.get("head.b"));
      const GaussianNodes gn = gaussian_head(g, raw);

      if (train) {
        if (t + 1 < T) {
          const auto l =
              nll_loss(g, gn, tgt.offsets[t + 1].x, tgt.offsets[t + 1].y);
          loss = loss < 0 ? l : g.add(loss, l);
        }
      } else if (t >= batch.t_obs - 1 && t + 1 < T) {
        const GaussianParams gp = gn.values(g);
        const data::Vec2 off = mode == Mode::PredictMean
                                   ? data::Vec2{gp.mu_x, gp.mu_y}
                                   : sample_offset(gp, *sample_rng);
        ts.offset = off;
        ts.pos = {ts.pos.x + off.x, ts.pos.y + off.y};
        res.predictions[i].push_back(ts.pos);
      }
    }
    if (!train && t == batch.t_obs - 1) obs_snapshot = live_cells;
  }

  if (train) {
    res.loss_node = loss;
    res.loss = g.value(loss).v[0];
  }

  // persist grid states: training keeps the teacher-forced states, predict
  // modes keep the observation-phase states only
  const auto& keep = train ? live_cells : obs_snapshot;
  for (const auto& [cell, s] : keep)
    bank.set_state(cell, g.value(s.h), g.value(s.c));
  return res;
}

std::vector<data::Vec2> linear_baseline(const std::vector<data::Vec2>& observed,
                                        int t_pred) {
  const std::size_t n = observed.size();
  if (n < 2)
    throw std::invalid_argument("linear_baseline: need at least 2 points");
  // least squares of p(t) = a + b t over t = 0..n-1
  double st = 0, stt = 0, sx = 0, sy = 0, stx = 0, sty = 0;
  for (std::size_t t = 0; t < n; ++t) {
    st += t;
    stt += static_cast<double>(t) * t;
    sx += observed[t].x;
    sy += observed[t].y;
    stx += t * observed[t].x;
    sty += t * observed[t].y;
  }
  const double den = n * stt - st * st;
  const double bx = (n * stx - st * sx) / den;
  const double by = (n * sty - st * sy) / den;
  const double ax = (sx - bx * st) / n;
  const double ay = (sy - by * st) / n;
  std::vector<data::Vec2> out;
  out.reserve(t_pred);
  for (int k = 1; k <= t_pred; ++k) {
    const double t = static_cast<double>(n - 1 + k);
    out.push_back({ax + bx * t, ay + by * t});
  }
  return out;
}

}  // namespace slstm::model
