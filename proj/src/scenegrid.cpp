#include "slstm/scenegrid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slstm::grid {

namespace {

// index of the band containing `coord` when [-1,1] is split into `dim`
// bands of width 2/dim; +1 clamps into the last band
int band(double coord, int dim) {
  const double u = (coord + 1.0) / (2.0 / dim);
  int i = static_cast<int>(std::floor(u));
  return std::clamp(i, 0, dim - 1);
}

}  // namespace

CellCoord locate(const GridConfig& cfg, double x, double y) {
  const double cx = std::clamp(x, -1.0, 1.0);
  const double cy = std::clamp(y, -1.0, 1.0);
  const int col = band(cx, cfg.grid_dim);
  const int row = band(cy, cfg.grid_dim);
  const double cell_w = 2.0 / cfg.grid_dim;
  const double lx = cx - (-1.0 + col * cell_w);
  const double ly = cy - (-1.0 + row * cell_w);
  const double sub_w = cell_w / cfg.subgrid_dim;
  const int scol = std::clamp(static_cast<int>(std::floor(lx / sub_w)), 0,
                              cfg.subgrid_dim - 1);
  const int srow = std::clamp(static_cast<int>(std::floor(ly / sub_w)), 0,
                              cfg.subgrid_dim - 1);
  return {row * cfg.grid_dim + col, srow * cfg.subgrid_dim + scol};
}

Tensor one_hot(const GridConfig& cfg, int subcell_index) {
  if (subcell_index < 0 || subcell_index >= cfg.subcells())
    throw std::invalid_argument("one_hot: subcell index out of range");
  Tensor v({static_cast<std::size_t>(cfg.subcells())});
  v.v[subcell_index] = 1.0;
  return v;
}

double nonlinearity_phi(const std::vector<data::Vec2>& points,
                        bool symmetric) {
  const std::size_t n = points.size();
  if (n < 3)
    throw std::invalid_argument("nonlinearity_phi: need at least 3 points");
  const std::size_t mid = n / 2;
  const double py = std::abs((points[n - 1].y - points[0].y) / 2.0 +
                             points[0].y - points[mid].y);
  if (!symmetric) return py;
  const double px = std::abs((points[n - 1].x - points[0].x) / 2.0 +
                             points[0].x - points[mid].x);
  return std::max(px, py);
}

double nonlinearity_phi(const data::Trajectory& tr, bool symmetric) {
  std::vector<data::Vec2> pts;
  pts.reserve(tr.points.size());
  for (const auto& p : tr.points) pts.push_back({p.x, p.y});
  return nonlinearity_phi(pts, symmetric);
}

NonlinearSet mark_nonlinear_cells(const std::vector<data::Trajectory>& trs,
                                  double threshold, const GridConfig& cfg,
                                  bool symmetric) {
  if (threshold <= 0.0)
    throw std::invalid_argument("mark_nonlinear_cells: threshold must be > 0");
  NonlinearSet out;
  out.cell_flags.assign(cfg.cells(), false);
  for (const auto& tr : trs) {
    if (tr.points.size() < 3) continue;
    if (nonlinearity_phi(tr, symmetric) <= threshold) continue;
    out.trajectory_ids.push_back(tr.target_id);
    for (const auto& p : tr.points)
      out.cell_flags[locate(cfg, p.x, p.y).cell] = true;
  }
  return out;
}

GridBank::GridBank(const GridConfig& cfg, int hidden)
    : cfg_(cfg), hidden_(hidden) {
  const std::size_t h = static_cast<std::size_t>(hidden);
  h_.assign(cfg.cells(), Tensor::zeros({h}));
  c_.assign(cfg.cells(), Tensor::zeros({h}));
  k_.assign(cfg.cells(), Tensor::zeros({h}));
  flags_.assign(cfg.cells(), false);
}

void GridBank::set_flags(const std::vector<bool>& flags, Variant variant) {
  if (static_cast<int>(flags.size()) != cfg_.cells())
    throw std::invalid_argument("set_flags: flag count mismatch");
  flags_ = flags;
  for (int j = 0; j < cfg_.cells(); ++j) {
    const double kv = (variant == Variant::All || flags_[j]) ? 1.0 : 0.0;
    std::fill(k_[j].v.begin(), k_[j].v.end(), kv);
  }
}

void GridBank::reset_states() {
  for (auto& t : h_) std::fill(t.v.begin(), t.v.end(), 0.0);
  for (auto& t : c_) std::fill(t.v.begin(), t.v.end(), 0.0);
}

void GridBank::set_state(int cell, Tensor h, Tensor c) {
  h_.at(cell) = std::move(h);
  c_.at(cell) = std::move(c);
}

}  // namespace slstm::grid
