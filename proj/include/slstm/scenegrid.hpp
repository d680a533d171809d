#pragma once

#include <vector>

#include "slstm/data.hpp"
#include "slstm/tensor.hpp"

namespace slstm::grid {

struct GridConfig {
  int grid_dim = 8;     // cells per side over [-1,1]^2
  int subgrid_dim = 4;  // sub-cells per side within a cell
  int cells() const { return grid_dim * grid_dim; }
  int subcells() const { return subgrid_dim * subgrid_dim; }
};

struct CellCoord {
  int cell = 0;     // row * grid_dim + col
  int subcell = 0;  // sub_row * subgrid_dim + sub_col
};

// Total on the clamped domain: coordinates outside [-1,1] fall into the
// boundary cells.
CellCoord locate(const GridConfig& cfg, double x, double y);

Tensor one_hot(const GridConfig& cfg, int subcell_index);

// Eq-14-style non-linearity score: |(y_T - y_0)/2 + y_0 - y_m| with y_m
// taken at index floor(n/2). Measures y only; `symmetric` takes the max
// over both axes instead.
double nonlinearity_phi(const std::vector<data::Vec2>& points,
                        bool symmetric = false);
double nonlinearity_phi(const data::Trajectory& tr, bool symmetric = false);

enum class Variant { All, Nonlinear };  // Scene-LSTM-a / Scene-LSTM-n

struct NonlinearSet {
  std::vector<int> trajectory_ids;   // ids with phi > threshold
  std::vector<bool> cell_flags;      // size grid_dim^2
};

// A trajectory is non-linear iff phi > threshold; every cell it visits is
// flagged.
NonlinearSet mark_nonlinear_cells(const std::vector<data::Trajectory>& trs,
                                  double threshold, const GridConfig& cfg,
                                  bool symmetric = false);

// Per-cell recurrent state plus the hard-control vector K. K is all-ones
// for every cell under variant a, and only for flagged cells under
// variant n.
class GridBank {
 public:
  GridBank() = default;
  GridBank(const GridConfig& cfg, int hidden);

  void set_flags(const std::vector<bool>& flags, Variant variant);
  const std::vector<bool>& flags() const { return flags_; }

  // zeroes every h and c; K and flags untouched
  void reset_states();

  const Tensor& h(int cell) const { return h_.at(cell); }
  const Tensor& c(int cell) const { return c_.at(cell); }
  const Tensor& k(int cell) const { return k_.at(cell); }
  void set_state(int cell, Tensor h, Tensor c);

  const GridConfig& config() const { return cfg_; }
  int hidden() const { return hidden_; }

 private:
  GridConfig cfg_;
  int hidden_ = 0;
  std::vector<Tensor> h_, c_, k_;
  std::vector<bool> flags_;
};

}  // namespace slstm::grid
