#pragma once

#include <iosfwd>
#include <vector>

#include "slstm/eval.hpp"
#include "slstm/scenegrid.hpp"

namespace slstm::plot {

// `cell_index,row,col,nonlinear_flag` rows for plot tooling.
void write_grid_overlay_csv(std::ostream& os, const grid::GridConfig& gc,
                            const std::vector<bool>& flags);

// Scene view: grid lines, shaded non-linear cells, true trajectories
// (black) and predicted trajectories (red), one polyline per
// (window, target) pair from the prediction dump.
void write_scene_svg(std::ostream& os,
                     const std::vector<eval::PredictionRow>& rows,
                     const grid::GridConfig& gc,
                     const std::vector<bool>& flags);

}  // namespace slstm::plot
