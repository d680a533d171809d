#include "slstm/plot.hpp"

#include <iomanip>
#include <map>
#include <ostream>

namespace slstm::plot {

namespace {

constexpr double kCanvas = 480.0;

double px(double norm) { return (norm + 1.0) * 0.5 * kCanvas; }

}  // namespace

void write_grid_overlay_csv(std::ostream& os, const grid::GridConfig& gc,
                            const std::vector<bool>& flags) {
  os << "cell_index,row,col,nonlinear_flag\n";
  for (int j = 0; j < gc.cells(); ++j)
    os << j << ',' << j / gc.grid_dim << ',' << j % gc.grid_dim << ','
       << (j < static_cast<int>(flags.size()) && flags[j] ? 1 : 0) << '\n';
}

void write_scene_svg(std::ostream& os,
                     const std::vector<eval::PredictionRow>& rows,
                     const grid::GridConfig& gc,
                     const std::vector<bool>& flags) {
  os << std::setprecision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kCanvas
     << "\" height=\"" << kCanvas << "\" viewBox=\"0 0 " << kCanvas << ' '
     << kCanvas << "\">\n";
  os << "<rect width=\"" << kCanvas << "\" height=\"" << kCanvas
     << "\" fill=\"white\"/>\n";

  const double cell = kCanvas / gc.grid_dim;
  for (int j = 0; j < gc.cells(); ++j) {
    if (j >= static_cast<int>(flags.size()) || !flags[j]) continue;
    const int row = j / gc.grid_dim;
    const int col = j % gc.grid_dim;
    os << "<rect class=\"nonlinear\" data-cell=\"" << j << "\" x=\""
       << col * cell << "\" y=\"" << row * cell << "\" width=\"" << cell
       << "\" height=\"" << cell << "\" fill=\"pink\" fill-opacity=\"0.5\"/>\n";
  }
  for (int i = 0; i <= gc.grid_dim; ++i) {
    const double p = i * cell;
    os << "<line x1=\"0\" y1=\"" << p << "\" x2=\"" << kCanvas << "\" y2=\""
       << p << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    os << "<line x1=\"" << p << "\" y1=\"0\" x2=\"" << p << "\" y2=\""
       << kCanvas << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  }

  std::map<std::pair<long, int>, std::vector<const eval::PredictionRow*>> tracks;
  for (const auto& r : rows) tracks[{r.window, r.target}].push_back(&r);
  for (const auto& [key, pts] : tracks) {
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"";
    for (const auto* p : pts) os << px(p->true_x) << ',' << px(p->true_y) << ' ';
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"red\" stroke-width=\"1.5\" points=\"";
    for (const auto* p : pts) os << px(p->pred_x) << ',' << px(p->pred_y) << ' ';
    os << "\"/>\n";
  }
  os << "</svg>\n";
}

}  // namespace slstm::plot
