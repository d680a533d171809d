#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slstm/data.hpp"
#include "slstm/model.hpp"
#include "slstm/scenegrid.hpp"

namespace slstm::eval {

// Mean Euclidean displacement over all targets and predicted frames.
double ade(const std::vector<std::vector<data::Vec2>>& predicted,
           const std::vector<std::vector<data::Vec2>>& truth);

// Mean Euclidean displacement at the final predicted frame.
double fde(const std::vector<std::vector<data::Vec2>>& predicted,
           const std::vector<std::vector<data::Vec2>>& truth);

// ADE restricted to targets whose true full-window trajectory is
// non-linear; absent when no target qualifies.
std::optional<double> nde(
    const std::vector<std::vector<data::Vec2>>& predicted,
    const std::vector<std::vector<data::Vec2>>& truth,
    const std::vector<std::vector<data::Vec2>>& full_truth, double threshold);

enum class Predictor { Model, Linear, Oracle };

struct EvalOptions {
  Predictor predictor = Predictor::Model;
  model::Mode mode = model::Mode::PredictMean;
  bool reset_per_window = false;
  double nonlinear_threshold = 0.2;
  std::uint64_t sample_seed = 0;
  int stride = 1;
};

struct EvalReport {
  std::string sequence;
  double ade = 0.0;
  double fde = 0.0;
  std::optional<double> nde;
  long n_windows = 0;
  long n_targets = 0;     // target-window instances
  long n_nonlinear = 0;   // non-linear target-window instances
};

struct PredictionRow {
  long window;
  long frame;
  int target;
  double pred_x, pred_y, true_x, true_y;
};

// Sliding-window evaluation over pre-extracted windows (stride embedded
// in the extraction). Grid states persist across windows unless
// reset_per_window is set. params/bank/cfg may be null for the Linear and
// Oracle predictors.
EvalReport evaluate_windows(const ParamMap* params, grid::GridBank* bank,
                            const model::ModelConfig* cfg,
                            const std::vector<data::Batch>& windows,
                            const EvalOptions& opt,
                            std::vector<PredictionRow>* dump = nullptr);

// Convenience wrapper: extracts stride-`opt.stride` windows from a
// normalized dataset and evaluates them.
EvalReport sliding_eval(const ParamMap* params, grid::GridBank* bank,
                        const model::ModelConfig* cfg,
                        const data::SceneDataset& ds, int t_obs, int t_pred,
                        const EvalOptions& opt,
                        std::vector<PredictionRow>* dump = nullptr);

void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports);
std::vector<EvalReport> read_report_csv(std::istream& is);
void write_report_table(std::ostream& os, const std::vector<EvalReport>& reports);
void write_prediction_dump(std::ostream& os,
                           const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_prediction_dump(std::istream& is);

}  // namespace slstm::eval
