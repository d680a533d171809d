#include "slstm/eval.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace slstm::eval {

namespace {

double dist(const data::Vec2& a, const data::Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

void check_lengths(const std::vector<std::vector<data::Vec2>>& predicted,
                   const std::vector<std::vector<data::Vec2>>& truth,
                   const char* what) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw std::invalid_argument(std::string(what) + ": target count mismatch");
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i].size() != truth[i].size() || predicted[i].empty())
      throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

double ade(const std::vector<std::vector<data::Vec2>>& predicted,
           const std::vector<std::vector<data::Vec2>>& truth) {
  check_lengths(predicted, truth, "ade");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t t = 0; t < predicted[i].size(); ++t)
      acc += dist(predicted[i][t], truth[i][t]);
    count += predicted[i].size();
  }
  return acc / static_cast<double>(count);
}

double fde(const std::vector<std::vector<data::Vec2>>& predicted,
           const std::vector<std::vector<data::Vec2>>& truth) {
  check_lengths(predicted, truth, "fde");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    acc += dist(predicted[i].back(), truth[i].back());
  return acc / static_cast<double>(predicted.size());
}

std::optional<double> nde(
    const std::vector<std::vector<data::Vec2>>& predicted,
    const std::vector<std::vector<data::Vec2>>& truth,
    const std::vector<std::vector<data::Vec2>>& full_truth, double threshold) {
  check_lengths(predicted, truth, "nde");
  if (full_truth.size() != predicted.size())
    throw std::invalid_argument("nde: full-truth count mismatch");
  std::vector<std::vector<data::Vec2>> p, t;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (grid::nonlinearity_phi(full_truth[i]) > threshold) {
      p.push_back(predicted[i]);
      t.push_back(truth[i]);
    }
  }
  if (p.empty()) return std::nullopt;
  return ade(p, t);
}

EvalReport evaluate_windows(const ParamMap* params, grid::GridBank* bank,
                            const model::ModelConfig* cfg,
                            const std::vector<data::Batch>& windows,
                            const EvalOptions& opt,
                            std::vector<PredictionRow>* dump) {
  if (opt.predictor == Predictor::Model && (!params || !bank || !cfg))
    throw std::invalid_argument("evaluate_windows: model predictor needs weights");
  Rng sample_rng(opt.sample_seed);

  double ade_acc = 0.0, fde_acc = 0.0, nde_acc = 0.0;
  long points = 0, nde_points = 0;
  EvalReport rep;

  for (const auto& w : windows) {
    std::vector<std::vector<data::Vec2>> predicted;
    if (opt.predictor == Predictor::Model) {
      if (opt.reset_per_window) bank->reset_states();
      ad::Graph g;
      model::ParamLeaves pl(g, *params);
      auto res = model::forward_window(g, pl, w, *bank, *cfg, opt.mode,
                                       &sample_rng, nullptr);
      predicted = std::move(res.predictions);
    } else {
      for (const auto& tgt : w.targets) {
        if (opt.predictor == Predictor::Linear) {
          std::vector<data::Vec2> obs(tgt.positions.begin(),
                                      tgt.positions.begin() + w.t_obs);
          predicted.push_back(model::linear_baseline(obs, w.t_pred));
        } else {  // Oracle
          predicted.emplace_back(tgt.positions.begin() + w.t_obs,
                                 tgt.positions.end());
        }
      }
    }

    for (std::size_t i = 0; i < w.targets.size(); ++i) {
      const auto& tgt = w.targets[i];
      const bool nonlinear =
          grid::nonlinearity_phi(tgt.positions) > opt.nonlinear_threshold;
      double win_acc = 0.0;
      for (int k = 0; k < w.t_pred; ++k) {
        const auto& truth = tgt.positions[w.t_obs + k];
        win_acc += dist(predicted[i][k], truth);
        if (dump)
          dump->push_back({w.start_frame, w.start_frame + w.t_obs + k,
                           tgt.target_id, predicted[i][k].x, predicted[i][k].y,
                           truth.x, truth.y});
      }
      ade_acc += win_acc;
      points += w.t_pred;
      fde_acc += dist(predicted[i].back(), tgt.positions.back());
      rep.n_targets += 1;
      if (nonlinear) {
        nde_acc += win_acc;
        nde_points += w.t_pred;
        rep.n_nonlinear += 1;
      }
    }
    rep.n_windows += 1;
  }

  if (points > 0) {
    rep.ade = ade_acc / points;
    rep.fde = fde_acc / rep.n_targets;
  }
  if (nde_points > 0) rep.nde = nde_acc / nde_points;
  return rep;
}

EvalReport sliding_eval(const ParamMap* params, grid::GridBank* bank,
                        const model::ModelConfig* cfg,
                        const data::SceneDataset& ds, int t_obs, int t_pred,
                        const EvalOptions& opt,
                        std::vector<PredictionRow>* dump) {
  const long n_samples = data::max_sample_index(ds) + 1;
  if (n_samples < t_obs + t_pred)
    throw std::runtime_error("sliding_eval: test split shorter than T");
  auto windows = data::extract_batches(ds, t_obs, t_pred, opt.stride);
  EvalReport rep = evaluate_windows(params, bank, cfg, windows, opt, dump);
  rep.sequence = ds.name;
  return rep;
}

void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports) {
  os << "sequence,metric,value,n_targets,n_windows\n";
  os << std::setprecision(17);
  for (const auto& r : reports) {
    os << r.sequence << ",ade," << r.ade << ',' << r.n_targets << ','
       << r.n_windows << '\n';
    os << r.sequence << ",nde,";
    if (r.nde) os << *r.nde;
    os << ',' << r.n_nonlinear << ',' << r.n_windows << '\n';
    os << r.sequence << ",fde," << r.fde << ',' << r.n_targets << ','
       << r.n_windows << '\n';
  }
}

std::vector<EvalReport> read_report_csv(std::istream& is) {
  std::vector<EvalReport> out;
  std::string line;
  if (!std::getline(is, line) ||
      line != "sequence,metric,value,n_targets,n_windows")
    throw std::runtime_error("report csv: bad header");
  std::map<std::string, std::size_t> index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string seq, metric, value, targets, windows;
    if (!std::getline(ls, seq, ',') || !std::getline(ls, metric, ',') ||
        !std::getline(ls, value, ',') || !std::getline(ls, targets, ',') ||
        !std::getline(ls, windows, ','))
      throw std::runtime_error("report csv: bad row: " + line);
    auto it = index.find(seq);
    if (it == index.end()) {
      index.emplace(seq, out.size());
      out.emplace_back();
      out.back().sequence = seq;
      it = index.find(seq);
    }
    EvalReport& r = out[it->second];
    r.n_windows = std::stol(windows);
    if (metric == "ade") {
      r.ade = std::stod(value);
      r.n_targets = std::stol(targets);
    } else if (metric == "fde") {
      r.fde = std::stod(value);
    } else if (metric == "nde") {
      r.n_nonlinear = std::stol(targets);
      if (!value.empty()) r.nde = std::stod(value);
    } else {
      throw std::runtime_error("report csv: unknown metric " + metric);
    }
  }
  return out;
}

void write_report_table(std::ostream& os,
                        const std::vector<EvalReport>& reports) {
  os << std::left << std::setw(20) << "Sequence" << std::right << std::setw(10)
     << "ADE" << std::setw(10) << "NDE" << std::setw(10) << "FDE"
     << std::setw(10) << "windows" << std::setw(10) << "targets" << '\n';
  for (const auto& r : reports) {
    os << std::left << std::setw(20) << r.sequence << std::right << std::fixed
       << std::setprecision(4) << std::setw(10) << r.ade << std::setw(10);
    if (r.nde)
      os << *r.nde;
    else
      os << "-";
    os << std::setw(10) << r.fde << std::setw(10) << r.n_windows
       << std::setw(10) << r.n_targets << '\n';
    os.unsetf(std::ios::fixed);
  }
}

void write_prediction_dump(std::ostream& os,
                           const std::vector<PredictionRow>& rows) {
  os << "window,frame,target,pred_x,pred_y,true_x,true_y\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.window << ',' << r.frame << ',' << r.target << ',' << r.pred_x
       << ',' << r.pred_y << ',' << r.true_x << ',' << r.true_y << '\n';
}

std::vector<PredictionRow> read_prediction_dump(std::istream& is) {
  std::vector<PredictionRow> out;
  std::string line;
  if (!std::getline(is, line) ||
      line != "window,frame,target,pred_x,pred_y,true_x,true_y")
    throw std::runtime_error("prediction dump: bad header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    PredictionRow r;
    char c;
    if (!(ls >> r.window >> c >> r.frame >> c >> r.target >> c >> r.pred_x >>
          c >> r.pred_y >> c >> r.true_x >> c >> r.true_y))
      throw std::runtime_error("prediction dump: bad row: " + line);
    out.push_back(r);
  }
  return out;
}

}  // namespace slstm::eval
