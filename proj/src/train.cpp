#include "slstm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace slstm::train {

model::ModelConfig TrainConfig::model_config() const {
  model::ModelConfig m;
  m.hidden = hidden;
  m.embed = embed;
  m.grid.grid_dim = grid_dim;
  m.grid.subgrid_dim = subgrid_dim;
  m.variant = variant;
  m.use_scene = use_scene;
  m.dropout = dropout;
  m.peephole_ct = peephole_ct;
  return m;
}

namespace {

constexpr char kMagic[6] = {'S', 'L', 'S', 'T', 'M', '1'};

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error(std::string("checkpoint: truncated ") + what);
  return v;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, sizeof kMagic);
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& [name, t] : ck.params) {
    write_raw<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(double)));
  }
  const std::size_t nbits = ck.nonlinear_flags.size();
  std::vector<std::uint8_t> bitmap((nbits + 7) / 8, 0);
  for (std::size_t i = 0; i < nbits; ++i)
    if (ck.nonlinear_flags[i]) bitmap[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(bitmap.data()),
           static_cast<std::streamsize>(bitmap.size()));
  std::string cfg_text;
  for (const auto& [k, v] : ck.config) cfg_text += k + "=" + v + "\n";
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[6];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, "SLSTM", 5) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  if (magic[5] != '1')
    throw std::runtime_error(std::string("checkpoint: unsupported format version ") +
                             magic[5]);
  Checkpoint ck;
  const auto count = read_raw<std::uint32_t>(is, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = read_raw<std::uint16_t>(is, "tensor name length");
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    if (!is) throw std::runtime_error("checkpoint: truncated tensor name");
    const auto rank = read_raw<std::uint8_t>(is, "tensor rank");
    std::vector<std::size_t> shape;
    for (std::uint8_t r = 0; r < rank; ++r)
      shape.push_back(read_raw<std::uint32_t>(is, "tensor dim"));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!is)
      throw std::runtime_error("checkpoint: truncated values for tensor " + name);
    if (!ck.params.emplace(name, std::move(t)).second)
      throw std::runtime_error("checkpoint: duplicate tensor " + name);
  }

  // cell count comes from the scene tensor names; the bitmap precedes the
  // config text in the file
  int max_cell = -1;
  for (const auto& [name, t] : ck.params) {
    if (name.rfind("scene.", 0) != 0) continue;
    const auto dot = name.find('.', 6);
    max_cell = std::max(max_cell, std::stoi(name.substr(6, dot - 6)));
  }
  if (max_cell < 0) throw std::runtime_error("checkpoint: no scene tensors");
  const std::size_t cells = static_cast<std::size_t>(max_cell) + 1;
  std::vector<std::uint8_t> bitmap((cells + 7) / 8);
  is.read(reinterpret_cast<char*>(bitmap.data()),
          static_cast<std::streamsize>(bitmap.size()));
  if (!is) throw std::runtime_error("checkpoint: truncated flag bitmap");
  ck.nonlinear_flags.resize(cells);
  for (std::size_t i = 0; i < cells; ++i)
    ck.nonlinear_flags[i] = (bitmap[i / 8] >> (i % 8)) & 1u;

  const auto clen = read_raw<std::uint32_t>(is, "config length");
  std::string cfg_text(clen, '\0');
  is.read(cfg_text.data(), clen);
  if (!is) throw std::runtime_error("checkpoint: truncated config");
  std::istringstream cs(cfg_text);
  std::string line;
  while (std::getline(cs, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("checkpoint: bad config line: " + line);
    ck.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ck;
}

Checkpoint make_checkpoint(const ParamMap& params,
                           const std::vector<bool>& flags,
                           const TrainConfig& cfg) {
  Checkpoint ck;
  ck.params = params;
  ck.nonlinear_flags = flags;
  auto& c = ck.config;
  c["lr"] = format_double(cfg.lr);
  c["dropout"] = format_double(cfg.dropout);
  c["clip_norm"] = format_double(cfg.clip_norm);
  c["hidden"] = std::to_string(cfg.hidden);
  c["embed"] = std::to_string(cfg.embed);
  c["grid_dim"] = std::to_string(cfg.grid_dim);
  c["subgrid_dim"] = std::to_string(cfg.subgrid_dim);
  c["epochs_stage1"] = std::to_string(cfg.epochs_stage1);
  c["epochs_stage2"] = std::to_string(cfg.epochs_stage2);
  c["t_obs"] = std::to_string(cfg.t_obs);
  c["t_pred"] = std::to_string(cfg.t_pred);
  c["nonlinear_threshold"] = format_double(cfg.nonlinear_threshold);
  c["variant"] = cfg.variant == grid::Variant::All ? "a" : "n";
  c["use_scene"] = cfg.use_scene ? "1" : "0";
  c["peephole_ct"] = cfg.peephole_ct ? "1" : "0";
  c["freeze_pedestrian"] = cfg.freeze_pedestrian ? "1" : "0";
  c["train_stride"] = std::to_string(cfg.train_stride);
  c["seed"] = std::to_string(cfg.seed);
  return ck;
}

TrainConfig config_from_checkpoint(const Checkpoint& ck) {
  TrainConfig cfg;
  auto get = [&](const char* k) -> const std::string& {
    auto it = ck.config.find(k);
    if (it == ck.config.end())
      throw std::runtime_error(std::string("checkpoint: missing config key ") + k);
    return it->second;
  };
  cfg.lr = std::stod(get("lr"));
  cfg.dropout = std::stod(get("dropout"));
  cfg.clip_norm = std::stod(get("clip_norm"));
  cfg.hidden = std::stoi(get("hidden"));
  cfg.embed = std::stoi(get("embed"));
  cfg.grid_dim = std::stoi(get("grid_dim"));
  cfg.subgrid_dim = std::stoi(get("subgrid_dim"));
  cfg.epochs_stage1 = std::stoi(get("epochs_stage1"));
  cfg.epochs_stage2 = std::stoi(get("epochs_stage2"));
  cfg.t_obs = std::stoi(get("t_obs"));
  cfg.t_pred = std::stoi(get("t_pred"));
  cfg.nonlinear_threshold = std::stod(get("nonlinear_threshold"));
  cfg.variant = get("variant") == "a" ? grid::Variant::All : grid::Variant::Nonlinear;
  cfg.use_scene = get("use_scene") == "1";
  cfg.peephole_ct = get("peephole_ct") == "1";
  cfg.freeze_pedestrian = get("freeze_pedestrian") == "1";
  cfg.train_stride = std::stoi(get("train_stride"));
  cfg.seed = std::stoull(get("seed"));
  return cfg;
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
  os << "epoch,split,loss,ade\n";
  os << std::setprecision(17);
  for (const auto& r : rows)
    os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.ade << '\n';
}

double train_epoch(ParamMap& params, AdamState& adam,
                   const std::vector<VideoBatches>& videos,
                   grid::GridBank& bank, const TrainConfig& cfg,
                   Rng& dropout_rng, double* max_preclip_norm) {
  const model::ModelConfig mcfg = cfg.model_config();
  double total = 0.0;
  bool any = false;
  for (const auto& video : videos) {
    bank.reset_states();
    for (const auto& w : video.windows) {
      any = true;
      ad::Graph g;
      model::ParamLeaves pl(g, params);
      auto res = model::forward_window(g, pl, w, bank, mcfg, model::Mode::Train,
                                       nullptr, &dropout_rng);
      if (!std::isfinite(res.loss))
        throw std::runtime_error("train_epoch: non-finite loss in video `" +
                                 video.name + "` window at sample " +
                                 std::to_string(w.start_frame));
      g.backward(res.loss_node);
      GradMap grads = pl.collect_grads();
      if (cfg.freeze_pedestrian) {
        for (auto it = grads.begin(); it != grads.end();)
          it = it->first.rfind("ped.", 0) == 0 ? grads.erase(it) : std::next(it);
      }
      const double norm = clip_global_norm(grads, cfg.clip_norm);
      if (max_preclip_norm && norm > *max_preclip_norm) *max_preclip_norm = norm;
      adam_step(params, grads, adam);
      total += res.loss;
    }
  }
  if (!any) throw std::invalid_argument("train_epoch: no training windows");
  return total;
}

namespace {

struct SplitBatches {
  // per-video sample range the training windows are drawn from; the
  // validation windows stay on the canonical phase-0 extraction
  std::vector<data::SceneDataset> train_regions;
  std::vector<VideoBatches> val;
};

SplitBatches split_80_20(const std::vector<data::SceneDataset>& datasets,
                         std::size_t held_out, const TrainConfig& cfg) {
  SplitBatches out;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (i == held_out) continue;
    auto windows = data::extract_batches(datasets[i], cfg.t_obs, cfg.t_pred,
                                         cfg.effective_stride());
    const std::size_t n_train = windows.size() * 8 / 10;
    const long region_end = n_train < windows.size()
                                ? windows[n_train].start_frame
                                : data::max_sample_index(datasets[i]) + 1;
    VideoBatches va{datasets[i].name, {}};
    for (std::size_t k = n_train; k < windows.size(); ++k)
      va.windows.push_back(std::move(windows[k]));
    if (region_end > 0)
      out.train_regions.push_back(
          data::slice_samples(datasets[i], 0, region_end));
    if (!va.windows.empty()) out.val.push_back(std::move(va));
  }
  return out;
}

// Training windows for one epoch. The extraction phase advances with the
// epoch so successive passes see each track's turning point at different
// positions inside the window; a fixed non-overlapping grid would show
// every turn at a single phase and generalize poorly to the stride-1
// testing windows. Falls back to phase 0 when the shifted extraction is
// empty (tiny videos).
std::vector<VideoBatches> epoch_windows(
    const std::vector<data::SceneDataset>& regions, int epoch,
    const TrainConfig& cfg) {
  const int stride = cfg.effective_stride();
  const long phase = static_cast<long>((epoch - 1) % stride);
  std::vector<VideoBatches> out;
  for (const auto& region : regions) {
    const long end = data::max_sample_index(region) + 1;
    std::vector<data::Batch> windows;
    if (phase > 0 && phase < end)
      windows = data::extract_batches(data::slice_samples(region, phase, end),
                                      cfg.t_obs, cfg.t_pred, stride);
    if (windows.empty())
      windows = data::extract_batches(region, cfg.t_obs, cfg.t_pred, stride);
    if (!windows.empty()) out.push_back({region.name, std::move(windows)});
  }
  return out;
}

double validation_ade(const ParamMap& params,
                      const std::vector<VideoBatches>& vids,
                      const std::vector<bool>& flags, const TrainConfig& cfg) {
  const model::ModelConfig mcfg = cfg.model_config();
  eval::EvalOptions opt;
  opt.nonlinear_threshold = cfg.nonlinear_threshold;
  double acc = 0.0;
  long points = 0;
  for (const auto& v : vids) {
    grid::GridBank bank(mcfg.grid, cfg.hidden);
    bank.set_flags(flags, cfg.variant);
    const auto rep =
        eval::evaluate_windows(&params, &bank, &mcfg, v.windows, opt);
    acc += rep.ade * static_cast<double>(rep.n_targets * cfg.t_pred);
    points += rep.n_targets * cfg.t_pred;
  }
  return points > 0 ? acc / static_cast<double>(points) : 0.0;
}

std::vector<bool> mark_flags(const std::vector<data::SceneDataset>& datasets,
                             std::size_t skip, const TrainConfig& cfg) {
  grid::GridConfig gc{cfg.grid_dim, cfg.subgrid_dim};
  std::vector<bool> flags(gc.cells(), false);
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    if (i == skip) continue;
    const auto set = grid::mark_nonlinear_cells(datasets[i].trajectories,
                                                cfg.nonlinear_threshold, gc);
    for (int j = 0; j < gc.cells(); ++j)
      if (set.cell_flags[j]) flags[j] = true;
  }
  return flags;
}

}  // namespace

Checkpoint train_stage1(const std::vector<data::SceneDataset>& datasets,
                        std::size_t held_out, const TrainConfig& cfg,
                        std::vector<TrainLogRow>* log) {
  if (datasets.empty())
    throw std::invalid_argument("train_stage1: need at least 1 dataset");
  if (held_out < datasets.size() && datasets.size() < 2)
    throw std::invalid_argument(
        "train_stage1: leave-one-out needs at least 2 datasets");

  const auto flags = mark_flags(datasets, held_out, cfg);
  const auto split = split_80_20(datasets, held_out, cfg);

  const model::ModelConfig mcfg = cfg.model_config();
  ParamMap params = model::init_params(mcfg, cfg.seed);
  AdamState adam = AdamState::init(params, cfg.lr);
  grid::GridBank bank(mcfg.grid, cfg.hidden);
  bank.set_flags(flags, cfg.variant);
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  ParamMap best_params = params;
  double best_ade = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs_stage1; ++epoch) {
    const auto train_vids = epoch_windows(split.train_regions, epoch, cfg);
    const double loss =
        train_epoch(params, adam, train_vids, bank, cfg, dropout_rng);
    const double vade = validation_ade(params, split.val, flags, cfg);
    if (log) {
      log->push_back({epoch, "train", loss, -1.0});
      log->push_back({epoch, "val", -1.0, vade});
    }
    if (vade < best_ade) {
      best_ade = vade;
      best_params = params;
    }
  }
  return make_checkpoint(best_params, flags, cfg);
}

Checkpoint train_stage2(const Checkpoint& start,
                        const data::SceneDataset& unseen, double fraction,
                        const TrainConfig& cfg,
                        std::vector<TrainLogRow>* log) {
  if (fraction < 0.0 || fraction > 0.5)
    throw std::invalid_argument("train_stage2: fraction must be in [0, 0.5]");
  if (fraction == 0.0) return start;

  const long n_samples = data::max_sample_index(unseen) + 1;
  const long cut = static_cast<long>(fraction * static_cast<double>(n_samples));
  const data::SceneDataset split = data::slice_samples(unseen, 0, cut);

  grid::GridConfig gc{cfg.grid_dim, cfg.subgrid_dim};
  const auto set = grid::mark_nonlinear_cells(split.trajectories,
                                              cfg.nonlinear_threshold, gc);

  if (data::extract_batches(split, cfg.t_obs, cfg.t_pred,
                            cfg.effective_stride())
          .empty())
    throw std::runtime_error("train_stage2: fraction yields no windows");
  std::vector<data::SceneDataset> regions{split};
  regions.back().name = unseen.name;

  const model::ModelConfig mcfg = cfg.model_config();
  ParamMap params = start.params;
  AdamState adam = AdamState::init(params, cfg.lr);
  grid::GridBank bank(mcfg.grid, cfg.hidden);
  bank.set_flags(set.cell_flags, cfg.variant);
  Rng dropout_rng(cfg.seed ^ 0xda3e39cb94b95bdbull);

  ParamMap best_params = params;
  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 1; epoch <= cfg.epochs_stage2; ++epoch) {
    const auto vids = epoch_windows(regions, epoch, cfg);
    const double loss =
        train_epoch(params, adam, vids, bank, cfg, dropout_rng);
    if (log) log->push_back({epoch, "train", loss, -1.0});
    if (loss < best_loss) {
      best_loss = loss;
      best_params = params;
    }
  }
  Checkpoint out = make_checkpoint(best_params, set.cell_flags, cfg);
  return out;
}

}  // namespace slstm::train
