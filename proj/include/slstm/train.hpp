#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "slstm/data.hpp"
#include "slstm/eval.hpp"
#include "slstm/model.hpp"
#include "slstm/optim.hpp"
#include "slstm/scenegrid.hpp"

namespace slstm::train {

struct TrainConfig {
  double lr = 0.003;
  double dropout = 0.2;
  double clip_norm = 10.0;
  int hidden = 128;
  int embed = 64;
  int grid_dim = 8;
  int subgrid_dim = 4;
  int epochs_stage1 = 100;
  int epochs_stage2 = 10;
  int t_obs = 8;
  int t_pred = 12;
  double nonlinear_threshold = 0.2;
  grid::Variant variant = grid::Variant::Nonlinear;
  bool use_scene = true;
  bool peephole_ct = false;
  bool freeze_pedestrian = false;
  int train_stride = 0;  // 0 means T (non-overlapping)
  std::uint64_t seed = 1;

  model::ModelConfig model_config() const;
  int window_len() const { return t_obs + t_pred; }
  int effective_stride() const { return train_stride > 0 ? train_stride : window_len(); }
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  ParamMap params;
  std::vector<bool> nonlinear_flags;  // grid_dim^2 entries
  std::map<std::string, std::string> config;
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint make_checkpoint(const ParamMap& params,
                           const std::vector<bool>& flags,
                           const TrainConfig& cfg);
TrainConfig config_from_checkpoint(const Checkpoint& ck);

// One window of batched video windows, grouped per video so grid states
// can reset at video boundaries.
struct VideoBatches {
  std::string name;
  std::vector<data::Batch> windows;
};

struct TrainLogRow {
  int epoch;
  std::string split;  // "train" or "val"
  double loss;        // NaN-free; -1 when not applicable
  double ade;         // -1 when not applicable
};

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);

// One pass over every training window. Grid h/c reset at epoch start and
// between videos; per-window update: forward -> backward -> clip -> Adam.
// Returns the summed NLL. Aborts on a non-finite loss naming the batch.
double train_epoch(ParamMap& params, AdamState& adam,
                   const std::vector<VideoBatches>& videos,
                   grid::GridBank& bank, const TrainConfig& cfg,
                   Rng& dropout_rng, double* max_preclip_norm = nullptr);

// Leave-one-out pre-training: trains on the 80% window split of every
// video except datasets[held_out], validates ADE on the 20% split after
// each epoch, returns the checkpoint with the lowest validation ADE.
// held_out >= datasets.size() trains on every given video.
Checkpoint train_stage1(const std::vector<data::SceneDataset>& datasets,
                        std::size_t held_out, const TrainConfig& cfg,
                        std::vector<TrainLogRow>* log = nullptr);

// Fine-tunes on the first `fraction` of the unseen video's samples for
// epochs_stage2 epochs; non-linear cells are re-marked from that split;
// keeps the epoch with the lowest training loss.
Checkpoint train_stage2(const Checkpoint& start,
                        const data::SceneDataset& unseen, double fraction,
                        const TrainConfig& cfg,
                        std::vector<TrainLogRow>* log = nullptr);

}  // namespace slstm::train
