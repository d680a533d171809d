#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace slstm::data {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct TrajectoryPoint {
  long frame = 0;
  double x = 0.0;
  double y = 0.0;
};

struct Trajectory {
  int target_id = 0;
  std::vector<TrajectoryPoint> points;  // frame-ascending
};

struct SceneDataset {
  std::string name;
  int width = 480;
  int height = 480;
  int frame_step = 10;
  bool normalized = false;
  std::vector<Trajectory> trajectories;
};

struct BatchTarget {
  int target_id = 0;
  std::vector<Vec2> positions;  // length T
  std::vector<Vec2> offsets;    // offsets[0] = (0,0)
};

struct Batch {
  long start_frame = 0;  // in sample indices (frame / frame_step)
  int t_obs = 0;
  int t_pred = 0;
  std::vector<BatchTarget> targets;
  int total() const { return t_obs + t_pred; }
};

// Lines are `frame target_id x y` in source pixel units; `#` starts a
// comment; blank lines ignored. Duplicate (frame, target) pairs and
// malformed lines are rejected with the line number.
SceneDataset parse_annotations(std::istream& in);

// Optional sidecar with width=/height=/frame_step= overrides.
void apply_sidecar(SceneDataset& ds, std::istream& in);

SceneDataset load_dataset(const std::string& path);

// load + interpolate every trajectory at frame_step + normalize
SceneDataset prepare_dataset(const std::string& path);
void write_annotations(const SceneDataset& ds, const std::string& path);

// Linear interpolation of sparse control points at every multiple of
// frame_step between the first and last control frame.
Trajectory interpolate_control_points(const Trajectory& sparse,
                                      long frame_step);

// Maps pixel coordinates to [-1,1]^2; out-of-bounds points clamp.
// Returns the number of clamped coordinates.
int normalize(SceneDataset& ds);

Vec2 denormalize(const SceneDataset& ds, Vec2 p);

std::vector<Vec2> compute_offsets(const std::vector<Vec2>& positions);

// Windows start at sample indices 0, stride, 2*stride, ...; a target
// joins a window only if present at all T consecutive samples. Windows
// with no qualifying target are dropped.
std::vector<Batch> extract_batches(const SceneDataset& ds, int t_obs,
                                   int t_pred, int stride);

// Sub-range of the dataset in sample indices [first, last), re-based to
// start at sample 0. Used for train/test frame splits.
SceneDataset slice_samples(const SceneDataset& ds, long first, long last);
long max_sample_index(const SceneDataset& ds);

enum class SceneKind { Straight, AlleyTurn, StopRegion };
SceneKind parse_scene_kind(const std::string& s);

// Deterministic synthetic scenes in pixel units (480x480, frame_step 10).
// straight: constant-velocity lines; alley_turn: L-shaped paths all
// turning inside one designated grid cell, half left and half right;
// stop_region: paths that decelerate to near rest inside one cell.
SceneDataset generate_synthetic(SceneKind kind, int n_targets,
                                double noise_std, std::uint64_t seed);

}  // namespace slstm::data
