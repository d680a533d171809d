#include "slstm/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "slstm/rng.hpp"

namespace slstm::data {

namespace {

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

}  // namespace

SceneDataset parse_annotations(std::istream& in) {
  SceneDataset ds;
  std::map<int, Trajectory> by_id;
  std::set<std::pair<long, int>> seen;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = strip_comment(line);
    if (blank(body)) continue;
    std::istringstream ls(body);
    long frame;
    int id;
    double x, y;
    std::string extra;
    if (!(ls >> frame >> id >> x >> y) || (ls >> extra) || frame < 0) {
      throw std::runtime_error("annotation line " + std::to_string(lineno) +
                               ": malformed, expected `frame id x y`");
    }
    if (!seen.insert({frame, id}).second) {
      throw std::runtime_error("annotation line " + std::to_string(lineno) +
                               ": duplicate (frame, target) pair");
    }
    Trajectory& tr = by_id[id];
    tr.target_id = id;
    tr.points.push_back({frame, x, y});
  }
  for (auto& [id, tr] : by_id) {
    std::sort(tr.points.begin(), tr.points.end(),
              [](const auto& a, const auto& b) { return a.frame < b.frame; });
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

void apply_sidecar(SceneDataset& ds, std::istream& in) {
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = strip_comment(line);
    if (blank(body)) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("sidecar line " + std::to_string(lineno) +
                               ": expected key=value");
    std::string key = body.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t") + 1);
    const int val = std::stoi(body.substr(eq + 1));
    if (key == "width")
      ds.width = val;
    else if (key == "height")
      ds.height = val;
    else if (key == "frame_step")
      ds.frame_step = val;
    else
      throw std::runtime_error("sidecar line " + std::to_string(lineno) +
                               ": unknown key `" + key + "`");
  }
}

SceneDataset load_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset file: " + path);
  SceneDataset ds = parse_annotations(f);
  ds.name = std::filesystem::path(path).stem().string();
  const std::string side = path + ".sidecar";
  if (std::filesystem::exists(side)) {
    std::ifstream sf(side);
    apply_sidecar(ds, sf);
  }
  return ds;
}

SceneDataset prepare_dataset(const std::string& path) {
  SceneDataset ds = load_dataset(path);
  for (auto& tr : ds.trajectories)
    if (tr.points.size() >= 2)
      tr = interpolate_control_points(tr, ds.frame_step);
  normalize(ds);
  return ds;
}

void write_annotations(const SceneDataset& ds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write dataset file: " + path);
  f.precision(17);
  for (const auto& tr : ds.trajectories)
    for (const auto& p : tr.points)
      f << p.frame << ' ' << tr.target_id << ' ' << p.x << ' ' << p.y << '\n';
  std::ofstream sf(path + ".sidecar");
  sf << "width=" << ds.width << "\nheight=" << ds.height
     << "\nframe_step=" << ds.frame_step << "\n";
}

Trajectory interpolate_control_points(const Trajectory& sparse,
                                      long frame_step) {
  if (sparse.points.size() < 2)
    throw std::invalid_argument(
        "interpolate_control_points: need at least two control points");
  if (frame_step < 1)
    throw std::invalid_argument(
        "interpolate_control_points: frame_step must be >= 1");
  Trajectory out;
  out.target_id = sparse.target_id;
  const auto& pts = sparse.points;
  std::set<long> frames;
  const long first = pts.front().frame;
  const long last = pts.back().frame;
  for (long f = ((first + frame_step - 1) / frame_step) * frame_step; f <= last;
       f += frame_step)
    frames.insert(f);
  for (const auto& p : pts) frames.insert(p.frame);

  std::size_t seg = 0;
  for (long f : frames) {
    while (seg + 2 < pts.size() && pts[seg + 1].frame <= f) ++seg;
    const auto& a = pts[seg];
    const auto& b = pts[seg + 1];
    if (f == a.frame) {
      out.points.push_back(a);
    } else if (f == b.frame) {
      out.points.push_back(b);
    } else {
      const double u =
          static_cast<double>(f - a.frame) / static_cast<double>(b.frame - a.frame);
      out.points.push_back({f, a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
    }
  }
  return out;
}

int normalize(SceneDataset& ds) {
  if (ds.normalized) return 0;
  int clamped = 0;
  const double w = ds.width;
  const double h = ds.height;
  for (auto& tr : ds.trajectories) {
    for (auto& p : tr.points) {
      double x = p.x, y = p.y;
      if (x < 0.0 || x > w) {
        x = std::clamp(x, 0.0, w);
        ++clamped;
      }
      if (y < 0.0 || y > h) {
        y = std::clamp(y, 0.0, h);
        ++clamped;
      }
      p.x = 2.0 * x / w - 1.0;
      p.y = 2.0 * y / h - 1.0;
    }
  }
  ds.normalized = true;
  return clamped;
}

Vec2 denormalize(const SceneDataset& ds, Vec2 p) {
  return {(p.x + 1.0) * 0.5 * ds.width, (p.y + 1.0) * 0.5 * ds.height};
}

std::vector<Vec2> compute_offsets(const std::vector<Vec2>& positions) {
  std::vector<Vec2> off(positions.size());
  for (std::size_t t = 1; t < positions.size(); ++t) {
    off[t].x = positions[t].x - positions[t - 1].x;
    off[t].y = positions[t].y - positions[t - 1].y;
  }
  return off;
}

long max_sample_index(const SceneDataset& ds) {
  long mx = -1;
  for (const auto& tr : ds.trajectories)
    for (const auto& p : tr.points)
      if (p.frame % ds.frame_step == 0)
        mx = std::max(mx, p.frame / ds.frame_step);
  return mx;
}

std::vector<Batch> extract_batches(const SceneDataset& ds, int t_obs,
                                   int t_pred, int stride) {
  if (t_obs < 1 || t_pred < 1 || stride < 1)
    throw std::invalid_argument("extract_batches: T_obs, T_pred, stride >= 1");
  const int T = t_obs + t_pred;

  // per-target sample-indexed positions
  std::map<int, std::map<long, Vec2>> samples;
  for (const auto& tr : ds.trajectories)
    for (const auto& p : tr.points)
      if (p.frame % ds.frame_step == 0)
        samples[tr.target_id][p.frame / ds.frame_step] = {p.x, p.y};

  const long mx = max_sample_index(ds);
  std::vector<Batch> batches;
  for (long s = 0; s + T - 1 <= mx; s += stride) {
    Batch b;
    b.start_frame = s;
    b.t_obs = t_obs;
    b.t_pred = t_pred;
    for (const auto& [id, m] : samples) {
      std::vector<Vec2> pos;
      pos.reserve(T);
      bool full = true;
      for (int t = 0; t < T; ++t) {
        auto it = m.find(s + t);
        if (it == m.end()) {
          full = false;
          break;
        }
        pos.push_back(it->second);
      }
      if (!full) continue;
      BatchTarget bt;
      bt.target_id = id;
      bt.offsets = compute_offsets(pos);
      bt.positions = std::move(pos);
      b.targets.push_back(std::move(bt));
    }
    if (!b.targets.empty()) batches.push_back(std::move(b));
  }
  return batches;
}

SceneDataset slice_samples(const SceneDataset& ds, long first, long last) {
  SceneDataset out;
  out.name = ds.name;
  out.width = ds.width;
  out.height = ds.height;
  out.frame_step = ds.frame_step;
  out.normalized = ds.normalized;
  for (const auto& tr : ds.trajectories) {
    Trajectory nt;
    nt.target_id = tr.target_id;
    for (const auto& p : tr.points) {
      if (p.frame % ds.frame_step != 0) continue;
      const long s = p.frame / ds.frame_step;
      if (s >= first && s < last)
        nt.points.push_back({(s - first) * ds.frame_step, p.x, p.y});
    }
    if (nt.points.size() >= 2) out.trajectories.push_back(std::move(nt));
  }
  return out;
}

SceneKind parse_scene_kind(const std::string& s) {
  if (s == "straight") return SceneKind::Straight;
  if (s == "alley_turn") return SceneKind::AlleyTurn;
  if (s == "stop_region") return SceneKind::StopRegion;
  throw std::invalid_argument("unknown scene kind: " + s);
}

namespace {

double norm_to_px(double v) { return (v + 1.0) * 0.5 * 480.0; }

// odd so the non-linearity score's midpoint sample sits exactly on the
// chord of a constant-velocity track
constexpr int kSamplesPerTrack = 27;
constexpr int kStaggerSamples = 3;

// Designated cell for alley_turn / stop_region: the 8x8 cell whose center
// is at normalized (0.125, 0.125), i.e. row 4, col 4 -> cell 36.
constexpr double kJunctionX = 0.125;
constexpr double kJunctionY = 0.125;

void emit(Trajectory& tr, long sample, double xn, double yn, double noise_px,
          Rng& rng) {
  double px = norm_to_px(xn);
  double py = norm_to_px(yn);
  if (noise_px > 0.0) {
    px += noise_px * rng.gaussian();
    py += noise_px * rng.gaussian();
  }
  px = std::clamp(px, 0.0, 480.0);
  py = std::clamp(py, 0.0, 480.0);
  tr.points.push_back({sample * 10, px, py});
}

}  // namespace

SceneDataset generate_synthetic(SceneKind kind, int n_targets,
                                double noise_std, std::uint64_t seed) {
  if (n_targets < 1)
    throw std::invalid_argument("generate_synthetic: n_targets must be >= 1");
  if (noise_std < 0.0)
    throw std::invalid_argument("generate_synthetic: noise_std must be >= 0");
  SceneDataset ds;
  ds.width = 480;
  ds.height = 480;
  ds.frame_step = 10;
  Rng rng(seed);
  const double noise_px = noise_std * 240.0;  // normalized unit = 240 px

  for (int k = 0; k < n_targets; ++k) {
    Trajectory tr;
    tr.target_id = k + 1;
    const long start = static_cast<long>(k) * kStaggerSamples;

    switch (kind) {
      case SceneKind::Straight: {
        // constant-velocity segment that stays inside the scene
        double x0, y0, vx, vy;
        for (;;) {
          x0 = rng.uniform(-0.85, 0.85);
          y0 = rng.uniform(-0.85, 0.85);
          const double speed = rng.uniform(0.02, 0.06);
          const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
          vx = speed * std::cos(ang);
          vy = speed * std::sin(ang);
          const double xe = x0 + vx * (kSamplesPerTrack - 1);
          const double ye = y0 + vy * (kSamplesPerTrack - 1);
          if (std::abs(xe) < 0.95 && std::abs(ye) < 0.95) break;
        }
        for (int t = 0; t < kSamplesPerTrack; ++t)
          emit(tr, start + t, x0 + vx * t, y0 + vy * t, noise_px, rng);
        break;
      }
      case SceneKind::AlleyTurn: {
        // walk up a vertical alley, turn left or right inside the
        // junction cell, continue along the corridor. Approach speed and
        // turn timing are sampled independently so offsets alone never
        // reveal when the turn comes; only the position relative to the
        // junction cell does. The minimum rise v_pre * n_pre = 0.495
        // keeps the full track's y-deviation above the non-linearity
        // threshold (phi = rise / 2 >= 0.2475).
        const int n_pre = 9 + static_cast<int>(rng.below(3));  // 9..11
        const double dir = (k % 2 == 0) ? 1.0 : -1.0;
        // left- and right-turners walk in separate lanes on either side
        // of the junction center, so the two lanes fall in different
        // sub-cell columns: turn direction is readable from position but
        // never from offsets
        const double jx = kJunctionX + dir * rng.uniform(0.008, 0.02);
        const double jy = kJunctionY + rng.uniform(-0.02, 0.02);
        const double v_pre = rng.uniform(0.055, 0.075);
        const double v_post = 0.045;
        for (int t = 0; t < kSamplesPerTrack; ++t) {
          double xn, yn;
          if (t <= n_pre) {
            xn = jx;
            yn = jy - v_pre * (n_pre - t);
          } else {
            xn = jx + dir * v_post * (t - n_pre);
            yn = jy;
          }
          emit(tr, start + t, xn, yn, noise_px, rng);
        }
        break;
      }
      case SceneKind::StopRegion: {
        // walk up toward the stop cell, then decelerate to near rest
        const int n_pre = 8 + static_cast<int>(rng.below(4));
        const double jx = kJunctionX + rng.uniform(-0.02, 0.02);
        const double jy = kJunctionY + rng.uniform(-0.02, 0.02);
        const double v_pre = 0.55 / n_pre;
        double y = jy;
        std::vector<double> ys(kSamplesPerTrack);
        double v = v_pre;
        for (int t = n_pre; t < kSamplesPerTrack; ++t) {
          v *= 0.45;
          y += v;
          ys[t] = y;
        }
        for (int t = 0; t < kSamplesPerTrack; ++t) {
          const double yn = t <= n_pre ? jy - v_pre * (n_pre - t) : ys[t];
          emit(tr, start + t, jx, yn, noise_px, rng);
        }
        break;
      }
    }
    ds.trajectories.push_back(std::move(tr));
  }
  return ds;
}

}  // namespace slstm::data
