#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "slstm/data.hpp"
#include "slstm/model.hpp"

namespace slstm::gradcheck {

struct GroupResult {
  std::string name;        // parameter tensor name
  double worst_rel_err = 0.0;
  std::size_t worst_index = 0;
};

struct Report {
  bool pass = false;
  double tolerance = 1e-4;
  double fd_step = 1e-5;
  std::vector<GroupResult> groups;  // one per parameter tensor
  double worst() const;
  const GroupResult* worst_group() const;
};

// Total teacher-forced NLL of one window; the independent scalar the
// finite differences probe.
double window_nll(const ParamMap& params, const data::Batch& batch,
                  const model::ModelConfig& cfg);

// Central finite differences on every component of every parameter of the
// full coupled model, toy configuration (2x2 grid, 4x4 sub-grid, hidden 8,
// embed 4, 2 targets, T = 6). Parameters are probed in parallel; the
// verdict does not depend on thread count.
Report run(std::uint64_t seed, double fd_step = 1e-5, double tolerance = 1e-4);

// Per-primitive gradient check on random inputs in [-2, 2] (shifted
// positive for div/log, kept away from the kink for relu). One result per
// op kind; rel-err tolerance 1e-6.
std::vector<GroupResult> check_primitives(std::uint64_t seed);

// Same probe against a caller-built model, used by unit tests.
Report check_model(const ParamMap& params, const data::Batch& batch,
                   const model::ModelConfig& cfg, double fd_step,
                   double tolerance);

}  // namespace slstm::gradcheck
