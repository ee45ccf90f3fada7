#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "airwaytopo/skeleton.hpp"
#include "airwaytopo/voxel_grid.hpp"

namespace airway {

enum class SampleStrategy { Random, HardMining, Breakage };

const char* sample_strategy_name(SampleStrategy strategy);
SampleStrategy sample_strategy_from_name(const std::string& name);

// A cubic crop request. origin is the minimal corner; anchor records the
// skeleton/breakage point the crop was centered on, when there is one.
struct PatchSpec {
  VoxelCoord origin;
  int size = 128;
  SampleStrategy strategy = SampleStrategy::Random;
  std::optional<VoxelCoord> anchor;

  bool operator==(const PatchSpec&) const = default;
};

// Stage-wise sampling mix. Ratios always form a probability vector; stage 1
// is all-random and stage 2 never draws breakage patches.
struct SchedulerState {
  int stage = 1;
  std::int64_t n_missed = 0;
  std::int64_t n_breakage = 0;
  double r_random = 1.0;
  double r_hard = 0.0;
  double r_breakage = 0.0;
};

// Proportional-with-clamps update rule; every constant is configurable.
struct SchedulerParams {
  double boost = 4.0;
  double hard_min = 0.2;
  double hard_max = 0.6;
  double breakage_min = 0.1;
  double breakage_max = 0.4;
};

// Center drawn uniformly from the foreground bounding box expanded by
// size/2 per axis, then the patch is clamped into bounds (shifted, never
// padded). Deterministic given the seed.
PatchSpec random_crop(const VoxelGrid& gt, int size, std::uint64_t rng_seed);

// Anchor drawn uniformly from the missed skeleton points; the patch is
// centered on it and clamped into bounds.
PatchSpec hard_mining_crop(const SkeletonPointSet& missed, int size,
                           std::uint64_t rng_seed);

// Anchor drawn uniformly from the breakage points; EmptySet when there are
// none (stage 3 degenerate: all airways continuous).
PatchSpec breakage_crop(const BreakageSet& breakages, const Dims& dims,
                        int size, std::uint64_t rng_seed);

// Recomputes the sampling ratios from fresh counts. Stage 1 pins (1,0,0).
// Stage 2: r_hard = clamp(boost*n_missed/n_total, hard_min, hard_max).
// Stage 3 adds r_breakage = clamp(boost*n_breakage/max(n_missed,1),
// breakage_min, breakage_max) and scales the stage-2 hard ratio into the
// remaining mass.
SchedulerState scheduler_update(const SchedulerState& state,
                                std::int64_t n_missed,
                                std::int64_t n_breakage,
                                std::int64_t n_total_skeleton,
                                const SchedulerParams& params = {});

// Independent draws of strategy tags with the state's ratios.
std::vector<SampleStrategy> make_batch_plan(const SchedulerState& state,
                                            int counts_per_epoch,
                                            std::uint64_t rng_seed);

// JSON array of {origin:[z,y,x], size, strategy, anchor:[z,y,x]|null}.
std::string patch_specs_to_json(const std::vector<PatchSpec>& specs);

}  // namespace airway
