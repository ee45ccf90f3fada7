#include "airwaytopo/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "rng.hpp"

namespace airway {

namespace {

void require_patch_fits(const Dims& dims, int size) {
  if (size <= 0)
    throw AirwayError(ErrorCode::BadConfig, "patch size must be positive");
  if (size > dims.d || size > dims.h || size > dims.w)
    throw AirwayError(ErrorCode::BadConfig,
                      "patch size exceeds the volume extent");
}

std::int32_t clamp_origin(std::int64_t centered, std::int64_t dim, int size) {
  return static_cast<std::int32_t>(
      std::clamp<std::int64_t>(centered, 0, dim - size));
}

PatchSpec centered_on(const VoxelCoord& anchor, const Dims& dims, int size,
                      SampleStrategy strategy) {
  PatchSpec spec;
  spec.size = size;
  spec.strategy = strategy;
  spec.anchor = anchor;
  spec.origin = {clamp_origin(anchor.z - size / 2, dims.d, size),
                 clamp_origin(anchor.y - size / 2, dims.h, size),
                 clamp_origin(anchor.x - size / 2, dims.w, size)};
  return spec;
}

void require_ratios(const SchedulerState& state) {
  const double sum = state.r_random + state.r_hard + state.r_breakage;
  if (state.r_random < 0.0 || state.r_hard < 0.0 || state.r_breakage < 0.0 ||
      std::abs(sum - 1.0) > 1e-9)
    throw AirwayError(ErrorCode::BadConfig,
                      "sampling ratios must be a probability vector");
}

}  // namespace

const char* sample_strategy_name(SampleStrategy strategy) {
  switch (strategy) {
    case SampleStrategy::Random: return "Random";
    case SampleStrategy::HardMining: return "HardMining";
    case SampleStrategy::Breakage: return "Breakage";
  }
  return "Random";
}

SampleStrategy sample_strategy_from_name(const std::string& name) {
  if (name == "Random") return SampleStrategy::Random;
  if (name == "HardMining") return SampleStrategy::HardMining;
  if (name == "Breakage") return SampleStrategy::Breakage;
  throw AirwayError(ErrorCode::BadConfig,
                    "unknown sampling strategy: " + name);
}

PatchSpec random_crop(const VoxelGrid& gt, int size, std::uint64_t rng_seed) {
  if (gt.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange,
                      "random_crop requires a Binary grid");
  const Dims& dims = gt.dims();
  require_patch_fits(dims, size);

  VoxelCoord lo{0, 0, 0};
  VoxelCoord hi{-1, -1, -1};
  bool any = false;
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    if (!gt.foreground(i)) continue;
    const VoxelCoord c = gt.coord(i);
    if (!any) {
      lo = hi = c;
      any = true;
      continue;
    }
    lo = {std::min(lo.z, c.z), std::min(lo.y, c.y), std::min(lo.x, c.x)};
    hi = {std::max(hi.z, c.z), std::max(hi.y, c.y), std::max(hi.x, c.x)};
  }
  if (!any)
    throw AirwayError(ErrorCode::EmptyMask, "mask has no foreground voxels");

  SplitMix rng(rng_seed);
  const int half = size / 2;
  const std::int64_t cz = rng.range(lo.z - half, hi.z + half);
  const std::int64_t cy = rng.range(lo.y - half, hi.y + half);
  const std::int64_t cx = rng.range(lo.x - half, hi.x + half);

  PatchSpec spec;
  spec.size = size;
  spec.strategy = SampleStrategy::Random;
  spec.origin = {clamp_origin(cz - half, dims.d, size),
                 clamp_origin(cy - half, dims.h, size),
                 clamp_origin(cx - half, dims.w, size)};
  return spec;
}

PatchSpec hard_mining_crop(const SkeletonPointSet& missed, int size,
                           std::uint64_t rng_seed) {
  if (missed.empty())
    throw AirwayError(ErrorCode::EmptySet, "no missed skeleton points");
  require_patch_fits(missed.dims(), size);
  SplitMix rng(rng_seed);
  const VoxelCoord anchor = missed.points()[rng.below(missed.size())];
  return centered_on(anchor, missed.dims(), size,
                     SampleStrategy::HardMining);
}

PatchSpec breakage_crop(const BreakageSet& breakages, const Dims& dims,
                        int size, std::uint64_t rng_seed) {
  if (breakages.breakage_points.empty())
    throw AirwayError(ErrorCode::EmptySet,
                      "no breakage points: all airways continuous");
  require_patch_fits(dims, size);
  SplitMix rng(rng_seed);
  const VoxelCoord anchor =
      breakages.breakage_points[rng.below(breakages.breakage_points.size())];
  return centered_on(anchor, dims, size, SampleStrategy::Breakage);
}

SchedulerState scheduler_update(const SchedulerState& state,
                                std::int64_t n_missed,
                                std::int64_t n_breakage,
                                std::int64_t n_total_skeleton,
                                const SchedulerParams& params) {
  if (n_missed < 0 || n_breakage < 0 || n_total_skeleton < 0 ||
      n_missed > n_total_skeleton || n_breakage > n_missed)
    throw AirwayError(ErrorCode::InconsistentCounts,
                      "need breakage <= missed <= total skeleton points");

  SchedulerState next = state;
  next.n_missed = n_missed;
  next.n_breakage = n_breakage;

  const double missed_frac =
      n_total_skeleton > 0
          ? static_cast<double>(n_missed) /
                static_cast<double>(n_total_skeleton)
          : 0.0;
  const double hard = std::clamp(params.boost * missed_frac, params.hard_min,
                                 params.hard_max);

  switch (state.stage) {
    case 1:
      next.r_random = 1.0;
      next.r_hard = 0.0;
      next.r_breakage = 0.0;
      break;
    case 2:
      next.r_hard = hard;
      next.r_breakage = 0.0;
      next.r_random = 1.0 - hard;
      break;
    case 3: {
      const double breakage_frac =
          static_cast<double>(n_breakage) /
          static_cast<double>(std::max<std::int64_t>(n_missed, 1));
      next.r_breakage = std::clamp(params.boost * breakage_frac,
                                   params.breakage_min, params.breakage_max);
      next.r_hard = hard * (1.0 - next.r_breakage);
      next.r_random = 1.0 - next.r_breakage - next.r_hard;
      break;
    }
    default:
      throw AirwayError(ErrorCode::BadConfig, "stage must be 1, 2, or 3");
  }
  return next;
}

std::vector<SampleStrategy> make_batch_plan(const SchedulerState& state,
                                            int counts_per_epoch,
                                            std::uint64_t rng_seed) {
  if (counts_per_epoch < 0)
    throw AirwayError(ErrorCode::BadConfig, "batch count must be >= 0");
  require_ratios(state);

  SplitMix rng(rng_seed);
  std::vector<SampleStrategy> plan;
  plan.reserve(static_cast<std::size_t>(counts_per_epoch));
  for (int i = 0; i < counts_per_epoch; ++i) {
    const double u = rng.uniform();
    if (u < state.r_random)
      plan.push_back(SampleStrategy::Random);
    else if (u < state.r_random + state.r_hard)
      plan.push_back(SampleStrategy::HardMining);
    else
      plan.push_back(SampleStrategy::Breakage);
  }
  return plan;
}

std::string patch_specs_to_json(const std::vector<PatchSpec>& specs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const PatchSpec& s : specs) {
    nlohmann::json j;
    j["origin"] = {s.origin.z, s.origin.y, s.origin.x};
    j["size"] = s.size;
    j["strategy"] = sample_strategy_name(s.strategy);
    j["anchor"] = s.anchor ? nlohmann::json({s.anchor->z, s.anchor->y,
                                             s.anchor->x})
                           : nlohmann::json(nullptr);
    arr.push_back(j);
  }
  return arr.dump(2);
}

}  // namespace airway
