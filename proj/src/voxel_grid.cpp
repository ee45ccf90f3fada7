#include "airwaytopo/voxel_grid.hpp"

#include <algorithm>
#include <cmath>

namespace airway {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::UnsupportedDatatype: return "UnsupportedDatatype";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyTargetSet: return "EmptyTargetSet";
    case ErrorCode::EmptyCenterline: return "EmptyCenterline";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DisconnectedSkeleton: return "DisconnectedSkeleton";
    case ErrorCode::DegenerateSkeleton: return "DegenerateSkeleton";
    case ErrorCode::UngradedTree: return "UngradedTree";
    case ErrorCode::UnlabeledTree: return "UnlabeledTree";
    case ErrorCode::UnparsedTree: return "UnparsedTree";
    case ErrorCode::BranchNotFound: return "BranchNotFound";
    case ErrorCode::GapTooLarge: return "GapTooLarge";
    case ErrorCode::SpecDoesNotFit: return "SpecDoesNotFit";
    case ErrorCode::InconsistentCounts: return "InconsistentCounts";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::SingularPoint: return "SingularPoint";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::IndivisibleInput: return "IndivisibleInput";
    case ErrorCode::BadConfig: return "BadConfig";
  }
  return "UnknownError";
}

const char* grid_kind_name(GridKind kind) {
  switch (kind) {
    case GridKind::Intensity: return "Intensity";
    case GridKind::Probability: return "Probability";
    case GridKind::Binary: return "Binary";
  }
  return "Intensity";
}

GridKind grid_kind_from_name(const std::string& name) {
  if (name == "Intensity") return GridKind::Intensity;
  if (name == "Probability") return GridKind::Probability;
  if (name == "Binary") return GridKind::Binary;
  throw AirwayError(ErrorCode::BadConfig, "unknown grid kind '" + name + "'");
}

VoxelGrid::VoxelGrid(Dims dims, Spacing spacing, GridKind kind, float fill)
    : dims_(dims), spacing_(spacing), kind_(kind) {
  if (dims_.d <= 0 || dims_.h <= 0 || dims_.w <= 0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive grid dims");
  if (spacing_.dz <= 0.0 || spacing_.dy <= 0.0 || spacing_.dx <= 0.0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive spacing");
  values_.assign(static_cast<std::size_t>(dims_.count()), fill);
}

VoxelGrid::VoxelGrid(Dims dims, Spacing spacing, GridKind kind,
                     std::vector<float> values)
    : dims_(dims), spacing_(spacing), kind_(kind), values_(std::move(values)) {
  if (dims_.d <= 0 || dims_.h <= 0 || dims_.w <= 0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive grid dims");
  if (spacing_.dz <= 0.0 || spacing_.dy <= 0.0 || spacing_.dx <= 0.0)
    throw AirwayError(ErrorCode::CorruptHeader, "non-positive spacing");
  if (static_cast<std::int64_t>(values_.size()) != dims_.count())
    throw AirwayError(ErrorCode::CorruptHeader,
                      "value count does not match dims");
}

std::int64_t VoxelGrid::count_foreground() const {
  std::int64_t n = 0;
  for (float v : values_)
    if (v > 0.5f) ++n;
  return n;
}

void VoxelGrid::validate() const {
  if (kind_ == GridKind::Probability) {
    for (float v : values_)
      if (!(v >= 0.0f && v <= 1.0f))
        throw AirwayError(ErrorCode::OutOfRange,
                          "probability value outside [0,1]");
  } else if (kind_ == GridKind::Binary) {
    for (float v : values_)
      if (v != 0.0f && v != 1.0f)
        throw AirwayError(ErrorCode::OutOfRange, "binary value outside {0,1}");
  }
}

VoxelGrid VoxelGrid::with_kind(GridKind kind) const {
  VoxelGrid out = *this;
  out.kind_ = kind;
  out.validate();
  return out;
}

void require_same_dims(const VoxelGrid& a, const VoxelGrid& b) {
  if (!(a.dims() == b.dims()))
    throw AirwayError(ErrorCode::DimMismatch, "grid dims differ");
}

VoxelGrid truncate_normalize(const VoxelGrid& grid, double lo, double hi) {
  if (!(lo < hi))
    throw AirwayError(ErrorCode::DegenerateRange,
                      "truncation window requires lo < hi");
  std::vector<float> out(grid.values().size());
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = (static_cast<double>(grid.values()[i]) - lo) * inv;
    out[i] = static_cast<float>(std::clamp(t, 0.0, 1.0));
  }
  return VoxelGrid(grid.dims(), grid.spacing(), GridKind::Probability,
                   std::move(out));
}

}  // namespace airway
