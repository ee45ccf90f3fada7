#include "airwaytopo/metrics.hpp"

#include <cmath>
#include <cstdint>

#include "json.hpp"

namespace airway {

namespace {

void require_binary(const VoxelGrid& grid, const char* role) {
  if (grid.kind() != GridKind::Binary)
    throw AirwayError(ErrorCode::OutOfRange,
                      std::string(role) + " must be a Binary grid");
}

void require_tree(const AirwayTree& tree) {
  if (tree.branches.empty() || tree.root < 0)
    throw AirwayError(ErrorCode::UnparsedTree, "tree has no branches");
}

void require_threshold(const BdParams& params) {
  if (!(params.branch_detect_threshold > 0.0 &&
        params.branch_detect_threshold <= 1.0))
    throw AirwayError(ErrorCode::BadConfig,
                      "branch_detect_threshold must lie in (0, 1]");
}

bool in_prediction(const VoxelGrid& pred, const VoxelCoord& c) {
  return pred.in_bounds(c) && pred.foreground(c);
}

// Detected and total centerline length of one branch, in mm.
struct BranchCoverage {
  double total = 0.0;
  double detected = 0.0;
  double fraction = 0.0;
};

std::vector<BranchCoverage> branch_coverage(const AirwayTree& tree,
                                            const VoxelGrid& pred) {
  require_tree(tree);
  require_binary(pred, "prediction");
  if (!(tree.dims == pred.dims()))
    throw AirwayError(ErrorCode::DimMismatch,
                      "tree dims differ from prediction dims");

  const Spacing& sp = tree.spacing;
  std::vector<BranchCoverage> out(tree.branches.size());
  for (const Branch& b : tree.branches) {
    BranchCoverage& cov = out[b.id];
    const auto& line = b.centerline;
    bool prev_in = in_prediction(pred, line.front());
    const bool front_in = prev_in;
    for (std::size_t i = 1; i < line.size(); ++i) {
      const bool cur_in = in_prediction(pred, line[i]);
      const double dz = (line[i].z - line[i - 1].z) * sp.dz;
      const double dy = (line[i].y - line[i - 1].y) * sp.dy;
      const double dx = (line[i].x - line[i - 1].x) * sp.dx;
      const double step = std::sqrt(dz * dz + dy * dy + dx * dx);
      cov.total += step;
      if (prev_in && cur_in) cov.detected += step;
      prev_in = cur_in;
    }
    // A single-point branch has no steps; fall back to point membership.
    cov.fraction =
        cov.total > 0.0 ? cov.detected / cov.total : (front_in ? 1.0 : 0.0);
  }
  return out;
}

// Length-weighted detected fraction over a branch subset; nullopt when the
// subset is empty. A subset with zero total length (single-point branches
// only) falls back to the unweighted mean of the point memberships.
std::optional<double> aggregate_td(const std::vector<BranchCoverage>& cov,
                                   const std::vector<std::int32_t>& ids) {
  if (ids.empty()) return std::nullopt;
  double total = 0.0;
  double detected = 0.0;
  for (std::int32_t id : ids) {
    total += cov[id].total;
    detected += cov[id].detected;
  }
  if (total == 0.0) {
    double mean = 0.0;
    for (std::int32_t id : ids) mean += cov[id].fraction;
    return mean / static_cast<double>(ids.size());
  }
  return detected / total;
}

std::optional<double> aggregate_bd(const std::vector<BranchCoverage>& cov,
                                   const std::vector<std::int32_t>& ids,
                                   double threshold) {
  if (ids.empty()) return std::nullopt;
  std::int64_t hits = 0;
  for (std::int32_t id : ids)
    if (cov[id].fraction >= threshold) ++hits;
  return static_cast<double>(hits) / static_cast<double>(ids.size());
}

bool is_large(BranchLabel label) {
  return label == BranchLabel::Trachea || label == BranchLabel::MainBronchus ||
         label == BranchLabel::Lobar;
}

}  // namespace

double dsc(const VoxelGrid& pred, const VoxelGrid& gt) {
  require_binary(pred, "prediction");
  require_binary(gt, "reference");
  require_same_dims(pred, gt);
  std::int64_t p = 0;
  std::int64_t g = 0;
  std::int64_t both = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const bool pi = pred.foreground(i);
    const bool gi = gt.foreground(i);
    p += pi;
    g += gi;
    both += pi && gi;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double precision(const VoxelGrid& pred, const VoxelGrid& gt) {
  require_binary(pred, "prediction");
  require_binary(gt, "reference");
  require_same_dims(pred, gt);
  std::int64_t p = 0;
  std::int64_t both = 0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const bool pi = pred.foreground(i);
    p += pi;
    both += pi && gt.foreground(i);
  }
  if (p == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(p);
}

TreeLengthResult tree_length_detected(const AirwayTree& gt_tree,
                                      const VoxelGrid& pred) {
  const auto cov = branch_coverage(gt_tree, pred);
  std::vector<std::int32_t> all(cov.size());
  for (std::size_t i = 0; i < cov.size(); ++i)
    all[i] = static_cast<std::int32_t>(i);

  TreeLengthResult result;
  result.td = *aggregate_td(cov, all);
  result.per_branch.reserve(cov.size());
  for (const BranchCoverage& c : cov) result.per_branch.push_back(c.fraction);
  return result;
}

BranchDetectResult branch_detected(const AirwayTree& gt_tree,
                                   const VoxelGrid& pred,
                                   const BdParams& params) {
  require_threshold(params);
  const auto cov = branch_coverage(gt_tree, pred);
  std::vector<std::int32_t> all(cov.size());
  for (std::size_t i = 0; i < cov.size(); ++i)
    all[i] = static_cast<std::int32_t>(i);

  BranchDetectResult result;
  result.bd = *aggregate_bd(cov, all, params.branch_detect_threshold);
  result.per_branch.reserve(cov.size());
  for (const BranchCoverage& c : cov)
    result.per_branch.push_back(c.fraction >= params.branch_detect_threshold);
  return result;
}

HierarchicalResult hierarchical_metrics(const AirwayTree& gt_tree,
                                        const VoxelGrid& pred,
                                        const BdParams& params) {
  require_threshold(params);
  require_tree(gt_tree);
  for (const Branch& b : gt_tree.branches)
    if (b.label == BranchLabel::Unlabeled)
      throw AirwayError(ErrorCode::UnlabeledTree,
                        "hierarchical metrics need a fully labeled tree");

  const auto cov = branch_coverage(gt_tree, pred);
  std::vector<std::int32_t> large;
  std::vector<std::int32_t> small;
  for (const Branch& b : gt_tree.branches) {
    if (is_large(b.label))
      large.push_back(b.id);
    else if (b.label == BranchLabel::Segmental)
      small.push_back(b.id);
    // Distal branches belong to neither class.
  }

  HierarchicalResult result;
  result.td_large = aggregate_td(cov, large);
  result.bd_large = aggregate_bd(cov, large, params.branch_detect_threshold);
  result.td_small = aggregate_td(cov, small);
  result.bd_small = aggregate_bd(cov, small, params.branch_detect_threshold);
  return result;
}

double weighted_mean_score(double td, double bd, double dsc, double pre) {
  for (double v : {td, bd, dsc, pre})
    if (!(v >= 0.0 && v <= 100.0))
      throw AirwayError(ErrorCode::OutOfRange,
                        "scores must lie in [0, 1] or [0, 100]");
  return 0.3 * td + 0.3 * bd + 0.2 * dsc + 0.2 * pre;
}

EvalReport evaluate_case(const VoxelGrid& pred, const VoxelGrid& gt,
                         const ParseParams& parse_params,
                         const BdParams& bd_params) {
  require_same_dims(pred, gt);
  require_threshold(bd_params);

  EvalReport report;
  report.dsc = dsc(pred, gt);
  report.pre = precision(pred, gt);

  const AirwayTree tree = parse_pipeline(gt, parse_params);
  const auto cov = branch_coverage(tree, pred);

  std::vector<std::int32_t> all;
  std::vector<std::int32_t> large;
  std::vector<std::int32_t> small;
  for (const Branch& b : tree.branches) {
    all.push_back(b.id);
    if (is_large(b.label))
      large.push_back(b.id);
    else if (b.label == BranchLabel::Segmental)
      small.push_back(b.id);
  }

  const double threshold = bd_params.branch_detect_threshold;
  report.td = *aggregate_td(cov, all);
  report.bd = *aggregate_bd(cov, all, threshold);
  report.td_large = aggregate_td(cov, large);
  report.bd_large = aggregate_bd(cov, large, threshold);
  report.td_small = aggregate_td(cov, small);
  report.bd_small = aggregate_bd(cov, small, threshold);
  report.wms = weighted_mean_score(report.td, report.bd, report.dsc,
                                   report.pre);

  report.per_branch.reserve(tree.branches.size());
  for (const Branch& b : tree.branches) {
    BranchReport row;
    row.id = b.id;
    row.label = b.label;
    row.detected_fraction = cov[b.id].fraction;
    row.detected = cov[b.id].fraction >= threshold;
    report.per_branch.push_back(row);
  }
  return report;
}

std::string report_to_json(const EvalReport& report) {
  const auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };

  nlohmann::json j;
  j["td"] = report.td;
  j["bd"] = report.bd;
  j["dsc"] = report.dsc;
  j["pre"] = report.pre;
  j["td_large"] = opt(report.td_large);
  j["bd_large"] = opt(report.bd_large);
  j["td_small"] = opt(report.td_small);
  j["bd_small"] = opt(report.bd_small);
  j["wms"] = report.wms;

  nlohmann::json rows = nlohmann::json::array();
  for (const BranchReport& row : report.per_branch) {
    nlohmann::json r;
    r["id"] = row.id;
    r["label"] = branch_label_name(row.label);
    r["detected_fraction"] = row.detected_fraction;
    r["detected"] = row.detected;
    rows.push_back(r);
  }
  j["per_branch"] = rows;
  return j.dump(2);
}

}  // namespace airway
