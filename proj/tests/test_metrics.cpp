#include <algorithm>
#include <cmath>
#include <vector>

#include "airwaytopo/metrics.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace airway;

namespace {

VoxelGrid make_mask(Dims dims, const std::vector<VoxelCoord>& on,
                    Spacing spacing = {}) {
  VoxelGrid g(dims, spacing, GridKind::Binary);
  for (const VoxelCoord& c : on) g.set(c, 1.0f);
  return g;
}

Branch make_branch(std::int32_t id, std::int32_t parent,
                   std::vector<std::int32_t> children,
                   std::vector<VoxelCoord> line) {
  Branch b;
  b.id = id;
  b.parent = parent;
  b.children = std::move(children);
  for (const VoxelCoord& c : line) {
    b.centerline.push_back(c);
    b.centerline_f.push_back({static_cast<double>(c.z),
                              static_cast<double>(c.y),
                              static_cast<double>(c.x)});
  }
  b.mean_radius_vox = 1.0;
  return b;
}

std::vector<VoxelCoord> segment(VoxelCoord from, VoxelCoord step, int n) {
  std::vector<VoxelCoord> out;
  for (int i = 0; i < n; ++i)
    out.push_back({from.z + i * step.z, from.y + i * step.y,
                   from.x + i * step.x});
  return out;
}

// Sum of mm step lengths along an integer centerline; independent oracle for
// the length-weighted identities below.
double mm_length(const std::vector<VoxelCoord>& line, const Spacing& sp) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double dz = (line[i].z - line[i - 1].z) * sp.dz;
    const double dy = (line[i].y - line[i - 1].y) * sp.dy;
    const double dx = (line[i].x - line[i - 1].x) * sp.dx;
    len += std::sqrt(dz * dz + dy * dy + dx * dx);
  }
  return len;
}

std::vector<VoxelCoord> all_points(const AirwayTree& t) {
  std::vector<VoxelCoord> pts;
  for (const Branch& b : t.branches)
    pts.insert(pts.end(), b.centerline.begin(), b.centerline.end());
  return pts;
}

// Depth-4 hand-labeled tree: trachea, two main bronchi, two lobar, two
// segmental, one distal twig. Orthogonal turns keep adjacency simple.
AirwayTree labeled_tree() {
  AirwayTree t;
  t.dims = {13, 28, 28};
  t.spacing = Spacing{};
  t.branches.push_back(
      make_branch(0, -1, {1, 2}, segment({0, 20, 20}, {1, 0, 0}, 9)));
  t.branches.push_back(
      make_branch(1, 0, {3, 4}, segment({9, 19, 20}, {0, -1, 0}, 6)));
  t.branches.push_back(
      make_branch(2, 0, {}, segment({9, 21, 20}, {0, 1, 0}, 6)));
  t.branches.push_back(
      make_branch(3, 1, {5, 6}, segment({10, 13, 20}, {0, -1, 0}, 6)));
  t.branches.push_back(
      make_branch(4, 1, {}, segment({10, 14, 21}, {0, 0, 1}, 6)));
  t.branches.push_back(
      make_branch(5, 3, {7}, segment({11, 7, 20}, {0, -1, 0}, 6)));
  t.branches.push_back(
      make_branch(6, 3, {}, segment({11, 8, 21}, {0, 0, 1}, 6)));
  t.branches.push_back(
      make_branch(7, 5, {}, segment({12, 2, 21}, {0, 0, 1}, 4)));
  t.root = 0;

  const int gens[] = {0, 1, 1, 2, 2, 3, 3, 4};
  const BranchLabel labels[] = {
      BranchLabel::Trachea,   BranchLabel::MainBronchus,
      BranchLabel::MainBronchus, BranchLabel::Lobar,
      BranchLabel::Lobar,     BranchLabel::Segmental,
      BranchLabel::Segmental, BranchLabel::Distal};
  for (std::size_t i = 0; i < t.branches.size(); ++i) {
    t.branches[i].generation = gens[i];
    t.branches[i].label = labels[i];
  }
  validate_tree(t);
  return t;
}

}  // namespace

TEST_CASE("dsc on equal, disjoint, and half-overlapping masks") {
  const Dims dims{3, 3, 3};
  VoxelGrid a = make_mask(dims, {{0, 0, 0}, {0, 0, 1}});
  CHECK(dsc(a, a) == 1.0);

  VoxelGrid far = make_mask(dims, {{2, 2, 2}, {2, 2, 1}});
  CHECK(dsc(a, far) == 0.0);

  // |P| = 2, |G| = 2, overlap 1 -> 2*1/4
  VoxelGrid half = make_mask(dims, {{0, 0, 1}, {1, 1, 1}});
  CHECK(dsc(half, a) == 0.5);

  VoxelGrid empty(dims, Spacing{}, GridKind::Binary);
  CHECK(dsc(empty, empty) == 1.0);
  CHECK(dsc(empty, a) == 0.0);

  VoxelGrid other({3, 3, 4}, Spacing{}, GridKind::Binary);
  CHECK_THROWS_AS(static_cast<void>(dsc(a, other)), AirwayError);
}

TEST_CASE("precision counts prediction voxels inside the reference") {
  const Dims dims{3, 3, 3};
  VoxelGrid gt = make_mask(dims, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 1, 0}});

  VoxelGrid sub = make_mask(dims, {{0, 0, 0}, {0, 0, 1}});
  CHECK(precision(sub, gt) == 1.0);

  VoxelGrid off = make_mask(dims, {{2, 2, 2}});
  CHECK(precision(off, gt) == 0.0);

  // |P| = 4, overlap 3 -> 0.75
  VoxelGrid mixed =
      make_mask(dims, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {2, 2, 2}});
  CHECK(precision(mixed, gt) == 0.75);

  VoxelGrid empty(dims, Spacing{}, GridKind::Binary);
  CHECK(precision(empty, gt) == 1.0);
}

TEST_CASE("tree_length_detected counts steps with both ends predicted") {
  // single 100-step branch along x
  AirwayTree t;
  t.dims = {1, 1, 101};
  t.spacing = Spacing{};
  t.branches.push_back(make_branch(0, -1, {}, segment({0, 0, 0}, {0, 0, 1},
                                                      101)));
  t.root = 0;
  validate_tree(t);

  VoxelGrid full(t.dims, Spacing{}, GridKind::Binary, 1.0f);
  CHECK(tree_length_detected(t, full).td == 1.0);

  VoxelGrid empty(t.dims, Spacing{}, GridKind::Binary);
  CHECK(tree_length_detected(t, empty).td == 0.0);

  // 91 contiguous points -> 90 detected steps
  VoxelGrid part(t.dims, Spacing{}, GridKind::Binary);
  for (int x = 0; x <= 90; ++x) part.set(0, 0, x, 1.0f);
  TreeLengthResult r = tree_length_detected(t, part);
  CHECK(r.td == doctest::Approx(0.9));
  REQUIRE(r.per_branch.size() == 1);
  CHECK(r.per_branch[0] == doctest::Approx(0.9));

  VoxelGrid off({1, 1, 100}, Spacing{}, GridKind::Binary);
  CHECK_THROWS_AS(static_cast<void>(tree_length_detected(t, off)),
                  AirwayError);
}

TEST_CASE("tree_length_detected weights branches by mm length") {
  // two branches with anisotropic spacing: dz twice dx/dy
  const Spacing sp{2.0, 1.0, 1.0};
  AirwayTree t;
  t.dims = {12, 10, 10};
  t.spacing = sp;
  t.branches.push_back(
      make_branch(0, -1, {1}, segment({0, 5, 5}, {1, 0, 0}, 11)));
  t.branches.push_back(
      make_branch(1, 0, {}, segment({10, 6, 5}, {0, 1, 0}, 3)));
  t.root = 0;
  validate_tree(t);

  // cover all of b1 but only z <= 8 of b0: 16 of 20 mm + 2 of 2 mm
  std::vector<VoxelCoord> on = t.branches[1].centerline;
  for (int z = 0; z <= 8; ++z) on.push_back({z, 5, 5});
  VoxelGrid pred = make_mask(t.dims, on, sp);

  TreeLengthResult r = tree_length_detected(t, pred);
  CHECK(r.td == doctest::Approx(18.0 / 22.0));
  CHECK(r.per_branch[0] == doctest::Approx(0.8));
  CHECK(r.per_branch[1] == 1.0);

  // td is the length-weighted mean of the per-branch fractions
  double num = 0.0;
  double den = 0.0;
  for (const Branch& b : t.branches) {
    const double len = mm_length(b.centerline, sp);
    num += len * r.per_branch[b.id];
    den += len;
  }
  CHECK(r.td == doctest::Approx(num / den));
}

TEST_CASE("single-point branches fall back to point membership") {
  AirwayTree t;
  t.dims = {3, 3, 3};
  t.spacing = Spacing{};
  t.branches.push_back(make_branch(0, -1, {}, {{1, 1, 1}}));
  t.root = 0;
  validate_tree(t);

  VoxelGrid hit = make_mask(t.dims, {{1, 1, 1}});
  CHECK(tree_length_detected(t, hit).td == 1.0);
  CHECK(tree_length_detected(t, hit).per_branch[0] == 1.0);

  VoxelGrid miss(t.dims, Spacing{}, GridKind::Binary);
  CHECK(tree_length_detected(t, miss).td == 0.0);
}

TEST_CASE("branch_detected applies an inclusive coverage threshold") {
  // comb: root along x plus nine 10-step teeth
  AirwayTree t;
  t.dims = {1, 12, 21};
  t.spacing = Spacing{};
  Branch root = make_branch(0, -1, {}, segment({0, 0, 0}, {0, 0, 1}, 21));
  t.branches.push_back(root);
  for (int j = 0; j < 9; ++j) {
    const std::int32_t id = j + 1;
    t.branches[0].children.push_back(id);
    t.branches.push_back(
        make_branch(id, 0, {}, segment({0, 1, 2 * j + 1}, {0, 1, 0}, 11)));
  }
  t.root = 0;
  validate_tree(t);

  VoxelGrid full(t.dims, Spacing{}, GridKind::Binary, 1.0f);
  BranchDetectResult everything = branch_detected(t, full);
  CHECK(everything.bd == 1.0);

  // detected steps per tooth; fractions {1, 1, 1, .9, .8, .8, .4, .3, 0}
  const int steps[9] = {10, 10, 10, 9, 8, 8, 4, 3, 0};
  std::vector<VoxelCoord> on = t.branches[0].centerline;
  for (int j = 0; j < 9; ++j)
    for (int y = 1; y <= steps[j] + 1 && y <= 11; ++y)
      on.push_back({0, y, 2 * j + 1});
  VoxelGrid pred = make_mask(t.dims, on);

  BranchDetectResult r = branch_detected(t, pred);
  CHECK(r.bd == doctest::Approx(0.7));  // root + 6 teeth out of 10
  REQUIRE(r.per_branch.size() == 10);
  CHECK(r.per_branch[0] == true);
  CHECK(r.per_branch[5] == true);   // exactly at the 0.8 threshold
  CHECK(r.per_branch[6] == true);
  CHECK(r.per_branch[7] == false);  // 0.4
  CHECK(r.per_branch[9] == false);  // untouched tooth

  BdParams bad;
  bad.branch_detect_threshold = 0.0;
  CHECK_THROWS_AS(static_cast<void>(branch_detected(t, pred, bad)),
                  AirwayError);
  bad.branch_detect_threshold = 1.2;
  CHECK_THROWS_AS(static_cast<void>(branch_detected(t, pred, bad)),
                  AirwayError);
}

TEST_CASE("hierarchical_metrics separates large and small airways") {
  AirwayTree t = labeled_tree();
  VoxelGrid full = make_mask(t.dims, all_points(t));

  HierarchicalResult perfect = hierarchical_metrics(t, full);
  REQUIRE(perfect.td_large.has_value());
  REQUIRE(perfect.td_small.has_value());
  CHECK(*perfect.td_large == 1.0);
  CHECK(*perfect.bd_large == 1.0);
  CHECK(*perfect.td_small == 1.0);
  CHECK(*perfect.bd_small == 1.0);

  // fully ablate one of the two segmental branches (id 6)
  std::vector<VoxelCoord> on;
  for (const Branch& b : t.branches)
    if (b.id != 6)
      on.insert(on.end(), b.centerline.begin(), b.centerline.end());
  VoxelGrid ablated = make_mask(t.dims, on);

  HierarchicalResult r = hierarchical_metrics(t, ablated);
  CHECK(*r.td_large == 1.0);
  CHECK(*r.bd_large == 1.0);
  CHECK(*r.td_small == doctest::Approx(0.5));
  CHECK(*r.bd_small == doctest::Approx(0.5));

  // the distal twig (id 7) belongs to neither class
  std::vector<VoxelCoord> on2;
  for (const Branch& b : t.branches)
    if (b.id != 6 && b.id != 7)
      on2.insert(on2.end(), b.centerline.begin(), b.centerline.end());
  HierarchicalResult r2 = hierarchical_metrics(t, make_mask(t.dims, on2));
  CHECK(*r2.td_large == *r.td_large);
  CHECK(*r2.bd_large == *r.bd_large);
  CHECK(*r2.td_small == *r.td_small);
  CHECK(*r2.bd_small == *r.bd_small);
}

TEST_CASE("hierarchical_metrics reports empty classes as absent") {
  // depth-1 tree: trachea and two main bronchi, nothing smaller
  AirwayTree t;
  t.dims = {10, 12, 12};
  t.spacing = Spacing{};
  t.branches.push_back(
      make_branch(0, -1, {1, 2}, segment({0, 5, 5}, {1, 0, 0}, 6)));
  t.branches.push_back(
      make_branch(1, 0, {}, segment({6, 4, 5}, {0, -1, 0}, 4)));
  t.branches.push_back(
      make_branch(2, 0, {}, segment({6, 6, 5}, {0, 1, 0}, 4)));
  t.root = 0;
  t.branches[0].generation = 0;
  t.branches[1].generation = 1;
  t.branches[2].generation = 1;
  t.branches[0].label = BranchLabel::Trachea;
  t.branches[1].label = BranchLabel::MainBronchus;
  t.branches[2].label = BranchLabel::MainBronchus;
  validate_tree(t);

  VoxelGrid full = make_mask(t.dims, all_points(t));
  HierarchicalResult r = hierarchical_metrics(t, full);
  CHECK(r.td_large.has_value());
  CHECK(r.bd_large.has_value());
  CHECK(!r.td_small.has_value());
  CHECK(!r.bd_small.has_value());
}

TEST_CASE("hierarchical_metrics rejects unlabeled trees") {
  AirwayTree t = labeled_tree();
  t.branches[3].label = BranchLabel::Unlabeled;
  VoxelGrid full = make_mask(t.dims, all_points(t));
  CHECK_THROWS_WITH_AS(static_cast<void>(hierarchical_metrics(t, full)),
                       doctest::Contains("labeled"), AirwayError);
}

TEST_CASE("weighted_mean_score blends the four scores 30/30/20/20") {
  CHECK(weighted_mean_score(1.0, 1.0, 1.0, 1.0) == 1.0);
  CHECK(weighted_mean_score(1.0, 0.0, 0.0, 0.0) == doctest::Approx(0.3));
  CHECK(weighted_mean_score(0.0, 0.0, 1.0, 0.0) == doctest::Approx(0.2));

  // challenge leaderboard rows: td, bd, dsc, pre -> wms, all in percent
  struct Row {
    double td, bd, dsc, pre, wms;
  };
  const Row rows[] = {
      {90.974, 86.670, 94.056, 93.027, 90.710},
      {94.512, 91.920, 94.800, 94.707, 93.831},
      {97.853, 97.129, 92.819, 87.928, 94.644},
      {95.919, 94.729, 93.910, 93.553, 94.687},
      {96.425, 95.479, 93.827, 91.781, 94.693},
  };
  for (const Row& r : rows) {
    const double wms = weighted_mean_score(r.td, r.bd, r.dsc, r.pre);
    CHECK(std::abs(wms - r.wms) <= 0.001);
  }

  CHECK_THROWS_AS(static_cast<void>(weighted_mean_score(-0.1, 0, 0, 0)),
                  AirwayError);
  CHECK_THROWS_AS(static_cast<void>(weighted_mean_score(0, 101.0, 0, 0)),
                  AirwayError);
}

TEST_CASE("evaluate_case scores a perfect prediction as exactly 1") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  EvalReport r = evaluate_case(gt, gt);
  CHECK(r.td == 1.0);
  CHECK(r.bd == 1.0);
  CHECK(r.dsc == 1.0);
  CHECK(r.pre == 1.0);
  CHECK(r.wms == 1.0);
  REQUIRE(r.per_branch.size() == 1);
  CHECK(r.per_branch[0].detected);
  CHECK(r.per_branch[0].label == BranchLabel::Trachea);
  REQUIRE(r.td_large.has_value());
  CHECK(*r.td_large == 1.0);
  CHECK(!r.td_small.has_value());
}

TEST_CASE("evaluate_case flags a branch broken by an interior gap") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  VoxelGrid pred = gt;
  for (int z = 18; z <= 28; ++z)
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < 9; ++x) pred.set(z, y, x, 0.0f);

  EvalReport r = evaluate_case(pred, gt);
  CHECK(r.td < 1.0);
  CHECK(r.dsc < 1.0);
  CHECK(r.pre == 1.0);  // pred is a subset of gt
  REQUIRE(r.per_branch.size() == 1);
  CHECK(r.per_branch[0].detected_fraction < 0.8);
  CHECK(!r.per_branch[0].detected);
  CHECK(r.bd == 0.0);
}

TEST_CASE("evaluate_case: an extra disjoint blob costs precision only") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  VoxelGrid pred = gt;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) pred.set(z, y, x, 1.0f);

  EvalReport r = evaluate_case(pred, gt);
  CHECK(r.td == 1.0);
  CHECK(r.bd == 1.0);
  CHECK(r.pre < 1.0);
  CHECK(r.dsc < 1.0);
  CHECK(r.wms ==
        doctest::Approx(weighted_mean_score(r.td, r.bd, r.dsc, r.pre)));
}

TEST_CASE("evaluate_case is monotone under prediction growth inside gt") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  auto truncated = [&](int z_cut) {
    VoxelGrid p = gt;
    for (int z = z_cut; z < 44; ++z)
      for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) p.set(z, y, x, 0.0f);
    return p;
  };
  EvalReport small = evaluate_case(truncated(25), gt);
  EvalReport big = evaluate_case(truncated(33), gt);
  CHECK(small.td <= big.td);
  CHECK(small.bd <= big.bd);
  CHECK(small.dsc <= big.dsc);
  CHECK(big.td <= 1.0);
}

TEST_CASE("evaluate_case rejects mismatched dims") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  VoxelGrid pred({44, 9, 10}, Spacing{}, GridKind::Binary);
  CHECK_THROWS_AS(static_cast<void>(evaluate_case(pred, gt)), AirwayError);
}

TEST_CASE("report_to_json uses the documented field names") {
  VoxelGrid gt = test::make_cylinder(40, 3, {44, 9, 9}, {2, 4, 4});
  EvalReport r = evaluate_case(gt, gt);
  const nlohmann::json j = nlohmann::json::parse(report_to_json(r));

  CHECK(j.at("td").get<double>() == 1.0);
  CHECK(j.at("bd").get<double>() == 1.0);
  CHECK(j.at("dsc").get<double>() == 1.0);
  CHECK(j.at("pre").get<double>() == 1.0);
  CHECK(j.at("wms").get<double>() == 1.0);
  CHECK(j.at("td_large").get<double>() == 1.0);
  CHECK(j.at("td_small").is_null());  // no segmental branches in a tube
  CHECK(j.at("bd_small").is_null());

  REQUIRE(j.at("per_branch").size() == 1);
  const auto& row = j.at("per_branch").at(0);
  CHECK(row.at("id").get<int>() == 0);
  CHECK(row.at("label").get<std::string>() == "Trachea");
  CHECK(row.at("detected_fraction").get<double>() == 1.0);
  CHECK(row.at("detected").get<bool>() == true);
}
