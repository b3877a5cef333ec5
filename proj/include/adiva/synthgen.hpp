#pragma once

// Desk-scale feature sets with planted ground truth.
//
// Per class c: attribute mean a_c ~ U(0,1)^A, variance s_c ~ U(smin^2, smax^2)^A.
// Per instance: t = clip(N(a_c, diag s_c), 0, 1). Each attribute i owns k
// disjoint patches; an owned patch holds t_i * u_i + noise, every other patch
// is pure noise. The global feature mixes t through W and adds a class
// offset b_c, which deliberately breaks the attribute/visual correlation
// structure between classes.
//
// Every planted quantity is rounded to float32 so that the in-memory values
// equal what a ZFC1 roundtrip reproduces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "adiva/feature_store.hpp"
#include "adiva/rng.hpp"
#include "adiva/zfc.hpp"

namespace adiva {

struct SynthSpec {
  std::int64_t num_seen = 20;
  std::int64_t num_unseen = 5;
  std::int64_t num_attributes = 8;
  std::int64_t num_patches = 16;
  std::int64_t visual_dim = 16;
  std::int64_t semantic_dim = 8;
  std::int64_t per_class = 200;
  double sigma_min = 0.05;
  double sigma_max = 0.3;
  std::int64_t patches_per_attr = 1;
  double noise = 0.1;
  double offset_scale = 1.0;
  std::uint64_t seed = 1;

  std::int64_t num_classes() const { return num_seen + num_unseen; }
};

inline void check_spec(const SynthSpec& s) {
  auto fail = [](const std::string& d) { throw config_error("InvalidSpec", d); };
  if (s.num_seen < 1 || s.num_unseen < 1) fail("class counts must be >= 1");
  if (s.num_attributes < 1 || s.num_patches < 1 || s.visual_dim < 1 || s.semantic_dim < 1) fail("dimensions must be >= 1");
  if (s.per_class < 1) fail("per_class must be >= 1");
  if (!(s.sigma_min > 0.0) || s.sigma_max > 0.5 || s.sigma_min > s.sigma_max) fail("sigma range must satisfy 0 < min <= max <= 0.5");
  if (s.patches_per_attr < 1 || s.patches_per_attr * s.num_attributes > s.num_patches) fail("need k >= 1 and k * A <= P");
  if (!(s.noise >= 0.0) || !(s.offset_scale >= 0.0)) fail("noise and offset scale must be >= 0");
}

struct GroundTruth {
  Mat class_attr_means;                       // C x A
  Mat class_attr_vars;                        // C x A
  std::vector<std::vector<Index>> patch_sets;  // A sets of k patch indices
  Mat attr_directions;                        // A x d_v, unit rows
  Mat mixing;                                 // A x d_v
  Mat class_offsets;                          // C x d_v
  Mat instance_attrs;                         // N x A, oracle-only

  bool operator==(const GroundTruth&) const = default;
};

inline std::pair<FeatureSet, GroundTruth> generate(const SynthSpec& spec) {
  check_spec(spec);
  using namespace stream_tag;
  const Index C = spec.num_classes(), A = spec.num_attributes, P = spec.num_patches, dv = spec.visual_dim,
              ds = spec.semantic_dim, n = spec.per_class, k = spec.patches_per_attr;
  const std::uint64_t seed = spec.seed;

  GroundTruth gt;
  gt.class_attr_means.resize(C, A);
  gt.class_attr_vars.resize(C, A);
  gt.class_offsets.resize(C, dv);
  for (Index c = 0; c < C; ++c) {
    Rng rm = Rng::stream(seed, {kClassMean, static_cast<std::uint64_t>(c)});
    Rng rv = Rng::stream(seed, {kClassVar, static_cast<std::uint64_t>(c)});
    Rng ro = Rng::stream(seed, {kOffset, static_cast<std::uint64_t>(c)});
    for (Index i = 0; i < A; ++i) {
      gt.class_attr_means(c, i) = rm.uniform();
      gt.class_attr_vars(c, i) = rv.uniform(spec.sigma_min * spec.sigma_min, spec.sigma_max * spec.sigma_max);
    }
    for (Index j = 0; j < dv; ++j) gt.class_offsets(c, j) = spec.offset_scale * ro.normal();
  }
  gt.class_attr_means = round_to_float(gt.class_attr_means);
  gt.class_attr_vars = round_to_float(gt.class_attr_vars);
  gt.class_offsets = round_to_float(gt.class_offsets);

  Rng rs = Rng::stream(seed, {kSemantic});
  Mat semantic = round_to_float(rs.normal_mat(A, ds, 1.0 / std::sqrt(static_cast<double>(ds))));

  Rng rd = Rng::stream(seed, {kDirections});
  gt.attr_directions = rd.normal_mat(A, dv);
  for (Index i = 0; i < A; ++i) gt.attr_directions.row(i).normalize();
  gt.attr_directions = round_to_float(gt.attr_directions);

  Rng rw = Rng::stream(seed, {kMixing});
  gt.mixing = round_to_float(rw.normal_mat(A, dv, 1.0 / std::sqrt(static_cast<double>(A))));

  Rng ra = Rng::stream(seed, {kAssignment});
  std::vector<Index> perm(static_cast<std::size_t>(P));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = P - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[ra.below(static_cast<std::uint64_t>(i + 1))]);
  std::vector<Index> owner(static_cast<std::size_t>(P), -1);
  gt.patch_sets.assign(static_cast<std::size_t>(A), {});
  for (Index i = 0; i < A; ++i) {
    for (Index r = 0; r < k; ++r) {
      const Index j = perm[static_cast<std::size_t>(i * k + r)];
      gt.patch_sets[static_cast<std::size_t>(i)].push_back(j);
      owner[static_cast<std::size_t>(j)] = i;
    }
    std::sort(gt.patch_sets[static_cast<std::size_t>(i)].begin(), gt.patch_sets[static_cast<std::size_t>(i)].end());
  }

  FeatureSet fs;
  const Index N = C * n;
  fs.features.resize(N, dv);
  fs.patches = Mat(N * P, dv);
  fs.num_patches = P;
  fs.attributes = gt.class_attr_means;
  fs.semantic = semantic;
  gt.instance_attrs.resize(N, A);
  const Index train_count = std::max<Index>(1, static_cast<Index>(std::floor(0.8 * static_cast<double>(n))));

  for (Index c = 0; c < C; ++c) {
    const bool seen = c < spec.num_seen;
    for (Index s = 0; s < n; ++s) {
      const Index row = c * n + s;
      Rng ri = Rng::stream(seed, {kInstance, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(s)});
      RowVec t(A);
      for (Index i = 0; i < A; ++i) {
        const double v = gt.class_attr_means(c, i) + std::sqrt(gt.class_attr_vars(c, i)) * ri.normal();
        t(i) = std::clamp(v, 0.0, 1.0);
      }
      gt.instance_attrs.row(row) = t;
      for (Index j = 0; j < P; ++j) {
        RowVec patch(dv);
        for (Index d = 0; d < dv; ++d) patch(d) = spec.noise * ri.normal();
        const Index o = owner[static_cast<std::size_t>(j)];
        if (o >= 0) patch += t(o) * gt.attr_directions.row(o);
        fs.patches->row(row * P + j) = patch;
      }
      RowVec x = t * gt.mixing + gt.class_offsets.row(c);
      for (Index d = 0; d < dv; ++d) x(d) += spec.noise * ri.normal();
      fs.features.row(row) = x;
      fs.labels.push_back(c);
      fs.train_mask.push_back(seen && s < train_count ? 1 : 0);
      fs.test_mask.push_back(seen && s < train_count ? 0 : 1);
    }
  }
  fs.features = round_to_float(fs.features);
  fs.patches = round_to_float(*fs.patches);
  gt.instance_attrs = round_to_float(gt.instance_attrs);
  for (std::int64_t c = 0; c < C; ++c) (c < spec.num_seen ? fs.seen_classes : fs.unseen_classes).push_back(c);
  return {std::move(fs), std::move(gt)};
}

/// Planted (a_c, s_c) of one class.
inline std::pair<RowVec, RowVec> oracle_attr_stats(const GroundTruth& gt, std::int64_t class_id) {
  if (class_id < 0 || class_id >= gt.class_attr_means.rows()) {
    throw data_error("UnknownClass", "class " + std::to_string(class_id));
  }
  return {gt.class_attr_means.row(class_id), gt.class_attr_vars.row(class_id)};
}

inline zfc::Container to_container(const GroundTruth& gt) {
  zfc::Container c;
  c["gt_means"] = zfc::real_tensor(gt.class_attr_means);
  c["gt_vars"] = zfc::real_tensor(gt.class_attr_vars);
  c["gt_directions"] = zfc::real_tensor(gt.attr_directions);
  c["gt_offsets"] = zfc::real_tensor(gt.class_offsets);
  c["gt_mixing"] = zfc::real_tensor(gt.mixing);
  c["gt_instance_attrs"] = zfc::real_tensor(gt.instance_attrs);
  std::vector<std::int64_t> assign;
  const std::size_t k = gt.patch_sets.empty() ? 0 : gt.patch_sets.front().size();
  for (const auto& set : gt.patch_sets) assign.insert(assign.end(), set.begin(), set.end());
  c["gt_assignment"] = zfc::int_matrix(assign, gt.patch_sets.size(), k);
  return c;
}

inline GroundTruth ground_truth_from(const zfc::Container& c) {
  GroundTruth gt;
  gt.class_attr_means = zfc::to_mat(zfc::get(c, "gt_means"), "gt_means");
  gt.class_attr_vars = zfc::to_mat(zfc::get(c, "gt_vars"), "gt_vars");
  gt.attr_directions = zfc::to_mat(zfc::get(c, "gt_directions"), "gt_directions");
  gt.class_offsets = zfc::to_mat(zfc::get(c, "gt_offsets"), "gt_offsets");
  gt.mixing = zfc::to_mat(zfc::get(c, "gt_mixing"), "gt_mixing");
  gt.instance_attrs = zfc::to_mat(zfc::get(c, "gt_instance_attrs"), "gt_instance_attrs");
  const auto& t = zfc::get(c, "gt_assignment");
  const auto ids = zfc::to_ints(t, "gt_assignment");
  if (t.dims.size() != 2) throw data_error("DimMismatch", "gt_assignment must be A x k");
  const std::size_t a = t.dims[0], k = t.dims[1];
  gt.patch_sets.assign(a, {});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t r = 0; r < k; ++r) gt.patch_sets[i].push_back(ids[i * k + r]);
  return gt;
}

}  // namespace adiva
