#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adiva/tensor.hpp"
#include "adiva/zfc.hpp"

namespace adiva {

/// Precomputed features for one zero-shot benchmark.
///
/// Real tensors carry float32 precision (they are stored as float32 on disk);
/// `patches` stacks the per-sample P x d_v patch blocks into (N*P) x d_v.
struct FeatureSet {
  Mat features;                      // N x d_v
  std::optional<Mat> patches;        // (N*P) x d_v
  Index num_patches = 0;             // P, 0 when patches are absent
  std::vector<std::int64_t> labels;  // N, in [0, C)
  Mat attributes;                    // C x A, entries in [0,1]
  Mat semantic;                      // A x d_s
  std::vector<std::int64_t> seen_classes;
  std::vector<std::int64_t> unseen_classes;
  std::vector<std::uint8_t> train_mask;  // N
  std::vector<std::uint8_t> test_mask;   // N

  Index num_samples() const { return features.rows(); }
  Index num_classes() const { return attributes.rows(); }
  Index num_attributes() const { return attributes.cols(); }
  Index visual_dim() const { return features.cols(); }
  Index semantic_dim() const { return semantic.cols(); }

  /// The P x d_v patch block of sample i.
  Mat patch_block(Index i) const { return patches->middleRows(i * num_patches, num_patches); }

  bool operator==(const FeatureSet& o) const {
    return features == o.features && patches == o.patches && num_patches == o.num_patches && labels == o.labels &&
           attributes == o.attributes && semantic == o.semantic && seen_classes == o.seen_classes &&
           unseen_classes == o.unseen_classes && train_mask == o.train_mask && test_mask == o.test_mask;
  }
};

/// Every invariant violation of `fs`, each naming the tensor and rule. Empty iff valid.
inline std::vector<std::string> validate(const FeatureSet& fs) {
  std::vector<std::string> out;
  const Index n = fs.features.rows();
  const Index c = fs.attributes.rows();
  const Index a = fs.attributes.cols();

  if (!fs.features.allFinite()) out.emplace_back("features: non-finite values");
  if (!fs.attributes.allFinite()) out.emplace_back("attributes: non-finite values");
  if (!fs.semantic.allFinite()) out.emplace_back("semantic: non-finite values");
  if (fs.attributes.size() > 0 && (fs.attributes.minCoeff() < 0.0 || fs.attributes.maxCoeff() > 1.0)) {
    out.emplace_back("attributes out of [0,1]");
  }
  if (fs.semantic.rows() != a) {
    out.emplace_back("semantic: expected " + std::to_string(a) + " rows (one per attribute), got " + std::to_string(fs.semantic.rows()));
  }
  if (static_cast<Index>(fs.labels.size()) != n) out.emplace_back("labels: length differs from features rows");
  if (std::any_of(fs.labels.begin(), fs.labels.end(), [c](std::int64_t y) { return y < 0 || y >= c; })) {
    out.emplace_back("labels: label out of range");
  }
  if (static_cast<Index>(fs.train_mask.size()) != n) out.emplace_back("train_mask: length differs from features rows");
  if (static_cast<Index>(fs.test_mask.size()) != n) out.emplace_back("test_mask: length differs from features rows");
  if (fs.patches) {
    if (fs.num_patches <= 0 || fs.patches->rows() != n * fs.num_patches || fs.patches->cols() != fs.features.cols()) {
      out.emplace_back("patches: shape inconsistent with N x P x d_v");
    } else if (!fs.patches->allFinite()) {
      out.emplace_back("patches: non-finite values");
    }
  }

  std::set<std::int64_t> seen, unseen;
  for (std::int64_t k : fs.seen_classes) {
    if (k < 0 || k >= c) out.emplace_back("seen_classes: class id out of range: " + std::to_string(k));
    if (!seen.insert(k).second) out.emplace_back("seen_classes: duplicate class " + std::to_string(k));
  }
  for (std::int64_t k : fs.unseen_classes) {
    if (k < 0 || k >= c) out.emplace_back("unseen_classes: class id out of range: " + std::to_string(k));
    if (!unseen.insert(k).second) out.emplace_back("unseen_classes: duplicate class " + std::to_string(k));
  }
  for (std::int64_t k : seen) {
    if (unseen.count(k)) out.emplace_back("split overlap: class " + std::to_string(k));
  }
  for (std::int64_t k = 0; k < c; ++k) {
    if (!seen.count(k) && !unseen.count(k)) out.emplace_back("split coverage: class " + std::to_string(k) + " in neither split");
  }
  if (static_cast<Index>(fs.labels.size()) == n && static_cast<Index>(fs.train_mask.size()) == n) {
    for (Index i = 0; i < n; ++i) {
      if (fs.train_mask[static_cast<std::size_t>(i)] && !seen.count(fs.labels[static_cast<std::size_t>(i)])) {
        out.emplace_back("train_mask: sample " + std::to_string(i) + " has a non-seen label");
        break;
      }
    }
  }
  return out;
}

namespace detail {
inline std::vector<std::uint8_t> mask_from(const std::vector<std::int64_t>& v, const std::string& name) {
  std::vector<std::uint8_t> m;
  m.reserve(v.size());
  for (std::int64_t x : v) {
    if (x != 0 && x != 1) throw data_error("InvariantViolation", name + ": mask entries must be 0 or 1");
    m.push_back(static_cast<std::uint8_t>(x));
  }
  return m;
}

inline std::vector<std::int64_t> mask_to(const std::vector<std::uint8_t>& m) { return {m.begin(), m.end()}; }

inline void require_rank(const zfc::Tensor& t, std::size_t rank, const std::string& name) {
  if (t.dims.size() != rank) {
    throw data_error("DimMismatch", name + ": expected rank " + std::to_string(rank) + ", got " + std::to_string(t.dims.size()));
  }
}

inline void require_real(const zfc::Tensor& t, const std::string& name) {
  if (t.dtype != zfc::DType::kFloat32) throw data_error("DtypeMismatch", name + ": expected float32");
}

inline void require_int(const zfc::Tensor& t, const std::string& name) {
  if (t.dtype != zfc::DType::kInt64) throw data_error("DtypeMismatch", name + ": expected int64");
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}
}  // namespace detail

inline zfc::Container to_container(const FeatureSet& fs) {
  zfc::Container c;
  c["features"] = zfc::real_tensor(fs.features);
  c["labels"] = zfc::int_tensor(fs.labels);
  c["attributes"] = zfc::real_tensor(fs.attributes);
  c["semantic"] = zfc::real_tensor(fs.semantic);
  c["seen_classes"] = zfc::int_tensor(fs.seen_classes);
  c["unseen_classes"] = zfc::int_tensor(fs.unseen_classes);
  c["train_mask"] = zfc::int_tensor(detail::mask_to(fs.train_mask));
  c["test_mask"] = zfc::int_tensor(detail::mask_to(fs.test_mask));
  if (fs.patches) {
    zfc::Tensor t = zfc::real_tensor(*fs.patches);
    t.dims = {static_cast<std::uint64_t>(fs.num_samples()), static_cast<std::uint64_t>(fs.num_patches),
              static_cast<std::uint64_t>(fs.patches->cols())};
    c["patches"] = std::move(t);
  }
  return c;
}

inline FeatureSet from_container(const zfc::Container& c) {
  static const char* kRequired[] = {"features", "labels", "attributes", "semantic",
                                    "seen_classes", "unseen_classes", "train_mask", "test_mask"};
  for (const char* name : kRequired) zfc::get(c, name);

  FeatureSet fs;
  const auto& feat = zfc::get(c, "features");
  detail::require_real(feat, "features");
  detail::require_rank(feat, 2, "features");
  fs.features = zfc::to_mat(feat, "features");

  const auto& attr = zfc::get(c, "attributes");
  detail::require_real(attr, "attributes");
  detail::require_rank(attr, 2, "attributes");
  fs.attributes = zfc::to_mat(attr, "attributes");

  const auto& sem = zfc::get(c, "semantic");
  detail::require_real(sem, "semantic");
  detail::require_rank(sem, 2, "semantic");
  fs.semantic = zfc::to_mat(sem, "semantic");

  for (const char* name : {"labels", "seen_classes", "unseen_classes", "train_mask", "test_mask"}) {
    detail::require_int(zfc::get(c, name), name);
    detail::require_rank(zfc::get(c, name), 1, name);
  }
  fs.labels = zfc::get(c, "labels").ints;
  fs.seen_classes = zfc::get(c, "seen_classes").ints;
  fs.unseen_classes = zfc::get(c, "unseen_classes").ints;
  fs.train_mask = detail::mask_from(zfc::get(c, "train_mask").ints, "train_mask");
  fs.test_mask = detail::mask_from(zfc::get(c, "test_mask").ints, "test_mask");

  if (static_cast<Index>(fs.labels.size()) != fs.features.rows()) throw data_error("DimMismatch", "labels length != features rows");
  if (fs.train_mask.size() != fs.labels.size() || fs.test_mask.size() != fs.labels.size()) {
    throw data_error("DimMismatch", "mask length != features rows");
  }
  if (fs.semantic.rows() != fs.attributes.cols()) throw data_error("DimMismatch", "semantic rows != attribute count");

  if (auto it = c.find("patches"); it != c.end()) {
    const auto& p = it->second;
    detail::require_real(p, "patches");
    detail::require_rank(p, 3, "patches");
    if (static_cast<Index>(p.dims[0]) != fs.features.rows() || static_cast<Index>(p.dims[2]) != fs.features.cols()) {
      throw data_error("DimMismatch", "patches must be N x P x d_v");
    }
    fs.num_patches = static_cast<Index>(p.dims[1]);
    fs.patches = zfc::to_mat(p, "patches");
  }

  if (auto v = validate(fs); !v.empty()) throw data_error("InvariantViolation", detail::join(v));
  return fs;
}

inline FeatureSet load_zfc(const std::string& path) { return from_container(zfc::read_file(path)); }

inline void save_zfc(const FeatureSet& fs, const std::string& path) {
  if (auto v = validate(fs); !v.empty()) throw data_error("InvariantViolation", detail::join(v));
  zfc::write_file(to_container(fs), path);
}

enum class MeanSelector { kFeatures, kAttributes };

/// Row k = mean over samples of class `subset[k]` (features), or the class
/// attribute row itself (attributes). `sample_mask`, when given, restricts
/// which samples participate.
inline Mat class_means(const FeatureSet& fs, const std::vector<std::int64_t>& subset, MeanSelector selector,
                       const std::vector<std::uint8_t>* sample_mask = nullptr) {
  if (subset.empty()) throw data_error("EmptyClass", "class subset is empty");
  if (selector == MeanSelector::kAttributes) {
    Mat out(static_cast<Index>(subset.size()), fs.num_attributes());
    for (std::size_t k = 0; k < subset.size(); ++k) out.row(static_cast<Index>(k)) = fs.attributes.row(subset[k]);
    return out;
  }
  Mat out = Mat::Zero(static_cast<Index>(subset.size()), fs.visual_dim());
  for (std::size_t k = 0; k < subset.size(); ++k) {
    Index count = 0;
    for (Index i = 0; i < fs.num_samples(); ++i) {
      if (fs.labels[static_cast<std::size_t>(i)] != subset[k]) continue;
      if (sample_mask && !(*sample_mask)[static_cast<std::size_t>(i)]) continue;
      out.row(static_cast<Index>(k)) += fs.features.row(i);
      ++count;
    }
    if (count == 0) throw data_error("EmptyClass", "no samples for class " + std::to_string(subset[k]));
    out.row(static_cast<Index>(k)) /= static_cast<double>(count);
  }
  return out;
}

/// Indices of samples whose mask bit is set and whose label is in `classes`.
inline std::vector<Index> select_samples(const FeatureSet& fs, const std::vector<std::uint8_t>& mask,
                                         const std::vector<std::int64_t>& classes) {
  std::set<std::int64_t> cs(classes.begin(), classes.end());
  std::vector<Index> out;
  for (Index i = 0; i < fs.num_samples(); ++i) {
    if (mask[static_cast<std::size_t>(i)] && cs.count(fs.labels[static_cast<std::size_t>(i)])) out.push_back(i);
  }
  return out;
}

inline Mat gather_rows(const Mat& m, const std::vector<Index>& rows) {
  Mat out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = m.row(rows[k]);
  return out;
}

}  // namespace adiva
