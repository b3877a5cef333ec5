#pragma once

// Classifiers and metrics: per-class top-1, GZSL U/S/H, feature-space FID,
// correlation incorrectness and attribute histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "adiva/error.hpp"
#include "adiva/nn.hpp"
#include "adiva/tensor.hpp"

namespace adiva::eval {

struct LinearClassifier {
  Mat weight;  // d x K
  RowVec bias;  // K
  std::vector<std::int64_t> classes;

  std::vector<std::int64_t> predict(const Mat& x) const {
    if (x.cols() != weight.rows()) throw shape_mismatch("classifier input width " + std::to_string(x.cols()));
    Mat logits = x * weight;
    logits.rowwise() += bias;
    std::vector<std::int64_t> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      Index k = 0;
      logits.row(i).maxCoeff(&k);
      out[static_cast<std::size_t>(i)] = classes[static_cast<std::size_t>(k)];
    }
    return out;
  }
};

struct ClassifierOptions {
  std::int64_t epochs = 300;
  double lr = 0.05;
  double reg = 1e-4;
};

/// Multinomial logistic regression, zero-initialized, full-batch Adam on
/// mean cross-entropy + reg * ||W||^2. Rows are put in a canonical order
/// first so the fit does not depend on the input order.
inline LinearClassifier fit_classifier(const Mat& x, const std::vector<std::int64_t>& labels,
                                       const std::vector<std::int64_t>& classes, const ClassifierOptions& opt = {}) {
  if (static_cast<Index>(labels.size()) != x.rows()) throw shape_mismatch("fit_classifier: labels vs rows");
  if (classes.empty()) throw data_error("EmptyClass", "empty class set");
  std::map<std::int64_t, Index> col;
  for (std::size_t k = 0; k < classes.size(); ++k) col[classes[k]] = static_cast<Index>(k);
  if (col.size() != classes.size()) throw data_error("InvariantViolation", "duplicate class in class set");
  std::vector<Index> count(classes.size(), 0);
  for (std::int64_t y : labels) {
    auto it = col.find(y);
    if (it == col.end()) throw data_error("UnknownClass", "label " + std::to_string(y) + " not in class set");
    ++count[static_cast<std::size_t>(it->second)];
  }
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (count[k] == 0) throw data_error("EmptyClass", "no samples for class " + std::to_string(classes[k]));
  }

  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (labels[static_cast<std::size_t>(a)] != labels[static_cast<std::size_t>(b)]) {
      return labels[static_cast<std::size_t>(a)] < labels[static_cast<std::size_t>(b)];
    }
    for (Index j = 0; j < x.cols(); ++j) {
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    }
    return false;
  });
  const Index n = x.rows(), d = x.cols(), k = static_cast<Index>(classes.size());
  Mat xs(n, d);
  Mat onehot = Mat::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    xs.row(i) = x.row(src);
    onehot(i, col[labels[static_cast<std::size_t>(src)]]) = 1.0;
  }

  ParamTable params{{"W", Mat::Zero(d, k)}, {"b", Mat::Zero(1, k)}};
  AdamState state;
  AdamConfig adam{opt.lr, 0.9, 0.999, 1e-8};
  for (std::int64_t e = 0; e < opt.epochs; ++e) {
    Mat logits = xs * params["W"];
    logits.rowwise() += params["b"].row(0);
    Mat p = ad::softmax_rows(logits);
    Mat g = (p - onehot) / static_cast<double>(n);
    ParamTable grads{{"W", xs.transpose() * g + 2.0 * opt.reg * params["W"]}, {"b", g.colwise().sum()}};
    adam_step(params, grads, state, adam);
  }
  if (!params["W"].allFinite() || !params["b"].allFinite()) throw numeric_error("NonFiniteOutput", "classifier diverged");
  return {params["W"], params["b"].row(0), classes};
}

/// Mean over `classes` of per-class top-1 accuracy, in percent.
inline double per_class_top1(const std::vector<std::int64_t>& predicted, const std::vector<std::int64_t>& labels,
                             const std::vector<std::int64_t>& classes) {
  if (predicted.size() != labels.size()) throw shape_mismatch("per_class_top1: predictions vs labels");
  if (classes.empty()) throw data_error("EmptyClass", "empty class set");
  double acc = 0.0;
  for (std::int64_t c : classes) {
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++total;
      if (predicted[i] == c) ++correct;
    }
    if (total == 0) throw data_error("EmptyClass", "no samples for class " + std::to_string(c));
    acc += static_cast<double>(correct) / static_cast<double>(total);
  }
  return 100.0 * acc / static_cast<double>(classes.size());
}

inline double per_class_top1(const LinearClassifier& clf, const Mat& x, const std::vector<std::int64_t>& labels,
                             const std::vector<std::int64_t>& classes) {
  return per_class_top1(clf.predict(x), labels, classes);
}

inline double harmonic_mean(double u, double s) { return u + s > 0.0 ? 2.0 * s * u / (s + u) : 0.0; }

struct Gzsl {
  double unseen = 0.0;
  double seen = 0.0;
  double h = 0.0;
};

inline Gzsl gzsl_from(double u, double s) { return {u, s, harmonic_mean(u, s)}; }

/// U and S are per-class top-1 under the joint label space of `clf`.
inline Gzsl gzsl_metrics(const LinearClassifier& clf, const Mat& seen_x, const std::vector<std::int64_t>& seen_y,
                         const std::vector<std::int64_t>& seen_classes, const Mat& unseen_x,
                         const std::vector<std::int64_t>& unseen_y, const std::vector<std::int64_t>& unseen_classes) {
  const double s = per_class_top1(clf, seen_x, seen_y, seen_classes);
  const double u = per_class_top1(clf, unseen_x, unseen_y, unseen_classes);
  return gzsl_from(u, s);
}

// ---------------------------------------------------------------------------
// FID

inline Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)); the trace of the
/// square root is taken on the symmetric form S_a^(1/2) S_b S_a^(1/2).
inline double fid_from_moments(const RowVec& mu_a, const Mat& cov_a, const RowVec& mu_b, const Mat& cov_b) {
  if (mu_a.size() != mu_b.size() || cov_a.rows() != mu_a.size() || cov_b.rows() != mu_b.size()) {
    throw shape_mismatch("fid: moment shapes differ");
  }
  Mat ra = psd_sqrt(cov_a);
  Mat inner = ra * cov_b * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
}

inline std::pair<RowVec, Mat> moments(const Mat& x, double ridge) {
  RowVec mu = x.colwise().mean();
  Mat c = x.rowwise() - mu;
  Mat cov = c.transpose() * c / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += ridge;
  return {mu, cov};
}

inline double fid(const Mat& real, const Mat& fake) {
  if (real.rows() < 2 || fake.rows() < 2) throw data_error("TooFewSamples", "fid needs >= 2 samples per set");
  if (real.cols() != fake.cols() || real.cols() < 1) throw shape_mismatch("fid: feature widths differ");
  auto [mr, cr] = moments(real, 1e-6);
  auto [mf, cf] = moments(fake, 1e-6);
  return fid_from_moments(mr, cr, mf, cf);
}

// ---------------------------------------------------------------------------
// Correlation incorrectness

/// Ranks 1..n with ties given their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rho; 0 when either side is constant.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw shape_mismatch("spearman: need equal lengths >= 2");
  return pearson(average_ranks(a), average_ranks(b));
}

/// C x C Pearson correlation between the class rows of `means`.
inline Mat class_correlation(const Mat& means) {
  Mat c = means.colwise() - means.rowwise().mean();
  Eigen::VectorXd norms = c.rowwise().norm();
  for (Index i = 0; i < norms.size(); ++i) {
    if (!(norms(i) > 0.0)) throw data_error("DegenerateRow", "class row " + std::to_string(i) + " has zero variance");
    c.row(i) /= norms(i);
  }
  return c * c.transpose();
}

/// 1 - mean over rows of Spearman(R_a row, R_b row), diagonal removed.
inline double incorrectness_from_corr(const Mat& ra, const Mat& rb) {
  if (ra.rows() != rb.rows() || ra.rows() != ra.cols() || rb.rows() != rb.cols()) {
    throw shape_mismatch("incorrectness: correlation matrices differ in shape");
  }
  const Index c = ra.rows();
  double total = 0.0;
  for (Index i = 0; i < c; ++i) {
    std::vector<double> a, b;
    for (Index j = 0; j < c; ++j) {
      if (j == i) continue;
      a.push_back(ra(i, j));
      b.push_back(rb(i, j));
    }
    total += spearman(a, b);
  }
  return 1.0 - total / static_cast<double>(c);
}

inline double correlation_incorrectness(const Mat& means_a, const Mat& means_b) {
  if (means_a.rows() != means_b.rows()) throw shape_mismatch("incorrectness: class counts differ");
  if (means_a.rows() < 3) throw data_error("TooFewClasses", "correlation incorrectness needs >= 3 classes");
  return incorrectness_from_corr(class_correlation(means_a), class_correlation(means_b));
}

// ---------------------------------------------------------------------------
// Attribute histograms

struct AttrHistogram {
  std::vector<double> seen;
  std::vector<double> unseen;
  double l1 = 0.0;
};

inline std::vector<double> histogram01(const std::vector<double>& v, std::int64_t bins) {
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  if (v.empty()) return h;
  for (double x : v) {
    auto b = static_cast<std::int64_t>(std::floor(std::clamp(x, 0.0, 1.0) * static_cast<double>(bins)));
    h[static_cast<std::size_t>(std::min(b, bins - 1))] += 1.0;
  }
  for (double& x : h) x /= static_cast<double>(v.size());
  return h;
}

/// Per attribute, normalized histograms over [0,1] of the rows with
/// group 0 (seen) and group 1 (unseen), and their L1 distance.
inline std::vector<AttrHistogram> attr_histograms(const Mat& samples, const std::vector<std::uint8_t>& unseen_group,
                                                  std::int64_t bins) {
  if (bins < 2) throw config_error("RangeError", "hist_bins");
  if (static_cast<Index>(unseen_group.size()) != samples.rows()) throw shape_mismatch("attr_histograms: group length");
  std::vector<AttrHistogram> out;
  for (Index a = 0; a < samples.cols(); ++a) {
    std::vector<double> s, u;
    for (Index i = 0; i < samples.rows(); ++i) (unseen_group[static_cast<std::size_t>(i)] ? u : s).push_back(samples(i, a));
    AttrHistogram h{histogram01(s, bins), histogram01(u, bins), 0.0};
    for (std::size_t b = 0; b < h.seen.size(); ++b) h.l1 += std::abs(h.seen[b] - h.unseen[b]);
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace adiva::eval
