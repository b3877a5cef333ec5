#pragma once

// End-to-end helpers shared by the command-line tool and the acceptance
// suite: training from a config, evaluation into a MetricsReport, and the
// synthetic-benchmark probes (attention localization, variance recovery).

#include <cstdint>
#include <string>
#include <vector>

#include "adiva/config.hpp"
#include "adiva/feature_store.hpp"
#include "adiva/synthgen.hpp"
#include "adiva/trainer.hpp"
#include "adiva/zsl_eval.hpp"

namespace adiva::pipeline {

struct MetricsReport {
  double acc_czsl = 0.0;
  eval::Gzsl gzsl;
  double fid = 0.0;
  double incorrectness_attr = 0.0;   // class attributes vs class-mean real features
  double incorrectness_prior = 0.0;  // class-mean visual priors vs class-mean real features
  std::vector<eval::AttrHistogram> histograms;
  RunConfig config;
  std::string build_id;
};

inline eval::ClassifierOptions classifier_options(const RunConfig& c) {
  return {c.eval.clf_epochs, c.eval.clf_lr, c.eval.clf_reg};
}

inline std::vector<std::int64_t> concat(std::vector<std::int64_t> a, const std::vector<std::int64_t>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// Class-mean visual priors: mean over `n` synthesis draws of x~ per class.
inline Mat class_mean_priors(const trainer::Model& model, const trainer::ModelState& state, const FeatureSet& fs,
                             const std::vector<std::int64_t>& classes, std::int64_t n, std::uint64_t seed) {
  trainer::SynthesisBatch b = trainer::synthesize(model, state, fs, classes, n, seed);
  Mat out(static_cast<Index>(classes.size()), b.x_tilde.cols());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out.row(static_cast<Index>(k)) = b.x_tilde.middleRows(static_cast<Index>(k) * n, n).colwise().mean();
  }
  return out;
}

/// Classifiers on real seen-train + synthesized unseen features; every
/// metric of the report. `fs` must already be in the training feature space.
inline MetricsReport evaluate(const trainer::Model& model, const trainer::ModelState& state, const FeatureSet& fs,
                              const trainer::SynthesisBatch& syn, const std::string& build_id) {
  const RunConfig& cfg = model.config();
  if (syn.features.cols() != fs.visual_dim()) {
    throw shape_mismatch("synthesized width " + std::to_string(syn.features.cols()) + " vs data " +
                         std::to_string(fs.visual_dim()));
  }
  MetricsReport r;
  r.config = cfg;
  r.build_id = build_id;
  const auto opt = classifier_options(cfg);

  std::vector<Index> seen_train = select_samples(fs, fs.train_mask, fs.seen_classes);
  std::vector<Index> seen_test = select_samples(fs, fs.test_mask, fs.seen_classes);
  std::vector<Index> unseen_test = select_samples(fs, fs.test_mask, fs.unseen_classes);
  auto labels_of = [&](const std::vector<Index>& rows) {
    std::vector<std::int64_t> y;
    for (Index i : rows) y.push_back(fs.labels[static_cast<std::size_t>(i)]);
    return y;
  };
  const Mat xs_tr = gather_rows(fs.features, seen_train), xs_te = gather_rows(fs.features, seen_test);
  const Mat xu_te = gather_rows(fs.features, unseen_test);
  const auto ys_tr = labels_of(seen_train), ys_te = labels_of(seen_test), yu_te = labels_of(unseen_test);

  eval::LinearClassifier czsl = eval::fit_classifier(syn.features, syn.labels, fs.unseen_classes, opt);
  r.acc_czsl = eval::per_class_top1(czsl, xu_te, yu_te, fs.unseen_classes);

  Mat xg(xs_tr.rows() + syn.features.rows(), fs.visual_dim());
  xg << xs_tr, syn.features;
  eval::LinearClassifier gzsl = eval::fit_classifier(xg, concat(ys_tr, syn.labels),
                                                     concat(fs.seen_classes, fs.unseen_classes), opt);
  r.gzsl = eval::gzsl_metrics(gzsl, xs_te, ys_te, fs.seen_classes, xu_te, yu_te, fs.unseen_classes);

  r.fid = eval::fid(xu_te, syn.features);

  std::vector<std::int64_t> all(static_cast<std::size_t>(fs.num_classes()));
  for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<std::int64_t>(c);
  const Mat real_means = class_means(fs, all, MeanSelector::kFeatures);
  r.incorrectness_attr = eval::correlation_incorrectness(fs.attributes, real_means);
  r.incorrectness_prior =
      eval::correlation_incorrectness(class_mean_priors(model, state, fs, all, 50, cfg.seed), real_means);

  trainer::SynthesisBatch draws = trainer::synthesize(model, state, fs, all, 100, cfg.seed + 1);
  std::vector<std::uint8_t> group;
  for (std::int64_t y : draws.labels) {
    group.push_back(std::find(fs.unseen_classes.begin(), fs.unseen_classes.end(), y) != fs.unseen_classes.end());
  }
  r.histograms = eval::attr_histograms(draws.a_hat, group, cfg.eval.hist_bins);
  return r;
}

inline json to_json(const MetricsReport& r) {
  json hist = json::array();
  for (const auto& h : r.histograms) hist.push_back({{"seen", h.seen}, {"unseen", h.unseen}, {"l1", h.l1}});
  return json{{"acc_czsl", r.acc_czsl},
              {"U", r.gzsl.unseen},
              {"S", r.gzsl.seen},
              {"H", r.gzsl.h},
              {"fid", r.fid},
              {"incorrectness", {{"attributes_vs_real", r.incorrectness_attr}, {"priors_vs_real", r.incorrectness_prior}}},
              {"histograms", hist},
              {"seed", r.config.seed},
              {"config_hash", config_hash(r.config)},
              {"build_id", r.build_id},
              {"config", to_json(r.config)}};
}

// ---------------------------------------------------------------------------
// Synthetic-benchmark probes

/// M_bar (or the first-pass M) averaged over `rows` in eval mode, A x P.
inline Mat mean_attention(const trainer::Model& model, const trainer::ModelState& state, const FeatureSet& fs,
                          const std::vector<Index>& rows, bool second_pass = true) {
  const Index a = fs.num_attributes(), p = fs.num_patches;
  Mat acc = Mat::Zero(a, p);
  const std::size_t chunk = 128;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    std::vector<Index> idx(rows.begin() + static_cast<std::ptrdiff_t>(start),
                           rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), start + chunk)));
    trainer::Batch b = trainer::make_batch(fs, idx);
    ad::Graph g;
    Binder bind(g, state.params, [](const std::string&) { return false; });
    aln::Graph out = aln::forward(bind, g.constant(fs.semantic), g.constant(b.patches), g.constant(b.attrs), b.size(),
                                  model.aln_options(), nullptr);
    const Mat& m = second_pass ? out.similarity_bar.value() : out.similarity.value();
    for (Index k = 0; k < b.size(); ++k) acc += m.middleRows(k * a, a);
  }
  return acc / static_cast<double>(rows.size());
}

/// Fraction of attributes whose argmax patch of the mean attention map lies
/// in the planted patch set.
inline double localization_hit_rate(const Mat& mean_attn, const GroundTruth& gt) {
  Index hits = 0;
  for (Index a = 0; a < mean_attn.rows(); ++a) {
    Index best = 0;
    mean_attn.row(a).maxCoeff(&best);
    const auto& set = gt.patch_sets[static_cast<std::size_t>(a)];
    if (std::find(set.begin(), set.end(), best) != set.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(mean_attn.rows());
}

/// Spearman correlation between learned per-class variance and the planted
/// variance across every (class, attribute) pair.
inline double variance_recovery(const trainer::ModelState& state, const FeatureSet& fs, const GroundTruth& gt) {
  auto [mu, var] = trainer::class_distributions(state, fs.attributes);
  std::vector<double> learned(var.data(), var.data() + var.size());
  std::vector<double> planted(gt.class_attr_vars.data(), gt.class_attr_vars.data() + gt.class_attr_vars.size());
  return eval::spearman(learned, planted);
}

}  // namespace adiva::pipeline
