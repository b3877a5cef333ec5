#pragma once

// Attribute location network.
//
// Attribute semantic rows attend over the visual patches of each sample:
//   M     = (S Wq)(F Wk)^T                           A x P
//   S_bar = softmax_patches(M) (F Wv) + S
//   S_hat = LN2(S_bar + Dropout(MLP(LN1(S_bar))))
//   M_bar = (S_hat Wq)(F Wk)^T,  a_bar = max over patches of M_bar
// Batches stack per-sample blocks: F is (N*P) x d_v, M is (N*A) x P.

#include <cmath>
#include <string>

#include "adiva/autodiff.hpp"
#include "adiva/nn.hpp"
#include "adiva/rng.hpp"

namespace adiva::aln {

struct Dims {
  Index semantic_dim = 0;  // d_s
  Index visual_dim = 0;    // d_v
  Index attn_dim = 0;      // d_h
  Index mlp_dim = 0;       // d_m
};

enum class SecondPassInput { kFused, kResidualOnly };

struct Options {
  double dropout = 0.1;
  SecondPassInput second_pass = SecondPassInput::kFused;
  bool loc_on_second_pass = false;
};

inline void init(ParamTable& table, const Dims& d, Rng& rng) {
  auto proj = [&](const char* name, Index in, Index out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    table[name] = rng.uniform_mat(in, out, -bound, bound);
  };
  proj("aln.Wq", d.semantic_dim, d.attn_dim);
  proj("aln.Wk", d.visual_dim, d.attn_dim);
  proj("aln.Wv", d.visual_dim, d.semantic_dim);
  init_layer_norm(table, "aln.ln1", d.semantic_dim);
  init_layer_norm(table, "aln.ln2", d.semantic_dim);
  init_linear(table, "aln.mlp1", d.semantic_dim, d.mlp_dim, rng);
  init_linear(table, "aln.mlp2", d.mlp_dim, d.semantic_dim, rng);
}

/// Inverted-dropout mask: entries are 0 or 1/(1-rate).
inline Mat dropout_mask(Rng& rng, Index rows, Index cols, double rate) {
  Mat m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  return m;
}

struct Graph {
  ad::Var similarity;  // (N*A) x P, first pass
  ad::Var fused;       // (N*A) x d_s
  ad::Var similarity_bar;
  ad::Var grounded;    // N x A
  ad::Var loc_loss;    // 1 x 1
};

/// Q stacked per sample against patch keys: (N*A) x P.
inline ad::Var similarity(Binder& p, ad::Var queries, ad::Var keys, Index batch) {
  return ad::seg_matmul_abt(ad::matmul(queries, p("aln.Wq")), keys, batch);
}

/// sum over attributes of (max_j M - a)^2, averaged over the batch.
inline ad::Var loc_loss(ad::Var sim, ad::Var attrs) {
  const Index n = attrs.rows(), a = attrs.cols();
  if (sim.rows() != n * a) throw shape_mismatch("loc_loss: similarity rows must equal N*A");
  ad::Var pooled = ad::reshape(ad::row_max(sim), n, a);
  return ad::scale(ad::sum(ad::square(ad::sub(pooled, attrs))), 1.0 / static_cast<double>(n));
}

/// S_hat from stacked semantic rows (N*A) x d_s and first-pass similarity.
/// `mask` is the dropout mask for the MLP branch, or nullptr in eval mode.
inline ad::Var fuse(Binder& p, ad::Var sem_rows, ad::Var sim, ad::Var patches, Index batch, const Mat* mask,
                    ad::Var* residual_out = nullptr) {
  ad::Var values = ad::matmul(patches, p("aln.Wv"));
  ad::Var s_bar = ad::add(ad::seg_matmul_ab(ad::row_softmax(sim), values, batch), sem_rows);
  if (residual_out) *residual_out = s_bar;
  ad::Var h = linear(p, "aln.mlp2", ad::gelu(linear(p, "aln.mlp1", layer_norm(p, "aln.ln1", s_bar))));
  if (mask) h = ad::mul_const(h, *mask);
  return layer_norm(p, "aln.ln2", ad::add(s_bar, h));
}

/// Full batched forward. `semantic` is A x d_s, `patches` (N*P) x d_v,
/// `attrs` N x A class attributes (targets of the localization loss).
inline Graph forward(Binder& p, ad::Var semantic, ad::Var patches, ad::Var attrs, Index batch, const Options& opt,
                     const Mat* mask) {
  const Index a = semantic.rows();
  if (patches.rows() % batch != 0) throw shape_mismatch("aln: patch rows not divisible by batch");
  if (attrs.rows() != batch || attrs.cols() != a) throw shape_mismatch("aln: attribute batch must be N x A");
  ad::Var keys = ad::matmul(patches, p("aln.Wk"));
  ad::Var sem_rows = ad::tile_rows(semantic, batch);

  Graph g;
  g.similarity = ad::seg_matmul_abt(ad::matmul(sem_rows, p("aln.Wq")), keys, batch);
  ad::Var residual;
  g.fused = fuse(p, sem_rows, g.similarity, patches, batch, mask, &residual);
  ad::Var second = opt.second_pass == SecondPassInput::kFused ? g.fused : residual;
  g.similarity_bar = ad::seg_matmul_abt(ad::matmul(second, p("aln.Wq")), keys, batch);
  g.grounded = ad::reshape(ad::row_max(g.similarity_bar), batch, a);
  g.loc_loss = loc_loss(g.similarity, attrs);
  if (opt.loc_on_second_pass) g.loc_loss = ad::add(g.loc_loss, loc_loss(g.similarity_bar, attrs));
  return g;
}

// ---------------------------------------------------------------------------
// Single-sample value API (no gradients).

struct Output {
  Mat similarity;      // A x P
  Mat fused;           // A x d_s
  Mat similarity_bar;  // A x P
  RowVec grounded;     // A
  double loc_loss = 0.0;
};

inline Mat similarity(const Mat& sem_rows, const Mat& patches, const ParamTable& params) {
  ad::Graph g;
  Binder p(g, params, [](const std::string&) { return false; });
  return similarity(p, g.constant(sem_rows), ad::matmul(g.constant(patches), p("aln.Wk")), 1).value();
}

inline double loc_loss(const Mat& sim, const RowVec& attrs) {
  ad::Graph g;
  return loc_loss(g.constant(sim), g.constant(attrs)).scalar();
}

inline Mat fuse(const Mat& sem_rows, const Mat& sim, const Mat& patches, const ParamTable& params, bool train_mode,
                Rng& rng, double dropout = 0.1) {
  ad::Graph g;
  Binder p(g, params, [](const std::string&) { return false; });
  Mat mask;
  if (train_mode) mask = dropout_mask(rng, sem_rows.rows(), sem_rows.cols(), dropout);
  return fuse(p, g.constant(sem_rows), g.constant(sim), g.constant(patches), 1, train_mode ? &mask : nullptr).value();
}

inline Output forward(const Mat& semantic, const Mat& patches, const RowVec& attrs, const ParamTable& params,
                      bool train_mode, Rng& rng, const Options& opt = {}) {
  ad::Graph g;
  Binder p(g, params, [](const std::string&) { return false; });
  Mat mask;
  if (train_mode) mask = dropout_mask(rng, semantic.rows(), semantic.cols(), opt.dropout);
  Graph r = forward(p, g.constant(semantic), g.constant(patches), g.constant(attrs), 1, opt, train_mode ? &mask : nullptr);
  return Output{r.similarity.value(), r.fused.value(), r.similarity_bar.value(), r.grounded.value().row(0),
                r.loc_loss.scalar()};
}

}  // namespace adiva::aln
