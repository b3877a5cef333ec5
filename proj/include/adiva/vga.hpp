#pragma once

// Visual-guided alignment: projects sampled attributes into the visual space
// (visual priors) and aligns them contrastively with real features.

#include <string>

#include "adiva/ade.hpp"
#include "adiva/autodiff.hpp"
#include "adiva/nn.hpp"

namespace adiva::vga {

enum class AlignVariant { kAsPrinted, kInfoNce };

inline void init(ParamTable& table, Index num_attributes, Index hidden, Index visual_dim, Rng& rng) {
  init_linear(table, "vga.fc1", num_attributes, hidden, rng);
  init_layer_norm(table, "vga.ln", hidden);
  init_linear(table, "vga.fc2", hidden, visual_dim, rng);
}

/// Linear -> LayerNorm -> GELU -> Linear. Output is not normalized.
inline ad::Var project(Binder& p, ad::Var a_hat) {
  return linear(p, "vga.fc2", ad::gelu(layer_norm(p, "vga.ln", linear(p, "vga.fc1", a_hat))));
}

/// Contrastive alignment on L2-normalized rows.
///   kInfoNce:   -mean_i log softmax_j(x~_i . x_j / tau)[i]
///   kAsPrinted: -mean_i log [exp(x~_i . x_i / tau) / sum_j exp(x~_j . x_j / tau)]
inline ad::Var align_loss(ad::Var priors, ad::Var real, double tau, AlignVariant variant) {
  ade::check_temperature(tau, "tau_align");
  if (priors.rows() != real.rows() || priors.cols() != real.cols()) throw shape_mismatch("align_loss: batches differ in shape");
  if (priors.rows() < 1) throw shape_mismatch("align_loss: empty batch");
  ad::Var pn = ad::row_l2_normalize(priors);
  ad::Var rn = ad::row_l2_normalize(real);
  ad::Var diag = ad::scale(ad::row_dot(pn, rn), 1.0 / tau);
  if (variant == AlignVariant::kInfoNce) {
    ad::Var logits = ad::scale(ad::matmul(pn, ad::transpose(rn)), 1.0 / tau);
    return ad::mean(ad::sub(ad::row_logsumexp(logits), diag));
  }
  return ad::sub(ad::row_logsumexp(ad::transpose(diag)), ad::mean(diag));
}

inline Mat project(const Mat& a_hat, const ParamTable& params) {
  ad::Graph g;
  Binder p(g, params, [](const std::string&) { return false; });
  return project(p, g.constant(a_hat)).value();
}

inline double align_loss(const Mat& priors, const Mat& real, double tau, AlignVariant variant) {
  ad::Graph g;
  return align_loss(g.constant(priors), g.constant(real), tau, variant).scalar();
}

}  // namespace adiva::vga
