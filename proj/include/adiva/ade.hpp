#pragma once

// Attribute distribution encoder.
//
// A class attribute a is encoded to (mu, log var). Instance-level attributes
// are drawn by reparameterization, z = mu + sqrt(var) * eps, and
//   a_hat = L2normalize(a + lambda * Dropout(z)).

#include <cmath>
#include <string>

#include "adiva/aln.hpp"
#include "adiva/autodiff.hpp"
#include "adiva/nn.hpp"
#include "adiva/rng.hpp"

namespace adiva::ade {

enum class RefVariant { kAsPrinted, kInfoNce };
enum class Norm { kL2, kNone };

struct Options {
  double lambda = 0.1;
  double dropout = 0.1;
  Norm norm = Norm::kL2;
};

inline void init(ParamTable& table, Index num_attributes, Index hidden, Rng& rng) {
  init_linear(table, "ade.enc1", num_attributes, hidden, rng);
  init_linear(table, "ade.mu", hidden, num_attributes, rng);
  init_linear(table, "ade.logvar", hidden, num_attributes, rng);
}

struct EncodedGraph {
  ad::Var mu;      // N x A
  ad::Var logvar;  // N x A
};

inline EncodedGraph encode(Binder& p, ad::Var attrs) {
  ad::Var h = ad::gelu(linear(p, "ade.enc1", attrs));
  return {linear(p, "ade.mu", h), linear(p, "ade.logvar", h)};
}

/// Reparameterized draw. `eps` is N x A standard normal noise; `mask` the
/// dropout mask or nullptr in eval mode.
inline ad::Var sample(ad::Var attrs, const EncodedGraph& enc, const Mat& eps, const Mat* mask, const Options& opt) {
  ad::Var z = ad::add(enc.mu, ad::mul_const(ad::exp(ad::scale(enc.logvar, 0.5)), eps));
  if (mask) z = ad::mul_const(z, *mask);
  ad::Var pre = ad::add(attrs, ad::scale(z, opt.lambda));
  return opt.norm == Norm::kL2 ? ad::row_l2_normalize(pre) : pre;
}

struct SemLossGraph {
  ad::Var total;
  ad::Var rec;
  ad::Var kl;
};

/// L_rec = mean |a_hat - a| over attributes and batch;
/// L_KL = 1/2 sum_i (mu^2 + var - log var - 1), averaged over the batch.
inline SemLossGraph sem_loss(ad::Var a_hat, ad::Var attrs, const EncodedGraph& enc, double beta) {
  const double n = static_cast<double>(attrs.rows());
  ad::Var rec = ad::mean(ad::abs(ad::sub(a_hat, attrs)));
  ad::Var per = ad::add_scalar(ad::sub(ad::add(ad::square(enc.mu), ad::exp(enc.logvar)), enc.logvar), -1.0);
  ad::Var kl = ad::scale(ad::sum(per), 0.5 / n);
  return {ad::add(rec, ad::scale(kl, beta)), rec, kl};
}

/// Gaussian negative log-likelihood of per-instance attribute targets under
/// the pre-normalization sampling distribution N(a + lambda mu, lambda^2 var),
/// averaged over entries (constant terms dropped).
inline ad::Var variance_fit_loss(ad::Var attrs, const EncodedGraph& enc, ad::Var targets, double lambda) {
  if (targets.rows() != attrs.rows() || targets.cols() != attrs.cols()) throw shape_mismatch("variance_fit_loss: target shape");
  const double l = lambda > 0.0 ? lambda : 1.0;
  ad::Var resid = ad::sub(ad::sub(targets, attrs), ad::scale(enc.mu, l));
  ad::Var quad = ad::scale(ad::mul(ad::square(resid), ad::exp(ad::scale(enc.logvar, -1.0))), 1.0 / (l * l));
  return ad::scale(ad::mean(ad::add(quad, enc.logvar)), 0.5);
}

inline void check_temperature(double tau, const char* key) {
  if (!(tau > 0.0)) throw config_error("NonPositiveTemperature", key);
}

/// Refinement loss between sampled attributes (rows of `a_hat`) and their
/// grounded counterparts. kAsPrinted normalizes each positive against the
/// sampled batch {a_hat_j}; kInfoNce against the grounded batch {a_bar_j}.
inline ad::Var ref_loss(ad::Var a_hat, ad::Var a_bar, double tau, RefVariant variant) {
  check_temperature(tau, "tau_ref");
  if (a_hat.rows() != a_bar.rows() || a_hat.cols() != a_bar.cols()) throw shape_mismatch("ref_loss: batches differ in shape");
  if (a_hat.rows() < 1) throw shape_mismatch("ref_loss: empty batch");
  ad::Var pos = ad::scale(ad::row_dot(a_hat, a_bar), 1.0 / tau);
  ad::Var others = variant == RefVariant::kAsPrinted ? a_hat : a_bar;
  ad::Var denom = ad::row_logsumexp(ad::scale(ad::matmul(a_hat, ad::transpose(others)), 1.0 / tau));
  return ad::mean(ad::sub(denom, pos));
}

// ---------------------------------------------------------------------------
// Value API

struct Distribution {
  RowVec base;
  RowVec mu;
  RowVec var;
};

inline Distribution encode(const RowVec& attrs, const ParamTable& params) {
  if (!attrs.allFinite()) throw numeric_error("NonFiniteInput", "ade encode input");
  ad::Graph g;
  Binder p(g, params, [](const std::string&) { return false; });
  EncodedGraph e = encode(p, g.constant(attrs));
  Distribution d{attrs, e.mu.value().row(0), e.logvar.value().row(0).array().exp()};
  if (!d.mu.allFinite() || !d.var.allFinite() || (d.var.array() <= 0.0).any()) {
    throw numeric_error("NonFiniteOutput", "ade encoder produced non-finite or non-positive variance");
  }
  return d;
}

inline RowVec sample(const Distribution& dist, const Options& opt, bool train_mode, Rng& rng) {
  const Index a = dist.base.size();
  ad::Graph g;
  Mat eps = rng.normal_mat(1, a);
  Mat mask;
  if (train_mode) mask = aln::dropout_mask(rng, 1, a, opt.dropout);
  EncodedGraph e{g.constant(dist.mu), g.constant(dist.var.array().log().matrix())};
  return sample(g.constant(dist.base), e, eps, train_mode ? &mask : nullptr, opt).value().row(0);
}

struct SemLoss {
  double total = 0.0;
  double rec = 0.0;
  double kl = 0.0;
};

inline SemLoss sem_loss(const RowVec& a_hat, const RowVec& attrs, const Distribution& dist, double beta) {
  if (a_hat.size() != attrs.size() || dist.mu.size() != attrs.size()) throw shape_mismatch("sem_loss: length mismatch");
  ad::Graph g;
  EncodedGraph e{g.constant(dist.mu), g.constant(dist.var.array().log().matrix())};
  SemLossGraph s = sem_loss(g.constant(a_hat), g.constant(attrs), e, beta);
  return {s.total.scalar(), s.rec.scalar(), s.kl.scalar()};
}

inline double ref_loss(const Mat& a_hat, const Mat& a_bar, double tau, RefVariant variant) {
  ad::Graph g;
  return ref_loss(g.constant(a_hat), g.constant(a_bar), tau, variant).scalar();
}

}  // namespace adiva::ade
