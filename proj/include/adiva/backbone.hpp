#pragma once

// Conditional generative backbones.
//
// Any backbone registered here can be driven by the trainer: it exposes a
// conditional generator G(z, c), its own training losses, and which of its
// parameters belong to an adversarial critic (updated on a separate schedule).
// "fvaegan_ref" is the reference f-VAEGAN-style VAE + WGAN hybrid;
// "cvae_ref" is a plain conditional VAE without a critic.

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adiva/autodiff.hpp"
#include "adiva/nn.hpp"

namespace adiva::backbone {

struct Dims {
  Index visual_dim = 0;
  Index condition_dim = 0;
  Index latent_dim = 16;
  Index hidden = 256;
};

struct Options {
  double recon_weight = 1.0;
  double kl_weight = 1.0;
  double adv_weight = 1.0;
  double clip = 0.01;
  int critic_steps = 5;
  bool sigmoid_output = false;
};

/// Frozen stochastic inputs of one loss evaluation.
struct Noise {
  Mat vae_eps;  // N x d_z
  Mat prior_z;  // N x d_z
};

struct Losses {
  ad::Var generator;  // L_G
  ad::Var critic;     // Wasserstein critic objective (minimized by the critic)
  ad::Var recon;
  ad::Var kl;
  ad::Var adv;
};

struct Encoded {
  ad::Var z;
  ad::Var mu;
  ad::Var logvar;
};

/// mean(fake) - mean(real): the critic minimizes this.
inline ad::Var critic_objective(ad::Var real_scores, ad::Var fake_scores) {
  return ad::sub(ad::mean(fake_scores), ad::mean(real_scores));
}

/// 1/2 sum (mu^2 + var - log var - 1), averaged over rows.
inline ad::Var gaussian_kl(ad::Var mu, ad::Var logvar) {
  ad::Var per = ad::add_scalar(ad::sub(ad::add(ad::square(mu), ad::exp(logvar)), logvar), -1.0);
  return ad::scale(ad::sum(per), 0.5 / static_cast<double>(mu.rows()));
}

class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual std::string name() const = 0;
  virtual const Dims& dims() const = 0;
  virtual const Options& options() const = 0;
  virtual void init(ParamTable& table, Rng& rng) const = 0;
  virtual ad::Var generate(Binder& p, ad::Var z, ad::Var cond) const = 0;
  virtual Losses losses(Binder& p, ad::Var real, ad::Var cond, const Noise& noise) const = 0;
  virtual bool has_critic() const = 0;
  virtual bool is_critic_param(const std::string& name) const = 0;

  /// Lipschitz enforcement after a critic update: clamps critic entries.
  void clip_weights(ParamTable& table) const {
    for (auto& [name, value] : table) {
      if (is_critic_param(name)) value = value.cwiseMax(-options().clip).cwiseMin(options().clip);
    }
  }

  Index condition_dim() const { return dims().condition_dim; }
  Index visual_dim() const { return dims().visual_dim; }
  Index latent_dim() const { return dims().latent_dim; }
};

inline void clip_weights(ParamTable& table, double bound) {
  if (!(bound > 0.0)) throw config_error("RangeError", "clip bound must be > 0");
  for (auto& [name, value] : table) {
    if (name.rfind("backbone.critic", 0) == 0) value = value.cwiseMax(-bound).cwiseMin(bound);
  }
}

/// Shared VAE encoder / generator of the reference backbones.
class VaeCore : public Backbone {
 public:
  VaeCore(Dims d, Options o) : dims_(d), opt_(o) {
    if (d.visual_dim < 1 || d.condition_dim < 1 || d.latent_dim < 1 || d.hidden < 1) {
      throw config_error("RangeError", "backbone dimensions must be >= 1");
    }
  }

  const Dims& dims() const override { return dims_; }
  const Options& options() const override { return opt_; }

  void init(ParamTable& t, Rng& rng) const override {
    const Index dv = dims_.visual_dim, dc = dims_.condition_dim, dz = dims_.latent_dim, h = dims_.hidden;
    init_linear(t, "backbone.enc1", dv + dc, h, rng);
    init_linear(t, "backbone.enc_mu", h, dz, rng);
    init_linear(t, "backbone.enc_logvar", h, dz, rng);
    init_linear(t, "backbone.gen1", dz + dc, h, rng);
    init_linear(t, "backbone.gen2", h, dv, rng);
  }

  Encoded vae_encode(Binder& p, ad::Var x, ad::Var cond, const Mat& eps) const {
    check_cond(cond);
    if (x.cols() != dims_.visual_dim) throw shape_mismatch("vae_encode: feature width " + std::to_string(x.cols()));
    ad::Var h = ad::leaky_relu(linear(p, "backbone.enc1", ad::concat_cols({x, cond})));
    ad::Var mu = linear(p, "backbone.enc_mu", h);
    ad::Var lv = linear(p, "backbone.enc_logvar", h);
    ad::Var z = ad::add(mu, ad::mul_const(ad::exp(ad::scale(lv, 0.5)), eps));
    return {z, mu, lv};
  }

  ad::Var generate(Binder& p, ad::Var z, ad::Var cond) const override {
    check_cond(cond);
    if (z.cols() != dims_.latent_dim || z.rows() != cond.rows()) throw shape_mismatch("generate: latent shape " + shape_str(z.value()));
    ad::Var out = linear(p, "backbone.gen2", ad::leaky_relu(linear(p, "backbone.gen1", ad::concat_cols({z, cond}))));
    return opt_.sigmoid_output ? ad::sigmoid(out) : out;
  }

 protected:
  void check_cond(ad::Var cond) const {
    if (cond.cols() != dims_.condition_dim) {
      throw shape_mismatch("condition width " + std::to_string(cond.cols()) + " != " + std::to_string(dims_.condition_dim));
    }
  }

  /// Summed L1 per sample, averaged over the batch.
  static ad::Var l1_recon(ad::Var recon, ad::Var real) {
    return ad::scale(ad::sum(ad::abs(ad::sub(recon, real))), 1.0 / static_cast<double>(real.rows()));
  }

  Dims dims_;
  Options opt_;
};

class FVaeGan final : public VaeCore {
 public:
  using VaeCore::VaeCore;

  std::string name() const override { return "fvaegan_ref"; }
  bool has_critic() const override { return true; }
  bool is_critic_param(const std::string& n) const override { return n.rfind("backbone.critic", 0) == 0; }

  void init(ParamTable& t, Rng& rng) const override {
    VaeCore::init(t, rng);
    init_linear(t, "backbone.critic1", dims_.visual_dim + dims_.condition_dim, dims_.hidden, rng);
    init_linear(t, "backbone.critic2", dims_.hidden, 1, rng);
    clip_weights(t);
  }

  ad::Var discriminate(Binder& p, ad::Var x, ad::Var cond) const {
    check_cond(cond);
    if (x.cols() != dims_.visual_dim) throw shape_mismatch("discriminate: feature width " + std::to_string(x.cols()));
    return linear(p, "backbone.critic2", ad::leaky_relu(linear(p, "backbone.critic1", ad::concat_cols({x, cond}))));
  }

  Losses losses(Binder& p, ad::Var real, ad::Var cond, const Noise& noise) const override {
    if (real.rows() != cond.rows()) throw shape_mismatch("backbone_losses: batch sizes differ");
    Encoded e = vae_encode(p, real, cond, noise.vae_eps);
    Losses l;
    l.recon = l1_recon(generate(p, e.z, cond), real);
    l.kl = gaussian_kl(e.mu, e.logvar);
    ad::Var fake = generate(p, p.graph().constant(noise.prior_z), cond);
    ad::Var d_fake = discriminate(p, fake, cond);
    ad::Var d_real = discriminate(p, real, cond);
    l.critic = critic_objective(d_real, d_fake);
    l.adv = ad::scale(ad::mean(d_fake), -1.0);
    l.generator = ad::add(ad::add(ad::scale(l.recon, opt_.recon_weight), ad::scale(l.kl, opt_.kl_weight)),
                          ad::scale(l.adv, opt_.adv_weight));
    return l;
  }
};

class CVae final : public VaeCore {
 public:
  using VaeCore::VaeCore;

  std::string name() const override { return "cvae_ref"; }
  bool has_critic() const override { return false; }
  bool is_critic_param(const std::string&) const override { return false; }

  Losses losses(Binder& p, ad::Var real, ad::Var cond, const Noise& noise) const override {
    if (real.rows() != cond.rows()) throw shape_mismatch("backbone_losses: batch sizes differ");
    Encoded e = vae_encode(p, real, cond, noise.vae_eps);
    Losses l;
    l.recon = l1_recon(generate(p, e.z, cond), real);
    l.kl = gaussian_kl(e.mu, e.logvar);
    l.adv = p.graph().constant(Mat::Zero(1, 1));
    l.critic = p.graph().constant(Mat::Zero(1, 1));
    l.generator = ad::add(ad::scale(l.recon, opt_.recon_weight), ad::scale(l.kl, opt_.kl_weight));
    return l;
  }
};

// ---------------------------------------------------------------------------
// Registry

using Factory = std::function<std::unique_ptr<Backbone>(const Dims&, const Options&)>;

inline std::map<std::string, Factory>& registry() {
  static std::map<std::string, Factory> r = {
      {"fvaegan_ref", [](const Dims& d, const Options& o) { return std::make_unique<FVaeGan>(d, o); }},
      {"cvae_ref", [](const Dims& d, const Options& o) { return std::make_unique<CVae>(d, o); }},
  };
  return r;
}

inline void register_backbone(const std::string& name, Factory f) { registry()[name] = std::move(f); }

inline std::vector<std::string> registered() {
  std::vector<std::string> out;
  for (const auto& [name, f] : registry()) out.push_back(name);
  return out;
}

inline std::unique_ptr<Backbone> make(const std::string& name, const Dims& d, const Options& o) {
  auto it = registry().find(name);
  if (it == registry().end()) throw config_error("UnknownBackbone", name);
  return it->second(d, o);
}

}  // namespace adiva::backbone
