#pragma once

// Joint training of ALN + ADE + VGA + backbone, unseen-class synthesis,
// checkpoints and the finite-difference gradient check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "adiva/ade.hpp"
#include "adiva/aln.hpp"
#include "adiva/backbone.hpp"
#include "adiva/config.hpp"
#include "adiva/feature_store.hpp"
#include "adiva/nn.hpp"
#include "adiva/rng.hpp"
#include "adiva/vga.hpp"
#include "adiva/zfc.hpp"

namespace adiva::trainer {

inline constexpr std::int64_t kCheckpointVersion = 1;

struct Components {
  double generator = 0.0;
  double loc = 0.0;
  double sem = 0.0;
  double ref = 0.0;
  double align = 0.0;
  double var = 0.0;
};

/// L_G + L_loc + L_sem + lambda_ref L_ref + lambda_align L_align.
inline double total_loss(const Components& c, const Hyper& h) {
  const double parts[] = {c.generator, c.loc, c.sem, c.ref, c.align, c.var};
  for (double v : parts) {
    if (!std::isfinite(v)) throw numeric_error("NonFinite", "total_loss: non-finite component");
  }
  const double base = c.generator + c.loc + c.sem + h.lambda_ref * c.ref + h.lambda_align * c.align;
  return h.lambda_var > 0.0 ? base + h.lambda_var * c.var : base;
}

struct DataDims {
  Index num_attributes = 0;
  Index num_patches = 0;
  Index visual_dim = 0;
  Index semantic_dim = 0;
};

inline DataDims dims_of(const FeatureSet& fs) {
  if (!fs.patches) throw data_error("MissingTensor", "patches are required for training");
  return {fs.num_attributes(), fs.num_patches, fs.visual_dim(), fs.semantic_dim()};
}

struct ModelState {
  ParamTable params;
  AdamState gen;
  AdamState critic;
  std::int64_t step = 0;
  std::int64_t epoch = 0;

  /// Every per-step draw is keyed by the step counter, so it is the cursor.
  std::int64_t rng_cursor() const { return step; }

  bool operator==(const ModelState& o) const {
    return params == o.params && gen.m == o.gen.m && gen.v == o.gen.v && gen.t == o.gen.t && critic.m == o.critic.m &&
           critic.v == o.critic.v && critic.t == o.critic.t && step == o.step && epoch == o.epoch;
  }
};

struct Batch {
  Mat features;  // B x d_v
  Mat patches;   // (B*P) x d_v
  Mat attrs;     // B x A, class attribute rows
  std::vector<std::int64_t> labels;

  Index size() const { return features.rows(); }
};

inline Batch make_batch(const FeatureSet& fs, const std::vector<Index>& rows) {
  if (!fs.patches) throw data_error("MissingTensor", "patches");
  const Index b = static_cast<Index>(rows.size()), p = fs.num_patches;
  Batch out;
  out.features = gather_rows(fs.features, rows);
  out.patches.resize(b * p, fs.visual_dim());
  out.attrs.resize(b, fs.num_attributes());
  for (Index k = 0; k < b; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    out.patches.middleRows(k * p, p) = fs.patch_block(i);
    const std::int64_t y = fs.labels[static_cast<std::size_t>(i)];
    out.attrs.row(k) = fs.attributes.row(y);
    out.labels.push_back(y);
  }
  return out;
}

/// Frozen draws of one joint-loss evaluation.
struct StepNoise {
  Mat aln_mask;   // (B*A) x d_s, empty when dropout is off
  Mat ade_eps;    // B x A
  Mat ade_mask;   // B x A, empty when dropout is off
  Mat vae_eps;    // B x d_z
  Mat prior_z;    // B x d_z
};

struct LossGraph {
  ad::Var generator, loc, sem, ref, align, var, total, critic;
  ad::Var a_hat, x_tilde, grounded;
  backbone::Losses bb;
};

struct LossReport {
  double generator = 0.0, loc = 0.0, sem = 0.0, ref = 0.0, align = 0.0, var = 0.0, total = 0.0;
  double critic = 0.0, recon = 0.0, kl = 0.0, adv = 0.0;
};

inline void accumulate(LossReport& acc, const LossReport& r) {
  acc.generator += r.generator;
  acc.loc += r.loc;
  acc.sem += r.sem;
  acc.ref += r.ref;
  acc.align += r.align;
  acc.var += r.var;
  acc.total += r.total;
  acc.critic += r.critic;
  acc.recon += r.recon;
  acc.kl += r.kl;
  acc.adv += r.adv;
}

inline LossReport scaled(LossReport r, double s) {
  r.generator *= s;
  r.loc *= s;
  r.sem *= s;
  r.ref *= s;
  r.align *= s;
  r.var *= s;
  r.total *= s;
  r.critic *= s;
  r.recon *= s;
  r.kl *= s;
  r.adv *= s;
  return r;
}

struct EpochRecord {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  LossReport mean;
};

inline json to_json(const LossReport& r) {
  json j{{"L_G", r.generator}, {"L_loc", r.loc},   {"L_sem", r.sem},       {"L_ref", r.ref},
         {"L_align", r.align}, {"total", r.total}, {"critic", r.critic}, {"recon", r.recon},
         {"kl", r.kl},         {"adv", r.adv}};
  if (r.var != 0.0) j["L_var"] = r.var;
  return j;
}

/// Architecture plus configuration; stateless apart from construction.
class Model {
 public:
  Model(RunConfig cfg, DataDims dims) : cfg_(std::move(cfg)), dims_(dims) {
    if (dims_.num_attributes < 1 || dims_.num_patches < 1 || dims_.visual_dim < 1 || dims_.semantic_dim < 1) {
      throw shape_mismatch("model dimensions must be >= 1");
    }
    aln_dims_ = {dims_.semantic_dim, dims_.visual_dim,
                 cfg_.model.attn_dim > 0 ? cfg_.model.attn_dim : dims_.semantic_dim,
                 cfg_.model.mlp_dim > 0 ? cfg_.model.mlp_dim : 2 * dims_.semantic_dim};
    backbone::Dims bd{dims_.visual_dim, condition_dim(), cfg_.model.latent_dim, cfg_.model.backbone_hidden};
    backbone::Options bo{cfg_.model.recon_weight, cfg_.model.kl_weight, cfg_.model.adv_weight, cfg_.model.clip,
                         static_cast<int>(cfg_.hyper.n_critic), cfg_.model.sigmoid_output};
    backbone_ = backbone::make(cfg_.model.backbone, bd, bo);
  }

  const RunConfig& config() const { return cfg_; }
  const DataDims& dims() const { return dims_; }
  const backbone::Backbone& backbone() const { return *backbone_; }

  Index condition_dim() const {
    switch (cfg_.flags.condition) {
      case ConditionSet::kAttr:
      case ConditionSet::kAHat:
        return dims_.num_attributes;
      case ConditionSet::kXTilde:
        return dims_.visual_dim;
      case ConditionSet::kBoth:
        break;
    }
    return dims_.num_attributes + dims_.visual_dim;
  }

  ade::Options ade_options() const { return {cfg_.hyper.lambda, cfg_.model.ade_dropout, cfg_.flags.ade_norm}; }
  aln::Options aln_options() const {
    return {cfg_.model.aln_dropout, cfg_.flags.second_pass, cfg_.flags.loc_on_second_pass};
  }

  ModelState init_state() const {
    ModelState s;
    Rng rng = Rng::stream(cfg_.seed, {stream_tag::kInit});
    aln::init(s.params, aln_dims_, rng);
    ade::init(s.params, dims_.num_attributes, cfg_.model.ade_hidden, rng);
    vga::init(s.params, dims_.num_attributes, cfg_.model.vga_hidden, dims_.visual_dim, rng);
    backbone_->init(s.params, rng);
    return s;
  }

  bool is_critic(const std::string& name) const { return backbone_->is_critic_param(name); }

  StepNoise draw_noise(Rng& rng, Index batch) const {
    StepNoise n;
    const Index a = dims_.num_attributes, dz = cfg_.model.latent_dim;
    if (cfg_.model.aln_dropout > 0.0) n.aln_mask = aln::dropout_mask(rng, batch * a, dims_.semantic_dim, cfg_.model.aln_dropout);
    n.ade_eps = rng.normal_mat(batch, a);
    if (cfg_.model.ade_dropout > 0.0) n.ade_mask = aln::dropout_mask(rng, batch, a, cfg_.model.ade_dropout);
    n.vae_eps = rng.normal_mat(batch, dz);
    n.prior_z = rng.normal_mat(batch, dz);
    return n;
  }

  /// Generator condition for the configured condition set.
  ad::Var condition(ad::Var attrs, ad::Var a_hat, ad::Var x_tilde) const {
    if (cfg_.flags.condition_normalized && cfg_.flags.condition != ConditionSet::kAttr &&
        cfg_.flags.condition != ConditionSet::kAHat) {
      x_tilde = ad::row_l2_normalize(x_tilde);
    }
    switch (cfg_.flags.condition) {
      case ConditionSet::kAttr:
        return cfg_.flags.ade_norm == ade::Norm::kL2 ? ad::row_l2_normalize(attrs) : attrs;
      case ConditionSet::kAHat:
        return a_hat;
      case ConditionSet::kXTilde:
        return x_tilde;
      case ConditionSet::kBoth:
        break;
    }
    return ad::concat_cols({a_hat, x_tilde});
  }

  /// Full joint loss on `batch` under frozen `noise`.
  LossGraph losses(Binder& p, const Batch& batch, const Mat& semantic, const StepNoise& noise) const {
    ad::Graph& g = p.graph();
    const Index b = batch.size();
    const Hyper& h = cfg_.hyper;
    ad::Var x = g.constant(batch.features);
    ad::Var attrs = g.constant(batch.attrs);

    LossGraph out;
    aln::Graph loc = aln::forward(p, g.constant(semantic), g.constant(batch.patches), attrs, b, aln_options(),
                                  noise.aln_mask.size() ? &noise.aln_mask : nullptr);
    out.loc = loc.loc_loss;
    out.grounded = loc.grounded;

    ade::EncodedGraph enc = ade::encode(p, attrs);
    out.a_hat = ade::sample(attrs, enc, noise.ade_eps, noise.ade_mask.size() ? &noise.ade_mask : nullptr, ade_options());
    out.sem = ade::sem_loss(out.a_hat, attrs, enc, h.beta).total;
    out.ref = ade::ref_loss(out.a_hat, ad::row_l2_normalize(loc.grounded), h.tau_ref, cfg_.flags.ref_variant);

    out.x_tilde = vga::project(p, out.a_hat);
    out.align = vga::align_loss(out.x_tilde, x, h.tau_align, cfg_.flags.align_variant);

    backbone::Noise bn{noise.vae_eps, noise.prior_z};
    out.bb = backbone_->losses(p, x, condition(attrs, out.a_hat, out.x_tilde), bn);
    out.generator = out.bb.generator;
    out.critic = out.bb.critic;
    out.total = ad::add(ad::add(ad::add(out.generator, out.loc), out.sem),
                        ad::add(ad::scale(out.ref, h.lambda_ref), ad::scale(out.align, h.lambda_align)));
    if (h.lambda_var > 0.0) {
      Mat pooled = loc.similarity.value().rowwise().maxCoeff();
      ad::Var targets = g.constant(Eigen::Map<const Mat>(pooled.data(), b, dims_.num_attributes));
      out.var = ade::variance_fit_loss(attrs, enc, targets, h.lambda);
      out.total = ad::add(out.total, ad::scale(out.var, h.lambda_var));
    } else {
      out.var = g.constant(Mat::Zero(1, 1));
    }
    return out;
  }

  /// Critic objective only; the condition path enters as constants.
  ad::Var critic_loss(Binder& p, const Batch& batch, const StepNoise& noise) const {
    ad::Graph& g = p.graph();
    ad::Var x = g.constant(batch.features);
    ad::Var attrs = g.constant(batch.attrs);
    ade::EncodedGraph enc = ade::encode(p, attrs);
    ad::Var a_hat = ade::sample(attrs, enc, noise.ade_eps, noise.ade_mask.size() ? &noise.ade_mask : nullptr, ade_options());
    ad::Var x_tilde = vga::project(p, a_hat);
    return backbone_->losses(p, x, condition(attrs, a_hat, x_tilde), {noise.vae_eps, noise.prior_z}).critic;
  }

 private:
  RunConfig cfg_;
  DataDims dims_;
  aln::Dims aln_dims_;
  std::unique_ptr<backbone::Backbone> backbone_;
};

inline void check_finite_params(const ParamTable& t, std::int64_t step) {
  for (const auto& [name, v] : t) {
    if (!v.allFinite()) throw numeric_error("NonFiniteLoss", "step " + std::to_string(step) + ": parameter " + name);
  }
}

inline void check_component(double v, std::int64_t step, const char* name) {
  if (!std::isfinite(v)) throw numeric_error("NonFiniteLoss", "step " + std::to_string(step) + ": " + name);
}

/// n_critic critic updates with clipping, then one joint update of every
/// non-critic parameter on the total loss.
inline LossReport train_step(const Model& model, ModelState& state, const Batch& batch, const Mat& semantic) {
  const RunConfig& cfg = model.config();
  const std::uint64_t seed = cfg.seed;
  const auto step = static_cast<std::uint64_t>(state.step);
  AdamConfig adam{cfg.hyper.lr, cfg.hyper.adam_beta1, cfg.hyper.adam_beta2};
  LossReport r;

  if (model.backbone().has_critic()) {
    for (std::int64_t k = 0; k < cfg.hyper.n_critic; ++k) {
      Rng rng = Rng::stream(seed, {stream_tag::kCriticNoise, step, static_cast<std::uint64_t>(k)});
      StepNoise noise = model.draw_noise(rng, batch.size());
      ad::Graph g;
      Binder p(g, state.params, [&](const std::string& n) { return model.is_critic(n); });
      ad::Var loss = model.critic_loss(p, batch, noise);
      check_component(loss.scalar(), state.step, "critic");
      g.backward(loss);
      adam_step(state.params, p.grads(), state.critic, adam);
      model.backbone().clip_weights(state.params);
      r.critic = loss.scalar();
    }
  }

  Rng rng = Rng::stream(seed, {stream_tag::kStepNoise, step});
  StepNoise noise = model.draw_noise(rng, batch.size());
  ad::Graph g;
  Binder p(g, state.params, [&](const std::string& n) { return !model.is_critic(n); });
  LossGraph l = model.losses(p, batch, semantic, noise);
  r.generator = l.generator.scalar();
  r.loc = l.loc.scalar();
  r.sem = l.sem.scalar();
  r.ref = l.ref.scalar();
  r.align = l.align.scalar();
  r.var = l.var.scalar();
  r.recon = l.bb.recon.scalar();
  r.kl = l.bb.kl.scalar();
  r.adv = l.bb.adv.scalar();
  check_component(r.generator, state.step, "L_G");
  check_component(r.loc, state.step, "L_loc");
  check_component(r.sem, state.step, "L_sem");
  check_component(r.ref, state.step, "L_ref");
  check_component(r.align, state.step, "L_align");
  check_component(r.var, state.step, "L_var");
  r.total = total_loss({r.generator, r.loc, r.sem, r.ref, r.align, r.var}, cfg.hyper);
  if (!model.backbone().has_critic()) r.critic = l.critic.scalar();
  g.backward(l.total);
  adam_step(state.params, p.grads(), state.gen, adam);
  check_finite_params(state.params, state.step);
  state.step += 1;
  return r;
}

/// Seen-class training rows in a seed-deterministic order for `epoch`.
inline std::vector<Index> epoch_order(const FeatureSet& fs, std::uint64_t seed, std::int64_t epoch) {
  std::vector<Index> rows = select_samples(fs, fs.train_mask, fs.seen_classes);
  Rng rng = Rng::stream(seed, {stream_tag::kShuffle, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
  return rows;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains until `state.epoch == target_epoch`, one record per epoch.
inline std::vector<EpochRecord> fit(const Model& model, ModelState& state, const FeatureSet& fs, std::int64_t target_epoch,
                                    const EpochCallback& on_epoch = nullptr) {
  const Index bs = model.config().hyper.batch_size;
  std::vector<EpochRecord> records;
  while (state.epoch < target_epoch) {
    std::vector<Index> rows = epoch_order(fs, model.config().seed, state.epoch);
    if (rows.empty()) throw data_error("EmptyClass", "no seen-class training samples");
    LossReport acc;
    std::int64_t steps = 0;
    for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(bs)) {
      const std::size_t end = std::min(rows.size(), start + static_cast<std::size_t>(bs));
      std::vector<Index> idx(rows.begin() + static_cast<std::ptrdiff_t>(start), rows.begin() + static_cast<std::ptrdiff_t>(end));
      accumulate(acc, train_step(model, state, make_batch(fs, idx), fs.semantic));
      ++steps;
    }
    state.epoch += 1;
    EpochRecord rec{state.epoch, state.step, scaled(acc, 1.0 / static_cast<double>(steps))};
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisBatch {
  Mat features;  // (N_syn * C_u) x d_v
  std::vector<std::int64_t> labels;
  Mat a_hat;     // (N_syn * C_u) x A
  Mat x_tilde;   // (N_syn * C_u) x d_v

  bool operator==(const SynthesisBatch& o) const {
    return features == o.features && labels == o.labels && a_hat == o.a_hat && x_tilde == o.x_tilde;
  }
};

/// N draws conditioned on `classes`; generator noise and ADE noise come from
/// per-class sub-streams of `seed`.
inline SynthesisBatch synthesize(const Model& model, const ModelState& state, const FeatureSet& fs,
                                 const std::vector<std::int64_t>& classes, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw config_error("RangeError", "n_syn");
  const Index a = fs.num_attributes(), dv = model.dims().visual_dim, total = n * static_cast<Index>(classes.size());
  if (a != model.dims().num_attributes) throw shape_mismatch("synthesize: attribute count differs from model");
  SynthesisBatch out;
  out.features.resize(total, dv);
  out.a_hat.resize(total, a);
  out.x_tilde.resize(total, dv);
  const ade::Options opt = model.ade_options();
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const std::int64_t c = classes[k];
    if (c < 0 || c >= fs.num_classes()) throw data_error("UnknownClass", std::to_string(c));
    Rng rng = Rng::stream(seed, {stream_tag::kSynthesis, static_cast<std::uint64_t>(c)});
    Mat eps = rng.normal_mat(n, a);
    Mat mask;
    if (model.config().flags.ade_dropout_at_synthesis && opt.dropout > 0.0) mask = aln::dropout_mask(rng, n, a, opt.dropout);
    Mat z = rng.normal_mat(n, model.config().model.latent_dim);

    ad::Graph g;
    Binder p(g, state.params, [](const std::string&) { return false; });
    ad::Var attrs = g.constant(fs.attributes.row(c).replicate(n, 1));
    ade::EncodedGraph enc = ade::encode(p, attrs);
    ad::Var a_hat = ade::sample(attrs, enc, eps, mask.size() ? &mask : nullptr, opt);
    ad::Var x_tilde = vga::project(p, a_hat);
    ad::Var feats = model.backbone().generate(p, g.constant(z), model.condition(attrs, a_hat, x_tilde));
    const Index off = static_cast<Index>(k) * n;
    out.features.middleRows(off, n) = feats.value();
    out.a_hat.middleRows(off, n) = a_hat.value();
    out.x_tilde.middleRows(off, n) = x_tilde.value();
    out.labels.insert(out.labels.end(), static_cast<std::size_t>(n), c);
  }
  if (!out.features.allFinite()) throw numeric_error("NonFiniteOutput", "synthesized features");
  return out;
}

inline SynthesisBatch synthesize_unseen(const Model& model, const ModelState& state, const FeatureSet& fs, std::uint64_t seed) {
  if (fs.unseen_classes.empty()) throw data_error("EmptyClass", "no unseen classes");
  return synthesize(model, state, fs, fs.unseen_classes, model.config().hyper.n_syn, seed);
}

/// Per-class learned attribute distribution (mu, var), one row per class.
inline std::pair<Mat, Mat> class_distributions(const ModelState& state, const Mat& attributes) {
  ad::Graph g;
  Binder p(g, state.params, [](const std::string&) { return false; });
  ade::EncodedGraph e = ade::encode(p, g.constant(attributes));
  return {e.mu.value(), e.logvar.value().array().exp().matrix()};
}

/// Visual priors of the class attribute rows, taking a_hat at the ADE mean.
inline Mat class_priors(const Model& model, const ModelState& state, const Mat& attributes) {
  ad::Graph g;
  Binder p(g, state.params, [](const std::string&) { return false; });
  ad::Var attrs = g.constant(attributes);
  ade::EncodedGraph e = ade::encode(p, attrs);
  ad::Var a_hat = ad::add(attrs, ad::scale(e.mu, model.config().hyper.lambda));
  if (model.config().flags.ade_norm == ade::Norm::kL2) a_hat = ad::row_l2_normalize(a_hat);
  return vga::project(p, a_hat).value();
}

inline zfc::Container to_container(const SynthesisBatch& b) {
  zfc::Container c;
  c["syn.features"] = zfc::real_tensor(b.features, zfc::DType::kFloat64);
  c["syn.labels"] = zfc::int_tensor(b.labels);
  c["syn.a_hat"] = zfc::real_tensor(b.a_hat, zfc::DType::kFloat64);
  c["syn.x_tilde"] = zfc::real_tensor(b.x_tilde, zfc::DType::kFloat64);
  return c;
}

inline SynthesisBatch synthesis_from(const zfc::Container& c) {
  SynthesisBatch b;
  b.features = zfc::to_mat(zfc::get(c, "syn.features"), "syn.features");
  b.labels = zfc::to_ints(zfc::get(c, "syn.labels"), "syn.labels");
  b.a_hat = zfc::to_mat(zfc::get(c, "syn.a_hat"), "syn.a_hat");
  b.x_tilde = zfc::to_mat(zfc::get(c, "syn.x_tilde"), "syn.x_tilde");
  if (static_cast<Index>(b.labels.size()) != b.features.rows()) throw shape_mismatch("syn.labels length");
  return b;
}

// ---------------------------------------------------------------------------
// Feature normalization

struct FeatureNormStats {
  RowVec shift;
  RowVec scale;
};

/// Applies the configured normalization in place; min-max statistics come
/// from the training split and are returned so other sets can reuse them.
inline FeatureNormStats normalize_features(FeatureSet& fs, FeatureNorm mode, const FeatureNormStats* reuse = nullptr) {
  FeatureNormStats st;
  if (mode == FeatureNorm::kNone) return st;
  if (mode == FeatureNorm::kL2) {
    for (Index i = 0; i < fs.features.rows(); ++i) {
      const double n = fs.features.row(i).norm();
      if (n > 0.0) fs.features.row(i) /= n;
    }
    return st;
  }
  if (reuse) {
    st = *reuse;
  } else {
    std::vector<Index> rows = select_samples(fs, fs.train_mask, fs.seen_classes);
    Mat tr = gather_rows(fs.features, rows);
    st.shift = tr.colwise().minCoeff();
    RowVec span = tr.colwise().maxCoeff() - st.shift;
    st.scale = span.unaryExpr([](double s) { return s > 0.0 ? 1.0 / s : 1.0; });
  }
  for (Index i = 0; i < fs.features.rows(); ++i) {
    fs.features.row(i) = (fs.features.row(i) - st.shift).cwiseProduct(st.scale);
  }
  return st;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline zfc::Container checkpoint_container(const Model& model, const ModelState& s) {
  zfc::Container c;
  for (const auto& [name, v] : s.params) c[name] = zfc::real_tensor(v, zfc::DType::kFloat64);
  auto moments = [&](const AdamState& a, const std::string& tag) {
    for (const auto& [name, v] : a.m) c["adam." + tag + ".m." + name] = zfc::real_tensor(v, zfc::DType::kFloat64);
    for (const auto& [name, v] : a.v) c["adam." + tag + ".v." + name] = zfc::real_tensor(v, zfc::DType::kFloat64);
  };
  moments(s.gen, "gen");
  moments(s.critic, "critic");
  const DataDims& d = model.dims();
  c["meta.version"] = zfc::int_tensor({kCheckpointVersion});
  c["meta.step"] = zfc::int_tensor({s.step});
  c["meta.epoch"] = zfc::int_tensor({s.epoch});
  c["meta.adam_t"] = zfc::int_tensor({s.gen.t, s.critic.t});
  c["meta.dims"] = zfc::int_tensor({d.num_attributes, d.num_patches, d.visual_dim, d.semantic_dim});
  c["meta.config"] = zfc::text_tensor(to_json(model.config()).dump());
  return c;
}

inline void checkpoint_save(const Model& model, const ModelState& s, const std::string& path) {
  zfc::write_file(checkpoint_container(model, s), path);
}

struct Checkpoint {
  RunConfig config;
  DataDims dims;
  ModelState state;
};

inline Checkpoint checkpoint_from(const zfc::Container& c) {
  const auto version = zfc::to_ints(zfc::get(c, "meta.version"), "meta.version");
  if (version.size() != 1 || version[0] != kCheckpointVersion) {
    throw data_error("VersionMismatch", "checkpoint version " + (version.empty() ? std::string("?") : std::to_string(version[0])));
  }
  Checkpoint ck;
  ck.config = parse_config_text(zfc::to_text(zfc::get(c, "meta.config"), "meta.config"));
  const auto d = zfc::to_ints(zfc::get(c, "meta.dims"), "meta.dims");
  if (d.size() != 4) throw data_error("InvariantViolation", "meta.dims must hold 4 entries");
  ck.dims = {d[0], d[1], d[2], d[3]};
  Model model(ck.config, ck.dims);
  ModelState expected = model.init_state();
  for (const auto& [name, v] : expected.params) {
    Mat m = zfc::to_mat(zfc::get(c, name), name);
    if (m.rows() != v.rows() || m.cols() != v.cols()) throw shape_mismatch(name + ": " + shape_str(m) + " vs " + shape_str(v));
    ck.state.params[name] = std::move(m);
  }
  const std::string prefixes[4] = {"adam.gen.m.", "adam.gen.v.", "adam.critic.m.", "adam.critic.v."};
  ParamTable* tables[4] = {&ck.state.gen.m, &ck.state.gen.v, &ck.state.critic.m, &ck.state.critic.v};
  for (const auto& [name, t] : c) {
    for (int k = 0; k < 4; ++k) {
      if (name.rfind(prefixes[k], 0) == 0) (*tables[k])[name.substr(prefixes[k].size())] = zfc::to_mat(t, name);
    }
  }
  ck.state.step = zfc::to_ints(zfc::get(c, "meta.step"), "meta.step").at(0);
  ck.state.epoch = zfc::to_ints(zfc::get(c, "meta.epoch"), "meta.epoch").at(0);
  const auto t = zfc::to_ints(zfc::get(c, "meta.adam_t"), "meta.adam_t");
  if (t.size() != 2) throw data_error("InvariantViolation", "meta.adam_t must hold 2 entries");
  ck.state.gen.t = t[0];
  ck.state.critic.t = t[1];
  return ck;
}

inline Checkpoint checkpoint_load(const std::string& path) { return checkpoint_from(zfc::read_file(path)); }

// ---------------------------------------------------------------------------
// Gradient check

struct TensorError {
  std::string name;
  std::string loss;  // "total" or "critic"
  double max_rel_error = 0.0;
  Index entries = 0;
};

struct GradReport {
  std::vector<TensorError> tensors;
  double max_rel_error = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

using ScalarFn = std::function<double(const ParamTable&)>;
using GradFn = std::function<ParamTable(const ParamTable&)>;

/// Central differences against `grad` for every tensor in `names`; at most
/// `max_entries` entries per tensor, spread evenly.
inline GradReport check_gradients(const ParamTable& params, const std::vector<std::string>& names, const ScalarFn& value,
                                  const GradFn& grad, double eps, Index max_entries, const std::string& loss_name) {
  if (!(eps > 0.0)) throw config_error("RangeError", "gradient check eps must be > 0");
  GradReport rep;
  const ParamTable analytic = grad(params);
  ParamTable work = params;
  for (const std::string& name : names) {
    Mat& w = work.at(name);
    const Mat& ga = param(analytic, name);
    const Index n = w.size();
    const Index stride = std::max<Index>(1, n / std::max<Index>(1, max_entries));
    TensorError te{name, loss_name, 0.0, 0};
    for (Index i = 0; i < n; i += stride) {
      const double orig = w.data()[i];
      w.data()[i] = orig + eps;
      const double up = value(work);
      w.data()[i] = orig - eps;
      const double down = value(work);
      w.data()[i] = orig;
      const double num = (up - down) / (2.0 * eps);
      te.max_rel_error = std::max(te.max_rel_error, relative_error(ga.data()[i], num));
      ++te.entries;
    }
    rep.max_rel_error = std::max(rep.max_rel_error, te.max_rel_error);
    rep.tensors.push_back(te);
  }
  return rep;
}

/// Checks every non-critic tensor on the total loss and every critic tensor
/// on the critic objective, with one frozen noise draw replayed throughout.
inline GradReport gradient_check(const Model& model, const ModelState& state, const Batch& batch, const Mat& semantic,
                                 double eps = 1e-6, Index max_entries = 1 << 30) {
  if (!(eps > 0.0)) throw config_error("RangeError", "gradient check eps must be > 0");
  Rng rng = Rng::stream(model.config().seed, {stream_tag::kStepNoise, static_cast<std::uint64_t>(state.step)});
  const StepNoise noise = model.draw_noise(rng, batch.size());

  std::vector<std::string> gen_names, critic_names;
  for (const auto& [name, v] : state.params) (model.is_critic(name) ? critic_names : gen_names).push_back(name);

  auto total_value = [&](const ParamTable& t) {
    ad::Graph g;
    Binder p(g, t, [](const std::string&) { return false; });
    return model.losses(p, batch, semantic, noise).total.scalar();
  };
  auto total_grad = [&](const ParamTable& t) {
    ad::Graph g;
    Binder p(g, t, [&](const std::string& n) { return !model.is_critic(n); });
    LossGraph l = model.losses(p, batch, semantic, noise);
    g.backward(l.total);
    return p.grads();
  };
  GradReport rep = check_gradients(state.params, gen_names, total_value, total_grad, eps, max_entries, "total");

  if (!critic_names.empty()) {
    auto critic_value = [&](const ParamTable& t) {
      ad::Graph g;
      Binder p(g, t, [](const std::string&) { return false; });
      return model.losses(p, batch, semantic, noise).critic.scalar();
    };
    auto critic_grad = [&](const ParamTable& t) {
      ad::Graph g;
      Binder p(g, t, [&](const std::string& n) { return model.is_critic(n); });
      LossGraph l = model.losses(p, batch, semantic, noise);
      g.backward(l.critic);
      return p.grads();
    };
    GradReport c = check_gradients(state.params, critic_names, critic_value, critic_grad, eps, max_entries, "critic");
    rep.tensors.insert(rep.tensors.end(), c.tensors.begin(), c.tensors.end());
    rep.max_rel_error = std::max(rep.max_rel_error, c.max_rel_error);
  }
  return rep;
}

}  // namespace adiva::trainer
