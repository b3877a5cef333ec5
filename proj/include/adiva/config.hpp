#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "adiva/ade.hpp"
#include "adiva/aln.hpp"
#include "adiva/error.hpp"
#include "adiva/synthgen.hpp"
#include "adiva/vga.hpp"

namespace adiva {

using json = nlohmann::ordered_json;

/// Which vector(s) condition the generator.
enum class ConditionSet { kAttr, kAHat, kXTilde, kBoth };
enum class FeatureNorm { kNone, kMinMax, kL2 };

struct ModelConfig {
  std::int64_t attn_dim = 0;  // 0 -> semantic dim
  std::int64_t mlp_dim = 0;   // 0 -> 2 * semantic dim
  std::int64_t ade_hidden = 64;
  std::int64_t vga_hidden = 64;
  std::int64_t backbone_hidden = 256;
  std::int64_t latent_dim = 16;
  double aln_dropout = 0.1;
  double ade_dropout = 0.1;
  std::string backbone = "fvaegan_ref";
  double recon_weight = 1.0;
  double kl_weight = 1.0;
  double adv_weight = 1.0;
  double clip = 0.01;
  bool sigmoid_output = false;
};

struct Hyper {
  double lambda_ref = 1.0;
  double lambda_align = 1.0;
  double beta = 1.0;
  double lambda = 0.1;
  double tau_ref = 0.1;
  double tau_align = 0.1;
  double lambda_var = 0.0;
  std::int64_t n_syn = 200;
  std::int64_t epochs = 50;
  std::int64_t batch_size = 64;
  double lr = 3e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::int64_t n_critic = 5;
};

struct Flags {
  ade::RefVariant ref_variant = ade::RefVariant::kAsPrinted;
  vga::AlignVariant align_variant = vga::AlignVariant::kInfoNce;
  aln::SecondPassInput second_pass = aln::SecondPassInput::kFused;
  bool loc_on_second_pass = false;
  FeatureNorm feature_norm = FeatureNorm::kNone;
  ConditionSet condition = ConditionSet::kBoth;
  std::string lipschitz = "clip";
  ade::Norm ade_norm = ade::Norm::kL2;
  bool condition_normalized = true;
  bool ade_dropout_at_synthesis = false;
};

struct EvalConfig {
  std::int64_t clf_epochs = 300;
  double clf_lr = 0.05;
  double clf_reg = 1e-4;
  std::int64_t hist_bins = 20;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string preset;
  SynthSpec synth;
  ModelConfig model;
  Hyper hyper;
  Flags flags;
  EvalConfig eval;
};

// ---------------------------------------------------------------------------
// Enum <-> string

namespace detail {
template <typename E>
using EnumTable = std::map<std::string, E>;

inline const EnumTable<ConditionSet>& condition_names() {
  static const EnumTable<ConditionSet> t = {
      {"a", ConditionSet::kAttr}, {"a_hat", ConditionSet::kAHat}, {"x_tilde", ConditionSet::kXTilde}, {"a_hat+x_tilde", ConditionSet::kBoth}};
  return t;
}
inline const EnumTable<FeatureNorm>& feature_norm_names() {
  static const EnumTable<FeatureNorm> t = {{"none", FeatureNorm::kNone}, {"minmax", FeatureNorm::kMinMax}, {"l2", FeatureNorm::kL2}};
  return t;
}
inline const EnumTable<ade::RefVariant>& ref_variant_names() {
  static const EnumTable<ade::RefVariant> t = {{"as_printed", ade::RefVariant::kAsPrinted}, {"infonce", ade::RefVariant::kInfoNce}};
  return t;
}
inline const EnumTable<vga::AlignVariant>& align_variant_names() {
  static const EnumTable<vga::AlignVariant> t = {{"as_printed", vga::AlignVariant::kAsPrinted}, {"infonce", vga::AlignVariant::kInfoNce}};
  return t;
}
inline const EnumTable<aln::SecondPassInput>& second_pass_names() {
  static const EnumTable<aln::SecondPassInput> t = {{"fused", aln::SecondPassInput::kFused},
                                                     {"residual_only", aln::SecondPassInput::kResidualOnly}};
  return t;
}
inline const EnumTable<ade::Norm>& norm_names() {
  static const EnumTable<ade::Norm> t = {{"l2", ade::Norm::kL2}, {"none", ade::Norm::kNone}};
  return t;
}

template <typename E>
std::string name_of(const EnumTable<E>& t, E v) {
  for (const auto& [k, e] : t)
    if (e == v) return k;
  return "?";
}

template <typename E>
E parse_enum(const EnumTable<E>& t, const json& v, const std::string& key) {
  if (!v.is_string()) throw config_error("RangeError", key + ": expected a string");
  auto it = t.find(v.get<std::string>());
  if (it == t.end()) throw config_error("RangeError", key + ": unknown value '" + v.get<std::string>() + "'");
  return it->second;
}

inline double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw config_error("RangeError", key + ": expected a number");
  return v.get<double>();
}

inline std::int64_t as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw config_error("RangeError", key + ": expected an integer");
  return v.get<std::int64_t>();
}

inline bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw config_error("RangeError", key + ": expected a boolean");
  return v.get<bool>();
}

using Setter = std::function<void(const json&)>;

inline void apply(const json& obj, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!obj.is_object()) throw config_error("RangeError", section + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    auto it = setters.find(key);
    const std::string path = section.empty() ? key : section + "." + key;
    if (it == setters.end()) throw config_error("UnknownKey", path);
    it->second(value);
  }
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Presets

/// Hyper-parameter presets of the three reference benchmarks:
/// (n_syn, lambda, lambda_ref, lambda_align, beta). "tiny" shrinks every
/// dimension for smoke runs.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
  struct Row {
    std::int64_t n_syn;
    double lambda, lambda_ref, lambda_align, beta;
  };
  static const std::map<std::string, Row> table = {
      {"awa2", {1800, 0.05, 0.5, 1.0, 0.5}},
      {"cub", {500, 0.1, 1.0, 1.0, 1.0}},
      {"sun", {400, 0.01, 0.1, 1.0, 0.1}},
  };
  if (name == "tiny") {
    cfg.preset = name;
    cfg.synth.num_seen = 4;
    cfg.synth.num_unseen = 3;
    cfg.synth.num_attributes = 4;
    cfg.synth.num_patches = 6;
    cfg.synth.visual_dim = 6;
    cfg.synth.semantic_dim = 4;
    cfg.synth.per_class = 20;
    cfg.model.ade_hidden = 8;
    cfg.model.vga_hidden = 8;
    cfg.model.backbone_hidden = 16;
    cfg.model.latent_dim = 4;
    cfg.hyper.epochs = 2;
    cfg.hyper.batch_size = 16;
    cfg.hyper.n_syn = 10;
    cfg.hyper.n_critic = 1;
    cfg.eval.clf_epochs = 50;
    return;
  }
  auto it = table.find(name);
  if (it == table.end()) throw config_error("RangeError", "preset: unknown preset '" + name + "'");
  cfg.preset = name;
  cfg.hyper.n_syn = it->second.n_syn;
  cfg.hyper.lambda = it->second.lambda;
  cfg.hyper.lambda_ref = it->second.lambda_ref;
  cfg.hyper.lambda_align = it->second.lambda_align;
  cfg.hyper.beta = it->second.beta;
}

inline void check_ranges(const RunConfig& c) {
  auto need = [](bool ok, const std::string& key) {
    if (!ok) throw config_error("RangeError", key);
  };
  const Hyper& h = c.hyper;
  need(h.tau_ref > 0, "tau_ref");
  need(h.tau_align > 0, "tau_align");
  need(h.lambda_ref >= 0, "lambda_ref");
  need(h.lambda_align >= 0, "lambda_align");
  need(h.beta >= 0, "beta");
  need(h.lambda >= 0, "lambda");
  need(h.lambda_var >= 0, "lambda_var");
  need(h.n_syn >= 1, "n_syn");
  need(h.epochs >= 0, "epochs");
  need(h.batch_size >= 1, "batch_size");
  need(h.lr > 0, "lr");
  need(h.adam_beta1 >= 0 && h.adam_beta1 < 1, "adam_beta1");
  need(h.adam_beta2 >= 0 && h.adam_beta2 < 1, "adam_beta2");
  need(h.n_critic >= 0, "n_critic");
  const ModelConfig& m = c.model;
  need(m.attn_dim >= 0, "attn_dim");
  need(m.mlp_dim >= 0, "mlp_dim");
  need(m.ade_hidden >= 1, "ade_hidden");
  need(m.vga_hidden >= 1, "vga_hidden");
  need(m.backbone_hidden >= 1, "backbone_hidden");
  need(m.latent_dim >= 1, "latent_dim");
  need(m.aln_dropout >= 0 && m.aln_dropout < 1, "aln_dropout");
  need(m.ade_dropout >= 0 && m.ade_dropout < 1, "ade_dropout");
  need(m.clip > 0, "clip");
  need(m.recon_weight >= 0 && m.kl_weight >= 0 && m.adv_weight >= 0, "loss weights");
  need(c.flags.lipschitz == "clip" || c.flags.lipschitz == "grad_penalty", "lipschitz");
  if (c.flags.lipschitz == "grad_penalty") {
    throw config_error("RangeError", "lipschitz: grad_penalty needs second-order differentiation, which this build does not provide");
  }
  need(c.eval.clf_epochs >= 1, "clf_epochs");
  need(c.eval.clf_lr > 0, "clf_lr");
  need(c.eval.clf_reg >= 0, "clf_reg");
  need(c.eval.hist_bins >= 2, "hist_bins");
  try {
    check_spec(c.synth);
  } catch (const Error& e) {
    throw config_error("RangeError", "synth: " + e.detail());
  }
}

inline RunConfig config_from_json(const json& root) {
  using namespace detail;
  RunConfig c;
  if (!root.is_object()) throw config_error("ParseError", "top level must be an object");
  if (root.contains("preset")) {
    if (!root["preset"].is_string()) throw config_error("RangeError", "preset: expected a string");
    apply_preset(c, root["preset"].get<std::string>());
  }
  std::map<std::string, Setter> top = {
      {"seed", [&](const json& v) { c.seed = static_cast<std::uint64_t>(as_int(v, "seed")); c.synth.seed = c.seed; }},
      {"preset", [](const json&) {}},
      {"synth", [&](const json& v) {
         SynthSpec& s = c.synth;
         apply(v, "synth", {
             {"num_seen", [&](const json& x) { s.num_seen = as_int(x, "synth.num_seen"); }},
             {"num_unseen", [&](const json& x) { s.num_unseen = as_int(x, "synth.num_unseen"); }},
             {"num_attributes", [&](const json& x) { s.num_attributes = as_int(x, "synth.num_attributes"); }},
             {"num_patches", [&](const json& x) { s.num_patches = as_int(x, "synth.num_patches"); }},
             {"visual_dim", [&](const json& x) { s.visual_dim = as_int(x, "synth.visual_dim"); }},
             {"semantic_dim", [&](const json& x) { s.semantic_dim = as_int(x, "synth.semantic_dim"); }},
             {"per_class", [&](const json& x) { s.per_class = as_int(x, "synth.per_class"); }},
             {"sigma_min", [&](const json& x) { s.sigma_min = as_double(x, "synth.sigma_min"); }},
             {"sigma_max", [&](const json& x) { s.sigma_max = as_double(x, "synth.sigma_max"); }},
             {"patches_per_attr", [&](const json& x) { s.patches_per_attr = as_int(x, "synth.patches_per_attr"); }},
             {"noise", [&](const json& x) { s.noise = as_double(x, "synth.noise"); }},
             {"offset_scale", [&](const json& x) { s.offset_scale = as_double(x, "synth.offset_scale"); }},
         });
       }},
      {"model", [&](const json& v) {
         ModelConfig& m = c.model;
         apply(v, "model", {
             {"attn_dim", [&](const json& x) { m.attn_dim = as_int(x, "model.attn_dim"); }},
             {"mlp_dim", [&](const json& x) { m.mlp_dim = as_int(x, "model.mlp_dim"); }},
             {"ade_hidden", [&](const json& x) { m.ade_hidden = as_int(x, "model.ade_hidden"); }},
             {"vga_hidden", [&](const json& x) { m.vga_hidden = as_int(x, "model.vga_hidden"); }},
             {"backbone_hidden", [&](const json& x) { m.backbone_hidden = as_int(x, "model.backbone_hidden"); }},
             {"latent_dim", [&](const json& x) { m.latent_dim = as_int(x, "model.latent_dim"); }},
             {"aln_dropout", [&](const json& x) { m.aln_dropout = as_double(x, "model.aln_dropout"); }},
             {"ade_dropout", [&](const json& x) { m.ade_dropout = as_double(x, "model.ade_dropout"); }},
             {"backbone", [&](const json& x) {
                if (!x.is_string()) throw config_error("RangeError", "model.backbone: expected a string");
                m.backbone = x.get<std::string>();
              }},
             {"recon_weight", [&](const json& x) { m.recon_weight = as_double(x, "model.recon_weight"); }},
             {"kl_weight", [&](const json& x) { m.kl_weight = as_double(x, "model.kl_weight"); }},
             {"adv_weight", [&](const json& x) { m.adv_weight = as_double(x, "model.adv_weight"); }},
             {"clip", [&](const json& x) { m.clip = as_double(x, "model.clip"); }},
             {"sigmoid_output", [&](const json& x) { m.sigmoid_output = as_bool(x, "model.sigmoid_output"); }},
         });
       }},
      {"hyper", [&](const json& v) {
         Hyper& h = c.hyper;
         apply(v, "hyper", {
             {"lambda_ref", [&](const json& x) { h.lambda_ref = as_double(x, "lambda_ref"); }},
             {"lambda_align", [&](const json& x) { h.lambda_align = as_double(x, "lambda_align"); }},
             {"beta", [&](const json& x) { h.beta = as_double(x, "beta"); }},
             {"lambda", [&](const json& x) { h.lambda = as_double(x, "lambda"); }},
             {"tau_ref", [&](const json& x) { h.tau_ref = as_double(x, "tau_ref"); }},
             {"tau_align", [&](const json& x) { h.tau_align = as_double(x, "tau_align"); }},
             {"lambda_var", [&](const json& x) { h.lambda_var = as_double(x, "lambda_var"); }},
             {"n_syn", [&](const json& x) { h.n_syn = as_int(x, "n_syn"); }},
             {"epochs", [&](const json& x) { h.epochs = as_int(x, "epochs"); }},
             {"batch_size", [&](const json& x) { h.batch_size = as_int(x, "batch_size"); }},
             {"lr", [&](const json& x) { h.lr = as_double(x, "lr"); }},
             {"adam_beta1", [&](const json& x) { h.adam_beta1 = as_double(x, "adam_beta1"); }},
             {"adam_beta2", [&](const json& x) { h.adam_beta2 = as_double(x, "adam_beta2"); }},
             {"n_critic", [&](const json& x) { h.n_critic = as_int(x, "n_critic"); }},
         });
       }},
      {"flags", [&](const json& v) {
         Flags& f = c.flags;
         apply(v, "flags", {
             {"ref_variant", [&](const json& x) { f.ref_variant = parse_enum(ref_variant_names(), x, "flags.ref_variant"); }},
             {"align_variant", [&](const json& x) { f.align_variant = parse_enum(align_variant_names(), x, "flags.align_variant"); }},
             {"second_pass_input", [&](const json& x) { f.second_pass = parse_enum(second_pass_names(), x, "flags.second_pass_input"); }},
             {"loc_on_second_pass", [&](const json& x) { f.loc_on_second_pass = as_bool(x, "flags.loc_on_second_pass"); }},
             {"feature_norm", [&](const json& x) { f.feature_norm = parse_enum(feature_norm_names(), x, "flags.feature_norm"); }},
             {"condition", [&](const json& x) { f.condition = parse_enum(condition_names(), x, "flags.condition"); }},
             {"lipschitz", [&](const json& x) {
                if (!x.is_string()) throw config_error("RangeError", "flags.lipschitz: expected a string");
                f.lipschitz = x.get<std::string>();
              }},
             {"norm", [&](const json& x) { f.ade_norm = parse_enum(norm_names(), x, "flags.norm"); }},
             {"condition_normalized", [&](const json& x) { f.condition_normalized = as_bool(x, "flags.condition_normalized"); }},
             {"ade_dropout_at_synthesis", [&](const json& x) { f.ade_dropout_at_synthesis = as_bool(x, "flags.ade_dropout_at_synthesis"); }},
         });
       }},
      {"eval", [&](const json& v) {
         EvalConfig& e = c.eval;
         apply(v, "eval", {
             {"clf_epochs", [&](const json& x) { e.clf_epochs = as_int(x, "eval.clf_epochs"); }},
             {"clf_lr", [&](const json& x) { e.clf_lr = as_double(x, "eval.clf_lr"); }},
             {"clf_reg", [&](const json& x) { e.clf_reg = as_double(x, "eval.clf_reg"); }},
             {"hist_bins", [&](const json& x) { e.hist_bins = as_int(x, "eval.hist_bins"); }},
         });
       }},
  };
  apply(root, "", top);
  check_ranges(c);
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error("ParseError", "line " + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
  return config_from_json(root);
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw io_error("IoFailure", "cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

/// The fully resolved configuration, every field explicit.
inline json to_json(const RunConfig& c) {
  using namespace detail;
  json j;
  j["seed"] = c.seed;
  if (!c.preset.empty()) j["preset"] = c.preset;
  const SynthSpec& s = c.synth;
  j["synth"] = {{"num_seen", s.num_seen}, {"num_unseen", s.num_unseen}, {"num_attributes", s.num_attributes},
                {"num_patches", s.num_patches}, {"visual_dim", s.visual_dim}, {"semantic_dim", s.semantic_dim},
                {"per_class", s.per_class}, {"sigma_min", s.sigma_min}, {"sigma_max", s.sigma_max},
                {"patches_per_attr", s.patches_per_attr}, {"noise", s.noise}, {"offset_scale", s.offset_scale}};
  const ModelConfig& m = c.model;
  j["model"] = {{"attn_dim", m.attn_dim}, {"mlp_dim", m.mlp_dim}, {"ade_hidden", m.ade_hidden},
                {"vga_hidden", m.vga_hidden}, {"backbone_hidden", m.backbone_hidden}, {"latent_dim", m.latent_dim},
                {"aln_dropout", m.aln_dropout}, {"ade_dropout", m.ade_dropout}, {"backbone", m.backbone},
                {"recon_weight", m.recon_weight}, {"kl_weight", m.kl_weight}, {"adv_weight", m.adv_weight},
                {"clip", m.clip}, {"sigmoid_output", m.sigmoid_output}};
  const Hyper& h = c.hyper;
  j["hyper"] = {{"lambda_ref", h.lambda_ref}, {"lambda_align", h.lambda_align}, {"beta", h.beta}, {"lambda", h.lambda},
                {"tau_ref", h.tau_ref}, {"tau_align", h.tau_align}, {"lambda_var", h.lambda_var}, {"n_syn", h.n_syn}, {"epochs", h.epochs},
                {"batch_size", h.batch_size}, {"lr", h.lr}, {"adam_beta1", h.adam_beta1}, {"adam_beta2", h.adam_beta2},
                {"n_critic", h.n_critic}};
  const Flags& f = c.flags;
  j["flags"] = {{"ref_variant", name_of(ref_variant_names(), f.ref_variant)},
                {"align_variant", name_of(align_variant_names(), f.align_variant)},
                {"second_pass_input", name_of(second_pass_names(), f.second_pass)},
                {"loc_on_second_pass", f.loc_on_second_pass},
                {"feature_norm", name_of(feature_norm_names(), f.feature_norm)},
                {"condition", name_of(condition_names(), f.condition)},
                {"lipschitz", f.lipschitz},
                {"norm", name_of(norm_names(), f.ade_norm)},
                {"condition_normalized", f.condition_normalized},
                {"ade_dropout_at_synthesis", f.ade_dropout_at_synthesis}};
  j["eval"] = {{"clf_epochs", c.eval.clf_epochs}, {"clf_lr", c.eval.clf_lr}, {"clf_reg", c.eval.clf_reg},
               {"hist_bins", c.eval.hist_bins}};
  return j;
}

/// FNV-1a 64 of the canonical effective config.
inline std::string config_hash(const RunConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

inline std::string condition_name(ConditionSet c) { return detail::name_of(detail::condition_names(), c); }

}  // namespace adiva
