#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "adiva/autodiff.hpp"
#include "adiva/rng.hpp"

namespace adiva {

/// Named parameter tensors, ordered by name. Names are "module.layer.field".
using ParamTable = std::map<std::string, Mat>;

/// Returns the sub-table whose names start with `prefix`.
inline ParamTable with_prefix(const ParamTable& table, const std::string& prefix) {
  ParamTable out;
  for (const auto& [name, value] : table) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name, value);
  }
  return out;
}

inline const Mat& param(const ParamTable& table, const std::string& name) {
  auto it = table.find(name);
  if (it == table.end()) throw data_error("MissingTensor", name);
  return it->second;
}

/// Binds table entries into a graph as leaves on first use. Entries for which
/// `trainable` returns false enter as constants.
class Binder {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  Binder(ad::Graph& graph, const ParamTable& table, Predicate trainable = nullptr)
      : graph_(graph), table_(table), trainable_(std::move(trainable)) {}

  ad::Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Mat& value = param(table_, name);
    const bool rg = !trainable_ || trainable_(name);
    ad::Var v = rg ? graph_.leaf(value) : graph_.constant(value);
    bound_.emplace(name, v);
    return v;
  }

  ad::Graph& graph() { return graph_; }

  /// Gradients of every trainable bound parameter, valid after backward().
  ParamTable grads() const {
    ParamTable out;
    for (const auto& [name, v] : bound_) {
      if (v.requires_grad()) out.emplace(name, v.grad());
    }
    return out;
  }

 private:
  ad::Graph& graph_;
  const ParamTable& table_;
  Predicate trainable_;
  std::map<std::string, ad::Var> bound_;
};

// ---------------------------------------------------------------------------
// Initialization

inline void init_linear(ParamTable& table, const std::string& prefix, Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  table[prefix + ".W"] = rng.uniform_mat(in, out, -bound, bound);
  table[prefix + ".b"] = Mat::Zero(1, out);
}

inline void init_layer_norm(ParamTable& table, const std::string& prefix, Index dim) {
  table[prefix + ".g"] = Mat::Ones(1, dim);
  table[prefix + ".b"] = Mat::Zero(1, dim);
}

// ---------------------------------------------------------------------------
// Layers

inline ad::Var linear(Binder& p, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::matmul(x, p(prefix + ".W")), p(prefix + ".b"));
}

inline ad::Var layer_norm(Binder& p, const std::string& prefix, ad::Var x) {
  return ad::add_row(ad::mul_row(ad::row_standardize(x), p(prefix + ".g")), p(prefix + ".b"));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamTable m;
  ParamTable v;
  std::int64_t t = 0;
};

/// One bias-corrected Adam step for every entry of `grads`.
inline void adam_step(ParamTable& params, const ParamTable& grads, AdamState& state, const AdamConfig& cfg) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Mat& w = params.at(name);
    auto [mit, m_new] = state.m.try_emplace(name, Mat::Zero(g.rows(), g.cols()));
    auto [vit, v_new] = state.v.try_emplace(name, Mat::Zero(g.rows(), g.cols()));
    Mat& m = mit->second;
    Mat& v = vit->second;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    w.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace adiva
