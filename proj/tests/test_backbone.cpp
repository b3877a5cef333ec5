#include <gtest/gtest.h>

#include "adiva/backbone.hpp"

using namespace adiva;

namespace {

backbone::Dims small_dims() { return {3, 2, 2, 5}; }

struct Fixture {
  std::unique_ptr<backbone::Backbone> model;
  ParamTable params;
};

Fixture make(const std::string& name, std::uint64_t seed = 1, backbone::Options o = {}) {
  Fixture f{backbone::make(name, small_dims(), o), {}};
  Rng rng(seed);
  f.model->init(f.params, rng);
  return f;
}

}  // namespace

TEST(Backbone, ZeroEncoderPassesNoiseThrough) {
  Fixture f = make("fvaegan_ref");
  for (auto& [name, v] : f.params) v.setZero();
  auto& core = dynamic_cast<backbone::VaeCore&>(*f.model);
  ad::Graph g;
  Binder b(g, f.params);
  Rng rng(2);
  const Mat eps = rng.normal_mat(4, 2);
  backbone::Encoded e = core.vae_encode(b, g.constant(rng.normal_mat(4, 3)), g.constant(rng.normal_mat(4, 2)), eps);
  EXPECT_TRUE(e.mu.value().isZero(0.0));
  EXPECT_TRUE(e.logvar.value().isZero(0.0));
  EXPECT_EQ(e.z.value(), eps);
}

TEST(Backbone, GaussianKlClosedForm) {
  ad::Graph g;
  EXPECT_DOUBLE_EQ(backbone::gaussian_kl(g.constant(Mat::Constant(1, 2, 0.5)), g.constant(Mat::Zero(1, 2))).scalar(), 0.25);
  EXPECT_DOUBLE_EQ(backbone::gaussian_kl(g.constant(Mat::Zero(3, 2)), g.constant(Mat::Zero(3, 2))).scalar(), 0.0);
}

TEST(Backbone, GeneratorZeroAndShape) {
  Fixture f = make("fvaegan_ref");
  Rng rng(3);
  ad::Graph g;
  Binder b(g, f.params);
  const Mat out = f.model->generate(b, g.constant(rng.normal_mat(4, 2)), g.constant(rng.normal_mat(4, 2))).value();
  EXPECT_EQ(out.rows(), 4);
  EXPECT_EQ(out.cols(), 3);
  for (auto& [name, v] : f.params) v.setZero();
  ad::Graph g2;
  Binder b2(g2, f.params);
  EXPECT_TRUE(f.model->generate(b2, g2.constant(rng.normal_mat(4, 2)), g2.constant(rng.normal_mat(4, 2))).value().isZero(0.0));
}

TEST(Backbone, GeneratorScalarHandCase) {
  auto bb = backbone::make("cvae_ref", {1, 1, 1, 1}, {});
  ParamTable p;
  Rng rng(4);
  bb->init(p, rng);
  p["backbone.gen1.W"] << 2.0, 0.0;  // z weight, c weight
  p["backbone.gen1.b"] << 0.0;
  p["backbone.gen2.W"] << 3.0;
  p["backbone.gen2.b"] << 1.0;
  for (double z : {-1.0, 0.5}) {
    ad::Graph g;
    Binder b(g, p);
    const double got = bb->generate(b, g.constant(Mat::Constant(1, 1, z)), g.constant(Mat::Zero(1, 1))).scalar();
    const double h = 2.0 * z > 0 ? 2.0 * z : 0.2 * 2.0 * z;
    EXPECT_DOUBLE_EQ(got, 3.0 * h + 1.0);
  }
}

TEST(Backbone, CriticObjectiveClosedForm) {
  ad::Graph g;
  Mat real(2, 1), fake(2, 1);
  real << 1, 3;
  fake << 0, 2;
  EXPECT_DOUBLE_EQ(backbone::critic_objective(g.constant(real), g.constant(fake)).scalar(), -1.0);
  EXPECT_DOUBLE_EQ(backbone::critic_objective(g.constant(real), g.constant(real)).scalar(), 0.0);
}

TEST(Backbone, CriticZeroParamsScoreZeroAndMonotone) {
  Fixture f = make("fvaegan_ref");
  auto& gan = dynamic_cast<backbone::FVaeGan&>(*f.model);
  for (auto& [name, v] : f.params) v.setZero();
  Rng rng(5);
  {
    ad::Graph g;
    Binder b(g, f.params);
    EXPECT_TRUE(gan.discriminate(b, g.constant(rng.normal_mat(3, 3)), g.constant(rng.normal_mat(3, 2))).value().isZero(0.0));
  }
  // One active path: score = w2 * leaky(w1 * x0), increasing in w2 for positive x0.
  f.params["backbone.critic1.W"](0, 0) = 0.01;
  double last = -1e9;
  for (double w : {-0.01, 0.0, 0.005, 0.01}) {
    f.params["backbone.critic2.W"](0, 0) = w;
    ad::Graph g;
    Binder b(g, f.params);
    Mat x = Mat::Zero(1, 3);
    x(0, 0) = 1.0;
    const double s = gan.discriminate(b, g.constant(x), g.constant(Mat::Zero(1, 2))).scalar();
    EXPECT_TRUE(std::isfinite(s));
    EXPECT_GT(s, last);
    last = s;
  }
}

TEST(Backbone, GeneratorLossZeroOnPerfectReconstruction) {
  backbone::Options o;
  o.adv_weight = 0.0;
  o.kl_weight = 0.0;
  Fixture f = make("fvaegan_ref", 6, o);
  for (auto& [name, v] : f.params) v.setZero();
  ad::Graph g;
  Binder b(g, f.params);
  backbone::Noise n{Mat::Zero(2, 2), Mat::Zero(2, 2)};
  backbone::Losses l = f.model->losses(b, g.constant(Mat::Zero(2, 3)), g.constant(Mat::Ones(2, 2)), n);
  EXPECT_DOUBLE_EQ(l.recon.scalar(), 0.0);
  EXPECT_DOUBLE_EQ(l.generator.scalar(), 0.0);
}

TEST(Backbone, ClipWeights) {
  Fixture f = make("fvaegan_ref");
  const double k = 0.01;
  for (auto& [name, v] : f.params) {
    if (name.rfind("backbone.critic", 0) == 0) {
      EXPECT_LE(v.cwiseAbs().maxCoeff(), k);
    }
  }
  f.params["backbone.critic1.W"](0, 0) = 2 * k;
  f.params["backbone.critic1.W"](0, 1) = 0.5 * k;
  const Mat gen_before = f.params["backbone.gen1.W"];
  backbone::clip_weights(f.params, k);
  EXPECT_EQ(f.params["backbone.critic1.W"](0, 0), k);
  EXPECT_EQ(f.params["backbone.critic1.W"](0, 1), 0.5 * k);
  EXPECT_EQ(f.params["backbone.gen1.W"], gen_before);
  const ParamTable once = f.params;
  backbone::clip_weights(f.params, k);
  EXPECT_EQ(f.params, once);
  EXPECT_THROW(backbone::clip_weights(f.params, 0.0), Error);
}

TEST(Backbone, RegistryContract) {
  const auto names = backbone::registered();
  EXPECT_NE(std::find(names.begin(), names.end(), "fvaegan_ref"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "cvae_ref"), names.end());
  for (const auto& name : names) {
    Fixture f = make(name);
    EXPECT_EQ(f.model->name(), name);
    EXPECT_EQ(f.model->condition_dim(), 2);
    Rng rng(7);
    ad::Graph g;
    Binder b(g, f.params);
    backbone::Noise n{rng.normal_mat(4, 2), rng.normal_mat(4, 2)};
    backbone::Losses l = f.model->losses(b, g.constant(rng.normal_mat(4, 3)), g.constant(rng.normal_mat(4, 2)), n);
    EXPECT_TRUE(std::isfinite(l.generator.scalar()));
    bool any_critic = false;
    for (const auto& [p, v] : f.params) any_critic |= f.model->is_critic_param(p);
    EXPECT_EQ(any_critic, f.model->has_critic());
  }
  try {
    backbone::make("nope", small_dims(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "UnknownBackbone");
    EXPECT_EQ(e.exit_code(), 2);
  }
}

TEST(Backbone, ConditionWidthChecked) {
  Fixture f = make("fvaegan_ref");
  ad::Graph g;
  Binder b(g, f.params);
  EXPECT_THROW(f.model->generate(b, g.constant(Mat::Zero(1, 2)), g.constant(Mat::Zero(1, 3))), Error);
}
