// Acceptance run: one PASS/FAIL line per criterion.
//
// Usage: acceptance [--expect-fail N]...
// Exit status is 0 when the set of failing criteria equals the set passed
// with --expect-fail (every criterion still runs and prints its verdict).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "adiva/ade.hpp"
#include "adiva/backbone.hpp"
#include "adiva/pipeline.hpp"
#include "adiva/vga.hpp"

using namespace adiva;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass;
  std::string detail;
};

std::map<int, bool> results;

void report(int id, const std::string& title, const Verdict& v) {
  results[id] = v.pass;
  std::printf("criterion %d %-34s %s  %s\n", id, title.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
  std::fflush(stdout);
}

std::string f(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. gradient check

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  RunConfig cfg;
  cfg.seed = 11;
  cfg.synth.num_seen = 3;
  cfg.synth.num_unseen = 2;
  cfg.synth.num_attributes = 3;
  cfg.synth.num_patches = 4;
  cfg.synth.visual_dim = 5;
  cfg.synth.semantic_dim = 4;
  cfg.synth.per_class = 4;
  cfg.synth.seed = cfg.seed;
  cfg.model.ade_hidden = 6;
  cfg.model.vga_hidden = 6;
  cfg.model.backbone_hidden = 8;
  cfg.model.latent_dim = 3;
  auto [data, gt] = generate(cfg.synth);
  trainer::Model model(cfg, trainer::dims_of(data));
  const trainer::ModelState state = model.init_state();
  std::vector<Index> rows = select_samples(data, data.train_mask, data.seen_classes);
  rows.resize(4);
  const trainer::GradReport rep = trainer::gradient_check(model, state, trainer::make_batch(data, rows), data.semantic);

  std::set<std::string> modules;
  for (const auto& t : rep.tensors) modules.insert(t.name.substr(0, t.name.find('.')));
  const bool covered = modules.count("aln") && modules.count("ade") && modules.count("vga") && modules.count("backbone") &&
                       rep.tensors.size() == state.params.size();
  const double secs = seconds_since(t0);
  return {covered && rep.max_rel_error < 1e-4 && secs < 60.0,
          "max rel error " + f(rep.max_rel_error * 1e6, 2) + "e-6 over " + std::to_string(rep.tensors.size()) +
              " tensors (aln, ade, vga, backbone), " + f(secs, 1) + " s"};
}

// ---------------------------------------------------------------------------
// 2. harmonic mean

Verdict h_formula() {
  struct Row {
    double u, s, h;
  };
  const Row rows[] = {{60.4, 75.4, 67.1}, {59.8, 75.1, 66.6}, {75.6, 86.3, 80.6}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const double h = eval::gzsl_from(r.u, r.s).h;
    ok &= std::round(h * 10.0) / 10.0 == r.h;
    detail += f(h, 1) + " ";
  }
  return {ok, "H = " + detail + "(expected 67.1 66.6 80.6)"};
}

// ---------------------------------------------------------------------------
// 3-7. synthetic benchmark

RunConfig benchmark_config(std::uint64_t seed, ConditionSet cond) {
  RunConfig cfg;
  cfg.seed = seed;
  cfg.synth.seed = seed;
  cfg.synth.offset_scale = 0.3;
  cfg.hyper.tau_align = 0.2;
  cfg.flags.condition = cond;
  check_ranges(cfg);
  return cfg;
}

struct Run {
  pipeline::MetricsReport metrics;
  double localization = 0.0;
  double variance_spearman = 0.0;
  double train_seconds = 0.0;
};

Run benchmark_run(std::uint64_t seed, ConditionSet cond, bool probes) {
  const RunConfig cfg = benchmark_config(seed, cond);
  auto [data, gt] = generate(cfg.synth);
  trainer::normalize_features(data, cfg.flags.feature_norm);
  trainer::Model model(cfg, trainer::dims_of(data));
  trainer::ModelState state = model.init_state();
  Run r;
  const auto t0 = Clock::now();
  trainer::fit(model, state, data, cfg.hyper.epochs);
  r.train_seconds = seconds_since(t0);
  const trainer::SynthesisBatch syn = trainer::synthesize_unseen(model, state, data, cfg.seed);
  r.metrics = pipeline::evaluate(model, state, data, syn, "acceptance");
  if (probes) {
    std::vector<std::int64_t> all(static_cast<std::size_t>(data.num_classes()));
    for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<std::int64_t>(c);
    const std::vector<Index> test = select_samples(data, data.test_mask, all);
    r.localization = pipeline::localization_hit_rate(pipeline::mean_attention(model, state, data, test), gt);
    r.variance_spearman = pipeline::variance_recovery(state, data, gt);
  }
  return r;
}

// ---------------------------------------------------------------------------
// 8. determinism and persistence

int run_cli(const std::string& args) {
  const int status = std::system((std::string(ADIVA_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "adiva_acceptance";
  fs::remove_all(root);
  std::string reports[2];
  bool cli_ok = true;
  for (int k = 0; k < 2; ++k) {
    const std::string d = (root / ("run" + std::to_string(k))).string();
    cli_ok &= run_cli("synth-data --preset tiny --seed 9 --out " + d + "/d") == 0;
    cli_ok &= run_cli("train --preset tiny --seed 9 --data " + d + "/d/data.zfc --out " + d + "/t") == 0;
    cli_ok &= run_cli("eval --data " + d + "/d/data.zfc --checkpoint " + d + "/t/checkpoint.zfc --out " + d + "/e") == 0;
    reports[k] = slurp(fs::path(d) / "e/metrics.json");
  }
  const bool report_same = cli_ok && !reports[0].empty() && reports[0] == reports[1];

  RunConfig cfg;
  cfg.seed = 5;
  cfg.synth.num_seen = 6;
  cfg.synth.num_unseen = 2;
  cfg.synth.num_attributes = 4;
  cfg.synth.num_patches = 6;
  cfg.synth.visual_dim = 6;
  cfg.synth.semantic_dim = 4;
  cfg.synth.per_class = 30;
  cfg.synth.seed = cfg.seed;
  cfg.model.backbone_hidden = 32;
  cfg.hyper.batch_size = 16;
  cfg.hyper.n_critic = 2;
  auto [data, gt] = generate(cfg.synth);
  trainer::Model model(cfg, trainer::dims_of(data));
  trainer::ModelState full = model.init_state();
  const auto trace_full = trainer::fit(model, full, data, 4);
  trainer::ModelState half = model.init_state();
  auto trace = trainer::fit(model, half, data, 2);
  const std::string ck_bytes = zfc::encode(trainer::checkpoint_container(model, half));
  trainer::Checkpoint ck = trainer::checkpoint_from(zfc::decode(ck_bytes));
  trainer::Model resumed(ck.config, ck.dims);
  const auto rest = trainer::fit(resumed, ck.state, data, 4);
  trace.insert(trace.end(), rest.begin(), rest.end());
  bool trace_same = trace.size() == trace_full.size() && ck.state == full;
  for (std::size_t i = 0; trace_same && i < trace.size(); ++i) {
    trace_same = trainer::to_json(trace[i].mean).dump() == trainer::to_json(trace_full[i].mean).dump() &&
                 trace[i].step == trace_full[i].step;
  }

  const std::string data_bytes = zfc::encode(to_container(data));
  const bool zfc_same = zfc::encode(zfc::decode(data_bytes)) == data_bytes && from_container(zfc::decode(data_bytes)) == data &&
                        zfc::encode(zfc::decode(ck_bytes)) == ck_bytes;
  fs::remove_all(root);
  return {report_same && trace_same && zfc_same, std::string("report ") + (report_same ? "identical" : "differs") +
                                                     ", resume trace " + (trace_same ? "identical" : "differs") +
                                                     ", zfc roundtrip " + (zfc_same ? "bit-exact" : "differs")};
}

// ---------------------------------------------------------------------------
// 9. metric unit suite

Verdict metric_units() {
  std::vector<std::string> failed;
  auto check = [&](bool ok, const std::string& name) {
    if (!ok) failed.push_back(name);
  };
  Rng rng(3);
  const Mat x = rng.normal_mat(300, 6);
  check(std::abs(eval::fid(x, x)) < 1e-6, "fid(X,X)");
  check(std::abs(eval::fid_from_moments(RowVec::Zero(1), Mat::Constant(1, 1, 1.0), RowVec::Ones(1), Mat::Constant(1, 1, 4.0)) -
                 2.0) < 1e-9,
        "1-d fid");
  const Mat y = rng.normal_mat(200, 6) * 1.5;
  check(std::abs(eval::fid(x, y) - eval::fid(y, x)) < 1e-8, "fid symmetry");

  auto row = [](std::initializer_list<double> v) {
    RowVec r(static_cast<Index>(v.size()));
    Index i = 0;
    for (double e : v) r(i++) = e;
    return r;
  };
  const RowVec a = row({0.3, 0.7});
  check(ade::sem_loss(a, a, {a, row({0, 0}), row({1, 1})}, 1.0).kl == 0.0, "ade KL identical");
  const ade::SemLoss s = ade::sem_loss(a, a, {a, row({1, 0}), row({1, 1})}, 2.0);
  check(s.kl == 0.5 && s.rec == 0.0 && s.total == 1.0, "ade KL mu=[1,0]");
  Mat u(1, 2), h(1, 2), b(1, 2);
  u << 0.6, 0.8;
  h << 1, 0;
  b << 0.5, std::sqrt(0.75);
  check(std::abs(ade::ref_loss(u, u, 0.1, ade::RefVariant::kAsPrinted)) < 1e-12, "ref N=1 equal");
  check(std::abs(ade::ref_loss(h, b, 1.0, ade::RefVariant::kAsPrinted) - 0.5) < 1e-12, "ref N=1 dot 0.5");
  const Mat e = Mat::Identity(2, 2);
  check(std::abs(vga::align_loss(e, e, 1.0, vga::AlignVariant::kInfoNce) - std::log1p(std::exp(-1.0))) < 1e-12,
        "align N=2");
  check(std::abs(vga::align_loss(u, h, 0.1, vga::AlignVariant::kInfoNce)) < 1e-12, "align N=1");
  const Mat z = rng.normal_mat(3, 4);
  check(std::abs(vga::align_loss(z, z, 0.37, vga::AlignVariant::kAsPrinted) - std::log(3.0)) < 1e-12, "align log N");
  ad::Graph g;
  check(backbone::gaussian_kl(g.constant(Mat::Constant(1, 2, 0.5)), g.constant(Mat::Zero(1, 2))).scalar() == 0.25,
        "backbone KL");
  Mat real(2, 1), fake(2, 1);
  real << 1, 3;
  fake << 0, 2;
  check(backbone::critic_objective(g.constant(real), g.constant(fake)).scalar() == -1.0, "critic objective");
  trainer::Components c{1, 2, 3, 4, 5};
  Hyper hy;
  hy.lambda_ref = 0.5;
  hy.lambda_align = 1.0;
  check(trainer::total_loss(c, hy) == 13.0, "total loss");

  std::string detail = std::to_string(14 - failed.size()) + "/14 closed-form checks";
  for (const auto& n : failed) detail += "; failed: " + n;
  return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> expected;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--expect-fail" && i + 1 < argc) expected.insert(std::atoi(argv[++i]));
  }

  report(1, "gradient correctness", gradient_correctness());
  report(2, "H formula fidelity", h_formula());
  report(9, "metric unit suite", metric_units());
  report(8, "determinism and persistence", determinism());

  const ConditionSet conds[] = {ConditionSet::kAttr, ConditionSet::kAHat, ConditionSet::kXTilde, ConditionSet::kBoth};
  std::map<ConditionSet, std::vector<Run>> runs;
  const auto t0 = Clock::now();
  for (ConditionSet c : conds) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      runs[c].push_back(benchmark_run(seed, c, c == ConditionSet::kBoth));
      const Run& r = runs[c].back();
      std::printf("  run condition=%-6s seed=%llu U=%5.1f S=%5.1f H=%5.1f fid=%.3f train %.1f s\n",
                  condition_name(c).c_str(), static_cast<unsigned long long>(seed), r.metrics.gzsl.unseen,
                  r.metrics.gzsl.seen, r.metrics.gzsl.h, r.metrics.fid, r.train_seconds);
      std::fflush(stdout);
    }
  }
  const double sweep_seconds = seconds_since(t0);
  const auto& both = runs[ConditionSet::kBoth];
  const auto& attr = runs[ConditionSet::kAttr];

  {
    const Run& r = both.front();
    report(3, "attribute-distribution recovery",
           {r.variance_spearman > 0.7, "Spearman(learned var, planted var) = " + f(r.variance_spearman) +
                                           " (needs > 0.7), seed 1, train " + f(r.train_seconds, 1) + " s"});
  }
  {
    double mean = 0.0;
    std::string per;
    for (const Run& r : both) {
      mean += r.localization / 3.0;
      per += f(r.localization, 3) + " ";
    }
    report(4, "attention localization", {mean >= 0.8, "hit rate " + f(mean) + " (needs >= 0.8), per seed " + per});
  }
  {
    bool ok = true;
    std::string per;
    for (const Run& r : both) {
      ok &= r.metrics.incorrectness_prior < r.metrics.incorrectness_attr;
      per += f(r.metrics.incorrectness_prior) + " < " + f(r.metrics.incorrectness_attr) + "; ";
    }
    report(5, "correlation alignment", {ok, "priors vs attributes per seed: " + per});
  }
  {
    auto mean_h = [&](ConditionSet c) {
      double h = 0.0;
      for (const Run& r : runs[c]) h += r.metrics.gzsl.h / 3.0;
      return h;
    };
    const double ha = mean_h(ConditionSet::kAttr), hh = mean_h(ConditionSet::kAHat), hx = mean_h(ConditionSet::kXTilde),
                 hb = mean_h(ConditionSet::kBoth);
    const bool ok = hb - ha >= 3.0 && hh > ha && hx > ha && sweep_seconds < 600.0;
    report(6, "ablation direction",
           {ok, "H a=" + f(ha, 1) + " a_hat=" + f(hh, 1) + " x_tilde=" + f(hx, 1) + " a_hat+x_tilde=" + f(hb, 1) +
                    " (gap " + f(hb - ha, 1) + ", needs >= 3), 12 runs " + f(sweep_seconds, 0) + " s"});
  }
  {
    bool ok = true;
    std::string per;
    for (std::size_t k = 0; k < 3; ++k) {
      ok &= both[k].metrics.fid < attr[k].metrics.fid;
      per += f(both[k].metrics.fid) + " < " + f(attr[k].metrics.fid) + "; ";
    }
    report(7, "FID direction", {ok, "a_hat+x_tilde vs a per seed: " + per});
  }

  std::set<int> failed;
  for (const auto& [id, pass] : results) {
    if (!pass) failed.insert(id);
  }
  std::printf("%zu/%zu criteria pass\n", results.size() - failed.size(), results.size());
  for (int id : expected) {
    if (!failed.count(id)) std::printf("criterion %d was expected to fail but passed\n", id);
  }
  for (int id : failed) {
    if (expected.count(id)) std::printf("criterion %d failure is expected (analysis in README)\n", id);
  }
  return failed == expected ? 0 : 1;
}
