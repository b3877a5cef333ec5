// adiva: synthetic data, training, synthesis, evaluation and inspection.
//
// Every subcommand writes only below --out. Failures print one JSON error
// record on stderr and exit with the family code (2 config, 3 data,
// 4 numeric, 5 io).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "adiva/config.hpp"
#include "adiva/feature_store.hpp"
#include "adiva/pipeline.hpp"
#include "adiva/synthgen.hpp"
#include "adiva/trainer.hpp"
#include "adiva/zsl_eval.hpp"

#ifndef ADIVA_BUILD_ID
#define ADIVA_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace adiva;

namespace {

struct Args {
  std::string config, data, gt, checkpoint, synth, out, preset;
  std::optional<std::uint64_t> seed;
  std::int64_t epochs = -1;
  std::int64_t samples = 16;
};

RunConfig resolve_config(const Args& a) {
  json root = json::object();
  if (!a.config.empty()) {
    std::ifstream f(a.config);
    if (!f) throw io_error("IoFailure", "cannot open config: " + a.config);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    try {
      root = json::parse(text);
    } catch (const json::parse_error& e) {
      throw config_error("ParseError", "line " + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
    }
    if (!root.is_object()) throw config_error("ParseError", "top level must be an object");
  }
  if (!a.preset.empty()) root["preset"] = a.preset;
  if (a.seed) root["seed"] = *a.seed;
  return config_from_json(root);
}

json audit(const RunConfig& c) {
  return {{"config_hash", config_hash(c)}, {"seed", c.seed}, {"build_id", ADIVA_BUILD_ID}};
}

void add_audit(zfc::Container& c, const RunConfig& cfg) { c["meta.audit"] = zfc::text_tensor(audit(cfg).dump()); }

std::string csv_header(const RunConfig& c) {
  return "# config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed) + " build_id=" + ADIVA_BUILD_ID + "\n";
}

fs::path out_dir(const Args& a) {
  if (a.out.empty()) throw config_error("RangeError", "--out is required");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw io_error("IoFailure", "cannot create " + a.out + ": " + ec.message());
  return fs::path(a.out);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw io_error("IoFailure", "cannot write " + p.string());
  f << text;
  if (!f) throw io_error("IoFailure", "write failed: " + p.string());
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string matrix_csv(const Mat& m) {
  std::string s;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) s += (j ? "," : "") + fmt(m(i, j));
    s += "\n";
  }
  return s;
}

std::string histogram_csv(const std::vector<eval::AttrHistogram>& h, const RunConfig& c) {
  std::string s = csv_header(c) + "attribute,bin,seen,unseen\n";
  for (std::size_t a = 0; a < h.size(); ++a) {
    for (std::size_t b = 0; b < h[a].seen.size(); ++b) {
      s += std::to_string(a) + "," + std::to_string(b) + "," + fmt(h[a].seen[b]) + "," + fmt(h[a].unseen[b]) + "\n";
    }
  }
  return s;
}

std::string require(const std::string& v, const char* flag) {
  if (v.empty()) throw config_error("RangeError", std::string(flag) + " is required");
  return v;
}

// Loads the data file in the feature space the model was trained in.
FeatureSet load_data(const Args& a, const RunConfig& cfg) {
  FeatureSet data = load_zfc(require(a.data, "--data"));
  trainer::normalize_features(data, cfg.flags.feature_norm);
  return data;
}

struct Loaded {
  trainer::Checkpoint ck;
  FeatureSet data;
};

Loaded load_trained(const Args& a) {
  Loaded l{trainer::checkpoint_load(require(a.checkpoint, "--checkpoint")), {}};
  if (a.seed) l.ck.config.seed = *a.seed;
  l.data = load_data(a, l.ck.config);
  const trainer::DataDims d = trainer::dims_of(l.data);
  const trainer::DataDims& m = l.ck.dims;
  if (d.num_attributes != m.num_attributes || d.num_patches != m.num_patches || d.visual_dim != m.visual_dim ||
      d.semantic_dim != m.semantic_dim) {
    throw shape_mismatch("checkpoint (A, P, d_v, d_s) = (" + std::to_string(m.num_attributes) + ", " +
                         std::to_string(m.num_patches) + ", " + std::to_string(m.visual_dim) + ", " +
                         std::to_string(m.semantic_dim) + ") vs data (" + std::to_string(d.num_attributes) + ", " +
                         std::to_string(d.num_patches) + ", " + std::to_string(d.visual_dim) + ", " +
                         std::to_string(d.semantic_dim) + ")");
  }
  return l;
}

std::vector<std::int64_t> all_classes(const FeatureSet& f) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(f.num_classes()));
  for (std::size_t c = 0; c < v.size(); ++c) v[c] = static_cast<std::int64_t>(c);
  return v;
}

// ---------------------------------------------------------------------------

void cmd_synth_data(const Args& a) {
  const RunConfig cfg = resolve_config(a);
  const fs::path out = out_dir(a);
  SynthSpec spec = cfg.synth;
  spec.seed = cfg.seed;
  auto [data, gt] = generate(spec);
  zfc::Container dc = to_container(data), gc = to_container(gt);
  add_audit(dc, cfg);
  add_audit(gc, cfg);
  zfc::write_file(dc, (out / "data.zfc").string());
  zfc::write_file(gc, (out / "gt.zfc").string());
  write_json(out / "synth-data.json", {{"audit", audit(cfg)}, {"config", to_json(cfg)}});
}

void cmd_train(const Args& a) {
  const fs::path out = out_dir(a);
  RunConfig cfg;
  trainer::ModelState state;
  FeatureSet data;
  std::optional<trainer::Model> model;
  if (!a.checkpoint.empty()) {
    Loaded l = load_trained(a);
    cfg = l.ck.config;
    data = std::move(l.data);
    model.emplace(cfg, l.ck.dims);
    state = std::move(l.ck.state);
  } else {
    cfg = resolve_config(a);
    data = load_data(a, cfg);
    model.emplace(cfg, trainer::dims_of(data));
    state = model->init_state();
  }
  const std::int64_t target = a.epochs >= 0 ? a.epochs : cfg.hyper.epochs;
  std::string log;
  trainer::fit(*model, state, data, target, [&](const trainer::EpochRecord& r) {
    json j{{"epoch", r.epoch}, {"step", r.step}, {"losses", trainer::to_json(r.mean)}};
    log += j.dump() + "\n";
  });
  zfc::Container ck = trainer::checkpoint_container(*model, state);
  add_audit(ck, cfg);
  zfc::write_file(ck, (out / "checkpoint.zfc").string());
  write_text(out / "train_log.jsonl", log);
  write_json(out / "train.json", {{"audit", audit(cfg)}, {"epoch", state.epoch}, {"step", state.step}, {"config", to_json(cfg)}});
}

void cmd_synthesize(const Args& a) {
  const fs::path out = out_dir(a);
  Loaded l = load_trained(a);
  const RunConfig& cfg = l.ck.config;
  trainer::Model model(cfg, l.ck.dims);
  const trainer::SynthesisBatch b = trainer::synthesize_unseen(model, l.ck.state, l.data, cfg.seed);
  zfc::Container c = trainer::to_container(b);
  add_audit(c, cfg);
  zfc::write_file(c, (out / "synthesis.zfc").string());
  auto [mu, var] = trainer::class_distributions(l.ck.state, l.data.attributes);
  json classes = json::array();
  for (Index c2 = 0; c2 < mu.rows(); ++c2) {
    const bool unseen =
        std::find(l.data.unseen_classes.begin(), l.data.unseen_classes.end(), c2) != l.data.unseen_classes.end();
    const RowVec m = mu.row(c2), v = var.row(c2);
    classes.push_back({{"class", c2},
                       {"unseen", unseen},
                       {"mu", std::vector<double>(m.data(), m.data() + m.size())},
                       {"var", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  write_json(out / "class_stats.json", {{"audit", audit(cfg)}, {"classes", classes}});
}

void cmd_eval(const Args& a) {
  const fs::path out = out_dir(a);
  Loaded l = load_trained(a);
  const RunConfig& cfg = l.ck.config;
  trainer::Model model(cfg, l.ck.dims);
  const trainer::SynthesisBatch syn = a.synth.empty() ? trainer::synthesize_unseen(model, l.ck.state, l.data, cfg.seed)
                                                      : trainer::synthesis_from(zfc::read_file(a.synth));
  const pipeline::MetricsReport r = pipeline::evaluate(model, l.ck.state, l.data, syn, ADIVA_BUILD_ID);
  write_json(out / "metrics.json", pipeline::to_json(r));
  write_text(out / "histograms.csv", histogram_csv(r.histograms, cfg));
}

void cmd_gradcheck(const Args& a) {
  const fs::path out = out_dir(a);
  RunConfig cfg;
  if (a.config.empty() && a.preset.empty()) {
    cfg.synth.num_seen = 3;
    cfg.synth.num_unseen = 2;
    cfg.synth.num_attributes = 3;
    cfg.synth.num_patches = 4;
    cfg.synth.visual_dim = 5;
    cfg.synth.semantic_dim = 4;
    cfg.synth.per_class = 4;
    cfg.model.ade_hidden = 6;
    cfg.model.vga_hidden = 6;
    cfg.model.backbone_hidden = 8;
    cfg.model.latent_dim = 3;
    if (a.seed) cfg.seed = *a.seed;
    check_ranges(cfg);
  } else {
    cfg = resolve_config(a);
  }
  FeatureSet data;
  if (!a.data.empty()) {
    data = load_data(a, cfg);
  } else {
    SynthSpec spec = cfg.synth;
    spec.seed = cfg.seed;
    data = generate(spec).first;
    trainer::normalize_features(data, cfg.flags.feature_norm);
  }
  trainer::Model model(cfg, trainer::dims_of(data));
  const trainer::ModelState state = model.init_state();
  std::vector<Index> rows = select_samples(data, data.train_mask, data.seen_classes);
  rows.resize(std::min<std::size_t>(rows.size(), 4));
  const trainer::GradReport rep = trainer::gradient_check(model, state, trainer::make_batch(data, rows), data.semantic);
  json tensors = json::array();
  for (const auto& t : rep.tensors) {
    tensors.push_back({{"name", t.name}, {"loss", t.loss}, {"max_rel_error", t.max_rel_error}, {"entries", t.entries}});
  }
  const json j{{"audit", audit(cfg)}, {"batch", rows.size()}, {"max_rel_error", rep.max_rel_error}, {"tensors", tensors}};
  write_json(out / "gradcheck.json", j);
  std::cout << "max relative error " << fmt(rep.max_rel_error) << " over " << rep.tensors.size() << " tensors\n";
}

void cmd_export_attn(const Args& a) {
  const fs::path out = out_dir(a);
  Loaded l = load_trained(a);
  const RunConfig& cfg = l.ck.config;
  trainer::Model model(cfg, l.ck.dims);
  const FeatureSet& data = l.data;
  std::vector<Index> rows = select_samples(data, data.test_mask, all_classes(data));
  rows.resize(std::min<std::size_t>(rows.size(), static_cast<std::size_t>(std::max<std::int64_t>(a.samples, 1))));
  const Index na = data.num_attributes(), np = data.num_patches;

  trainer::Batch b = trainer::make_batch(data, rows);
  ad::Graph g;
  Binder bind(g, l.ck.state.params, [](const std::string&) { return false; });
  aln::Graph res = aln::forward(bind, g.constant(data.semantic), g.constant(b.patches), g.constant(b.attrs), b.size(),
                                model.aln_options(), nullptr);
  const Mat& m = res.similarity_bar.value();
  const Mat& grounded = res.grounded.value();

  std::string s = csv_header(cfg) + "sample,label,attribute";
  for (Index p = 0; p < np; ++p) s += ",p" + std::to_string(p);
  s += ",a_bar\n";
  for (Index k = 0; k < b.size(); ++k) {
    for (Index i = 0; i < na; ++i) {
      s += std::to_string(rows[static_cast<std::size_t>(k)]) + "," + std::to_string(b.labels[static_cast<std::size_t>(k)]) +
           "," + std::to_string(i);
      for (Index p = 0; p < np; ++p) s += "," + fmt(m(k * na + i, p));
      s += "," + fmt(grounded(k, i)) + "\n";
    }
  }
  write_text(out / "attention.csv", s);
  write_text(out / "attention_mean.csv", csv_header(cfg) + matrix_csv(pipeline::mean_attention(model, l.ck.state, data, rows)));
}

void cmd_report(const Args& a) {
  const fs::path out = out_dir(a);
  Loaded l = load_trained(a);
  const RunConfig& cfg = l.ck.config;
  trainer::Model model(cfg, l.ck.dims);
  const FeatureSet& data = l.data;
  const auto all = all_classes(data);
  const Mat real = class_means(data, all, MeanSelector::kFeatures);
  const Mat priors = pipeline::class_mean_priors(model, l.ck.state, data, all, 50, cfg.seed);
  write_text(out / "corr_attributes.csv", csv_header(cfg) + matrix_csv(eval::class_correlation(data.attributes)));
  write_text(out / "corr_priors.csv", csv_header(cfg) + matrix_csv(eval::class_correlation(priors)));
  write_text(out / "corr_real.csv", csv_header(cfg) + matrix_csv(eval::class_correlation(real)));

  const trainer::SynthesisBatch draws = trainer::synthesize(model, l.ck.state, data, all, 100, cfg.seed + 1);
  std::vector<std::uint8_t> group;
  for (std::int64_t y : draws.labels) {
    group.push_back(std::find(data.unseen_classes.begin(), data.unseen_classes.end(), y) != data.unseen_classes.end());
  }
  write_text(out / "histograms.csv", histogram_csv(eval::attr_histograms(draws.a_hat, group, cfg.eval.hist_bins), cfg));

  json j{{"audit", audit(cfg)},
         {"incorrectness", {{"attributes_vs_real", eval::correlation_incorrectness(data.attributes, real)},
                            {"priors_vs_real", eval::correlation_incorrectness(priors, real)}}}};
  if (!a.gt.empty()) {
    const GroundTruth gt = ground_truth_from(zfc::read_file(a.gt));
    if (gt.class_attr_vars.rows() != data.num_classes() || gt.class_attr_vars.cols() != data.num_attributes()) {
      throw shape_mismatch("ground truth does not match data");
    }
    std::vector<Index> test = select_samples(data, data.test_mask, all);
    j["variance_spearman"] = pipeline::variance_recovery(l.ck.state, data, gt);
    j["localization"] = pipeline::localization_hit_rate(pipeline::mean_attention(model, l.ck.state, data, test), gt);
  }
  write_json(out / "report.json", j);
}

void print_error(const std::string& kind, const std::string& family, const std::string& detail, int code) {
  json e{{"error", {{"kind", kind}, {"family", family}, {"detail", detail}, {"exit_code", code}}}};
  std::cerr << e.dump() << std::endl;
}

const char* family_name(ErrorFamily f) {
  switch (f) {
    case ErrorFamily::kConfig:
      return "config";
    case ErrorFamily::kData:
      return "data";
    case ErrorFamily::kNumeric:
      return "numeric";
    case ErrorFamily::kIo:
      return "io";
  }
  return "unknown";
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* t = std::getenv("ADIVA_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"adiva: attribute-distribution feature generation for zero-shot learning"};
  app.require_subcommand(1);
  Args args;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "JSON config file");
    sub->add_option("--preset", args.preset, "awa2 | cub | sun | tiny");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out, "output directory")->required();
  };
  struct Cmd {
    const char* name;
    const char* help;
    void (*fn)(const Args&);
  };
  const Cmd cmds[] = {
      {"synth-data", "generate a synthetic benchmark (data.zfc, gt.zfc)", cmd_synth_data},
      {"train", "train a model (checkpoint.zfc, train_log.jsonl)", cmd_train},
      {"synthesize", "synthesize unseen-class features (synthesis.zfc, class_stats.json)", cmd_synthesize},
      {"eval", "classifier metrics (metrics.json, histograms.csv)", cmd_eval},
      {"gradcheck", "finite-difference check of the full loss (gradcheck.json)", cmd_gradcheck},
      {"export-attn", "attention maps and grounded attributes (attention.csv)", cmd_export_attn},
      {"report", "correlation matrices and histograms (report.json, *.csv)", cmd_report},
  };
  void (*selected)(const Args&) = nullptr;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    sub->add_option("--data", args.data, "data .zfc");
    sub->add_option("--gt", args.gt, "ground-truth .zfc");
    sub->add_option("--checkpoint", args.checkpoint, "checkpoint .zfc");
    sub->add_option("--synth", args.synth, "synthesized .zfc");
    sub->add_option("--epochs", args.epochs, "train until this epoch");
    sub->add_option("--samples", args.samples, "samples exported by export-attn");
    sub->callback([&selected, fn = c.fn] { selected = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("UsageError", "config", e.what(), 2);
    return 2;
  }

  try {
    selected(args);
  } catch (const Error& e) {
    print_error(e.kind(), family_name(e.family()), e.detail(), e.exit_code());
    return e.exit_code();
  } catch (const json::exception& e) {
    print_error("ParseError", "config", e.what(), 2);
    return 2;
  } catch (const std::exception& e) {
    print_error("InternalError", "internal", e.what(), 1);
    return 1;
  }
  return 0;
}
