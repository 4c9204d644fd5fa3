// Copyright (c) 2026 The cflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "cflow_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "cflow/digits.hpp"
#include "cflow/gmm.hpp"
#include "cflow/gradcheck.hpp"
#include "cflow_cli/config.hpp"

namespace cflow::cli {
namespace {

namespace fs = std::filesystem;

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void print_metrics(std::ostream& out, const gmm::ExperimentConfig& cfg, const gmm::Metrics& m) {
  out << "variant            " << gmm::variant_name(cfg.variant) << "\n"
      << "seed               " << cfg.seed << "\n"
      << "forward_accuracy   " << fixed(m.forward_accuracy) << "\n"
      << "mean_fidelity      " << fixed(m.mean_fidelity()) << "\n"
      << "min_fidelity       " << fixed(m.min_fidelity()) << "\n"
      << "mean_mmd           " << fixed(m.mean_mmd(), 5) << "\n"
      << "fidelity per class";
  for (double f : m.fidelity) out << ' ' << fixed(f, 3);
  out << "\n";
}

TrainHooks progress_hooks(std::ostream& out, int log_every, const fs::path& checkpoint) {
  TrainHooks hooks;
  hooks.checkpoint_path = checkpoint;
  if (log_every > 0) {
    hooks.on_iteration = [&out, log_every](int it, const LossReport& r) {
      if ((it + 1) % log_every != 0) return;
      out << "iter " << it + 1 << " total " << fixed(r.total, 5);
      for (const auto& t : r.terms) out << ' ' << t.name << ' ' << fixed(t.value, 5);
      out << "\n";
    };
  }
  return hooks;
}

bool non_empty_dir(const fs::path& p) { return fs::is_directory(p) && !fs::is_empty(p); }

Checkpoint load_existing_checkpoint(const fs::path& path) {
  if (path.empty() || !fs::exists(path)) {
    throw ConfigError("no checkpoint at '" + path.string() +
                      "'; train one with `cflow digits-train --out DIR` and pass --checkpoint DIR/checkpoint.final");
  }
  Checkpoint ck = load_checkpoint(path);
  const DimPlan& d = ck.model.dims();
  if (d.x_dim != digits::kPixels || d.cond_dim != digits::kClasses) {
    throw ConfigError("checkpoint '" + path.string() + "' is not a digits model");
  }
  return ck;
}

struct Common {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> hidden;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (flags override its values)");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--hidden", c.hidden, "Hidden width of the coupling subnets");
}

Json resolve(Json doc, const Common& c) {
  if (c.config) doc = overlay_file(doc, *c.config);
  if (c.seed) doc["seed"] = *c.seed;
  if (c.out) doc["output_dir"] = *c.out;
  if (c.hidden) doc["flow"]["hidden"] = *c.hidden;
  return doc;
}

// --- gmm -------------------------------------------------------------------

int gmm_run(const Json& doc, std::ostream& out) {
  const gmm::ExperimentConfig cfg = gmm_config(doc);
  const fs::path dir = doc.at("output_dir").get<std::string>();
  write_echo(doc, dir);
  const gmm::RunResult run =
      gmm::run_experiment(cfg, progress_hooks(out, cfg.train.log_every, dir / "checkpoint.last"));
  gmm::write_artifacts(run, cfg, dir);
  print_metrics(out, cfg, run.metrics);
  out << "artifacts in " << dir.string() << "\n";
  return kExitOk;
}

int gmm_compare(const Json& doc, const std::vector<std::uint64_t>& seeds, bool force, std::ostream& out) {
  if (seeds.empty()) throw ConfigError("--seeds needs at least one seed");
  const fs::path dir = doc.at("output_dir").get<std::string>();
  if (non_empty_dir(dir) && !force) {
    throw ConfigError("output directory '" + dir.string() + "' already holds files; pass --force to reuse it");
  }
  gmm::ExperimentConfig base = gmm_config(doc);
  write_echo(doc, dir);

  CsvWriter csv(dir / "comparison.csv", gmm::metrics_header());
  std::map<std::uint64_t, std::map<gmm::Variant, double>> fidelity;
  for (std::uint64_t seed : seeds) {
    for (gmm::Variant v : gmm::kAllVariants) {
      gmm::ExperimentConfig cfg = base;
      cfg.seed = seed;
      cfg.arch.seed = seed;
      cfg.variant = v;
      out << "running " << gmm::variant_name(v) << " seed " << seed << "\n" << std::flush;
      const gmm::RunResult run = gmm::run_experiment(cfg);
      gmm::write_metrics_row(csv, cfg, run.metrics);
      fidelity[seed][v] = run.metrics.mean_fidelity();

      Tensor all(static_cast<Eigen::Index>(run.samples.size()) * cfg.samples_per_class, 2);
      std::vector<int> classes;
      for (std::size_t k = 0; k < run.samples.size(); ++k) {
        all.matrix().middleRows(static_cast<Eigen::Index>(k) * cfg.samples_per_class, cfg.samples_per_class) =
            run.samples[k].matrix();
        classes.insert(classes.end(), static_cast<std::size_t>(cfg.samples_per_class), static_cast<int>(k));
      }
      const std::string name = std::string(gmm::variant_name(v)) + "_seed" + std::to_string(seed);
      emit_scatter_svg(all, classes, dir / ("posterior_" + name + ".svg"), name);
      out << "  forward_accuracy " << fixed(run.metrics.forward_accuracy) << " mean_fidelity "
          << fixed(run.metrics.mean_fidelity()) << "\n";
    }
  }

  out << "\nseed       cond_nll   inn_full   inn_fwd    inn_ramp\n";
  int nll_ge_fwd = 0;
  int fwd_lt_full = 0;
  for (const auto& [seed, f] : fidelity) {
    out << seed;
    for (int pad = static_cast<int>(std::to_string(seed).size()); pad < 11; ++pad) out << ' ';
    for (gmm::Variant v : gmm::kAllVariants) out << fixed(f.at(v)) << "     ";
    out << "\n";
    nll_ge_fwd += f.at(gmm::Variant::cond_nll) >= f.at(gmm::Variant::inn_forward_only);
    fwd_lt_full += f.at(gmm::Variant::inn_forward_only) < f.at(gmm::Variant::inn_full);
  }
  out << "cond_nll >= inn_forward_only on " << nll_ge_fwd << "/" << seeds.size() << " seeds\n"
      << "inn_forward_only < inn_full on " << fwd_lt_full << "/" << seeds.size() << " seeds\n"
      << "comparison in " << (dir / "comparison.csv").string() << "\n";
  return kExitOk;
}

// --- digits ----------------------------------------------------------------

int digits_train(const Json& doc, std::ostream& out) {
  const DigitsSettings s = digits_config(doc);
  const fs::path dir = doc.at("output_dir").get<std::string>();
  const digits::Dataset data = digits::load_digits(s.data, s.load);
  write_echo(doc, dir);

  CsvWriter csv(dir / "digits_metrics.csv", {"epoch", "train_nll", "test_accuracy"});
  const digits::TrainResult r = digits::train_digits(s.config, data, [&](const digits::EpochRecord& e) {
    out << "epoch " << e.epoch << " train_nll " << fixed(e.train_nll, 3) << " test_accuracy "
        << fixed(e.test_accuracy) << "\n"
        << std::flush;
    csv.cell(e.epoch).cell(e.train_nll).cell(e.test_accuracy);
    csv.end_row();
  });
  save_checkpoint(dir / "checkpoint.final", r.model, r.optimizer, r.train_config, r.rng);

  Rng rng(Rng::derive_seed(s.config.seed, 5));
  std::vector<Tensor> per_class;
  std::size_t hits = 0;
  for (int k = 0; k < digits::kClasses; ++k) {
    per_class.push_back(digits::sample_digits(r.model, k, 20, s.config.cond, rng));
    for (int pred : digits::classify_digits(r.model, per_class.back())) hits += pred == k;
  }
  write_pgm(dir / "samples_grid.pgm", digits::sample_grid(per_class));
  write_pgm(dir / "style_grid.pgm", digits::style_grid(r.model, 10, rng));

  const double final_acc = r.epochs.empty() ? r.initial_test_accuracy : r.epochs.back().test_accuracy;
  out << "initial test_accuracy " << fixed(r.initial_test_accuracy) << "\n"
      << "final test_accuracy   " << fixed(final_acc) << "\n"
      << "sample re-classification " << fixed(static_cast<double>(hits) / (20.0 * digits::kClasses)) << "\n"
      << "artifacts in " << dir.string() << "\n";
  return kExitOk;
}

int digits_classify(const Json& doc, const fs::path& checkpoint, const std::string& split,
                    const std::optional<std::string>& out_dir, std::ostream& out) {
  const DigitsSettings s = digits_config(doc);
  const Checkpoint ck = load_existing_checkpoint(checkpoint);
  const digits::Dataset data = digits::load_digits(s.data, s.load);

  Tensor x;
  std::vector<int> truth;
  if (split == "test") {
    x = data.test_x;
    truth = data.test_labels;
  } else if (split == "train") {
    x = data.train_x;
    truth = data.train_labels;
  } else {
    throw ConfigError("--split must be test or train");
  }
  const std::vector<int> pred = digits::classify_digits(ck.model, x);
  const fs::path dir = out_dir ? fs::path(*out_dir) : checkpoint.parent_path();
  fs::create_directories(dir.empty() ? fs::path(".") : dir);
  CsvWriter csv(dir / "predictions.csv", {"index", "true", "pred"});
  for (std::size_t i = 0; i < pred.size(); ++i) {
    csv.cell(static_cast<long long>(i)).cell(truth[i]).cell(pred[i]);
    csv.end_row();
  }
  out << "accuracy=" << fixed(digits::accuracy(pred, truth)) << "\n";
  return kExitOk;
}

struct SampleArgs {
  std::optional<int> cls;
  int n = 20;
  bool style = false;
  std::string v_mode = "sampled";
};

int digits_sample(const fs::path& checkpoint, const SampleArgs& a, std::uint64_t seed,
                  const std::optional<std::string>& out_dir, std::ostream& out) {
  if (a.n < 1) throw ConfigError("--n must be at least 1");
  if (a.cls && (*a.cls < 0 || *a.cls >= digits::kClasses)) throw ConfigError("--class must lie in [0, 9]");
  if (a.v_mode != "sampled" && a.v_mode != "zero") throw ConfigError("--v-mode must be sampled or zero");
  const Checkpoint ck = load_existing_checkpoint(checkpoint);
  const fs::path dir = out_dir ? fs::path(*out_dir) : checkpoint.parent_path();
  fs::create_directories(dir.empty() ? fs::path(".") : dir);

  Rng rng(seed);
  GrayImage img;
  fs::path file;
  if (a.style) {
    img = digits::style_grid(ck.model, a.n, rng);
    file = dir / "style_grid.pgm";
  } else {
    const VMode mode = a.v_mode == "sampled" ? VMode::sampled : VMode::zero;
    std::vector<Tensor> rows;
    if (a.cls) {
      rows.push_back(digits::sample_digits(ck.model, *a.cls, a.n, ck.config.cond, rng, mode));
      file = dir / ("samples_class_" + std::to_string(*a.cls) + ".pgm");
    } else {
      for (int k = 0; k < digits::kClasses; ++k) {
        rows.push_back(digits::sample_digits(ck.model, k, a.n, ck.config.cond, rng, mode));
      }
      file = dir / "samples_grid.pgm";
    }
    img = digits::sample_grid(rows);
  }
  write_pgm(file, img);
  out << "wrote " << file.string() << " (" << img.width << "x" << img.height << ")\n";
  return kExitOk;
}

// --- gradcheck -------------------------------------------------------------

int gradcheck_cmd(const FlowCheckOptions& opts, std::ostream& out) {
  if (opts.width < 2) throw ConfigError("width must allow a split (need --width >= 2, got " + std::to_string(opts.width) + ")");
  if (opts.blocks < 1) throw ConfigError("--blocks must be at least 1");
  if (opts.hidden < 1) throw ConfigError("--hidden must be at least 1");
  const FlowCheckReport r = check_flow(opts);
  out << "gradient  max_rel_err " << r.grad.max_rel_err << " (tol " << opts.grad_tol << ") "
      << (r.grad.pass ? "pass" : "FAIL") << "\n"
      << "logdet    max_rel_err " << r.logdet_max_rel_err << " (tol " << opts.logdet_tol << ") "
      << (r.logdet_pass ? "pass" : "FAIL") << "\n";
  if (!r.grad.pass) {
    for (const auto& p : r.grad.params) {
      if (!p.pass) out << "  " << p.name << " max_rel_err " << p.max_rel_err << "\n";
    }
  }
  return r.pass() ? kExitOk : kExitVerification;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional normalizing flows: experiments, sampling and diagnostics", "cflow"};
  app.require_subcommand(1);

  Common gr;
  std::optional<std::string> objective;
  std::optional<int> iterations;
  auto* run_cmd = app.add_subcommand("gmm-run", "Train on the 8-component mixture and score the result");
  add_common(run_cmd, gr);
  run_cmd->add_option("--objective", objective, "cond_nll | inn_full | inn_forward_only | inn_ramp_variant");
  run_cmd->add_option("--iterations", iterations, "Training iterations");

  Common gc;
  std::vector<std::uint64_t> seeds;
  bool force = false;
  std::optional<int> cmp_iterations;
  auto* cmp_cmd = app.add_subcommand("gmm-compare", "Run every objective variant on several seeds");
  add_common(cmp_cmd, gc);
  cmp_cmd->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',')->required();
  cmp_cmd->add_flag("--force", force, "Reuse a non-empty output directory");
  cmp_cmd->add_option("--iterations", cmp_iterations, "Training iterations");

  Common dt;
  std::optional<std::string> data;
  std::optional<int> epochs;
  auto* train_cmd = app.add_subcommand("digits-train", "Train the conditional flow on the 8x8 digits");
  add_common(train_cmd, dt);
  train_cmd->add_option("--data", data, "Digits file (64 pixels and a label per line)");
  train_cmd->add_option("--epochs", epochs, "Training epochs");

  Common dc;
  std::optional<std::string> c_data;
  std::string c_checkpoint;
  std::string split = "test";
  auto* cls_cmd = app.add_subcommand("digits-classify", "Classify digits with a trained checkpoint");
  cls_cmd->add_option("--config", dc.config, "JSON config file (data location and split)");
  cls_cmd->add_option("--out", dc.out, "Directory for predictions.csv (default: next to the checkpoint)");
  cls_cmd->add_option("--data", c_data, "Digits file");
  cls_cmd->add_option("--checkpoint", c_checkpoint, "Checkpoint written by digits-train");
  cls_cmd->add_option("--split", split, "test | train");

  std::string s_checkpoint;
  std::optional<std::string> s_out;
  std::uint64_t s_seed = 0;
  SampleArgs sa;
  auto* smp_cmd = app.add_subcommand("digits-sample", "Write conditional samples as a PGM grid");
  smp_cmd->add_option("--checkpoint", s_checkpoint, "Checkpoint written by digits-train");
  smp_cmd->add_option("--class", sa.cls, "Only this class (one grid row)");
  smp_cmd->add_option("--n", sa.n, "Samples per class, or style rows with --style");
  smp_cmd->add_flag("--style", sa.style, "Fixed latent per row across all ten classes");
  smp_cmd->add_option("--v-mode", sa.v_mode, "sampled | zero");
  smp_cmd->add_option("--seed", s_seed, "Random seed");
  smp_cmd->add_option("--out", s_out, "Output directory (default: next to the checkpoint)");

  FlowCheckOptions fc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Check gradients and log-determinants of a random flow");
  gc_cmd->add_option("--width", fc.width, "Flow width");
  gc_cmd->add_option("--blocks", fc.blocks, "Coupling blocks");
  gc_cmd->add_option("--seed", fc.seed, "Random seed");
  gc_cmd->add_option("--hidden", fc.hidden, "Subnet hidden width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) {
      Json doc = resolve(gmm_defaults(), gr);
      if (objective) doc["objective"]["name"] = *objective;
      if (iterations) doc["training"]["iterations"] = *iterations;
      return gmm_run(doc, out);
    }
    if (*cmp_cmd) {
      Json doc = resolve(gmm_defaults(), gc);
      if (cmp_iterations) doc["training"]["iterations"] = *cmp_iterations;
      return gmm_compare(doc, seeds, force, out);
    }
    if (*train_cmd) {
      Json doc = resolve(digits_defaults(), dt);
      if (data) doc["bench"]["data"] = *data;
      if (epochs) doc["training"]["epochs"] = *epochs;
      return digits_train(doc, out);
    }
    if (*cls_cmd) {
      Json doc = digits_defaults();
      if (dc.config) doc = overlay_file(doc, *dc.config);
      if (c_data) doc["bench"]["data"] = *c_data;
      return digits_classify(doc, c_checkpoint, split, dc.out, out);
    }
    if (*smp_cmd) return digits_sample(s_checkpoint, sa, s_seed, s_out, out);
    if (*gc_cmd) return gradcheck_cmd(fc, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainingDiverged& e) {
    err << "training diverged at iteration " << e.iteration() << " (term " << e.term() << ")";
    if (!e.checkpoint().empty()) err << "; last finite state saved to " << e.checkpoint();
    err << "\n";
    return kExitDivergence;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace cflow::cli
