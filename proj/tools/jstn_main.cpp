// jstn: train / evaluate / ablate / sweep / gradcheck / synth for the joint
// semantic transfer network.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 data error,
// 3 numerical failure. Errors print one machine-parsable line to stderr.

#include "jstn/config.hpp"
#include "jstn/data.hpp"
#include "jstn/gradcheck.hpp"
#include "jstn/metrics.hpp"
#include "jstn/model.hpp"
#include "jstn/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  long seed = -1;  // -1 = keep the config's seed
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path,
                  "flat key=value config file");
  cmd->add_option("--set", opts.overrides,
                  "config override key=value (repeatable)");
  cmd->add_option("--out", opts.out_dir, "output directory")->required();
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_flag("--quiet", opts.quiet, "suppress progress output");
}

jstn::TrainConfig build_config(const CommonOpts& opts) {
  jstn::TrainConfig cfg = opts.config_path.empty()
                              ? jstn::TrainConfig{}
                              : jstn::TrainConfig::from_file(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw jstn::ParameterError("--set expects key=value, got '" + kv + "'");
    }
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
  cfg.validate();
  return cfg;
}

// --out resolves under JSTN_OUT_ROOT when relative and the variable is set.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("JSTN_OUT_ROOT")) {
      p = fs::path(root) / p;
    }
  }
  fs::create_directories(p);
  return p;
}

jstn::SplitSpec split_for(const jstn::TrainConfig& cfg) {
  jstn::SplitSpec split;
  split.ratio_labeled = cfg.ratio_labeled;
  split.ratio_unlabeled = cfg.ratio_unlabeled;
  split.stratified = cfg.stratified;
  split.seed = cfg.seed;
  return split;
}

json metrics_to_json(const jstn::MetricsReport& rep) {
  json j;
  j["accuracy"] = rep.accuracy;
  j["weighted_precision"] = rep.weighted_precision;
  j["weighted_recall"] = rep.weighted_recall;
  j["weighted_f1"] = rep.weighted_f1;
  j["zero_division"] = rep.any_zero_division;
  j["per_class"] = json::array();
  for (std::size_t k = 0; k < rep.per_class.size(); ++k) {
    const auto& pc = rep.per_class[k];
    j["per_class"].push_back({{"class", k + 1},
                              {"precision", pc.precision},
                              {"recall", pc.recall},
                              {"f1", pc.f1},
                              {"support", pc.support}});
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw jstn::DataError("cannot write " + path.string());
  out << text;
}

jstn::CsvSchema synth_schema(const jstn::SynthSpec& spec, int dim) {
  jstn::CsvSchema schema;
  schema.label_column = "label";
  for (int i = 1; i <= dim; ++i) {
    schema.feature_columns.push_back("f" + std::to_string(i));
  }
  if (spec.num_classes == 5) {
    schema.class_map = {{"benign", 1},
                        {"dos", 2},
                        {"ddos", 3},
                        {"reconnaissance", 4},
                        {"password", 5}};
  } else {
    for (int k = 1; k <= spec.num_classes; ++k) {
      schema.class_map["class" + std::to_string(k)] = k;
    }
  }
  return schema;
}

// Writes sn.csv / si.csv / target.csv plus a manifest referencing them.
void write_synth_dir(const jstn::SynthResult& synth,
                     const jstn::SynthSpec& spec, const fs::path& dir) {
  jstn::Manifest manifest;
  manifest.class_map = synth_schema(spec, spec.d_sn).class_map;
  struct Item {
    const jstn::DomainDataset* ds;
    const char* file;
    jstn::DomainRole role;
    int dim;
  };
  const Item items[] = {
      {&synth.sn, "sn.csv", jstn::DomainRole::SN, spec.d_sn},
      {&synth.si, "si.csv", jstn::DomainRole::SI, spec.d_si},
      {&synth.target_full, "target.csv", jstn::DomainRole::T, spec.d_t},
  };
  for (const auto& item : items) {
    jstn::CsvSchema schema = synth_schema(spec, item.dim);
    jstn::save_csv(*item.ds, (dir / item.file).string(), schema);
    jstn::ManifestDomain md;
    md.path = item.file;
    md.role = item.role;
    md.label_column = "label";
    md.feature_columns = schema.feature_columns;
    manifest.domains.push_back(md);
  }
  jstn::save_manifest(manifest, (dir / "manifest.json").string());
}

struct DataSource {
  std::string manifest_path;  // exactly one of the two is set
  std::string preset;
};

jstn::DomainBundle make_bundle(const DataSource& src,
                               const jstn::TrainConfig& cfg,
                               std::uint64_t seed) {
  jstn::SplitSpec split = split_for(cfg);
  split.seed = seed;
  if (!src.preset.empty()) {
    jstn::SynthSpec spec = jstn::preset_synth(src.preset, seed);
    return jstn::bundle_from_synth(jstn::synth_domains(spec), split);
  }
  return jstn::load_bundle(jstn::load_manifest(src.manifest_path), split);
}

int run_train(const CommonOpts& opts, const std::string& manifest_path) {
  jstn::TrainConfig cfg = build_config(opts);
  const fs::path out = resolve_out(opts.out_dir);
  write_text(out / "config.echo", cfg.echo());

  jstn::DomainBundle data = make_bundle({manifest_path, ""}, cfg, cfg.seed);
  jstn::JstnModel model =
      jstn::JstnModel::init(jstn::model_spec_for(data, cfg), {cfg.seed, 1.0});

  fs::create_directories(out / "ckpt");
  std::ofstream metrics(out / "metrics.jsonl");
  if (!metrics) throw jstn::DataError("cannot write metrics.jsonl");

  const int report_every = std::max(1, cfg.epochs / 20);
  jstn::TrainHooks hooks;
  hooks.on_epoch = [&](const jstn::EpochReport& rep) {
    metrics << jstn::epoch_json_line(rep, cfg.log_timing) << "\n";
    if (!opts.quiet && rep.epoch % report_every == 0) {
      std::printf("epoch %d/%d total=%.4f accepted=%d (%.1f%%)\n", rep.epoch,
                  cfg.epochs, rep.losses.total, rep.plr.accepted_count,
                  100.0 * rep.plr.acceptance_rate);
    }
  };
  hooks.on_checkpoint = [&](int epoch, const jstn::JstnModel& m) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%05d.ckpt", epoch);
    m.save((out / "ckpt" / name).string(), cfg.hash());
  };

  const auto outputs = jstn::train(model, data, cfg, hooks);
  metrics.close();
  model.save((out / "ckpt" / "final.ckpt").string(), cfg.hash());

  ordered_json final_j;
  final_j["epochs"] = cfg.epochs;
  final_j["config_hash"] = cfg.hash();
  if (!outputs.reports.empty()) {
    final_j["final_total_loss"] = outputs.reports.back().losses.total;
    final_j["final_acceptance_rate"] =
        outputs.reports.back().plr.acceptance_rate;
  }
  if (!data.tu.y_eval.empty()) {
    final_j["tu_metrics"] =
        metrics_to_json(jstn::evaluate_target(model, data.tu));
  }
  write_text(out / "final.json", final_j.dump(2) + "\n");
  if (!opts.quiet) {
    std::printf("done; outputs under %s\n", out.string().c_str());
  }
  return 0;
}

int run_eval(const CommonOpts& opts, const std::string& manifest_path,
             const std::string& ckpt_path, bool confusion_csv) {
  jstn::TrainConfig cfg = build_config(opts);
  const fs::path out = resolve_out(opts.out_dir);
  jstn::JstnModel model = jstn::JstnModel::load(ckpt_path);
  jstn::DomainBundle data = make_bundle({manifest_path, ""}, cfg, cfg.seed);
  if (data.num_classes != model.spec().num_classes) {
    throw jstn::DataError("checkpoint and manifest class counts differ");
  }
  jstn::MetricsReport rep = jstn::evaluate_target(model, data.tu);
  write_text(out / "final.json", metrics_to_json(rep).dump(2) + "\n");
  if (confusion_csv) {
    write_text(out / "confusion.csv", rep.confusion.to_csv());
  }
  if (!opts.quiet) {
    std::printf("accuracy=%.4f weighted_f1=%.4f\n", rep.accuracy,
                rep.weighted_f1);
  }
  return 0;
}

int run_synth(const CommonOpts& opts, const std::string& preset) {
  jstn::TrainConfig cfg = build_config(opts);
  const fs::path out = resolve_out(opts.out_dir);
  jstn::SynthSpec spec = jstn::preset_synth(preset, cfg.seed);
  write_synth_dir(jstn::synth_domains(spec), spec, out);
  if (!opts.quiet) {
    std::printf("wrote sn.csv, si.csv, target.csv, manifest.json under %s\n",
                out.string().c_str());
  }
  return 0;
}

jstn::RunFn bundle_runner(const DataSource& src) {
  return [src](const jstn::TrainConfig& rcfg, std::uint64_t seed) {
    jstn::TrainConfig c = rcfg;
    c.seed = seed;
    jstn::DomainBundle data = make_bundle(src, c, seed);
    jstn::JstnModel model =
        jstn::JstnModel::init(jstn::model_spec_for(data, c), {seed, 1.0});
    jstn::train(model, data, c);
    return jstn::evaluate_target(model, data.tu).accuracy;
  };
}

std::vector<std::uint64_t> seed_range(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) {
    seeds.push_back(base + static_cast<std::uint64_t>(i));
  }
  return seeds;
}

int run_ablate(const CommonOpts& opts, const DataSource& src,
               const std::string& variants_arg, int num_seeds, int jobs) {
  jstn::TrainConfig base = build_config(opts);
  const fs::path out = resolve_out(opts.out_dir);
  write_text(out / "config.echo", base.echo());

  std::vector<std::string> variants;
  if (variants_arg == "all") {
    variants = jstn::ablation_variant_names();
  } else {
    std::string cur;
    for (char c : variants_arg + ",") {
      if (c == ',') {
        if (!cur.empty()) variants.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
  }

  const auto table = jstn::run_ablation(base, variants,
                                        seed_range(base.seed, num_seeds),
                                        bundle_runner(src), jobs);

  ordered_json j;
  j["seeds"] = table.seeds;
  j["rows"] = json::array();
  if (!opts.quiet) {
    std::printf("%-16s %10s %12s\n", "variant", "mean_acc", "p_vs_full");
  }
  for (const auto& row : table.rows) {
    ordered_json r;
    r["variant"] = row.variant;
    r["accuracies"] = row.accuracies;
    r["mean_accuracy"] = row.mean_accuracy;
    if (row.has_ttest) {
      r["t_vs_full"] = row.vs_full.t;
      r["p_vs_full"] = row.vs_full.p;
    }
    j["rows"].push_back(r);
    if (!opts.quiet) {
      if (row.has_ttest) {
        std::printf("%-16s %10.4f %12.3g\n", row.variant.c_str(),
                    row.mean_accuracy, row.vs_full.p);
      } else {
        std::printf("%-16s %10.4f %12s\n", row.variant.c_str(),
                    row.mean_accuracy, "-");
      }
    }
  }
  write_text(out / "ablation.json", j.dump(2) + "\n");
  return 0;
}

int run_sweep_cmd(const CommonOpts& opts, const DataSource& src,
                  const std::string& param, const std::string& values_arg,
                  int num_seeds, int jobs) {
  jstn::TrainConfig base = build_config(opts);
  const fs::path out = resolve_out(opts.out_dir);
  write_text(out / "config.echo", base.echo());

  std::vector<double> values;
  std::string cur;
  for (char c : values_arg + ",") {
    if (c == ',') {
      if (!cur.empty()) values.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }

  const auto rows = jstn::run_sweep(base, param, values,
                                    seed_range(base.seed, num_seeds),
                                    bundle_runner(src), jobs);

  ordered_json j;
  j["param"] = param;
  j["rows"] = json::array();
  if (!opts.quiet) {
    std::printf("%10s %6s %10s\n", param.c_str(), "seed", "accuracy");
  }
  for (const auto& row : rows) {
    j["rows"].push_back({{"value", row.value},
                         {"seed", row.seed},
                         {"accuracy", row.accuracy}});
    if (!opts.quiet) {
      std::printf("%10g %6llu %10.4f\n", row.value,
                  static_cast<unsigned long long>(row.seed), row.accuracy);
    }
  }
  write_text(out / "sweep.json", j.dump(2) + "\n");
  return 0;
}

int run_gradcheck_cmd(std::uint64_t seed, int num_seeds, double tol,
                      const std::string& corrupt_op) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = jstn::run_gradcheck(seed, num_seeds, tol, corrupt_op);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("loss=%s max_rel_err=%.3e status=%s\n", r.loss_name.c_str(),
                r.max_rel_err, r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("gradcheck %s in %.2fs (%d seeds, tol %.1e)\n",
              all_pass ? "passed" : "FAILED", secs, num_seeds, tol);
  if (!all_pass) {
    std::fprintf(
        stderr,
        "JSTN_ERROR code=3 kind=numeric msg=\"gradient check failed\"\n");
    return 3;
  }
  return 0;
}

int auto_jobs(int requested) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint semantic transfer network trainer"};
  app.require_subcommand(1);

  CommonOpts train_opts, eval_opts, synth_opts, ablate_opts, sweep_opts;
  std::string train_manifest, eval_manifest, eval_ckpt;
  std::string synth_preset = "separable";
  bool eval_confusion = false;

  auto* train_cmd = app.add_subcommand("train", "train on a dataset manifest");
  train_cmd->add_option("--data", train_manifest, "dataset manifest path")
      ->required();
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_manifest, "dataset manifest path")
      ->required();
  eval_cmd->add_flag("--confusion-csv", eval_confusion,
                     "also write confusion.csv");
  add_common(eval_cmd, eval_opts);

  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic dataset triple");
  synth_cmd->add_option("--preset", synth_preset, "separable | hard | toy");
  add_common(synth_cmd, synth_opts);

  DataSource ablate_src, sweep_src;
  std::string ablate_variants = "all";
  int ablate_seeds = 10, ablate_jobs = 0;
  auto* ablate_cmd =
      app.add_subcommand("ablate", "run the ablation variant grid");
  ablate_cmd->add_option("--data", ablate_src.manifest_path,
                         "dataset manifest path");
  ablate_cmd->add_option("--preset", ablate_src.preset,
                         "synthetic preset instead of --data");
  ablate_cmd->add_option("--variants", ablate_variants,
                         "'all' or a comma-separated list");
  ablate_cmd->add_option("--seeds", ablate_seeds, "number of repeated runs");
  ablate_cmd->add_option("--jobs", ablate_jobs, "parallel workers (0 = auto)");
  add_common(ablate_cmd, ablate_opts);

  std::string sweep_param, sweep_values;
  int sweep_seeds = 1, sweep_jobs = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sensitivity");
  sweep_cmd->add_option("--data", sweep_src.manifest_path,
                        "dataset manifest path");
  sweep_cmd->add_option("--preset", sweep_src.preset,
                        "synthetic preset instead of --data");
  sweep_cmd
      ->add_option("--param", sweep_param, "alpha | beta | lambda | eta | gamma")
      ->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")
      ->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "runs per value");
  sweep_cmd->add_option("--jobs", sweep_jobs, "parallel workers (0 = auto)");
  add_common(sweep_cmd, sweep_opts);

  long gc_seed = 0;
  int gc_num_seeds = 10;
  double gc_tol = 1e-4;
  std::string gc_corrupt;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of every loss gradient");
  gc_cmd->add_option("--seed", gc_seed, "base seed");
  gc_cmd->add_option("--seeds", gc_num_seeds, "number of random scenarios");
  gc_cmd->add_option("--tol", gc_tol, "max relative error");
  gc_cmd->add_option("--corrupt-op", gc_corrupt,
                     "test hook: corrupt the named op's adjoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::fprintf(stderr, "JSTN_ERROR code=1 kind=config msg=\"%s\"\n",
                 e.what());
    return 1;
  }

  try {
    if (train_cmd->parsed()) {
      if (train_opts.quiet) jstn::verbosity() = 0;
      return run_train(train_opts, train_manifest);
    }
    if (eval_cmd->parsed()) {
      if (eval_opts.quiet) jstn::verbosity() = 0;
      return run_eval(eval_opts, eval_manifest, eval_ckpt, eval_confusion);
    }
    if (synth_cmd->parsed()) {
      if (synth_opts.quiet) jstn::verbosity() = 0;
      return run_synth(synth_opts, synth_preset);
    }
    if (ablate_cmd->parsed()) {
      if (ablate_opts.quiet) jstn::verbosity() = 0;
      if (ablate_src.manifest_path.empty() == ablate_src.preset.empty()) {
        throw jstn::ParameterError(
            "ablate needs exactly one of --data or --preset");
      }
      return run_ablate(ablate_opts, ablate_src, ablate_variants, ablate_seeds,
                        auto_jobs(ablate_jobs));
    }
    if (sweep_cmd->parsed()) {
      if (sweep_opts.quiet) jstn::verbosity() = 0;
      if (sweep_src.manifest_path.empty() == sweep_src.preset.empty()) {
        throw jstn::ParameterError(
            "sweep needs exactly one of --data or --preset");
      }
      return run_sweep_cmd(sweep_opts, sweep_src, sweep_param, sweep_values,
                           sweep_seeds, auto_jobs(sweep_jobs));
    }
    if (gc_cmd->parsed()) {
      return run_gradcheck_cmd(static_cast<std::uint64_t>(gc_seed),
                               gc_num_seeds, gc_tol, gc_corrupt);
    }
  } catch (const jstn::NumericError& e) {
    std::fprintf(stderr, "JSTN_ERROR code=3 kind=numeric msg=\"%s\"\n",
                 e.what());
    return 3;
  } catch (const jstn::DataError& e) {
    std::fprintf(stderr, "JSTN_ERROR code=2 kind=data msg=\"%s\"\n", e.what());
    return 2;
  } catch (const jstn::Error& e) {
    std::fprintf(stderr, "JSTN_ERROR code=1 kind=config msg=\"%s\"\n",
                 e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "JSTN_ERROR code=1 kind=config msg=\"%s\"\n",
                 e.what());
    return 1;
  }
  return 0;
}
