#include "jstn/trainer.hpp"

#include "jstn/clustering.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace jstn {

namespace {

using ad::NodePtr;

double scalar(const NodePtr& n) { return n->values(0, 0); }

void check_finite(const char* term, double v, int epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(term) + " is not finite at epoch " +
                       std::to_string(epoch));
  }
}

std::vector<int> concat_labels(const std::vector<int>& a,
                               const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Matrix gather_rows(const Matrix& x, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
  }
  return out;
}

std::vector<int> gather_labels(const std::vector<int>& y,
                               const std::vector<int>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
  return out;
}

// One optimisation step's worth of data (full batch unless minibatching).
struct StepInput {
  Matrix x_sn, x_si, x_tl, x_tu;
  std::vector<int> y_sn, y_si, y_tl;
  std::vector<int> y_tu_eval;  // may be empty
};

struct StepResult {
  NodePtr objective;
  LossBreakdown losses;
  PlrEpochStats plr;
};

std::vector<RepNodes> rep_nodes_for(const NodePtr& features,
                                    const std::vector<RepSet>& rep_sets) {
  std::vector<RepNodes> out;
  for (const auto& rs : rep_sets) {
    RepNodes rn;
    rn.class_id = rs.class_id;
    for (const auto& members : rs.member_indices) {
      rn.reps.push_back(ad::mean_rows(ad::rows(features, members)));
    }
    out.push_back(std::move(rn));
  }
  return out;
}

StepResult build_step(const JstnModel& model, const TrainConfig& cfg,
                      const StepInput& in, int epoch, Rng& cluster_rng) {
  const int num_classes = model.spec().num_classes;
  StepResult out;
  LossBreakdown& bd = out.losses;

  NodePtr x_tl = ad::constant(in.x_tl);
  NodePtr f_tl = model.encode(x_tl, Role::T);
  NodePtr logits_tl = model.classify(f_tl);

  if (cfg.target_only) {
    NodePtr l_hd = implicit_hard_loss(logits_tl, in.y_tl);
    bd.l_hd = bd.l_wis = bd.total = scalar(l_hd);
    check_finite("l_hd", bd.l_hd, epoch);
    out.objective = l_hd;
    return out;
  }

  const bool use_sn = !cfg.sii_only;
  const bool use_si = !cfg.sni_only;

  NodePtr f_tu = model.encode(ad::constant(in.x_tu), Role::T);
  NodePtr logits_tu = model.classify(f_tu);

  NodePtr f_sn, f_si, logits_sn, logits_si;
  if (use_sn) {
    f_sn = model.encode(ad::constant(in.x_sn), Role::SN);
    logits_sn = model.classify(f_sn);
  }
  if (use_si) {
    f_si = model.encode(ad::constant(in.x_si), Role::SI);
    logits_si = model.classify(f_si);
  }

  // Combined source batch X_S.
  NodePtr f_s = use_sn && use_si ? ad::concat_rows(f_sn, f_si)
                                 : (use_sn ? f_sn : f_si);
  NodePtr logits_s = use_sn && use_si
                         ? ad::concat_rows(logits_sn, logits_si)
                         : (use_sn ? logits_sn : logits_si);
  std::vector<int> y_s;
  if (use_sn) y_s = in.y_sn;
  if (use_si) y_s = use_sn ? concat_labels(in.y_sn, in.y_si) : in.y_si;

  NodePtr l_sup = supervision_loss(logits_s, y_s);
  bd.l_sup = scalar(l_sup);
  check_finite("l_sup", bd.l_sup, epoch);

  // Weighted implicit transfer. Teachers are recomputed from the current
  // model every step and detached.
  NodePtr l_hd = implicit_hard_loss(logits_tl, in.y_tl);
  bd.l_hd = scalar(l_hd);
  check_finite("l_hd", bd.l_hd, epoch);

  NodePtr l_sf_sn, l_sf_si;
  if (cfg.alpha > 0.0) {
    NodePtr p_tl = ad::softmax_rows_t(logits_tl, 1.0);
    if (use_sn) {
      const SoftLabelTable q_sn = soft_label_table(logits_sn->values, in.y_sn,
                                                   num_classes, cfg.t2);
      l_sf_sn = implicit_soft_loss(p_tl, in.y_tl, q_sn);
      bd.l_sf_sn = scalar(l_sf_sn);
      check_finite("l_sf_sn", bd.l_sf_sn, epoch);
    }
    if (use_si) {
      const SoftLabelTable q_si = soft_label_table(logits_si->values, in.y_si,
                                                   num_classes, cfg.t2);
      l_sf_si = implicit_soft_loss(p_tl, in.y_tl, q_si);
      bd.l_sf_si = scalar(l_sf_si);
      check_finite("l_sf_si", bd.l_sf_si, epoch);
    }
    if (!cfg.no_weighting) {
      if (use_sn) {
        bd.omega_sn = source_weight(source_target_divergence(
            f_sn->values, in.y_sn, f_tl->values, in.y_tl, num_classes,
            cfg.literal_paper_normalization));
      }
      if (use_si) {
        bd.omega_si = source_weight(source_target_divergence(
            f_si->values, in.y_si, f_tl->values, in.y_tl, num_classes,
            cfg.literal_paper_normalization));
      }
    }
  }
  NodePtr l_wis = weighted_implicit_loss(l_hd, l_sf_sn, l_sf_si, bd.omega_sn,
                                         bd.omega_si, cfg.alpha);
  bd.l_wis = scalar(l_wis);
  check_finite("l_wis", bd.l_wis, epoch);

  // Pseudo-label refinement over the current epoch's features.
  std::vector<LabelledFeatures> parts;
  if (use_sn) parts.push_back({&f_sn->values, &in.y_sn});
  if (use_si) parts.push_back({&f_si->values, &in.y_si});
  parts.push_back({&f_tl->values, &in.y_tl});
  const CentroidSet cents =
      labeled_centroids(parts, num_classes, cfg.literal_paper_normalization);

  PlrResult plr_res;
  if (cfg.no_plr) {
    // Variant: every TU instance takes the classifier label directly.
    plr_res.per_class_accepted.assign(static_cast<std::size_t>(num_classes),
                                      0);
    const std::vector<int> y_nn = argmax_rows(logits_tu->values);
    for (std::size_t i = 0; i < y_nn.size(); ++i) {
      PseudoLabelAssignment a;
      a.index = static_cast<int>(i);
      a.y_nn = a.y_gs = y_nn[i];
      a.accepted = true;
      a.epoch = epoch;
      plr_res.assignments.push_back(a);
      plr_res.accepted_indices.push_back(a.index);
      plr_res.accepted_labels.push_back(a.y_nn);
      plr_res.per_class_accepted[static_cast<std::size_t>(a.y_nn - 1)] += 1;
    }
    plr_res.accepted_count = static_cast<int>(y_nn.size());
    plr_res.acceptance_rate = y_nn.empty() ? 0.0 : 1.0;
  } else {
    plr_res = refine(logits_tu->values, f_tu->values, cents, epoch);
  }
  out.plr.accepted_count = plr_res.accepted_count;
  out.plr.acceptance_rate = plr_res.acceptance_rate;
  out.plr.per_class_accepted = plr_res.per_class_accepted;
  if (!in.y_tu_eval.empty()) {
    out.plr.pseudo_label_precision =
        pseudo_label_precision(plr_res, in.y_tu_eval);
    out.plr.has_precision = true;
  }

  // Updated target set X_T = X_TL + accepted pseudo-labelled instances.
  NodePtr f_t = plr_res.accepted_indices.empty()
                    ? f_tl
                    : ad::concat_rows(f_tl,
                                      ad::rows(f_tu, plr_res.accepted_indices));
  const std::vector<int> y_t = concat_labels(in.y_tl, plr_res.accepted_labels);

  NodePtr l_esc, l_esr, l_ssd, l_ssc;

  if (cfg.beta > 0.0) {
    l_esc = centroid_alignment_loss(f_s, y_s, f_t, y_t, num_classes);
    bd.l_esc = scalar(l_esc);
    check_finite("l_esc", bd.l_esc, epoch);
  }

  if (cfg.lambda > 0.0) {
    const auto reps_s = select_representatives(
        f_s->values, class_indices(y_s, num_classes), cfg.r_reps,
        Side::Source, cluster_rng, cfg.kmeans_max_iter, cfg.kmeans_tol);
    const auto reps_t = select_representatives(
        f_t->values, class_indices(y_t, num_classes), cfg.r_reps,
        Side::Target, cluster_rng, cfg.kmeans_max_iter, cfg.kmeans_tol);
    l_esr = representative_alignment_loss(rep_nodes_for(f_s, reps_s),
                                          rep_nodes_for(f_t, reps_t));
    bd.l_esr = scalar(l_esr);
    check_finite("l_esr", bd.l_esr, epoch);
  }

  if (cfg.gamma > 0.0) {
    // GRL routing: one backward pass trains D to discriminate while the
    // encoders receive the reversed, gamma-scaled gradient.
    NodePtr d_src = model.discriminate(ad::grad_reverse(f_s, cfg.gamma));
    NodePtr d_tgt = model.discriminate(
        ad::grad_reverse(ad::concat_rows(f_tl, f_tu), cfg.gamma));
    l_ssd = scenario_discriminator_loss(d_src, d_tgt);
    bd.l_ssd = scalar(l_ssd);
    check_finite("l_ssd", bd.l_ssd, epoch);
  }

  if (cfg.eta > 0.0 && use_sn && use_si) {
    const SoftLabelTable q_t1 =
        soft_label_table(logits_sn->values, in.y_sn, num_classes, cfg.t1);
    l_ssc = scenario_distribution_loss(logits_si, in.y_si, q_t1);
    bd.l_ssc = scalar(l_ssc);
    check_finite("l_ssc", bd.l_ssc, epoch);
  }

  // Reported total, as assembled for the encoder/classifier minimisation.
  bd.total = bd.l_sup + bd.l_wis + cfg.beta * bd.l_esc +
             cfg.lambda * bd.l_esr + cfg.gamma * bd.l_ssd +
             cfg.eta * bd.l_ssc;
  check_finite("total", bd.total, epoch);

  // Optimised objective. l_ssd enters unscaled: the GRL already applies
  // gamma on the encoder side, and D trains against its own BCE at full
  // rate.
  NodePtr obj = ad::add(l_sup, l_wis);
  if (l_esc) obj = ad::add(obj, ad::scale(l_esc, cfg.beta));
  if (l_esr) obj = ad::add(obj, ad::scale(l_esr, cfg.lambda));
  if (l_ssd) obj = ad::add(obj, l_ssd);
  if (l_ssc) obj = ad::add(obj, ad::scale(l_ssc, cfg.eta));
  out.objective = obj;
  return out;
}

StepInput full_batch(const DomainBundle& data) {
  StepInput in;
  in.x_sn = data.sn.X;
  in.y_sn = data.sn.y;
  in.x_si = data.si.X;
  in.y_si = data.si.y;
  in.x_tl = data.tl.X;
  in.y_tl = data.tl.y;
  in.x_tu = data.tu.X;
  in.y_tu_eval = data.tu.y_eval;
  return in;
}

std::vector<int> sample_indices(Eigen::Index n, long want, Rng& rng) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (want >= n) return idx;
  rng.shuffle(idx);
  idx.resize(static_cast<std::size_t>(want));
  std::sort(idx.begin(), idx.end());
  return idx;
}

StepInput minibatch_slice(const DomainBundle& data, const TrainConfig& cfg,
                          int epoch, int step) {
  Rng rng(mix_seed(mix_seed(cfg.seed, 0x6d62ULL),
                   static_cast<std::uint64_t>(epoch) * 1000003ULL +
                       static_cast<std::uint64_t>(step)));
  const Eigen::Index max_n = std::max(
      {data.sn.n(), data.si.n(), data.tl.n() + data.tu.n()});
  const double frac = static_cast<double>(cfg.minibatch) /
                      static_cast<double>(max_n);
  auto want = [&](Eigen::Index n) {
    return std::max<long>(2, std::lround(frac * static_cast<double>(n)));
  };
  StepInput in;
  const auto i_sn = sample_indices(data.sn.n(), want(data.sn.n()), rng);
  const auto i_si = sample_indices(data.si.n(), want(data.si.n()), rng);
  const auto i_tl = sample_indices(data.tl.n(), want(data.tl.n()), rng);
  const auto i_tu = sample_indices(data.tu.n(), want(data.tu.n()), rng);
  in.x_sn = gather_rows(data.sn.X, i_sn);
  in.y_sn = gather_labels(data.sn.y, i_sn);
  in.x_si = gather_rows(data.si.X, i_si);
  in.y_si = gather_labels(data.si.y, i_si);
  in.x_tl = gather_rows(data.tl.X, i_tl);
  in.y_tl = gather_labels(data.tl.y, i_tl);
  in.x_tu = gather_rows(data.tu.X, i_tu);
  if (!data.tu.y_eval.empty()) {
    in.y_tu_eval = gather_labels(data.tu.y_eval, i_tu);
  }
  return in;
}

}  // namespace

ModelSpec model_spec_for(const DomainBundle& data, const TrainConfig& cfg) {
  if (data.tl.dim() != data.tu.dim()) {
    throw DataError("TL and TU feature widths differ");
  }
  ModelSpec spec;
  spec.d_sn = static_cast<int>(data.sn.dim());
  spec.d_si = static_cast<int>(data.si.dim());
  spec.d_t = static_cast<int>(data.tl.dim());
  spec.hidden = cfg.hidden;
  spec.d_c = cfg.d_c;
  spec.num_classes = data.num_classes;
  spec.slope = cfg.leaky_slope;
  return spec;
}

TrainOutputs train(JstnModel& model, const DomainBundle& data,
                   const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (model.spec().num_classes != data.num_classes) {
    throw UsageError("model and bundle disagree on the class count");
  }
  if (data.tl.y.empty()) throw DataError("TL labels missing");
  if (!cfg.target_only) {
    if (!cfg.sii_only && data.sn.y.empty()) throw DataError("SN labels missing");
    if (!cfg.sni_only && data.si.y.empty()) throw DataError("SI labels missing");
  }

  const auto params = model.parameters();
  ad::AdamState adam = ad::make_adam(params, cfg.lr, cfg.adam_beta1,
                                     cfg.adam_beta2, cfg.adam_eps);

  TrainOutputs out;
  out.reports.reserve(static_cast<std::size_t>(cfg.epochs));

  const int steps_per_epoch =
      cfg.minibatch > 0
          ? static_cast<int>(std::max<Eigen::Index>(
                1, (std::max({data.sn.n(), data.si.n(),
                              data.tl.n() + data.tu.n()}) +
                    cfg.minibatch - 1) /
                       cfg.minibatch))
          : 1;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng cluster_rng(mix_seed(cfg.seed, 0x636c7573ULL +
                                           static_cast<std::uint64_t>(epoch)));
    EpochReport rep;
    rep.epoch = epoch;

    for (int step = 0; step < steps_per_epoch; ++step) {
      StepInput in = cfg.minibatch > 0 ? minibatch_slice(data, cfg, epoch, step)
                                       : full_batch(data);
      StepResult sr = build_step(model, cfg, in, epoch, cluster_rng);
      ad::backward(sr.objective);
      ad::adam_step(params, adam);
      if (step + 1 == steps_per_epoch) {
        rep.losses = sr.losses;
        rep.plr = sr.plr;
      }
    }

    if (cfg.eval_interim_every > 0 && epoch % cfg.eval_interim_every == 0 &&
        !data.tu.y_eval.empty()) {
      rep.has_interim = true;
      rep.interim_accuracy = evaluate_target(model, data.tu).accuracy;
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.reports.push_back(rep);
    if (hooks.on_epoch) hooks.on_epoch(rep);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 &&
        epoch % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(epoch, model);
    }
  }
  return out;
}

std::vector<int> predict_target(const JstnModel& model, const Matrix& x) {
  NodePtr f = model.encode(ad::constant(x), Role::T);
  NodePtr logits = model.classify(f);
  return argmax_rows(logits->values);
}

MetricsReport evaluate_target(const JstnModel& model, const DomainDataset& tu) {
  if (tu.y_eval.empty()) {
    throw DataError("evaluate_target: TU ground truth unavailable");
  }
  const std::vector<int> preds = predict_target(model, tu.X);
  return evaluate(preds, tu.y_eval, model.spec().num_classes);
}

std::string epoch_json_line(const EpochReport& rep, bool include_timing) {
  nlohmann::ordered_json j;
  j["epoch"] = rep.epoch;
  j["l_sup"] = rep.losses.l_sup;
  j["l_hd"] = rep.losses.l_hd;
  j["l_sf_sn"] = rep.losses.l_sf_sn;
  j["l_sf_si"] = rep.losses.l_sf_si;
  j["l_esc"] = rep.losses.l_esc;
  j["l_esr"] = rep.losses.l_esr;
  j["l_ssd"] = rep.losses.l_ssd;
  j["l_ssc"] = rep.losses.l_ssc;
  j["omega_sn"] = rep.losses.omega_sn;
  j["omega_si"] = rep.losses.omega_si;
  j["total"] = rep.losses.total;
  j["accepted_count"] = rep.plr.accepted_count;
  j["acceptance_rate"] = rep.plr.acceptance_rate;
  if (rep.plr.has_precision) {
    j["pseudo_label_precision"] = rep.plr.pseudo_label_precision;
  }
  if (rep.has_interim) j["interim_accuracy"] = rep.interim_accuracy;
  if (include_timing) j["wall_seconds"] = rep.wall_seconds;
  return j.dump();
}

const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names = {
      "alpha_0", "no_wi",   "beta_0",   "lambda_0", "beta_lambda_0",
      "no_plr",  "eta_0",   "gamma_0",  "sni_only", "sii_only"};
  return names;
}

TrainConfig apply_variant(const TrainConfig& base, const std::string& variant) {
  TrainConfig cfg = base;
  if (variant == "full") return cfg;
  if (variant == "alpha_0") {
    cfg.alpha = 0.0;
  } else if (variant == "no_wi") {
    cfg.no_weighting = true;
  } else if (variant == "beta_0") {
    cfg.beta = 0.0;
  } else if (variant == "lambda_0") {
    cfg.lambda = 0.0;
  } else if (variant == "beta_lambda_0") {
    cfg.beta = 0.0;
    cfg.lambda = 0.0;
  } else if (variant == "no_plr") {
    cfg.no_plr = true;
  } else if (variant == "eta_0") {
    cfg.eta = 0.0;
  } else if (variant == "gamma_0") {
    cfg.gamma = 0.0;
  } else if (variant == "sni_only") {
    cfg.sni_only = true;
  } else if (variant == "sii_only") {
    cfg.sii_only = true;
  } else {
    throw UsageError("unknown ablation variant: '" + variant + "'");
  }
  return cfg;
}

namespace {

// Runs tasks over a small thread pool; task results land in pre-sized slots,
// so the output is deterministic regardless of scheduling.
void run_tasks(const std::vector<std::function<void()>>& tasks, int jobs) {
  if (jobs <= 1) {
    for (const auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n = std::min<int>(jobs, static_cast<int>(tasks.size()));
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

AblationTable run_ablation(const TrainConfig& base,
                           const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds,
                           const RunFn& run, int jobs) {
  if (seeds.empty()) throw UsageError("run_ablation: no seeds");
  AblationTable table;
  table.seeds = seeds;
  table.rows.push_back({"full", {}, 0.0, {}, false});
  for (const auto& v : variants) {
    table.rows.push_back({v, {}, 0.0, {}, false});
  }
  for (auto& row : table.rows) row.accuracies.resize(seeds.size(), 0.0);

  std::vector<std::function<void()>> tasks;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const TrainConfig cfg = apply_variant(base, table.rows[r].variant);
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      AblationRow* row = &table.rows[r];
      const std::uint64_t seed = seeds[s];
      tasks.push_back([row, s, cfg, seed, &run] {
        row->accuracies[s] = run(cfg, seed);
      });
    }
  }
  run_tasks(tasks, jobs);

  for (auto& row : table.rows) {
    row.mean_accuracy =
        std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) /
        static_cast<double>(row.accuracies.size());
  }
  const auto& full = table.rows.front().accuracies;
  for (std::size_t r = 1; r < table.rows.size(); ++r) {
    if (seeds.size() >= 2) {
      table.rows[r].vs_full = paired_t_test(full, table.rows[r].accuracies);
      table.rows[r].has_ttest = true;
    }
  }
  return table;
}

std::vector<SweepRow> run_sweep(const TrainConfig& base,
                                const std::string& param,
                                const std::vector<double>& values,
                                const std::vector<std::uint64_t>& seeds,
                                const RunFn& run, int jobs) {
  if (values.empty()) throw UsageError("run_sweep: no values");
  if (seeds.empty()) throw UsageError("run_sweep: no seeds");
  auto apply = [&](TrainConfig cfg, double v) {
    if (param == "alpha") {
      cfg.alpha = v;
    } else if (param == "beta") {
      cfg.beta = v;
    } else if (param == "lambda") {
      cfg.lambda = v;
    } else if (param == "eta") {
      cfg.eta = v;
    } else if (param == "gamma") {
      cfg.gamma = v;
    } else {
      throw UsageError("run_sweep: unknown parameter '" + param +
                       "' (sweepable: alpha, beta, lambda, eta, gamma)");
    }
    return cfg;
  };

  std::vector<SweepRow> rows(values.size() * seeds.size());
  std::vector<std::function<void()>> tasks;
  std::size_t slot = 0;
  for (double v : values) {
    const TrainConfig cfg = apply(base, v);
    for (std::uint64_t seed : seeds) {
      SweepRow* row = &rows[slot++];
      row->value = v;
      row->seed = seed;
      tasks.push_back([row, cfg, seed, &run] {
        row->accuracy = run(cfg, seed);
      });
    }
  }
  run_tasks(tasks, jobs);
  return rows;
}

}  // namespace jstn
