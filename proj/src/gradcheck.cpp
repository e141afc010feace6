#include "jstn/gradcheck.hpp"

#include "jstn/clustering.hpp"
#include "jstn/config.hpp"
#include "jstn/data.hpp"
#include "jstn/losses.hpp"
#include "jstn/model.hpp"
#include "jstn/plr.hpp"
#include "jstn/trainer.hpp"

#include <cmath>
#include <map>

namespace jstn {

namespace {

using ad::NodePtr;

constexpr double kFdStep = 1e-5;

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

// Everything one optimisation step treats as constant, captured from the
// unperturbed forward pass.
struct Frozen {
  SoftLabelTable q_t1, q_sn, q_si;
  double omega_sn = 1.0, omega_si = 1.0;
  std::vector<int> accepted_idx;
  std::vector<int> accepted_labels;
  std::vector<RepSet> reps_s, reps_t;
  std::vector<int> y_s, y_t;
};

struct Forward {
  NodePtr f_sn, f_si, f_tl, f_tu;
  NodePtr logits_sn, logits_si, logits_tl, logits_tu;
  NodePtr f_s, logits_s, f_t;
};

Forward forward_all(const JstnModel& model, const DomainBundle& data,
                    const std::vector<int>& accepted_idx) {
  Forward fw;
  fw.f_sn = model.encode(ad::constant(data.sn.X), Role::SN);
  fw.f_si = model.encode(ad::constant(data.si.X), Role::SI);
  fw.f_tl = model.encode(ad::constant(data.tl.X), Role::T);
  fw.f_tu = model.encode(ad::constant(data.tu.X), Role::T);
  fw.logits_sn = model.classify(fw.f_sn);
  fw.logits_si = model.classify(fw.f_si);
  fw.logits_tl = model.classify(fw.f_tl);
  fw.logits_tu = model.classify(fw.f_tu);
  fw.f_s = ad::concat_rows(fw.f_sn, fw.f_si);
  fw.logits_s = ad::concat_rows(fw.logits_sn, fw.logits_si);
  fw.f_t = accepted_idx.empty()
               ? fw.f_tl
               : ad::concat_rows(fw.f_tl, ad::rows(fw.f_tu, accepted_idx));
  return fw;
}

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

NodePtr build_loss(const std::string& name, const JstnModel& model,
                   const DomainBundle& data, const TrainConfig& cfg,
                   const Frozen& fz) {
  const int k = model.spec().num_classes;
  Forward fw = forward_all(model, data, fz.accepted_idx);
  if (name == "l_sup") return supervision_loss(fw.logits_s, fz.y_s);
  if (name == "l_hd") return implicit_hard_loss(fw.logits_tl, data.tl.y);
  if (name == "l_sf_sn" || name == "l_sf_si") {
    NodePtr p = ad::softmax_rows_t(fw.logits_tl, 1.0);
    return implicit_soft_loss(p, data.tl.y,
                              name == "l_sf_sn" ? fz.q_sn : fz.q_si);
  }
  if (name == "l_ssc") {
    return scenario_distribution_loss(fw.logits_si, data.si.y, fz.q_t1);
  }
  if (name == "l_ssd") {
    // No reversal layer here: plain BCE is a scalar function of the
    // parameters, which is what finite differences can see.
    return scenario_discriminator_loss(
        model.discriminate(fw.f_s),
        model.discriminate(ad::concat_rows(fw.f_tl, fw.f_tu)));
  }
  if (name == "l_esc") {
    return centroid_alignment_loss(fw.f_s, fz.y_s, fw.f_t, fz.y_t, k);
  }
  if (name == "l_esr") {
    return representative_alignment_loss(rep_nodes_for(fw.f_s, fz.reps_s),
                                         rep_nodes_for(fw.f_t, fz.reps_t));
  }
  if (name == "total") {
    NodePtr p = ad::softmax_rows_t(fw.logits_tl, 1.0);
    NodePtr l_wis = weighted_implicit_loss(
        implicit_hard_loss(fw.logits_tl, data.tl.y),
        implicit_soft_loss(p, data.tl.y, fz.q_sn),
        implicit_soft_loss(p, data.tl.y, fz.q_si), fz.omega_sn, fz.omega_si,
        cfg.alpha);
    NodePtr obj = ad::add(supervision_loss(fw.logits_s, fz.y_s), l_wis);
    obj = ad::add(obj, ad::scale(centroid_alignment_loss(fw.f_s, fz.y_s,
                                                         fw.f_t, fz.y_t, k),
                                 cfg.beta));
    obj = ad::add(
        obj, ad::scale(representative_alignment_loss(
                           rep_nodes_for(fw.f_s, fz.reps_s),
                           rep_nodes_for(fw.f_t, fz.reps_t)),
                       cfg.lambda));
    obj = ad::add(
        obj,
        ad::scale(scenario_discriminator_loss(
                      model.discriminate(fw.f_s),
                      model.discriminate(ad::concat_rows(fw.f_tl, fw.f_tu))),
                  cfg.gamma));
    obj = ad::add(obj, ad::scale(scenario_distribution_loss(
                                     fw.logits_si, data.si.y, fz.q_t1),
                                 cfg.eta));
    return obj;
  }
  throw UsageError("gradcheck: unknown loss '" + name + "'");
}

struct Scenario {
  DomainBundle data;
  JstnModel model;
  TrainConfig cfg;
  Frozen fz;
};

Scenario make_scenario(std::uint64_t seed) {
  SynthSpec ss;
  ss.d_sn = 5;
  ss.d_si = 4;
  ss.d_t = 6;
  ss.num_classes = 3;
  ss.latent_dim = 3;
  ss.per_class_sn = 6;
  ss.per_class_si = 4;
  ss.per_class_t = 9;
  ss.separation = 3.0;
  ss.cluster_std = 1.0;
  ss.class_jitter = 0.3;
  ss.domain_shift = 0.5;
  ss.feature_noise = 0.3;
  ss.seed = seed;

  SplitSpec split;
  split.ratio_labeled = 1;
  split.ratio_unlabeled = 2;
  split.seed = seed;

  DomainBundle data = bundle_from_synth(synth_domains(ss), split);
  TrainConfig cfg;
  cfg.hidden = 8;
  cfg.d_c = 3;
  cfg.r_reps = 2;
  cfg.seed = seed;

  const ModelSpec ms = model_spec_for(data, cfg);
  Scenario sc{std::move(data), JstnModel::init(ms, {seed, 1.0}), cfg, {}};

  // Freeze the step context from the unperturbed forward.
  Forward fw = forward_all(sc.model, sc.data, {});
  const int k = ms.num_classes;
  sc.fz.y_s = sc.data.sn.y;
  sc.fz.y_s.insert(sc.fz.y_s.end(), sc.data.si.y.begin(), sc.data.si.y.end());
  sc.fz.q_t1 =
      soft_label_table(fw.logits_sn->values, sc.data.sn.y, k, sc.cfg.t1);
  sc.fz.q_sn =
      soft_label_table(fw.logits_sn->values, sc.data.sn.y, k, sc.cfg.t2);
  sc.fz.q_si =
      soft_label_table(fw.logits_si->values, sc.data.si.y, k, sc.cfg.t2);
  sc.fz.omega_sn = source_weight(source_target_divergence(
      fw.f_sn->values, sc.data.sn.y, fw.f_tl->values, sc.data.tl.y, k));
  sc.fz.omega_si = source_weight(source_target_divergence(
      fw.f_si->values, sc.data.si.y, fw.f_tl->values, sc.data.tl.y, k));

  const CentroidSet cents = labeled_centroids(
      {{&fw.f_sn->values, &sc.data.sn.y},
       {&fw.f_si->values, &sc.data.si.y},
       {&fw.f_tl->values, &sc.data.tl.y}},
      k);
  const PlrResult plr = refine(fw.logits_tu->values, fw.f_tu->values, cents, 1);
  sc.fz.accepted_idx = plr.accepted_indices;
  sc.fz.accepted_labels = plr.accepted_labels;
  sc.fz.y_t = sc.data.tl.y;
  sc.fz.y_t.insert(sc.fz.y_t.end(), plr.accepted_labels.begin(),
                   plr.accepted_labels.end());

  Forward fw2 = forward_all(sc.model, sc.data, sc.fz.accepted_idx);
  Rng cluster_rng(mix_seed(seed, 0x67636bULL));
  sc.fz.reps_s = select_representatives(
      fw2.f_s->values, class_indices(sc.fz.y_s, k), sc.cfg.r_reps,
      Side::Source, cluster_rng);
  sc.fz.reps_t = select_representatives(
      fw2.f_t->values, class_indices(sc.fz.y_t, k), sc.cfg.r_reps,
      Side::Target, cluster_rng);
  return sc;
}

}  // namespace

const std::vector<std::string>& gradcheck_loss_names() {
  static const std::vector<std::string> names = {
      "l_sup", "l_hd",  "l_sf_sn", "l_sf_si", "l_ssc",
      "l_ssd", "l_esc", "l_esr",   "total"};
  return names;
}

std::vector<GradCheckResult> run_gradcheck(std::uint64_t base_seed,
                                           int num_seeds, double tol,
                                           const std::string& corrupt_op) {
  std::vector<GradCheckResult> results;
  for (const auto& name : gradcheck_loss_names()) {
    results.push_back({name, 0.0, true});
  }

  for (int s = 0; s < num_seeds; ++s) {
    Scenario sc = make_scenario(mix_seed(base_seed, static_cast<std::uint64_t>(s)));
    const auto params = sc.model.parameters();

    for (std::size_t li = 0; li < gradcheck_loss_names().size(); ++li) {
      const std::string& name = gradcheck_loss_names()[li];

      // Backpropagated gradients, optionally through a corrupted adjoint.
      ad::zero_grads(params);
      ad::testing::corrupt_op = corrupt_op.c_str();
      NodePtr loss = build_loss(name, sc.model, sc.data, sc.cfg, sc.fz);
      ad::backward(loss);
      ad::testing::corrupt_op = "";

      for (const auto& p : params) {
        Matrix bp = p->grad.size() != 0 ? p->grad
                                        : Matrix::Zero(p->rows(), p->cols());
        for (Eigen::Index i = 0; i < p->rows(); ++i) {
          for (Eigen::Index j = 0; j < p->cols(); ++j) {
            const double orig = p->values(i, j);
            p->values(i, j) = orig + kFdStep;
            const double up =
                build_loss(name, sc.model, sc.data, sc.cfg, sc.fz)->values(0, 0);
            p->values(i, j) = orig - kFdStep;
            const double dn =
                build_loss(name, sc.model, sc.data, sc.cfg, sc.fz)->values(0, 0);
            p->values(i, j) = orig;
            const double fd = (up - dn) / (2.0 * kFdStep);
            const double err = rel_err(fd, bp(i, j));
            if (err > results[li].max_rel_err) results[li].max_rel_err = err;
          }
        }
        p->zero_grad();
      }
    }
  }
  for (auto& r : results) r.pass = r.max_rel_err <= tol;
  return results;
}

}  // namespace jstn
