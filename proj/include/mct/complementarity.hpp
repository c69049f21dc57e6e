#pragma once

#include "mct/common.hpp"
#include "mct/dataset.hpp"
#include "mct/discrete.hpp"
#include "mct/mine.hpp"
#include "mct/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace mct {

// Proper nonempty subset S1 of the dataset's modalities; S2 is the
// complement.
struct SubsetSpec {
  std::vector<int> s1;

  void validate(int num_modalities) const {
    if (s1.empty()) throw StructuralError("subset: S1 must be nonempty");
    std::vector<bool> seen(static_cast<std::size_t>(num_modalities), false);
    for (int i : s1) {
      if (i < 0 || i >= num_modalities)
        throw StructuralError("subset: modality index " + std::to_string(i) + " out of range");
      if (seen[static_cast<std::size_t>(i)]) throw StructuralError("subset: duplicate modality index");
      seen[static_cast<std::size_t>(i)] = true;
    }
    if (static_cast<int>(s1.size()) == num_modalities)
      throw StructuralError("subset: S1 must be a proper subset");
  }

  std::vector<int> complement(int num_modalities) const {
    std::vector<bool> in_s1(static_cast<std::size_t>(num_modalities), false);
    for (int i : s1) in_s1[static_cast<std::size_t>(i)] = true;
    std::vector<int> s2;
    for (int i = 0; i < num_modalities; ++i)
      if (!in_s1[static_cast<std::size_t>(i)]) s2.push_back(i);
    return s2;
  }
};

struct ComplementarityConfig {
  CriticSpec critic_marginal;  // I(S1; S2)
  CriticSpec critic_s1_joint;  // I(S1; Y, S2)
  CriticSpec critic_s2_joint;  // I(S2; Y, S1), pair metric only
  CriticSpec critic_normalizer;  // I(S; Y)
  MineTrainConfig mine;
  bool estimate_pair_terms = true;
  double normalizer_floor = 0.02;
  int parallel = 1;
};

// All estimated terms plus the derived quantities. Gammas are reported raw
// and clamped at zero; the metrics are NaN with metric_defined = false when
// the normalizer estimate falls below the floor.
struct ComplementarityReport {
  MiEstimate i_xz;    // I(S1; S2)
  MiEstimate i_x_yz;  // I(S1; Y, S2)
  MiEstimate i_z_yx;  // I(S2; Y, S1)
  MiEstimate i_sy;    // I(S; Y)
  double gamma_x_raw = 0.0, gamma_x = 0.0;
  double gamma_z_raw = 0.0, gamma_z = 0.0;
  double metric_pair = std::numeric_limits<double>::quiet_NaN();
  double metric_subset = std::numeric_limits<double>::quiet_NaN();
  bool metric_defined = false;
  bool has_pair_terms = false;
  std::string normalizer_mode = "direct";
};

inline Matrix concat_modalities(const MultiModalDataset& ds, const std::vector<int>& indices) {
  int cols = 0;
  for (int i : indices) cols += ds.dim(i);
  Matrix out(ds.rows(), cols);
  int at = 0;
  for (int i : indices) {
    out.middleCols(at, ds.dim(i)) = ds.modalities[static_cast<std::size_t>(i)];
    at += ds.dim(i);
  }
  return out;
}

namespace detail {

inline MineTrainConfig term_config(const MineTrainConfig& base, const std::string& term) {
  MineTrainConfig cfg = base;
  cfg.seed = RngStream(base.seed).derive(term).next_u64();
  return cfg;
}

inline MiEstimate run_term(const std::string& term, const PairedSamples& train,
                           const PairedSamples& val, const CriticSpec& critic,
                           const MineTrainConfig& cfg) {
  try {
    return train_mi(train, val, critic, cfg);
  } catch (const NumericError& e) {
    throw NumericError(term + ": " + e.what());
  } catch (const StructuralError& e) {
    throw StructuralError(term + ": " + e.what());
  }
}

}  // namespace detail

struct GammaEstimate {
  double raw = 0.0;
  double clamped = 0.0;
  MiEstimate i_a_yb;  // I(S1; Y, S2)
  MiEstimate i_ab;    // I(S1; S2)
};

// Gamma_{S1} = I(S1; Y, S2) - I(S1; S2), both terms estimated on the train
// split and evaluated on the validation split.
inline GammaEstimate estimate_gamma(const MultiModalDataset& train, const MultiModalDataset& val,
                                    const SubsetSpec& subset, const CriticSpec& critic_marginal,
                                    const CriticSpec& critic_joint, const MineTrainConfig& mine) {
  train.validate();
  val.validate();
  subset.validate(train.num_modalities());
  const std::vector<int> s2 = subset.complement(train.num_modalities());
  const Matrix a_train = concat_modalities(train, subset.s1);
  const Matrix b_train = concat_modalities(train, s2);
  const Matrix a_val = concat_modalities(val, subset.s1);
  const Matrix b_val = concat_modalities(val, s2);
  const Matrix y_train = one_hot(train.labels, train.num_classes);
  const Matrix y_val = one_hot(val.labels, val.num_classes);

  GammaEstimate g;
  g.i_ab = detail::run_term("I(S1;S2)", {a_train, b_train, std::nullopt},
                            {a_val, b_val, std::nullopt}, critic_marginal,
                            detail::term_config(mine, "I(S1;S2)"));
  g.i_a_yb = detail::run_term("I(S1;Y,S2)", {a_train, b_train, y_train}, {a_val, b_val, y_val},
                              critic_joint, detail::term_config(mine, "I(S1;Y,S2)"));
  g.raw = g.i_a_yb.value - g.i_ab.value;
  g.clamped = std::max(0.0, g.raw);
  return g;
}

inline ComplementarityReport estimate_complementarity(const MultiModalDataset& train,
                                                      const MultiModalDataset& val,
                                                      const SubsetSpec& subset,
                                                      const ComplementarityConfig& cfg) {
  train.validate();
  val.validate();
  subset.validate(train.num_modalities());
  const std::vector<int> s2 = subset.complement(train.num_modalities());
  std::vector<int> all(static_cast<std::size_t>(train.num_modalities()));
  for (int i = 0; i < train.num_modalities(); ++i) all[static_cast<std::size_t>(i)] = i;

  const Matrix a_train = concat_modalities(train, subset.s1);
  const Matrix b_train = concat_modalities(train, s2);
  const Matrix s_train = concat_modalities(train, all);
  const Matrix a_val = concat_modalities(val, subset.s1);
  const Matrix b_val = concat_modalities(val, s2);
  const Matrix s_val = concat_modalities(val, all);
  const Matrix y_train = one_hot(train.labels, train.num_classes);
  const Matrix y_val = one_hot(val.labels, val.num_classes);
  const Matrix empty_train(train.rows(), 0);
  const Matrix empty_val(val.rows(), 0);

  struct Term {
    std::string name;
    PairedSamples train, val;
    const CriticSpec* critic;
    MiEstimate result;
  };
  std::vector<Term> terms;
  terms.push_back({"I(S1;S2)", {a_train, b_train, std::nullopt}, {a_val, b_val, std::nullopt},
                   &cfg.critic_marginal, {}});
  terms.push_back({"I(S1;Y,S2)", {a_train, b_train, y_train}, {a_val, b_val, y_val},
                   &cfg.critic_s1_joint, {}});
  if (cfg.estimate_pair_terms)
    terms.push_back({"I(S2;Y,S1)", {b_train, a_train, y_train}, {b_val, a_val, y_val},
                     &cfg.critic_s2_joint, {}});
  terms.push_back({"I(S;Y)", {s_train, empty_train, y_train}, {s_val, empty_val, y_val},
                   &cfg.critic_normalizer, {}});

  run_parallel(static_cast<int>(terms.size()), cfg.parallel, [&](int i) {
    Term& t = terms[static_cast<std::size_t>(i)];
    t.result = detail::run_term(t.name, t.train, t.val, *t.critic,
                                detail::term_config(cfg.mine, t.name));
  });

  ComplementarityReport rep;
  rep.has_pair_terms = cfg.estimate_pair_terms;
  for (auto& t : terms) {
    if (t.name == "I(S1;S2)") rep.i_xz = std::move(t.result);
    else if (t.name == "I(S1;Y,S2)") rep.i_x_yz = std::move(t.result);
    else if (t.name == "I(S2;Y,S1)") rep.i_z_yx = std::move(t.result);
    else rep.i_sy = std::move(t.result);
  }
  rep.gamma_x_raw = rep.i_x_yz.value - rep.i_xz.value;
  rep.gamma_x = std::max(0.0, rep.gamma_x_raw);
  if (cfg.estimate_pair_terms) {
    rep.gamma_z_raw = rep.i_z_yx.value - rep.i_xz.value;
    rep.gamma_z = std::max(0.0, rep.gamma_z_raw);
  }
  rep.metric_defined = rep.i_sy.value >= cfg.normalizer_floor;
  if (rep.metric_defined) {
    rep.metric_subset = rep.gamma_x / rep.i_sy.value;
    if (cfg.estimate_pair_terms) rep.metric_pair = (rep.gamma_x + rep.gamma_z) / rep.i_sy.value;
  }
  return rep;
}

// Exact metric values through the discrete oracle; ground truth for the
// estimator path on small discretized instances. s1 selects which joint
// coordinate plays S1.
struct OracleComplementarity {
  double gamma_s1 = 0.0;
  double gamma_s2 = 0.0;
  double i_sy = 0.0;
  double metric_subset = std::numeric_limits<double>::quiet_NaN();
  double metric_pair = std::numeric_limits<double>::quiet_NaN();
  bool metric_defined = false;
};

inline OracleComplementarity oracle_complementarity(const DiscreteJoint& joint, Modality s1) {
  joint.validate();
  OracleComplementarity r;
  r.gamma_s1 = complementary_info(joint, s1);
  r.gamma_s2 = complementary_info(joint, s1 == Modality::X ? Modality::Z : Modality::X);
  r.i_sy = entropy(joint, kVarY) -
           (entropy(joint, kVarX | kVarZ | kVarY) - entropy(joint, kVarX | kVarZ));
  r.metric_defined = r.i_sy > 1e-12;
  if (r.metric_defined) {
    r.metric_subset = r.gamma_s1 / r.i_sy;
    r.metric_pair = (r.gamma_s1 + r.gamma_s2) / r.i_sy;
  }
  return r;
}

inline Json mi_estimate_to_json(const MiEstimate& e) {
  return Json{{"value", e.value},
              {"mean", e.mean},
              {"stddev", e.stddev},
              {"replicate_values", e.replicate_values},
              {"curve", e.curve}};
}

inline Json report_to_json(const ComplementarityReport& r) {
  Json j;
  j["i_xz"] = mi_estimate_to_json(r.i_xz);
  j["i_x_yz"] = mi_estimate_to_json(r.i_x_yz);
  if (r.has_pair_terms) j["i_z_yx"] = mi_estimate_to_json(r.i_z_yx);
  j["i_sy"] = mi_estimate_to_json(r.i_sy);
  j["gamma_x"] = r.gamma_x;
  j["gamma_x_raw"] = r.gamma_x_raw;
  if (r.has_pair_terms) {
    j["gamma_z"] = r.gamma_z;
    j["gamma_z_raw"] = r.gamma_z_raw;
  }
  j["metric_defined"] = r.metric_defined;
  if (r.metric_defined) {
    j["metric_subset"] = r.metric_subset;
    if (r.has_pair_terms) j["metric_pair"] = r.metric_pair;
  }
  j["normalizer_mode"] = r.normalizer_mode;
  return j;
}

}  // namespace mct
