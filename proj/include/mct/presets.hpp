#pragma once

#include "mct/complementarity.hpp"
#include "mct/datagen.hpp"
#include "mct/fusion.hpp"
#include "mct/mine.hpp"
#include "mct/serialize.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mct {

// ---- config (de)serialization -------------------------------------------

inline Json to_json(const MineTrainConfig& c) {
  Json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["optimizer"] = to_string(c.algo);
  j["lr"] = c.lr.base;
  if (!c.lr.milestones.empty()) j["lr_milestones"] = c.lr.milestones;
  j["weight_decay"] = c.weight_decay;
  j["eval_window_frac"] = c.eval_window_frac;
  j["clamp_nonnegative"] = c.clamp_nonnegative;
  j["ema_denominator"] = c.ema_denominator;
  j["replicates"] = c.replicates;
  j["seed"] = c.seed;
  return j;
}

inline OptAlgo opt_algo_from_string(const std::string& s) {
  if (s == "sgd") return OptAlgo::Sgd;
  if (s == "adam") return OptAlgo::Adam;
  if (s == "adamw") return OptAlgo::AdamW;
  throw StructuralError("unknown optimizer '" + s + "'");
}

inline MineTrainConfig mine_config_from_json(const Json& j, MineTrainConfig base = {}) {
  MineTrainConfig c = base;
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("optimizer")) c.algo = opt_algo_from_string(j.at("optimizer").get<std::string>());
  if (j.contains("lr")) c.lr.base = j.at("lr").get<double>();
  if (j.contains("lr_milestones"))
    c.lr.milestones = j.at("lr_milestones").get<std::vector<std::pair<int, double>>>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("eval_window_frac")) c.eval_window_frac = j.at("eval_window_frac").get<double>();
  if (j.contains("clamp_nonnegative")) c.clamp_nonnegative = j.at("clamp_nonnegative").get<bool>();
  if (j.contains("ema_denominator")) c.ema_denominator = j.at("ema_denominator").get<bool>();
  if (j.contains("replicates")) c.replicates = j.at("replicates").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// ---- presets --------------------------------------------------------------

// Estimator and model architectures for the two-modality synthetic setting:
// X is 200-dim, Z is 100-dim, critics take the concatenated 300 dims. The
// I(A;B,Y) critics feed the 2-way one-hot label into the fourth linear
// layer. Training: 500 epochs, batch 100, Adam 1e-3, weight decay 2e-4.
struct TwoModalPreset {
  TwoModalConfig data;
  ComplementarityConfig comp;
  FusionModelSpec naive_model;
  FusionModelSpec ume_model;
  StrategyConfig naive_cfg;
  StrategyConfig ume_cfg;
};

inline TwoModalPreset preset_synthetic_2mod() {
  TwoModalPreset p;
  p.data = TwoModalConfig{};  // <d, d1, d2, delta> = <50, 200, 100, 0.25>, n = 5000

  p.comp.critic_marginal.mlp = MlpSpec{{300, 1000, 500, 100, 1}, Activation::Elu, std::nullopt, 0};
  MlpSpec joint{{300, 1000, 200, 10, 12, 1}, Activation::Elu, 3, 2};
  p.comp.critic_s1_joint.mlp = joint;
  p.comp.critic_s2_joint.mlp = joint;
  p.comp.critic_normalizer.mlp = joint;
  p.comp.mine.epochs = 500;
  p.comp.mine.batch_size = 100;
  p.comp.mine.algo = OptAlgo::Adam;
  p.comp.mine.lr.base = 1e-3;
  p.comp.mine.weight_decay = 2e-4;
  p.comp.mine.replicates = 3;

  // robustness model: two-layer perceptron 300 -> 200 -> 2 on the
  // concatenated modalities
  p.naive_model.mode = FusionMode::ConcatLinear;
  p.naive_model.fusion_head = MlpSpec{{300, 200, 2}, Activation::Elu, std::nullopt, 0};
  p.naive_model.num_classes = 2;

  // ume-mma: one two-layer perceptron per modality, logits averaged
  p.ume_model.mode = FusionMode::LogitAverage;
  p.ume_model.encoders = {MlpSpec{{200, 200}, Activation::Elu, std::nullopt, 0},
                          MlpSpec{{100, 200}, Activation::Elu, std::nullopt, 0}};
  p.ume_model.unimodal_heads = {MlpSpec{{200, 2}, Activation::Elu, std::nullopt, 0},
                                MlpSpec{{200, 2}, Activation::Elu, std::nullopt, 0}};
  p.ume_model.num_classes = 2;

  p.naive_cfg.strategy = Strategy::Naive;
  p.naive_cfg.opt = OptimizerConfig{OptAlgo::Adam, 1e-3, 0.0};
  p.naive_cfg.epochs = 30;
  p.naive_cfg.batch_size = 100;

  p.ume_cfg.strategy = Strategy::UmeMma;
  p.ume_cfg.opt = OptimizerConfig{OptAlgo::Adam, 1e-3, 0.0};
  p.ume_cfg.epochs = 30;
  p.ume_cfg.epochs_phase2 = 30;
  p.ume_cfg.batch_size = 100;
  p.ume_cfg.drop_probs = {0.3, 0.3};
  return p;
}

// Four-modality extension: each emitted modality is 50-dim, S1 = {x_2} by
// default so the critics see 50 + 150 = 200 concatenated dims. Training:
// 1000 epochs, batch 1000, otherwise as the two-modality setting.
struct MultiModalPreset {
  MultiModalConfig data;
  SubsetSpec subset;
  ComplementarityConfig comp;
  FusionModelSpec naive_model;
  FusionModelSpec ume_model;
  StrategyConfig naive_cfg;
  StrategyConfig ume_cfg;
};

inline MultiModalPreset preset_synthetic_4mod() {
  MultiModalPreset p;
  p.data = MultiModalConfig{};  // m = 4, <d, d1, delta> = <50, 50, 0.25>, n = 10000
  p.subset.s1 = {1};            // S1 = {x_2}

  p.comp.critic_marginal.mlp = MlpSpec{{200, 1000, 500, 100, 1}, Activation::Elu, std::nullopt, 0};
  MlpSpec joint{{200, 1000, 500, 100, 12, 1}, Activation::Elu, 3, 2};
  p.comp.critic_s1_joint.mlp = joint;
  p.comp.critic_s2_joint.mlp = joint;
  p.comp.critic_normalizer.mlp = joint;
  p.comp.mine.epochs = 1000;
  p.comp.mine.batch_size = 1000;
  p.comp.mine.algo = OptAlgo::Adam;
  p.comp.mine.lr.base = 1e-3;
  p.comp.mine.weight_decay = 2e-4;
  p.comp.mine.replicates = 3;
  p.comp.estimate_pair_terms = false;  // the subset metric only needs 3 terms

  p.naive_model.mode = FusionMode::ConcatLinear;
  p.naive_model.fusion_head = MlpSpec{{200, 200, 2}, Activation::Elu, std::nullopt, 0};
  p.naive_model.num_classes = 2;

  p.ume_model.mode = FusionMode::LogitAverage;
  for (int i = 0; i < 4; ++i) {
    p.ume_model.encoders.push_back(MlpSpec{{50, 200}, Activation::Elu, std::nullopt, 0});
    p.ume_model.unimodal_heads.push_back(MlpSpec{{200, 2}, Activation::Elu, std::nullopt, 0});
  }
  p.ume_model.num_classes = 2;

  p.naive_cfg.strategy = Strategy::Naive;
  p.naive_cfg.opt = OptimizerConfig{OptAlgo::Adam, 1e-3, 0.0};
  p.naive_cfg.epochs = 30;
  p.naive_cfg.batch_size = 100;

  p.ume_cfg.strategy = Strategy::UmeMma;
  p.ume_cfg.opt = OptimizerConfig{OptAlgo::Adam, 1e-3, 0.0};
  p.ume_cfg.epochs = 30;
  p.ume_cfg.epochs_phase2 = 30;
  p.ume_cfg.batch_size = 100;
  p.ume_cfg.drop_probs = {0.3, 0.3, 0.3, 0.3};
  return p;
}

// Additive pairing over synthetic labeled pools: two 10-class Gaussian
// cluster pools stand in for the image/spectrogram pools, and sigma controls
// how strongly the pair's new label needs both sides.
struct RemixPreset {
  GaussianPoolConfig pool_a;
  GaussianPoolConfig pool_b;
  RemixConfig remix;
  double train_frac = 0.8;
  ComplementarityConfig comp;
};

inline RemixPreset preset_remix_pools() {
  RemixPreset p;
  p.pool_a = GaussianPoolConfig{10, 16, 5000, 0.3, 1.0, 11};
  p.pool_b = GaussianPoolConfig{10, 16, 5000, 0.3, 1.0, 12};
  p.remix = RemixConfig{1.0, 10, 0};

  p.comp.critic_marginal.mlp = MlpSpec{{32, 256, 128, 1}, Activation::Elu, std::nullopt, 0};
  MlpSpec joint{{32, 256, 128, 16, 26, 1}, Activation::Elu, 3, 10};
  p.comp.critic_s1_joint.mlp = joint;
  p.comp.critic_s2_joint.mlp = joint;
  p.comp.critic_normalizer.mlp = joint;
  p.comp.mine.epochs = 200;
  p.comp.mine.batch_size = 128;
  p.comp.mine.algo = OptAlgo::Adam;
  p.comp.mine.lr.base = 1e-3;
  p.comp.mine.weight_decay = 1e-4;
  p.comp.mine.replicates = 3;
  return p;
}

// Splits a remixed dataset out of two pool configs: pools are generated per
// split with derived seeds so train and val never share items.
inline std::pair<MultiModalDataset, MultiModalDataset> gen_remix_datasets(const RemixPreset& preset,
                                                                          double sigma,
                                                                          std::uint64_t seed) {
  auto make_split = [&](const std::string& split, std::uint64_t salt, int n_items) {
    GaussianPoolConfig a = preset.pool_a;
    GaussianPoolConfig b = preset.pool_b;
    // class means stay fixed across splits; item noise draws differ
    a.noise_seed = RngStream(preset.pool_a.seed).derive(salt).next_u64();
    b.noise_seed = RngStream(preset.pool_b.seed).derive(salt).next_u64();
    a.n = n_items;
    b.n = n_items;
    RemixConfig r = preset.remix;
    r.sigma = sigma;
    r.seed = RngStream(seed).derive(salt).next_u64();
    MultiModalDataset ds = remix_pairs(make_gaussian_pool(a), make_gaussian_pool(b), r, split);
    ds.provenance["sigma"] = sigma;
    ds.provenance["pool_dim"] = preset.pool_a.dim;
    return ds;
  };
  const int n_train = static_cast<int>(preset.train_frac * preset.pool_a.n);
  const int n_val = preset.pool_a.n - n_train;
  return {make_split("train", 1, n_train), make_split("val", 2, n_val)};
}

}  // namespace mct
