#pragma once

#include "mct/common.hpp"
#include "mct/dataset.hpp"
#include "mct/mlp.hpp"
#include "mct/optim.hpp"
#include "mct/rng.hpp"
#include "mct/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mct {

enum class FusionMode { ConcatLinear, LogitAverage };
enum class Strategy { Naive, MultiTask, MissingAug, MissingDetect, UmeMma };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Naive: return "naive";
    case Strategy::MultiTask: return "multi-task";
    case Strategy::MissingAug: return "missing-aug";
    case Strategy::MissingDetect: return "missing-detect";
    case Strategy::UmeMma: return "ume-mma";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  if (s == "naive") return Strategy::Naive;
  if (s == "multi-task") return Strategy::MultiTask;
  if (s == "missing-aug") return Strategy::MissingAug;
  if (s == "missing-detect") return Strategy::MissingDetect;
  if (s == "ume-mma") return Strategy::UmeMma;
  throw StructuralError("unknown strategy '" + s + "'");
}

// Late-fusion classifier layout. Encoders may be omitted entirely, in which
// case raw modality features feed the heads. ConcatLinear sends the
// concatenated features through fusion_head; LogitAverage averages the
// per-modality head logits. unimodal_heads also serve as the auxiliary
// classifiers of the multi-task and missing-detect strategies (the latter
// with one extra "missing" class).
struct FusionModelSpec {
  std::vector<MlpSpec> encoders;
  FusionMode mode = FusionMode::ConcatLinear;
  std::optional<MlpSpec> fusion_head;
  std::vector<MlpSpec> unimodal_heads;
  int num_classes = 2;

  int encoder_out_dim(const std::vector<int>& dims, int i) const {
    return encoders.empty() ? dims[static_cast<std::size_t>(i)]
                            : encoders[static_cast<std::size_t>(i)].output_dim();
  }

  void validate(const std::vector<int>& modality_dims, Strategy strategy) const {
    const int m = static_cast<int>(modality_dims.size());
    if (m < 2) throw StructuralError("fusion spec: need at least two modalities");
    if (num_classes < 2) throw StructuralError("fusion spec: need at least two classes");
    if (!encoders.empty()) {
      if (static_cast<int>(encoders.size()) != m)
        throw StructuralError("fusion spec: encoder count != modality count");
      for (int i = 0; i < m; ++i) {
        encoders[static_cast<std::size_t>(i)].validate();
        if (encoders[static_cast<std::size_t>(i)].input_dim() != modality_dims[static_cast<std::size_t>(i)])
          throw StructuralError("fusion spec: encoder " + std::to_string(i) + " input dim mismatch");
      }
    }
    const bool needs_heads = mode == FusionMode::LogitAverage || strategy == Strategy::MultiTask ||
                             strategy == Strategy::MissingDetect;
    if (needs_heads) {
      if (static_cast<int>(unimodal_heads.size()) != m)
        throw StructuralError("fusion spec: strategy '" + to_string(strategy) +
                              "' needs one unimodal head per modality");
      const int head_out = strategy == Strategy::MissingDetect ? num_classes + 1 : num_classes;
      for (int i = 0; i < m; ++i) {
        unimodal_heads[static_cast<std::size_t>(i)].validate();
        if (unimodal_heads[static_cast<std::size_t>(i)].input_dim() != encoder_out_dim(modality_dims, i))
          throw StructuralError("fusion spec: head " + std::to_string(i) + " input dim mismatch");
        if (unimodal_heads[static_cast<std::size_t>(i)].output_dim() != head_out)
          throw StructuralError("fusion spec: head " + std::to_string(i) + " must output " +
                                std::to_string(head_out) + " classes");
      }
    }
    if (mode == FusionMode::ConcatLinear) {
      if (!fusion_head) throw StructuralError("fusion spec: concat fusion needs a fusion head");
      fusion_head->validate();
      int total = 0;
      for (int i = 0; i < m; ++i) total += encoder_out_dim(modality_dims, i);
      if (fusion_head->input_dim() != total)
        throw StructuralError("fusion spec: fusion head input dim != concatenated encoder dims");
      if (fusion_head->output_dim() != num_classes)
        throw StructuralError("fusion spec: fusion head must output num_classes logits");
    }
    if (strategy == Strategy::UmeMma && mode != FusionMode::LogitAverage)
      throw StructuralError("fusion spec: ume-mma requires logit-average fusion");
    if (strategy == Strategy::MultiTask && mode != FusionMode::ConcatLinear)
      throw StructuralError("fusion spec: multi-task inference uses the fusion head");
    if (strategy == Strategy::MissingDetect && m != 2)
      throw StructuralError("fusion spec: missing-detect is defined for two modalities");
  }
};

struct StrategyConfig {
  Strategy strategy = Strategy::Naive;
  std::vector<double> drop_probs;  // empty => 0.3 per modality
  double multitask_lambda = 1.0;
  OptimizerConfig opt{OptAlgo::Adam, 1e-3, 0.0};
  std::optional<OptimizerConfig> opt_phase2;  // ume-mma; default lr = 0.1 x phase 1
  bool freeze_encoders_in_phase2 = false;
  int epochs = 30;
  int epochs_phase2 = 30;
  int batch_size = 100;
  std::uint64_t seed = 0;

  std::vector<double> effective_drop_probs(int m) const {
    std::vector<double> p = drop_probs;
    if (p.empty()) p.assign(static_cast<std::size_t>(m), 0.3);
    if (static_cast<int>(p.size()) != m)
      throw StructuralError("strategy config: drop_probs size != modality count");
    for (double q : p)
      if (q < 0.0 || q >= 1.0)
        throw StructuralError("strategy config: drop probabilities must lie in [0,1)");
    return p;
  }

  OptimizerConfig phase2_config() const {
    if (opt_phase2) return *opt_phase2;
    OptimizerConfig c = opt;
    c.lr *= 0.1;
    return c;
  }

  void validate() const {
    opt.validate();
    if (opt_phase2) opt_phase2->validate();
    if (multitask_lambda < 0.0) throw StructuralError("strategy config: lambda must be nonnegative");
    if (epochs < 0 || epochs_phase2 < 0) throw StructuralError("strategy config: negative epochs");
    if (batch_size <= 0) throw StructuralError("strategy config: batch size must be positive");
  }
};

struct FusionModel {
  FusionModelSpec spec;
  Strategy strategy = Strategy::Naive;
  std::vector<int> modality_dims;
  std::vector<MlpParams> encoder_params;
  std::vector<MlpParams> head_params;
  std::optional<MlpParams> fusion_params;
};

// Replaces one modality's features with exact zeros.
inline std::vector<Matrix> mask_modality(std::vector<Matrix> batch, int modality_index) {
  if (modality_index < 0 || modality_index >= static_cast<int>(batch.size()))
    throw StructuralError("mask_modality: index out of range");
  auto& m = batch[static_cast<std::size_t>(modality_index)];
  m.setZero();
  return batch;
}

struct DropMask {
  int rows = 0;
  int num_modalities = 0;
  std::vector<std::uint8_t> dropped;  // rows x modalities, row-major

  bool at(int i, int j) const {
    return dropped[static_cast<std::size_t>(i) * static_cast<std::size_t>(num_modalities) +
                   static_cast<std::size_t>(j)] != 0;
  }
};

// Per example, independent Bernoulli drops per modality; draws where every
// modality would drop are rejected and redrawn, so at least one modality
// always survives. Dropped modalities are zero-filled.
inline std::pair<std::vector<Matrix>, DropMask> missing_aug_sample(
    const std::vector<Matrix>& batch, const std::vector<double>& drop_probs, RngStream& rng) {
  const int m = static_cast<int>(batch.size());
  if (m == 0) throw StructuralError("missing_aug_sample: empty batch");
  if (static_cast<int>(drop_probs.size()) != m)
    throw StructuralError("missing_aug_sample: drop_probs size != modality count");
  bool all_one = true;
  for (double p : drop_probs) {
    if (p < 0.0 || p > 1.0) throw StructuralError("missing_aug_sample: probabilities must lie in [0,1]");
    if (p < 1.0) all_one = false;
  }
  if (all_one)
    throw StructuralError("missing_aug_sample: all drop probabilities are 1; rejection cannot terminate");
  const int n = static_cast<int>(batch.front().rows());
  std::vector<Matrix> out = batch;
  DropMask mask;
  mask.rows = n;
  mask.num_modalities = m;
  mask.dropped.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(m), 0);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) {
    for (;;) {
      bool all = true;
      for (int j = 0; j < m; ++j) {
        row[static_cast<std::size_t>(j)] = rng.uniform() < drop_probs[static_cast<std::size_t>(j)];
        all = all && row[static_cast<std::size_t>(j)];
      }
      if (!all) break;
    }
    for (int j = 0; j < m; ++j) {
      if (row[static_cast<std::size_t>(j)]) {
        mask.dropped[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) +
                     static_cast<std::size_t>(j)] = 1;
        out[static_cast<std::size_t>(j)].row(i).setZero();
      }
    }
  }
  return {std::move(out), std::move(mask)};
}

inline std::pair<std::vector<Matrix>, DropMask> missing_aug_sample(
    const std::vector<Matrix>& batch, const std::vector<double>& drop_probs, std::uint64_t seed) {
  RngStream rng = RngStream(seed).derive("missing-aug");
  return missing_aug_sample(batch, drop_probs, rng);
}

namespace detail {

// mean cross-entropy over softmax logits; grad (when requested) is
// d(loss)/d(logits) = (softmax - onehot) / n
inline double cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* grad) {
  const int n = static_cast<int>(logits.rows());
  const int c = static_cast<int>(logits.cols());
  if (grad) grad->resize(n, c);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = logits(i, 0);
    for (int k = 1; k < c; ++k) mx = std::max(mx, logits(i, k));
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += std::exp(logits(i, k) - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[static_cast<std::size_t>(i)];
    loss += lse - logits(i, y);
    if (grad) {
      for (int k = 0; k < c; ++k)
        (*grad)(i, k) = std::exp(logits(i, k) - lse) / static_cast<double>(n);
      (*grad)(i, y) -= 1.0 / static_cast<double>(n);
    }
  }
  return loss / static_cast<double>(n);
}

struct TrainUnit {
  const MlpSpec* spec = nullptr;
  MlpParams* params = nullptr;
  OptimizerState opt;
  MlpGrads grads;
  bool active = false;

  void start(const MlpSpec& s, MlpParams& p, const OptimizerConfig& cfg) {
    spec = &s;
    params = &p;
    opt = OptimizerState::create(cfg, p);
    active = true;
  }
  void zero_grads() {
    grads.layers.clear();
    grads.layers.reserve(params->layers.size());
    for (const auto& l : params->layers)
      grads.layers.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
  }
  void add_grads(const MlpGrads& g) {
    for (std::size_t k = 0; k < grads.layers.size(); ++k) {
      grads.layers[k].w += g.layers[k].w;
      grads.layers[k].b += g.layers[k].b;
    }
  }
  void step() { optimizer_step(opt, *params, grads); }
};

inline Matrix gather_rows(const Matrix& src, const std::vector<int>& order, int base, int count) {
  Matrix out(count, src.cols());
  for (int i = 0; i < count; ++i) out.row(i) = src.row(order[static_cast<std::size_t>(base + i)]);
  return out;
}

inline std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& order,
                                      int base, int count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(base + i)])];
  return out;
}

}  // namespace detail

// Forward through the (possibly identity) encoders.
inline std::vector<Matrix> encode(const FusionModel& model, const std::vector<Matrix>& inputs,
                                  std::vector<ForwardCache>* caches = nullptr) {
  const int m = static_cast<int>(inputs.size());
  std::vector<Matrix> feats(static_cast<std::size_t>(m));
  if (caches) caches->assign(static_cast<std::size_t>(m), {});
  for (int i = 0; i < m; ++i) {
    if (model.spec.encoders.empty()) {
      feats[static_cast<std::size_t>(i)] = inputs[static_cast<std::size_t>(i)];
    } else {
      feats[static_cast<std::size_t>(i)] = forward(
          model.spec.encoders[static_cast<std::size_t>(i)],
          model.encoder_params[static_cast<std::size_t>(i)], inputs[static_cast<std::size_t>(i)],
          nullptr, caches ? &(*caches)[static_cast<std::size_t>(i)] : nullptr);
    }
  }
  return feats;
}

// Fusion-output logits: concat head or average of per-modality head logits.
inline Matrix fusion_logits(const FusionModel& model, const std::vector<Matrix>& inputs) {
  const std::vector<Matrix> feats = encode(model, inputs);
  if (model.spec.mode == FusionMode::ConcatLinear) {
    int total = 0;
    for (const auto& f : feats) total += static_cast<int>(f.cols());
    Matrix cat(feats.front().rows(), total);
    int at = 0;
    for (const auto& f : feats) {
      cat.middleCols(at, static_cast<int>(f.cols())) = f;
      at += static_cast<int>(f.cols());
    }
    return forward(*model.spec.fusion_head, *model.fusion_params, cat);
  }
  Matrix logits;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const Matrix h = forward(model.spec.unimodal_heads[i], model.head_params[i], feats[i]);
    if (i == 0)
      logits = h;
    else
      logits += h;
  }
  logits /= static_cast<double>(feats.size());
  return logits;
}

inline Matrix unimodal_logits(const FusionModel& model, const Matrix& input, int modality) {
  std::vector<ForwardCache> caches;
  Matrix feat = input;
  if (!model.spec.encoders.empty())
    feat = forward(model.spec.encoders[static_cast<std::size_t>(modality)],
                   model.encoder_params[static_cast<std::size_t>(modality)], input);
  return forward(model.spec.unimodal_heads[static_cast<std::size_t>(modality)],
                 model.head_params[static_cast<std::size_t>(modality)], feat);
}

// Missing-detect decision rule over the two heads' outputs: if exactly one
// head argmaxes the extra "missing" class, take the other head's best real
// class; otherwise argmax the averaged real-class logits. Pure in the head
// outputs.
inline int missing_detect_decide(const Vector& head_a, const Vector& head_b, int num_classes) {
  auto argmax_all = [&](const Vector& h) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(h.size()); ++k)
      if (h[k] > h[best]) best = k;
    return best;
  };
  auto argmax_real = [&](const Vector& h) {
    int best = 0;
    for (int k = 1; k < num_classes; ++k)
      if (h[k] > h[best]) best = k;
    return best;
  };
  const bool miss_a = argmax_all(head_a) == num_classes;
  const bool miss_b = argmax_all(head_b) == num_classes;
  if (miss_a != miss_b) return argmax_real(miss_a ? head_b : head_a);
  Vector avg = 0.5 * (head_a.head(num_classes) + head_b.head(num_classes));
  return argmax_real(avg);
}

inline std::vector<int> predict(const FusionModel& model, const std::vector<Matrix>& inputs) {
  const int n = static_cast<int>(inputs.front().rows());
  std::vector<int> out(static_cast<std::size_t>(n));
  if (model.strategy == Strategy::MissingDetect) {
    const Matrix h0 = unimodal_logits(model, inputs[0], 0);
    const Matrix h1 = unimodal_logits(model, inputs[1], 1);
    for (int i = 0; i < n; ++i)
      out[static_cast<std::size_t>(i)] = missing_detect_decide(
          h0.row(i).transpose(), h1.row(i).transpose(), model.spec.num_classes);
    return out;
  }
  const Matrix logits = fusion_logits(model, inputs);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int k = 1; k < model.spec.num_classes; ++k)
      if (logits(i, k) > logits(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

// Train a late-fusion model with one of the five strategies. Training is
// deterministic for a fixed (dataset, spec, config) triple.
inline FusionModel train(const MultiModalDataset& ds, const FusionModelSpec& spec,
                         const StrategyConfig& cfg) {
  ds.validate();
  cfg.validate();
  std::vector<int> dims;
  for (int i = 0; i < ds.num_modalities(); ++i) dims.push_back(ds.dim(i));
  spec.validate(dims, cfg.strategy);
  if (spec.num_classes != ds.num_classes)
    throw StructuralError("train: spec num_classes != dataset num_classes");

  const int m = ds.num_modalities();
  const int n = ds.rows();
  const int batch = std::min(cfg.batch_size, n);
  const int steps = std::max(1, n / batch);
  const RngStream root = RngStream(cfg.seed).derive("fusion-train");

  FusionModel model;
  model.spec = spec;
  model.strategy = cfg.strategy;
  model.modality_dims = dims;
  if (!spec.encoders.empty())
    for (int i = 0; i < m; ++i)
      model.encoder_params.push_back(
          init_params(spec.encoders[static_cast<std::size_t>(i)],
                      root.derive("encoder").derive(static_cast<std::uint64_t>(i)).next_u64()));
  for (std::size_t i = 0; i < spec.unimodal_heads.size(); ++i)
    model.head_params.push_back(init_params(
        spec.unimodal_heads[i], root.derive("head").derive(static_cast<std::uint64_t>(i)).next_u64()));
  if (spec.fusion_head)
    model.fusion_params = init_params(*spec.fusion_head, root.derive("fusion").next_u64());

  const std::vector<double> drop = cfg.effective_drop_probs(m);

  // --- phase 1: ume-mma trains each modality's encoder+head on its own ---
  if (cfg.strategy == Strategy::UmeMma) {
    for (int mod = 0; mod < m; ++mod) {
      detail::TrainUnit enc, head;
      if (!spec.encoders.empty())
        enc.start(spec.encoders[static_cast<std::size_t>(mod)],
                  model.encoder_params[static_cast<std::size_t>(mod)], cfg.opt);
      head.start(spec.unimodal_heads[static_cast<std::size_t>(mod)],
                 model.head_params[static_cast<std::size_t>(mod)], cfg.opt);
      RngStream shuffle = root.derive("phase1-shuffle").derive(static_cast<std::uint64_t>(mod));
      for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> order = shuffle.permutation(n);
        for (int s = 0; s < steps; ++s) {
          const Matrix x = detail::gather_rows(ds.modalities[static_cast<std::size_t>(mod)], order,
                                               s * batch, batch);
          const std::vector<int> y = detail::gather_labels(ds.labels, order, s * batch, batch);
          ForwardCache enc_cache, head_cache;
          Matrix feat = x;
          if (enc.active)
            feat = forward(*enc.spec, *enc.params, x, nullptr, &enc_cache);
          const Matrix logits = forward(*head.spec, *head.params, feat, nullptr, &head_cache);
          Matrix grad;
          detail::cross_entropy(logits, y, &grad);
          const BackwardResult hr = backward(*head.spec, *head.params, head_cache, grad);
          head.zero_grads();
          head.add_grads(hr.grads);
          head.step();
          if (enc.active) {
            const BackwardResult er = backward(*enc.spec, *enc.params, enc_cache, hr.input_grad);
            enc.zero_grads();
            enc.add_grads(er.grads);
            enc.step();
          }
        }
      }
    }
  }

  // --- joint phase ---
  const bool is_phase2 = cfg.strategy == Strategy::UmeMma;
  const int joint_epochs = is_phase2 ? cfg.epochs_phase2 : cfg.epochs;
  const OptimizerConfig joint_opt = is_phase2 ? cfg.phase2_config() : cfg.opt;
  const bool train_encoders =
      !spec.encoders.empty() && !(is_phase2 && cfg.freeze_encoders_in_phase2);

  std::vector<detail::TrainUnit> enc_units(static_cast<std::size_t>(m));
  std::vector<detail::TrainUnit> head_units(spec.unimodal_heads.size());
  detail::TrainUnit fusion_unit;
  if (train_encoders)
    for (int i = 0; i < m; ++i)
      enc_units[static_cast<std::size_t>(i)].start(spec.encoders[static_cast<std::size_t>(i)],
                                                   model.encoder_params[static_cast<std::size_t>(i)],
                                                   joint_opt);
  for (std::size_t i = 0; i < spec.unimodal_heads.size(); ++i)
    head_units[i].start(spec.unimodal_heads[i], model.head_params[i], joint_opt);
  if (spec.fusion_head) fusion_unit.start(*spec.fusion_head, *model.fusion_params, joint_opt);

  RngStream shuffle = root.derive("joint-shuffle");
  RngStream aug = root.derive("joint-aug");

  const bool uses_aug = cfg.strategy == Strategy::MissingAug ||
                        cfg.strategy == Strategy::MissingDetect ||
                        cfg.strategy == Strategy::UmeMma;

  for (int epoch = 0; epoch < joint_epochs; ++epoch) {
    const std::vector<int> order = shuffle.permutation(n);
    for (int s = 0; s < steps; ++s) {
      std::vector<Matrix> clean(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i)
        clean[static_cast<std::size_t>(i)] =
            detail::gather_rows(ds.modalities[static_cast<std::size_t>(i)], order, s * batch, batch);
      const std::vector<int> y = detail::gather_labels(ds.labels, order, s * batch, batch);

      std::vector<Matrix> inputs = clean;
      DropMask mask;
      if (uses_aug) {
        auto aug_result = missing_aug_sample(clean, drop, aug);
        inputs = std::move(aug_result.first);
        mask = std::move(aug_result.second);
      }

      for (auto& u : enc_units)
        if (u.active) u.zero_grads();
      for (auto& u : head_units)
        if (u.active) u.zero_grads();
      if (fusion_unit.active) fusion_unit.zero_grads();

      // fusion path: missing-detect trains its fusion head on the clean
      // batch, every other strategy on the (possibly augmented) inputs
      if (spec.mode == FusionMode::ConcatLinear) {
        const std::vector<Matrix>& fusion_in =
            cfg.strategy == Strategy::MissingDetect ? clean : inputs;
        std::vector<ForwardCache> enc_caches;
        const std::vector<Matrix> feats = encode(model, fusion_in, &enc_caches);
        int total = 0;
        for (const auto& f : feats) total += static_cast<int>(f.cols());
        Matrix cat(batch, total);
        int at = 0;
        for (const auto& f : feats) {
          cat.middleCols(at, static_cast<int>(f.cols())) = f;
          at += static_cast<int>(f.cols());
        }
        ForwardCache fusion_cache;
        const Matrix logits = forward(*spec.fusion_head, *model.fusion_params, cat, nullptr,
                                      &fusion_cache);
        Matrix grad;
        detail::cross_entropy(logits, y, &grad);
        const BackwardResult fr = backward(*spec.fusion_head, *model.fusion_params, fusion_cache, grad);
        fusion_unit.add_grads(fr.grads);
        if (train_encoders) {
          at = 0;
          for (int i = 0; i < m; ++i) {
            const int w = static_cast<int>(feats[static_cast<std::size_t>(i)].cols());
            const BackwardResult er =
                backward(spec.encoders[static_cast<std::size_t>(i)],
                         model.encoder_params[static_cast<std::size_t>(i)],
                         enc_caches[static_cast<std::size_t>(i)], fr.input_grad.middleCols(at, w));
            enc_units[static_cast<std::size_t>(i)].add_grads(er.grads);
            at += w;
          }
        }
      } else {
        // logit-average: each branch feeds 1/m of the CE gradient
        std::vector<ForwardCache> enc_caches;
        const std::vector<Matrix> feats = encode(model, inputs, &enc_caches);
        std::vector<ForwardCache> head_caches(static_cast<std::size_t>(m));
        Matrix logits;
        std::vector<Matrix> head_out(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
          head_out[static_cast<std::size_t>(i)] =
              forward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                      model.head_params[static_cast<std::size_t>(i)],
                      feats[static_cast<std::size_t>(i)], nullptr,
                      &head_caches[static_cast<std::size_t>(i)]);
          if (i == 0)
            logits = head_out[0];
          else
            logits += head_out[static_cast<std::size_t>(i)];
        }
        logits /= static_cast<double>(m);
        Matrix grad;
        detail::cross_entropy(logits, y, &grad);
        const Matrix branch_grad = grad / static_cast<double>(m);
        for (int i = 0; i < m; ++i) {
          const BackwardResult hr =
              backward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                       model.head_params[static_cast<std::size_t>(i)],
                       head_caches[static_cast<std::size_t>(i)], branch_grad);
          head_units[static_cast<std::size_t>(i)].add_grads(hr.grads);
          if (train_encoders) {
            const BackwardResult er = backward(spec.encoders[static_cast<std::size_t>(i)],
                                               model.encoder_params[static_cast<std::size_t>(i)],
                                               enc_caches[static_cast<std::size_t>(i)], hr.input_grad);
            enc_units[static_cast<std::size_t>(i)].add_grads(er.grads);
          }
        }
      }

      // auxiliary paths
      if (cfg.strategy == Strategy::MultiTask) {
        std::vector<ForwardCache> enc_caches;
        const std::vector<Matrix> feats = encode(model, inputs, &enc_caches);
        for (int i = 0; i < m; ++i) {
          ForwardCache head_cache;
          const Matrix logits = forward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                                        model.head_params[static_cast<std::size_t>(i)],
                                        feats[static_cast<std::size_t>(i)], nullptr, &head_cache);
          Matrix grad;
          detail::cross_entropy(logits, y, &grad);
          grad *= cfg.multitask_lambda;
          const BackwardResult hr = backward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                                             model.head_params[static_cast<std::size_t>(i)],
                                             head_cache, grad);
          head_units[static_cast<std::size_t>(i)].add_grads(hr.grads);
          if (train_encoders) {
            const BackwardResult er = backward(spec.encoders[static_cast<std::size_t>(i)],
                                               model.encoder_params[static_cast<std::size_t>(i)],
                                               enc_caches[static_cast<std::size_t>(i)], hr.input_grad);
            enc_units[static_cast<std::size_t>(i)].add_grads(er.grads);
          }
        }
      } else if (cfg.strategy == Strategy::MissingDetect) {
        std::vector<ForwardCache> enc_caches;
        const std::vector<Matrix> feats = encode(model, inputs, &enc_caches);
        for (int i = 0; i < m; ++i) {
          std::vector<int> targets(static_cast<std::size_t>(batch));
          for (int r = 0; r < batch; ++r)
            targets[static_cast<std::size_t>(r)] =
                mask.at(r, i) ? spec.num_classes : y[static_cast<std::size_t>(r)];
          ForwardCache head_cache;
          const Matrix logits = forward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                                        model.head_params[static_cast<std::size_t>(i)],
                                        feats[static_cast<std::size_t>(i)], nullptr, &head_cache);
          Matrix grad;
          detail::cross_entropy(logits, targets, &grad);
          const BackwardResult hr = backward(spec.unimodal_heads[static_cast<std::size_t>(i)],
                                             model.head_params[static_cast<std::size_t>(i)],
                                             head_cache, grad);
          head_units[static_cast<std::size_t>(i)].add_grads(hr.grads);
          if (train_encoders) {
            const BackwardResult er = backward(spec.encoders[static_cast<std::size_t>(i)],
                                               model.encoder_params[static_cast<std::size_t>(i)],
                                               enc_caches[static_cast<std::size_t>(i)], hr.input_grad);
            enc_units[static_cast<std::size_t>(i)].add_grads(er.grads);
          }
        }
      }

      for (auto& u : enc_units)
        if (u.active) u.step();
      for (auto& u : head_units)
        if (u.active) u.step();
      if (fusion_unit.active) fusion_unit.step();
    }
  }
  return model;
}

// Clean accuracy, accuracy with each modality zero-masked, and the
// robustness ratio mean(missing) / clean. Confusion counts come from the
// clean pass.
struct EvalReport {
  double clean_accuracy = 0.0;
  std::vector<double> missing_accuracy;
  double robustness_ratio = 0.0;
  std::vector<std::vector<long>> confusion;
};

inline EvalReport evaluate_missing(const FusionModel& model, const MultiModalDataset& val) {
  val.validate();
  if (val.rows() == 0) throw StructuralError("evaluate_missing: empty validation split");
  const int n = val.rows();
  const int m = val.num_modalities();
  auto accuracy = [&](const std::vector<int>& pred) {
    long hit = 0;
    for (int i = 0; i < n; ++i)
      if (pred[static_cast<std::size_t>(i)] == val.labels[static_cast<std::size_t>(i)]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(n);
  };
  EvalReport rep;
  const std::vector<int> clean_pred = predict(model, val.modalities);
  rep.clean_accuracy = accuracy(clean_pred);
  rep.confusion.assign(static_cast<std::size_t>(val.num_classes),
                       std::vector<long>(static_cast<std::size_t>(val.num_classes), 0));
  for (int i = 0; i < n; ++i)
    ++rep.confusion[static_cast<std::size_t>(val.labels[static_cast<std::size_t>(i)])]
                   [static_cast<std::size_t>(clean_pred[static_cast<std::size_t>(i)])];
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    const std::vector<int> pred = predict(model, mask_modality(val.modalities, i));
    rep.missing_accuracy.push_back(accuracy(pred));
    sum += rep.missing_accuracy.back();
  }
  rep.robustness_ratio =
      rep.clean_accuracy > 0.0 ? (sum / static_cast<double>(m)) / rep.clean_accuracy : 0.0;
  return rep;
}

inline Json eval_report_to_json(const EvalReport& r) {
  return Json{{"clean_accuracy", r.clean_accuracy},
              {"missing_accuracy", r.missing_accuracy},
              {"robustness_ratio", r.robustness_ratio},
              {"confusion", r.confusion}};
}

// Persistence: one manifest, then every component's parameters in declared
// order (encoders, unimodal heads, fusion head) via the flat f64 layout.
inline void save_fusion_model(const std::string& path, const FusionModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  Json manifest;
  manifest["format"] = "mct-fusion-v1";
  manifest["strategy"] = to_string(model.strategy);
  manifest["mode"] = model.spec.mode == FusionMode::ConcatLinear ? "concat-linear" : "logit-average";
  manifest["num_classes"] = model.spec.num_classes;
  manifest["modality_dims"] = model.modality_dims;
  Json encs = Json::array();
  for (const auto& e : model.spec.encoders) encs.push_back(spec_to_json(e));
  manifest["encoders"] = encs;
  Json heads = Json::array();
  for (const auto& h : model.spec.unimodal_heads) heads.push_back(spec_to_json(h));
  manifest["unimodal_heads"] = heads;
  if (model.spec.fusion_head) manifest["fusion_head"] = spec_to_json(*model.spec.fusion_head);
  io::write_header(out, "MCTFM01\n", manifest);
  auto dump = [&](const MlpParams& p) {
    for (const auto& l : p.layers) {
      io::write_matrix(out, l.w);
      io::write_doubles(out, l.b.data(), static_cast<std::size_t>(l.b.size()));
    }
  };
  for (const auto& p : model.encoder_params) dump(p);
  for (const auto& p : model.head_params) dump(p);
  if (model.fusion_params) dump(*model.fusion_params);
  if (!out) throw IoError(path + ": write failed");
}

inline FusionModel load_fusion_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  const Json manifest = io::read_header(in, "MCTFM01\n", path);
  FusionModel model;
  model.strategy = strategy_from_string(manifest.at("strategy").get<std::string>());
  const std::string mode = manifest.at("mode").get<std::string>();
  if (mode == "concat-linear")
    model.spec.mode = FusionMode::ConcatLinear;
  else if (mode == "logit-average")
    model.spec.mode = FusionMode::LogitAverage;
  else
    throw IoError(path + ": unknown fusion mode '" + mode + "'");
  model.spec.num_classes = manifest.at("num_classes").get<int>();
  model.modality_dims = manifest.at("modality_dims").get<std::vector<int>>();
  for (const auto& e : manifest.at("encoders")) model.spec.encoders.push_back(spec_from_json(e));
  for (const auto& h : manifest.at("unimodal_heads"))
    model.spec.unimodal_heads.push_back(spec_from_json(h));
  if (manifest.contains("fusion_head"))
    model.spec.fusion_head = spec_from_json(manifest.at("fusion_head"));
  auto slurp = [&](const MlpSpec& spec) {
    MlpParams p;
    p.layers.resize(static_cast<std::size_t>(spec.num_layers()));
    for (int k = 0; k < spec.num_layers(); ++k) {
      const Eigen::Index out_dim = spec.layer_dims[static_cast<std::size_t>(k) + 1];
      const Eigen::Index in_dim = spec.weight_in_dim(k);
      auto& layer = p.layers[static_cast<std::size_t>(k)];
      layer.w = io::read_matrix(in, out_dim, in_dim, path);
      layer.b.resize(out_dim);
      io::read_doubles(in, layer.b.data(), static_cast<std::size_t>(layer.b.size()), path);
    }
    return p;
  };
  for (const auto& e : model.spec.encoders) model.encoder_params.push_back(slurp(e));
  for (const auto& h : model.spec.unimodal_heads) model.head_params.push_back(slurp(h));
  if (model.spec.fusion_head) model.fusion_params = slurp(*model.spec.fusion_head);
  io::expect_eof(in, path);
  return model;
}

}  // namespace mct
