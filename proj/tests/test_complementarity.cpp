#include "mct/complementarity.hpp"

#include "oracle_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mct;
using testoracle::make_joint;
using testoracle::xor_joint;

namespace {

constexpr double kLn2 = 0.6931471805599453;

MlpSpec critic(std::vector<int> dims) {
  return MlpSpec{std::move(dims), Activation::Elu, std::nullopt, 0};
}

MlpSpec critic_with_label(std::vector<int> dims, int at, int label_dim) {
  return MlpSpec{std::move(dims), Activation::Elu, at, label_dim};
}

// two-modality dataset where modality 0 is a one-hot of the label and
// modality 1 is independent gaussian noise
std::pair<MultiModalDataset, MultiModalDataset> label_vs_noise(int n_train, int n_val,
                                                               std::uint64_t seed) {
  RngStream rng(seed);
  auto make = [&](int rows, const std::string& split) {
    MultiModalDataset ds;
    ds.split = split;
    ds.num_classes = 2;
    Matrix a = Matrix::Zero(rows, 2);
    Matrix b(rows, 3);
    for (int i = 0; i < rows; ++i) {
      const int y = rng.uniform_int(2);
      ds.labels.push_back(y);
      a(i, y) = 1.0;
      for (int j = 0; j < 3; ++j) b(i, j) = rng.normal();
    }
    ds.modalities = {a, b};
    return ds;
  };
  return {make(n_train, "train"), make(n_val, "val")};
}

}  // namespace

TEST(SubsetSpec, Validation) {
  EXPECT_THROW((SubsetSpec{{}}.validate(3)), StructuralError);
  EXPECT_THROW((SubsetSpec{{0, 0}}.validate(3)), StructuralError);
  EXPECT_THROW((SubsetSpec{{0, 1, 2}}.validate(3)), StructuralError);
  EXPECT_THROW((SubsetSpec{{5}}.validate(3)), StructuralError);
  EXPECT_NO_THROW((SubsetSpec{{0, 2}}.validate(3)));
  const SubsetSpec s{{0, 2}};
  EXPECT_EQ(s.complement(4), (std::vector<int>{1, 3}));
}

TEST(OracleComplementarity, XorIsFullyComplementary) {
  const OracleComplementarity r = oracle_complementarity(xor_joint(), Modality::X);
  EXPECT_TRUE(r.metric_defined);
  EXPECT_NEAR(r.metric_subset, 1.0, 1e-12);
  // synergy pushes the pair metric above 1
  EXPECT_NEAR(r.metric_pair, 2.0, 1e-12);
}

TEST(OracleComplementarity, FullRedundancyGivesZero) {
  // Y = X = Z uniform binary
  DiscreteJoint copy = make_joint({{{0.5, 0.0}, {0.0, 0.0}}, {{0.0, 0.0}, {0.0, 0.5}}});
  const OracleComplementarity r = oracle_complementarity(copy, Modality::X);
  EXPECT_TRUE(r.metric_defined);
  EXPECT_NEAR(r.metric_subset, 0.0, 1e-12);
  EXPECT_NEAR(r.metric_pair, 0.0, 1e-12);
}

TEST(OracleComplementarity, UninformativeModalitiesAreUndefined) {
  // X, Z, Y all independent uniform bits: I(S;Y) = 0
  std::vector<std::vector<std::vector<double>>> p(
      2, std::vector<std::vector<double>>(2, std::vector<double>(2, 0.125)));
  const OracleComplementarity r = oracle_complementarity(make_joint(p), Modality::X);
  EXPECT_FALSE(r.metric_defined);
  EXPECT_TRUE(std::isnan(r.metric_subset));
}

TEST(OracleComplementarity, LabelCarriedByOneModality) {
  // Y = X uniform binary, Z independent uniform bit
  std::vector<std::vector<std::vector<double>>> p(
      2, std::vector<std::vector<double>>(2, std::vector<double>(2, 0.0)));
  for (int x = 0; x < 2; ++x)
    for (int z = 0; z < 2; ++z) p[x][z][x] = 0.25;
  const OracleComplementarity r = oracle_complementarity(make_joint(p), Modality::X);
  EXPECT_NEAR(r.gamma_s1, kLn2, 1e-12);  // Gamma_X = H(Y)
  EXPECT_NEAR(r.gamma_s2, 0.0, 1e-12);
  EXPECT_NEAR(r.metric_subset, 1.0, 1e-12);
}

TEST(OracleComplementarity, DecompositionIdentityOnRandomJoints) {
  RngStream rng(31);
  for (int i = 0; i < 500; ++i) {
    const DiscreteJoint j = random_joint(rng, 2 + rng.uniform_int(5), 2 + rng.uniform_int(5),
                                         2 + rng.uniform_int(5));
    const OracleComplementarity r = oracle_complementarity(j, Modality::X);
    const double lhs = r.gamma_s1 + r.gamma_s2 + interaction_info(j);
    EXPECT_NEAR(lhs, r.i_sy, 1e-12);
  }
}

TEST(EstimateGamma, IndependentNoiseModalityContributesNothing) {
  auto [train, val] = label_vs_noise(1500, 500, 7);
  CriticSpec marginal{critic({5, 64, 32, 1})};
  CriticSpec joint{critic_with_label({5, 64, 32, 8, 10, 1}, 3, 2)};
  MineTrainConfig mine;
  mine.epochs = 60;
  mine.batch_size = 100;
  mine.weight_decay = 1e-4;
  mine.seed = 3;
  // S1 = {noise modality}
  const GammaEstimate g = estimate_gamma(train, val, SubsetSpec{{1}}, marginal, joint, mine);
  EXPECT_LT(std::abs(g.raw), 0.05);
  EXPECT_GE(g.clamped, 0.0);
}

TEST(EstimateComplementarity, LabelModalityOwnsTheMetric) {
  auto [train, val] = label_vs_noise(1500, 500, 9);
  ComplementarityConfig cfg;
  cfg.critic_marginal.mlp = critic({5, 64, 32, 1});
  cfg.critic_s1_joint.mlp = critic_with_label({5, 64, 32, 8, 10, 1}, 3, 2);
  cfg.critic_s2_joint.mlp = cfg.critic_s1_joint.mlp;
  cfg.critic_normalizer.mlp = cfg.critic_s1_joint.mlp;
  cfg.mine.epochs = 80;
  cfg.mine.batch_size = 100;
  cfg.mine.weight_decay = 1e-4;
  cfg.mine.seed = 5;
  const ComplementarityReport rep = estimate_complementarity(train, val, SubsetSpec{{0}}, cfg);
  ASSERT_TRUE(rep.metric_defined);
  // modality 0 carries the label outright: Gamma_X near ln 2, Gamma_Z near 0
  EXPECT_NEAR(rep.gamma_x, kLn2, 0.12);
  EXPECT_LT(rep.gamma_z, 0.06);
  EXPECT_NEAR(rep.i_sy.value, kLn2, 0.12);
  EXPECT_NEAR(rep.metric_subset, 1.0, 0.2);
  // arithmetic wiring of the report
  EXPECT_DOUBLE_EQ(rep.gamma_x_raw, rep.i_x_yz.value - rep.i_xz.value);
  EXPECT_DOUBLE_EQ(rep.gamma_x, std::max(0.0, rep.gamma_x_raw));
  EXPECT_DOUBLE_EQ(rep.metric_pair, (rep.gamma_x + rep.gamma_z) / rep.i_sy.value);
}

TEST(EstimateComplementarity, DeterministicGivenSeeds) {
  auto [train, val] = label_vs_noise(600, 200, 13);
  ComplementarityConfig cfg;
  cfg.critic_marginal.mlp = critic({5, 32, 1});
  cfg.critic_s1_joint.mlp = critic_with_label({5, 32, 8, 10, 1}, 2, 2);
  cfg.critic_s2_joint.mlp = cfg.critic_s1_joint.mlp;
  cfg.critic_normalizer.mlp = cfg.critic_s1_joint.mlp;
  cfg.mine.epochs = 40;
  cfg.mine.batch_size = 100;
  cfg.mine.seed = 21;
  const ComplementarityReport r1 = estimate_complementarity(train, val, SubsetSpec{{0}}, cfg);
  cfg.parallel = 4;  // scheduling must not affect values
  const ComplementarityReport r2 = estimate_complementarity(train, val, SubsetSpec{{0}}, cfg);
  EXPECT_DOUBLE_EQ(r1.i_xz.value, r2.i_xz.value);
  EXPECT_DOUBLE_EQ(r1.i_x_yz.value, r2.i_x_yz.value);
  EXPECT_DOUBLE_EQ(r1.i_z_yx.value, r2.i_z_yx.value);
  EXPECT_DOUBLE_EQ(r1.i_sy.value, r2.i_sy.value);
  ASSERT_TRUE(r1.metric_defined);
  ASSERT_TRUE(r2.metric_defined);
  EXPECT_DOUBLE_EQ(r1.metric_pair, r2.metric_pair);
}

TEST(EstimateComplementarity, UndefinedMetricIsFlaggedNotThrown) {
  // both modalities pure noise, labels random: I(S;Y) hugs zero
  RngStream rng(17);
  auto make = [&](int rows, const std::string& split) {
    MultiModalDataset ds;
    ds.split = split;
    ds.num_classes = 2;
    Matrix a(rows, 3), b(rows, 3);
    for (int i = 0; i < rows; ++i) {
      ds.labels.push_back(rng.uniform_int(2));
      for (int j = 0; j < 3; ++j) {
        a(i, j) = rng.normal();
        b(i, j) = rng.normal();
      }
    }
    ds.modalities = {a, b};
    return ds;
  };
  const MultiModalDataset train = make(1000, "train");
  const MultiModalDataset val = make(300, "val");
  ComplementarityConfig cfg;
  cfg.critic_marginal.mlp = critic({6, 32, 1});
  cfg.critic_s1_joint.mlp = critic_with_label({6, 32, 8, 10, 1}, 2, 2);
  cfg.critic_s2_joint.mlp = cfg.critic_s1_joint.mlp;
  cfg.critic_normalizer.mlp = cfg.critic_s1_joint.mlp;
  cfg.mine.epochs = 40;
  cfg.mine.batch_size = 100;
  cfg.mine.weight_decay = 1e-4;
  cfg.mine.seed = 8;
  const ComplementarityReport rep = estimate_complementarity(train, val, SubsetSpec{{0}}, cfg);
  EXPECT_FALSE(rep.metric_defined);
  EXPECT_TRUE(std::isnan(rep.metric_pair));
  EXPECT_TRUE(std::isnan(rep.metric_subset));
}

TEST(EstimateComplementarity, ErrorsCarryTheTermName) {
  auto [train, val] = label_vs_noise(200, 100, 23);
  ComplementarityConfig cfg;
  cfg.critic_marginal.mlp = critic({99, 32, 1});  // wrong input dim
  cfg.critic_s1_joint.mlp = critic_with_label({5, 32, 8, 10, 1}, 2, 2);
  cfg.critic_s2_joint.mlp = cfg.critic_s1_joint.mlp;
  cfg.critic_normalizer.mlp = cfg.critic_s1_joint.mlp;
  cfg.mine.epochs = 5;
  try {
    estimate_complementarity(train, val, SubsetSpec{{0}}, cfg);
    FAIL() << "expected StructuralError";
  } catch (const StructuralError& e) {
    EXPECT_NE(std::string(e.what()).find("I(S1;S2)"), std::string::npos);
  }
}

TEST(EstimatorVsOracle, XorGammaThroughSubsetFormula) {
  // x, z independent uniform bits, y = xor; one-hot embedded.
  // Gamma_X = I(X; Y,Z) - I(X;Z) = ln 2 exactly (certified by the oracle).
  const OracleComplementarity truth = oracle_complementarity(xor_joint(), Modality::X);
  ASSERT_NEAR(truth.gamma_s1, kLn2, 1e-12);
  RngStream rng(77);
  auto make = [&](int rows, const std::string& split) {
    MultiModalDataset ds;
    ds.split = split;
    ds.num_classes = 2;
    Matrix a = Matrix::Zero(rows, 2), b = Matrix::Zero(rows, 2);
    for (int i = 0; i < rows; ++i) {
      const int x = rng.uniform_int(2);
      const int z = rng.uniform_int(2);
      a(i, x) = 1.0;
      b(i, z) = 1.0;
      ds.labels.push_back(x ^ z);
    }
    ds.modalities = {a, b};
    return ds;
  };
  const MultiModalDataset train = make(4000, "train");
  const MultiModalDataset val = make(1000, "val");
  CriticSpec marginal{critic({4, 128, 64, 1})};
  CriticSpec joint{critic_with_label({4, 128, 64, 16, 18, 1}, 3, 2)};
  MineTrainConfig mine;
  mine.epochs = 120;
  mine.batch_size = 100;
  mine.weight_decay = 1e-4;
  mine.seed = 6;
  const GammaEstimate g = estimate_gamma(train, val, SubsetSpec{{0}}, marginal, joint, mine);
  EXPECT_NEAR(g.clamped, truth.gamma_s1, 0.10);
}
