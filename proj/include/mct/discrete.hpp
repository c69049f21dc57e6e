#pragma once

#include "mct/common.hpp"
#include "mct/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mct {

// Bitmask over the three joint coordinates.
enum VarBits : unsigned { kVarX = 1u, kVarZ = 2u, kVarY = 4u };

enum class Modality { X, Z };

// Exact finite joint distribution P(X, Z, Y). Probabilities live in a flat
// array indexed (x, z, y) row-major. y_values, when present, assigns a real
// value to each label for the regression error computations and must lie in
// the declared interval.
struct DiscreteJoint {
  int nx = 0, nz = 0, ny = 0;
  std::vector<double> p;
  std::optional<std::vector<double>> y_values;
  double y_lo = -1.0, y_hi = 1.0;

  static constexpr int kDefaultCap = 16;
  static constexpr double kMassTol = 1e-12;

  double& at(int x, int z, int y) {
    return p[static_cast<std::size_t>((x * nz + z) * ny + y)];
  }
  double at(int x, int z, int y) const {
    return p[static_cast<std::size_t>((x * nz + z) * ny + y)];
  }

  void validate(int cap = kDefaultCap) const {
    if (nx < 1 || nz < 1 || ny < 1) throw StructuralError("joint: cardinalities must be positive");
    if (nx > cap || nz > cap || ny > cap)
      throw StructuralError("joint: cardinality exceeds cap " + std::to_string(cap));
    if (p.size() != static_cast<std::size_t>(nx) * nz * ny)
      throw StructuralError("joint: probability array size mismatch");
    double sum = 0.0;
    for (double q : p) {
      if (!(q >= 0.0)) throw StructuralError("joint: probabilities must be nonnegative");
      sum += q;
    }
    if (std::abs(sum - 1.0) > kMassTol)
      throw StructuralError("joint: probabilities sum to " + std::to_string(sum));
    if (y_values) {
      if (static_cast<int>(y_values->size()) != ny)
        throw StructuralError("joint: y_values length must equal |Y|");
      for (double v : *y_values)
        if (v < y_lo - kMassTol || v > y_hi + kMassTol)
          throw StructuralError("joint: y_value outside declared interval");
    }
  }
};

namespace detail {

inline int card_of(const DiscreteJoint& j, unsigned bit) {
  return bit == kVarX ? j.nx : bit == kVarZ ? j.nz : j.ny;
}

}  // namespace detail

// Shannon entropy of the marginal over the selected variables, in nats,
// with 0 log 0 := 0.
inline double entropy(const DiscreteJoint& joint, unsigned vars) {
  if (vars == 0) return 0.0;
  int size = 1;
  for (unsigned bit : {kVarX, kVarZ, kVarY})
    if (vars & bit) size *= detail::card_of(joint, bit);
  std::vector<double> marginal(static_cast<std::size_t>(size), 0.0);
  for (int x = 0; x < joint.nx; ++x)
    for (int z = 0; z < joint.nz; ++z)
      for (int y = 0; y < joint.ny; ++y) {
        int key = 0;
        if (vars & kVarX) key = key * joint.nx + x;
        if (vars & kVarZ) key = key * joint.nz + z;
        if (vars & kVarY) key = key * joint.ny + y;
        marginal[static_cast<std::size_t>(key)] += joint.at(x, z, y);
      }
  double h = 0.0;
  for (double q : marginal)
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

// I(A; B | C) in nats via the entropy decomposition
// H(A,C) + H(B,C) - H(A,B,C) - H(C). Round-off within 1e-12 of zero is
// clamped to zero; interaction information keeps its sign by subtracting
// two such terms.
inline double mutual_info(const DiscreteJoint& joint, unsigned a, unsigned b, unsigned cond = 0) {
  if (a == 0 || b == 0) throw StructuralError("mutual_info: variable subsets must be nonempty");
  if ((a & b) || (a & cond) || (b & cond))
    throw StructuralError("mutual_info: variable subsets must be disjoint");
  const double value = entropy(joint, a | cond) + entropy(joint, b | cond) -
                       entropy(joint, a | b | cond) - entropy(joint, cond);
  if (value < 0.0 && value > -1e-12) return 0.0;
  return value;
}

// I(X;Y;Z) = I(X;Y) - I(X;Y|Z); negative values indicate synergy.
inline double interaction_info(const DiscreteJoint& joint) {
  return mutual_info(joint, kVarX, kVarY) - mutual_info(joint, kVarX, kVarY, kVarZ);
}

// Complementary information: Gamma_X = I(X;Y|Z), Gamma_Z = I(Z;Y|X).
inline double complementary_info(const DiscreteJoint& joint, Modality which) {
  return which == Modality::X ? mutual_info(joint, kVarX, kVarY, kVarZ)
                              : mutual_info(joint, kVarZ, kVarY, kVarX);
}

// Bayes error of the optimal classifier. With a missing modality the
// predictor conditions only on the surviving one. Zero-probability
// conditioning cells carry no mass and drop out of the expectation; argmax
// ties resolve to the lowest label index (the value is tie-invariant).
inline double bayes_error_classification(const DiscreteJoint& joint,
                                         std::optional<Modality> missing = std::nullopt) {
  double correct = 0.0;
  if (!missing) {
    for (int x = 0; x < joint.nx; ++x)
      for (int z = 0; z < joint.nz; ++z) {
        double best = 0.0;
        for (int y = 0; y < joint.ny; ++y) best = std::max(best, joint.at(x, z, y));
        correct += best;
      }
  } else if (*missing == Modality::Z) {
    for (int x = 0; x < joint.nx; ++x) {
      double best = 0.0;
      std::vector<double> py(static_cast<std::size_t>(joint.ny), 0.0);
      for (int z = 0; z < joint.nz; ++z)
        for (int y = 0; y < joint.ny; ++y) py[static_cast<std::size_t>(y)] += joint.at(x, z, y);
      for (double q : py) best = std::max(best, q);
      correct += best;
    }
  } else {
    for (int z = 0; z < joint.nz; ++z) {
      double best = 0.0;
      std::vector<double> py(static_cast<std::size_t>(joint.ny), 0.0);
      for (int x = 0; x < joint.nx; ++x)
        for (int y = 0; y < joint.ny; ++y) py[static_cast<std::size_t>(y)] += joint.at(x, z, y);
      for (double q : py) best = std::max(best, q);
      correct += best;
    }
  }
  return 1.0 - correct;
}

// Bayes risk of the minimum-mean-square-error predictor E[Y | inputs].
inline double bayes_error_regression(const DiscreteJoint& joint,
                                     std::optional<Modality> missing = std::nullopt) {
  if (!joint.y_values) throw StructuralError("bayes_error_regression: joint has no y_values");
  const std::vector<double>& val = *joint.y_values;
  double err = 0.0;
  auto cell_error = [&](const std::vector<double>& pxy_given_cell) {
    // pxy_given_cell holds the joint mass p(cell, y); returns sum over y of
    // p(cell, y) * (v_y - E[Y|cell])^2
    double mass = 0.0, mean = 0.0;
    for (int y = 0; y < joint.ny; ++y) {
      mass += pxy_given_cell[static_cast<std::size_t>(y)];
      mean += pxy_given_cell[static_cast<std::size_t>(y)] * val[static_cast<std::size_t>(y)];
    }
    if (mass <= 0.0) return 0.0;
    mean /= mass;
    double e = 0.0;
    for (int y = 0; y < joint.ny; ++y) {
      const double d = val[static_cast<std::size_t>(y)] - mean;
      e += pxy_given_cell[static_cast<std::size_t>(y)] * d * d;
    }
    return e;
  };
  std::vector<double> cell(static_cast<std::size_t>(joint.ny));
  if (!missing) {
    for (int x = 0; x < joint.nx; ++x)
      for (int z = 0; z < joint.nz; ++z) {
        for (int y = 0; y < joint.ny; ++y) cell[static_cast<std::size_t>(y)] = joint.at(x, z, y);
        err += cell_error(cell);
      }
  } else if (*missing == Modality::Z) {
    for (int x = 0; x < joint.nx; ++x) {
      std::fill(cell.begin(), cell.end(), 0.0);
      for (int z = 0; z < joint.nz; ++z)
        for (int y = 0; y < joint.ny; ++y) cell[static_cast<std::size_t>(y)] += joint.at(x, z, y);
      err += cell_error(cell);
    }
  } else {
    for (int z = 0; z < joint.nz; ++z) {
      std::fill(cell.begin(), cell.end(), 0.0);
      for (int x = 0; x < joint.nx; ++x)
        for (int y = 0; y < joint.ny; ++y) cell[static_cast<std::size_t>(y)] += joint.at(x, z, y);
      err += cell_error(cell);
    }
  }
  return err;
}

// Both sides of the classification bounds, the missing-modality variants
// (missing modality Z by convention, so the surviving predictor sees X), and
// the regression gap diagnostics. Lower bounds become a -inf sentinel marked
// vacuous when |Y| = 1. The half-gamma comparison is recorded, never
// asserted; the two-gamma bound is the one that provably holds on [-1, 1].
struct BoundReport {
  double h_y_given_xz = 0.0, h_y_given_x = 0.0;
  double gamma_x = 0.0, gamma_z = 0.0;
  double i_xz = 0.0, i_xyz = 0.0, i_xz_y = 0.0;
  double p_ec = 0.0, p_ec_miss = 0.0;
  double eq1_lo = 0.0, eq1_hi = 0.0;
  double eq2_lo = 0.0, eq2_hi = 0.0;
  bool eq1_lo_ok = false, eq1_hi_ok = false;
  bool eq2_lo_ok = false, eq2_hi_ok = false;
  bool lower_bounds_vacuous = false;
  bool has_regression = false;
  double p_er = 0.0, p_er_miss = 0.0, gap = 0.0;
  double half_gamma = 0.0, two_gamma = 0.0;
  bool gap_le_half_gamma = false, gap_le_two_gamma = false;

  static constexpr double kSlack = 1e-9;
};

inline BoundReport verify_bounds(const DiscreteJoint& joint) {
  joint.validate();
  BoundReport r;
  const double h_y = entropy(joint, kVarY);
  r.h_y_given_xz = entropy(joint, kVarX | kVarZ | kVarY) - entropy(joint, kVarX | kVarZ);
  r.h_y_given_x = entropy(joint, kVarX | kVarY) - entropy(joint, kVarX);
  r.gamma_x = complementary_info(joint, Modality::X);
  r.gamma_z = complementary_info(joint, Modality::Z);
  r.i_xz = mutual_info(joint, kVarX, kVarZ);
  r.i_xyz = interaction_info(joint);
  r.i_xz_y = h_y - r.h_y_given_xz;
  r.p_ec = bayes_error_classification(joint);
  r.p_ec_miss = bayes_error_classification(joint, Modality::Z);

  const double ln2 = std::log(2.0);
  const double log_card = std::log(static_cast<double>(joint.ny));
  r.lower_bounds_vacuous = joint.ny == 1;
  if (r.lower_bounds_vacuous) {
    r.eq1_lo = -std::numeric_limits<double>::infinity();
    r.eq2_lo = -std::numeric_limits<double>::infinity();
  } else {
    r.eq1_lo = (r.h_y_given_xz - ln2) / log_card;
    r.eq2_lo = (r.h_y_given_xz + r.gamma_z - ln2) / log_card;
  }
  r.eq1_hi = 1.0 - std::exp(-r.h_y_given_xz);
  r.eq2_hi = 1.0 - std::exp(-r.h_y_given_xz - r.gamma_z);
  r.eq1_lo_ok = r.eq1_lo <= r.p_ec + BoundReport::kSlack;
  r.eq1_hi_ok = r.p_ec <= r.eq1_hi + BoundReport::kSlack;
  r.eq2_lo_ok = r.eq2_lo <= r.p_ec_miss + BoundReport::kSlack;
  r.eq2_hi_ok = r.p_ec_miss <= r.eq2_hi + BoundReport::kSlack;

  if (joint.y_values) {
    r.has_regression = true;
    r.p_er = bayes_error_regression(joint);
    r.p_er_miss = bayes_error_regression(joint, Modality::Z);
    r.gap = r.p_er_miss - r.p_er;
    r.half_gamma = 0.5 * r.gamma_z;
    r.two_gamma = 2.0 * r.gamma_z;
    r.gap_le_half_gamma = r.gap <= r.half_gamma + BoundReport::kSlack;
    r.gap_le_two_gamma = r.gap <= r.two_gamma + BoundReport::kSlack;
  }
  return r;
}

// Dirichlet(1,...,1) over all atoms: normalized iid Exp(1) draws, so every
// randomized joint has full support almost surely.
inline DiscreteJoint random_joint(RngStream& rng, int nx, int nz, int ny,
                                  bool with_y_values = false, double y_lo = -1.0,
                                  double y_hi = 1.0) {
  DiscreteJoint j;
  j.nx = nx;
  j.nz = nz;
  j.ny = ny;
  j.p.resize(static_cast<std::size_t>(nx) * nz * ny);
  double sum = 0.0;
  for (double& q : j.p) {
    const double u = (static_cast<double>(rng.next_u64() >> 11) + 1.0) * 0x1.0p-53;
    q = -std::log(u);
    sum += q;
  }
  for (double& q : j.p) q /= sum;
  if (with_y_values) {
    j.y_lo = y_lo;
    j.y_hi = y_hi;
    std::vector<double> vals(static_cast<std::size_t>(ny));
    for (double& v : vals) v = rng.uniform(y_lo, y_hi);
    j.y_values = std::move(vals);
  }
  return j;
}

inline void save_joint(const std::string& path, const DiscreteJoint& joint) {
  joint.validate();
  nlohmann::json j;
  j["format"] = "mct-joint-v1";
  j["nx"] = joint.nx;
  j["nz"] = joint.nz;
  j["ny"] = joint.ny;
  if (joint.y_values) {
    j["y_values"] = *joint.y_values;
    j["y_interval"] = {joint.y_lo, joint.y_hi};
  }
  j["probs"] = joint.p;  // (x, z, y) row-major
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError(path + ": write failed");
}

inline DiscreteJoint load_joint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": malformed joint file: " + e.what());
  }
  DiscreteJoint joint;
  joint.nx = j.at("nx").get<int>();
  joint.nz = j.at("nz").get<int>();
  joint.ny = j.at("ny").get<int>();
  joint.p = j.at("probs").get<std::vector<double>>();
  if (j.contains("y_values")) {
    joint.y_values = j.at("y_values").get<std::vector<double>>();
    if (j.contains("y_interval")) {
      joint.y_lo = j.at("y_interval").at(0).get<double>();
      joint.y_hi = j.at("y_interval").at(1).get<double>();
    }
  }
  joint.validate();
  return joint;
}

}  // namespace mct
