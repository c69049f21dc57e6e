#pragma once

#include "mct/common.hpp"
#include "mct/serialize.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

namespace mct {

// Aligned multimodal data: one real matrix per modality (rows are examples)
// plus integer labels. provenance carries the generating config so a dataset
// can be regenerated from its manifest; provenance_matrices holds the fixed
// output projections the generator applied.
struct MultiModalDataset {
  std::vector<Matrix> modalities;
  std::vector<int> labels;
  int num_classes = 2;
  std::string split = "train";
  Json provenance;
  std::vector<std::pair<std::string, Matrix>> provenance_matrices;

  int rows() const { return static_cast<int>(labels.size()); }
  int num_modalities() const { return static_cast<int>(modalities.size()); }
  int dim(int i) const { return static_cast<int>(modalities[static_cast<std::size_t>(i)].cols()); }

  void validate() const {
    if (modalities.empty()) throw StructuralError("dataset: no modalities");
    for (const auto& m : modalities) {
      if (m.rows() != rows()) throw StructuralError("dataset: modality row count != label count");
      if (!m.allFinite()) throw StructuralError("dataset: non-finite feature values");
    }
    for (int y : labels)
      if (y < 0 || y >= num_classes) throw StructuralError("dataset: label out of range");
  }
};

// One-hot encoding of the labels, rows aligned with the dataset.
inline Matrix one_hot(const std::vector<int>& labels, int num_classes) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return m;
}

inline std::vector<long> class_histogram(const MultiModalDataset& ds) {
  std::vector<long> hist(static_cast<std::size_t>(ds.num_classes), 0);
  for (int y : ds.labels) ++hist[static_cast<std::size_t>(y)];
  return hist;
}

// Single-file layout: manifest, then per-modality feature matrices as f64
// row-major, labels as u16, then any provenance matrices.
inline void save_dataset(const std::string& path, const MultiModalDataset& ds) {
  ds.validate();
  if (ds.num_classes > 65535) throw StructuralError("save_dataset: labels exceed u16 range");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  Json manifest;
  manifest["format"] = "mct-dataset-v1";
  manifest["split"] = ds.split;
  manifest["rows"] = ds.rows();
  manifest["num_classes"] = ds.num_classes;
  std::vector<int> dims;
  for (const auto& m : ds.modalities) dims.push_back(static_cast<int>(m.cols()));
  manifest["modality_dims"] = dims;
  manifest["class_histogram"] = class_histogram(ds);
  manifest["config"] = ds.provenance;
  Json mats = Json::array();
  for (const auto& [name, m] : ds.provenance_matrices)
    mats.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  manifest["provenance_matrices"] = mats;
  io::write_header(out, "MCTDS01\n", manifest);
  for (const auto& m : ds.modalities) io::write_matrix(out, m);
  std::vector<std::uint16_t> lab(ds.labels.begin(), ds.labels.end());
  out.write(reinterpret_cast<const char*>(lab.data()),
            static_cast<std::streamsize>(lab.size() * sizeof(std::uint16_t)));
  for (const auto& [name, m] : ds.provenance_matrices) io::write_matrix(out, m);
  if (!out) throw IoError(path + ": write failed");
}

inline MultiModalDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  const Json manifest = io::read_header(in, "MCTDS01\n", path);
  MultiModalDataset ds;
  ds.split = manifest.at("split").get<std::string>();
  ds.num_classes = manifest.at("num_classes").get<int>();
  ds.provenance = manifest.at("config");
  const int rows = manifest.at("rows").get<int>();
  const auto dims = manifest.at("modality_dims").get<std::vector<int>>();
  for (int d : dims) ds.modalities.push_back(io::read_matrix(in, rows, d, path));
  std::vector<std::uint16_t> lab(static_cast<std::size_t>(rows));
  in.read(reinterpret_cast<char*>(lab.data()),
          static_cast<std::streamsize>(lab.size() * sizeof(std::uint16_t)));
  if (static_cast<std::size_t>(in.gcount()) != lab.size() * sizeof(std::uint16_t))
    throw IoError(path + ": payload length mismatch (truncated labels)");
  ds.labels.assign(lab.begin(), lab.end());
  for (const auto& entry : manifest.at("provenance_matrices")) {
    const auto name = entry.at("name").get<std::string>();
    const auto r = entry.at("rows").get<Eigen::Index>();
    const auto c = entry.at("cols").get<Eigen::Index>();
    ds.provenance_matrices.emplace_back(name, io::read_matrix(in, r, c, path));
  }
  io::expect_eof(in, path);
  ds.validate();
  return ds;
}

}  // namespace mct
