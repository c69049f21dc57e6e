#pragma once

#include "mct/common.hpp"
#include "mct/mlp.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace mct {

using Json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "payload format is little-endian; big-endian hosts are unsupported");

namespace io {

// File layout shared by all persisted artifacts: an 8-byte magic tag, a
// little-endian u64 manifest length, the JSON manifest, then raw payload.

inline void write_header(std::ofstream& out, const char magic[8], const Json& manifest) {
  const std::string text = manifest.dump();
  const std::uint64_t len = text.size();
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline Json read_header(std::ifstream& in, const char magic[8], const std::string& path) {
  char tag[8] = {};
  in.read(tag, 8);
  if (!in || std::memcmp(tag, magic, 8) != 0)
    throw IoError(path + ": bad or missing file magic");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw IoError(path + ": truncated manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError(path + ": truncated manifest");
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw IoError(path + ": malformed manifest: " + e.what());
  }
}

inline void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
}

inline void read_doubles(std::ifstream& in, double* data, std::size_t count, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
    throw IoError(path + ": payload length mismatch (truncated float data)");
}

// Matrices travel row-major regardless of in-memory layout.
inline void write_matrix(std::ofstream& out, const Matrix& m) {
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    write_doubles(out, row.data(), row.size());
  }
}

inline Matrix read_matrix(std::ifstream& in, Eigen::Index rows, Eigen::Index cols,
                          const std::string& path) {
  Matrix m(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) {
    read_doubles(in, row.data(), row.size(), path);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

inline void expect_eof(std::ifstream& in, const std::string& path) {
  char extra = 0;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw IoError(path + ": trailing bytes after payload");
}

}  // namespace io

inline Json spec_to_json(const MlpSpec& spec) {
  Json j;
  j["layer_dims"] = spec.layer_dims;
  j["activation"] = spec.activation == Activation::Elu ? "elu" : "none";
  if (spec.label_concat_at) {
    j["label_concat_at"] = *spec.label_concat_at;
    j["label_dim"] = spec.label_dim;
  }
  return j;
}

inline MlpSpec spec_from_json(const Json& j) {
  MlpSpec spec;
  spec.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  const std::string act = j.at("activation").get<std::string>();
  if (act == "elu")
    spec.activation = Activation::Elu;
  else if (act == "none")
    spec.activation = Activation::None;
  else
    throw IoError("unknown activation tag: " + act);
  if (j.contains("label_concat_at")) {
    spec.label_concat_at = j.at("label_concat_at").get<int>();
    spec.label_dim = j.at("label_dim").get<int>();
  }
  spec.validate();
  return spec;
}

// Parameters as manifest + flat f64 array in layer order, weights row-major
// then bias per layer.
inline void save_params(const std::string& path, const MlpSpec& spec, const MlpParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  std::size_t count = 0;
  for (const auto& l : params.layers)
    count += static_cast<std::size_t>(l.w.size()) + static_cast<std::size_t>(l.b.size());
  Json manifest;
  manifest["format"] = "mct-params-v1";
  manifest["spec"] = spec_to_json(spec);
  manifest["value_count"] = count;
  io::write_header(out, "MCTNN01\n", manifest);
  for (const auto& l : params.layers) {
    io::write_matrix(out, l.w);
    io::write_doubles(out, l.b.data(), static_cast<std::size_t>(l.b.size()));
  }
  if (!out) throw IoError(path + ": write failed");
}

inline std::pair<MlpSpec, MlpParams> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  const Json manifest = io::read_header(in, "MCTNN01\n", path);
  const MlpSpec spec = spec_from_json(manifest.at("spec"));
  MlpParams params;
  params.layers.resize(static_cast<std::size_t>(spec.num_layers()));
  for (int k = 0; k < spec.num_layers(); ++k) {
    const Eigen::Index out_dim = spec.layer_dims[static_cast<std::size_t>(k) + 1];
    const Eigen::Index in_dim = spec.weight_in_dim(k);
    auto& layer = params.layers[static_cast<std::size_t>(k)];
    layer.w = io::read_matrix(in, out_dim, in_dim, path);
    layer.b.resize(out_dim);
    io::read_doubles(in, layer.b.data(), static_cast<std::size_t>(layer.b.size()), path);
  }
  io::expect_eof(in, path);
  if (!params.all_finite()) throw IoError(path + ": non-finite parameter values");
  return {spec, params};
}

}  // namespace mct
