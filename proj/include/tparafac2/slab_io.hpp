#ifndef TPARAFAC2_SLAB_IO_HPP_
#define TPARAFAC2_SLAB_IO_HPP_

// On-disk dataset layout ("slab" directories):
//
//   meta.json     {I, J, K, R_true?, seed, generator_config?}
//   slices.bin    K*I*J little-endian float64, slice-major, row-major within
//                 a slice
//   truth/A.bin   I*R   row-major
//   truth/B.bin   K*J*R slice-major, row-major within B_k
//   truth/D.bin   K*R   row k holds the diagonal of D_k
//
// Fitted factors are saved with the same three-file layout.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tparafac2/core.hpp"
#include "tparafac2/synthgen.hpp"

namespace tparafac2 {

namespace fs = std::filesystem;

/// Failure to read or write a file, as opposed to bad arguments.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io {

inline void put_f64(std::string& buf, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | p[b];
  return std::bit_cast<double>(bits);
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

/// Writes via a sibling temporary and a rename, so readers never see a
/// half-written file.
inline void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::vector<double> read_f64_file(const fs::path& path, std::size_t expected) {
  const std::string bytes = read_file(path);
  if (bytes.size() != expected * 8)
    throw IoError(path.string() + ": expected " + std::to_string(expected * 8) + " bytes, found " +
                  std::to_string(bytes.size()));
  std::vector<double> out(expected);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < expected; ++i) out[i] = get_f64(p + 8 * i);
  return out;
}

inline void append_row_major(std::string& buf, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) put_f64(buf, m(i, j));
}

inline Matrix take_row_major(const std::vector<double>& v, std::size_t offset, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = v[offset + static_cast<std::size_t>(i * cols + j)];
  return m;
}

inline nlohmann::json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace io

// ---------------------------------------------------------------------------
// Factors

inline void write_factors(const fs::path& dir, const Parafac2Factors& f) {
  check_shapes(f);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::string a, b, d;
  io::append_row_major(a, f.A);
  for (const auto& bk : f.B) io::append_row_major(b, bk);
  for (const auto& dk : f.D)
    for (Index r = 0; r < dk.size(); ++r) io::put_f64(d, dk(r));
  io::write_file(dir / "A.bin", a);
  io::write_file(dir / "B.bin", b);
  io::write_file(dir / "D.bin", d);
}

/// Reads factors of known I, J, K; R is inferred from the size of A.bin.
inline Parafac2Factors read_factors(const fs::path& dir, Index I, Index J, Index K) {
  std::error_code ec;
  const auto a_bytes = fs::file_size(dir / "A.bin", ec);
  if (ec) throw IoError("cannot stat " + (dir / "A.bin").string());
  if (I <= 0 || a_bytes % static_cast<std::uintmax_t>(8 * I) != 0)
    throw IoError((dir / "A.bin").string() + ": size is not a multiple of 8*I");
  const Index R = static_cast<Index>(a_bytes / static_cast<std::uintmax_t>(8 * I));
  const auto a = io::read_f64_file(dir / "A.bin", static_cast<std::size_t>(I * R));
  const auto b = io::read_f64_file(dir / "B.bin", static_cast<std::size_t>(K * J * R));
  const auto d = io::read_f64_file(dir / "D.bin", static_cast<std::size_t>(K * R));
  Parafac2Factors f;
  f.A = io::take_row_major(a, 0, I, R);
  for (Index k = 0; k < K; ++k) {
    f.B.push_back(io::take_row_major(b, static_cast<std::size_t>(k * J * R), J, R));
    f.D.push_back(io::take_row_major(d, static_cast<std::size_t>(k * R), 1, R).row(0).transpose());
  }
  return f;
}

// ---------------------------------------------------------------------------
// Generator configuration as JSON

namespace synth {

inline void to_json(nlohmann::json& j, const DriftSpec& d) {
  j = nlohmann::json{{"kind", std::string(to_string(d.kind))},
                     {"t0", d.t0},
                     {"tp", d.tp},
                     {"p_new", d.p_new},
                     {"set1", d.set1},
                     {"set2", d.set2}};
  // JSON has no infinity; an instantaneous ramp is written as a string.
  if (std::isinf(d.steepness))
    j["steepness"] = "inf";
  else
    j["steepness"] = d.steepness;
}

inline void from_json(const nlohmann::json& j, DriftSpec& d) {
  d.kind = drift_kind_from_string(j.at("kind").get<std::string>());
  d.t0 = j.value("t0", d.t0);
  d.tp = j.value("tp", d.tp);
  d.p_new = j.value("p_new", d.p_new);
  if (j.contains("steepness")) {
    const auto& s = j.at("steepness");
    d.steepness = s.is_string() ? std::numeric_limits<double>::infinity() : s.get<double>();
  }
  d.set1 = j.value("set1", std::vector<Index>{});
  d.set2 = j.value("set2", std::vector<Index>{});
}

inline void to_json(nlohmann::json& j, const StrengthProfile& s) {
  j = nlohmann::json{{"kind", std::string(to_string(s.kind))},
                     {"base", s.base},
                     {"amplitude", s.amplitude},
                     {"period", s.period},
                     {"low_start", s.low_start},
                     {"low_length", s.low_length},
                     {"low_level", s.low_level}};
}

inline void from_json(const nlohmann::json& j, StrengthProfile& s) {
  s.kind = strength_kind_from_string(j.at("kind").get<std::string>());
  s.base = j.value("base", s.base);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.period = j.value("period", s.period);
  s.low_start = j.value("low_start", s.low_start);
  s.low_length = j.value("low_length", s.low_length);
  s.low_level = j.value("low_level", s.low_level);
}

inline void to_json(nlohmann::json& j, const ConceptSpec& c) {
  j = nlohmann::json{{"drift", c.drift}, {"strength", c.strength}, {"author_set_size", c.author_set_size}};
}

inline void from_json(const nlohmann::json& j, ConceptSpec& c) {
  c.drift = j.at("drift").get<DriftSpec>();
  c.strength = j.at("strength").get<StrengthProfile>();
  c.author_set_size = j.value("author_set_size", c.author_set_size);
}

inline void to_json(nlohmann::json& j, const SyntheticConfig& c) {
  j = nlohmann::json{{"I", c.I},
                     {"J", c.J},
                     {"K", c.K},
                     {"concepts", c.concepts},
                     {"overlap_fraction", c.overlap_fraction},
                     {"eta", c.eta},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticConfig& c) {
  c.I = j.at("I").get<Index>();
  c.J = j.at("J").get<Index>();
  c.K = j.at("K").get<Index>();
  c.concepts = j.at("concepts").get<std::vector<ConceptSpec>>();
  c.overlap_fraction = j.value("overlap_fraction", 0.0);
  c.eta = j.value("eta", 0.0);
  c.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace synth

// ---------------------------------------------------------------------------
// Datasets

struct SlabDataset {
  TensorSlices data;
  std::optional<Parafac2Factors> truth;
  std::optional<Index> R_true;
  std::uint64_t seed = 0;
  nlohmann::json generator_config;  // null when absent
};

/// Writes a dataset directory. `extra_config` fields (e.g. group labels)
/// are merged into generator_config.
inline void write_slab(const fs::path& dir, const TensorSlices& data, const Parafac2Factors* truth,
                       std::uint64_t seed, const nlohmann::json& generator_config = nullptr) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::string bytes;
  bytes.reserve(static_cast<std::size_t>(data.K() * data.I() * data.J() * 8));
  for (Index k = 0; k < data.K(); ++k) io::append_row_major(bytes, data[k]);
  io::write_file(dir / "slices.bin", bytes);

  nlohmann::json meta{{"I", data.I()}, {"J", data.J()}, {"K", data.K()}, {"seed", seed}};
  if (truth != nullptr) {
    check_shapes(*truth, &data);
    meta["R_true"] = truth->rank();
    write_factors(dir / "truth", *truth);
  }
  if (!generator_config.is_null()) meta["generator_config"] = generator_config;
  // meta.json goes last: its presence marks a complete dataset.
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

inline SlabDataset read_slab(const fs::path& dir) {
  const nlohmann::json meta = io::read_json(dir / "meta.json");
  SlabDataset out;
  Index I = 0, J = 0, K = 0;
  try {
    I = meta.at("I").get<Index>();
    J = meta.at("J").get<Index>();
    K = meta.at("K").get<Index>();
    out.seed = meta.value("seed", std::uint64_t{0});
    if (meta.contains("R_true")) out.R_true = meta.at("R_true").get<Index>();
    if (meta.contains("generator_config")) out.generator_config = meta.at("generator_config");
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  if (I < 1 || J < 1 || K < 1) throw IoError((dir / "meta.json").string() + ": dimensions must be positive");

  const auto v = io::read_f64_file(dir / "slices.bin", static_cast<std::size_t>(K * I * J));
  std::vector<Matrix> slices;
  slices.reserve(static_cast<std::size_t>(K));
  for (Index k = 0; k < K; ++k) slices.push_back(io::take_row_major(v, static_cast<std::size_t>(k * I * J), I, J));
  out.data = TensorSlices(std::move(slices));

  if (fs::exists(dir / "truth" / "A.bin")) {
    out.truth = read_factors(dir / "truth", I, J, K);
    if (out.R_true && *out.R_true != out.truth->rank())
      throw IoError(dir.string() + ": R_true disagrees with truth/A.bin");
  }
  return out;
}

}  // namespace tparafac2

#endif  // TPARAFAC2_SLAB_IO_HPP_
