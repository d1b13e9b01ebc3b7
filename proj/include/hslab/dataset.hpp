#pragma once

// Labeled hidden-state matrices and the HSDS interchange format.
//
// HSDS layout, little-endian throughout:
//   "HSDS" | u8 version (1) | 3 zero bytes | u64 M | u64 d |
//   u32 L | L bytes UTF-8 JSON object of string values |
//   M x u8 labels | u8 has_pairs | [M x u32 pair ids] | M*d x f32, row-major

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hslab/error.hpp"
#include "hslab/matrix.hpp"
#include "hslab/random.hpp"

namespace hslab {

using Metadata = std::map<std::string, std::string>;
using IndexSet = std::vector<std::size_t>;

/// One layer's hidden states: M rows of d activations, a 0/1 label per row
/// (1 = regret) and optional pair ids linking rows from the same question.
struct LabeledMatrix {
  Matrix<float> data;
  std::vector<std::uint8_t> labels;
  std::optional<std::vector<std::uint32_t>> pair_ids;
  Metadata meta;

  std::size_t rows() const noexcept { return data.rows(); }
  std::size_t dims() const noexcept { return data.cols(); }

  std::size_t count(std::uint8_t label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }

  /// Bitwise equality of activations (distinguishes -0.0 from 0.0).
  friend bool operator==(const LabeledMatrix& a, const LabeledMatrix& b) {
    if (a.data.rows() != b.data.rows() || a.data.cols() != b.data.cols()) return false;
    const auto va = a.data.values();
    const auto vb = b.data.values();
    return std::memcmp(va.data(), vb.data(), va.size_bytes()) == 0 && a.labels == b.labels &&
           a.pair_ids == b.pair_ids && a.meta == b.meta;
  }
};

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool balanced = true;
};

/// Row i of each matrix comes from the same pair id.
struct PairedActivations {
  Matrix<float> z_regret;
  Matrix<float> z_non_regret;
  std::vector<std::uint32_t> pair_ids;
  std::size_t unmatched_pairs = 0;  // ids owning only one label
  std::size_t duplicate_rows = 0;   // extra same-label rows ignored
};

/// Checks the LabeledMatrix invariants; throws on the first violation.
inline void validate(const LabeledMatrix& m) {
  require(m.rows() >= 1 && m.dims() >= 1, ErrorCode::ShapeMismatch, "matrix must be at least 1x1");
  require(m.labels.size() == m.rows(), ErrorCode::ShapeMismatch, "labels length differs from row count");
  if (m.pair_ids)
    require(m.pair_ids->size() == m.rows(), ErrorCode::ShapeMismatch,
            "pair_ids length differs from row count");
  for (std::size_t i = 0; i < m.labels.size(); ++i)
    require(m.labels[i] <= 1, ErrorCode::LabelOutOfRange,
            "row " + std::to_string(i) + " has label " + std::to_string(m.labels[i]));
  const auto values = m.data.values();
  for (std::size_t i = 0; i < values.size(); ++i)
    require(std::isfinite(values[i]), ErrorCode::NonFiniteValue,
            "non-finite activation at row " + std::to_string(i / m.dims()) + ", column " +
                std::to_string(i % m.dims()));
}

/// Copy of the listed rows, in the listed order.
inline LabeledMatrix select_rows(const LabeledMatrix& m, std::span<const std::size_t> rows) {
  LabeledMatrix out;
  out.data = Matrix<float>(rows.size(), m.dims());
  out.labels.reserve(rows.size());
  if (m.pair_ids) out.pair_ids.emplace().reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    require(r < m.rows(), ErrorCode::IndexOutOfRange, "row index " + std::to_string(r));
    std::ranges::copy(m.data.row(r), out.data.row(k).begin());
    out.labels.push_back(m.labels[r]);
    if (m.pair_ids) out.pair_ids->push_back((*m.pair_ids)[r]);
  }
  out.meta = m.meta;
  return out;
}

namespace detail {

constexpr char kHsdsMagic[4] = {'H', 'S', 'D', 'S'};
constexpr std::uint8_t kHsdsVersion = 1;

template <typename T>
using bits_t = std::conditional_t<sizeof(T) == 1, std::uint8_t,
               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>;

template <typename T>
void put_le(std::vector<char>& out, T value) {
  using U = bits_t<T>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  std::size_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      fail(ErrorCode::TruncatedFile, std::string("file ends while reading ") + what + " at byte offset " +
                                         std::to_string(pos_));
  }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    using U = bits_t<T>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits = static_cast<U>(bits | static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i)));
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::span<const char> take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoFailure, "write failed for " + path.string());
}

}  // namespace detail

/// Encodes a matrix as HSDS bytes. Metadata is emitted as compact JSON with
/// sorted keys, so encoding is a pure function of the value.
inline std::vector<char> encode_hsds(const LabeledMatrix& m) {
  validate(m);
  using detail::put_le;
  std::vector<char> out;
  const std::string meta = nlohmann::json(m.meta).dump();
  out.reserve(32 + meta.size() + m.rows() * 5 + m.data.size() * 4);
  out.insert(out.end(), std::begin(detail::kHsdsMagic), std::end(detail::kHsdsMagic));
  out.push_back(static_cast<char>(detail::kHsdsVersion));
  out.insert(out.end(), 3, '\0');
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.dims());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  for (auto label : m.labels) out.push_back(static_cast<char>(label));
  out.push_back(m.pair_ids ? 1 : 0);
  if (m.pair_ids)
    for (auto id : *m.pair_ids) put_le<std::uint32_t>(out, id);
  for (float v : m.data.values()) put_le<float>(out, v);
  return out;
}

inline LabeledMatrix decode_hsds(std::span<const char> bytes) {
  detail::ByteReader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(detail::kHsdsMagic)))
    fail(ErrorCode::MagicMismatch, "byte offset 0: expected \"HSDS\"");
  const auto version = in.get<std::uint8_t>("version");
  if (version != detail::kHsdsVersion)
    fail(ErrorCode::UnsupportedVersion, "byte offset 4: version " + std::to_string(version));
  in.take(3, "padding");

  const auto rows = in.get<std::uint64_t>("row count");
  const auto cols = in.get<std::uint64_t>("column count");
  if (rows == 0 || cols == 0) fail(ErrorCode::ShapeMismatch, "byte offset 8: empty matrix");

  const auto meta_len = in.get<std::uint32_t>("metadata length");
  const std::size_t meta_offset = in.offset();
  const auto meta_bytes = in.take(meta_len, "metadata");
  LabeledMatrix m;
  try {
    const auto json = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
    if (!json.is_object()) throw std::runtime_error("not an object");
    for (const auto& [key, value] : json.items()) {
      if (!value.is_string()) throw std::runtime_error("value of \"" + key + "\" is not a string");
      m.meta.emplace(key, value.get<std::string>());
    }
  } catch (const std::exception& e) {
    fail(ErrorCode::InvalidMetadata, "byte offset " + std::to_string(meta_offset) + ": " + e.what());
  }

  const std::size_t label_offset = in.offset();
  const auto labels = in.take(rows, "labels");
  m.labels.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto label = static_cast<std::uint8_t>(labels[i]);
    if (label > 1)
      fail(ErrorCode::LabelOutOfRange, "byte offset " + std::to_string(label_offset + i) + ": label " +
                                           std::to_string(label));
    m.labels[i] = label;
  }

  const std::size_t flag_offset = in.offset();
  const auto has_pairs = in.get<std::uint8_t>("has_pairs flag");
  if (has_pairs > 1)
    fail(ErrorCode::InvalidMetadata, "byte offset " + std::to_string(flag_offset) + ": has_pairs must be 0 or 1");
  if (has_pairs) {
    auto& ids = m.pair_ids.emplace(rows);
    for (auto& id : ids) id = in.get<std::uint32_t>("pair ids");
  }

  // Division form so corrupt headers cannot overflow rows * cols * 4.
  if (cols > (bytes.size() - in.offset()) / 4 / rows)
    fail(ErrorCode::TruncatedFile, "file ends while reading activations at byte offset " + std::to_string(in.offset()));
  std::vector<float> values(rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t offset = in.offset();
    values[i] = in.get<float>("activations");
    if (!std::isfinite(values[i]))
      fail(ErrorCode::NonFiniteValue, "byte offset " + std::to_string(offset) + " (row " +
                                          std::to_string(i / cols) + ", column " + std::to_string(i % cols) + ")");
  }
  if (in.offset() != bytes.size())
    fail(ErrorCode::InvalidMetadata, "byte offset " + std::to_string(in.offset()) + ": trailing bytes");
  m.data = Matrix<float>(rows, cols, std::move(values));
  return m;
}

inline LabeledMatrix read_hsds(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_hsds(bytes);
  } catch (const Error& e) {
    throw e.annotated(path.string());
  }
}

inline void write_hsds(const LabeledMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_hsds(m));
}

/// Layer index stored under the "layer" metadata key.
inline std::optional<long long> layer_index(const LabeledMatrix& m) {
  const auto it = m.meta.find("layer");
  if (it == m.meta.end()) return std::nullopt;
  try {
    std::size_t used = 0;
    const long long value = std::stoll(it->second, &used);
    if (used != it->second.size()) return std::nullopt;
    return value;
  } catch (...) {
    return std::nullopt;
  }
}

/// Train/test partition. Balanced mode shuffles each class with the seeded
/// stream and sends floor(train_fraction * n_c) rows of class c to train.
/// Both outputs keep the original row order.
inline std::pair<LabeledMatrix, LabeledMatrix> split(const LabeledMatrix& m, const SplitSpec& spec) {
  require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0, ErrorCode::InvalidArgument,
          "train_fraction must lie strictly between 0 and 1");
  Rng rng(spec.seed);
  std::vector<bool> in_train(m.rows(), false);
  if (spec.balanced) {
    for (std::uint8_t label : {std::uint8_t{0}, std::uint8_t{1}}) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < m.rows(); ++i)
        if (m.labels[i] == label) rows.push_back(i);
      require(rows.size() >= 2, ErrorCode::ClassTooSmall,
              "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                  " rows; balanced split needs at least 2");
      rng.shuffle(std::span(rows));
      const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(rows.size())));
      for (std::size_t k = 0; k < n_train; ++k) in_train[rows[k]] = true;
    }
  } else {
    std::vector<std::size_t> rows(m.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    rng.shuffle(std::span(rows));
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(rows.size())));
    for (std::size_t k = 0; k < n_train; ++k) in_train[rows[k]] = true;
  }
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < m.rows(); ++i) (in_train[i] ? train_rows : test_rows).push_back(i);
  return {select_rows(m, train_rows), select_rows(m, test_rows)};
}

/// Matches, per pair id, the first label-1 row with the first label-0 row.
/// Output is ordered by the position of each id's first row in the file.
inline PairedActivations pair_by_id(const LabeledMatrix& m) {
  if (!m.pair_ids) fail(ErrorCode::MissingPairIds, "matrix carries no pair ids");
  const auto& ids = *m.pair_ids;

  struct Slots {
    std::optional<std::size_t> regret, non_regret;
    std::size_t first_row = 0;
  };
  std::unordered_map<std::uint32_t, Slots> by_id;
  std::vector<std::uint32_t> order;
  std::size_t duplicates = 0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto [it, inserted] = by_id.try_emplace(ids[i]);
    if (inserted) {
      it->second.first_row = i;
      order.push_back(ids[i]);
    }
    auto& slot = m.labels[i] == 1 ? it->second.regret : it->second.non_regret;
    if (slot)
      ++duplicates;
    else
      slot = i;
  }

  PairedActivations out;
  out.duplicate_rows = duplicates;
  std::vector<std::pair<std::size_t, std::size_t>> matched;
  for (auto id : order) {
    const auto& s = by_id.at(id);
    if (s.regret && s.non_regret) {
      matched.emplace_back(*s.regret, *s.non_regret);
      out.pair_ids.push_back(id);
    } else {
      ++out.unmatched_pairs;
    }
  }
  if (matched.empty()) fail(ErrorCode::NoPairs, "no pair id owns both a regret and a non-regret row");

  out.z_regret = Matrix<float>(matched.size(), m.dims());
  out.z_non_regret = Matrix<float>(matched.size(), m.dims());
  for (std::size_t k = 0; k < matched.size(); ++k) {
    std::ranges::copy(m.data.row(matched[k].first), out.z_regret.row(k).begin());
    std::ranges::copy(m.data.row(matched[k].second), out.z_non_regret.row(k).begin());
  }
  return out;
}

}  // namespace hslab
