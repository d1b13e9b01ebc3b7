#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <set>

#include "hslab/dataset.hpp"
#include "hslab/parallel.hpp"
#include "hslab/random.hpp"
#include "oracles.hpp"

using namespace hslab;

namespace {

std::vector<char> bytes_of(std::initializer_list<int> v) {
  std::vector<char> out;
  for (int b : v) out.push_back(static_cast<char>(b));
  return out;
}

void append(std::vector<char>& out, const std::vector<char>& more) { out.insert(out.end(), more.begin(), more.end()); }

/// Hand-assembled minimal file: M=1, d=1, meta "{}", label 1, no pairs, 0.5f.
std::vector<char> minimal_file() {
  auto f = bytes_of({'H', 'S', 'D', 'S', 1, 0, 0, 0});
  append(f, bytes_of({1, 0, 0, 0, 0, 0, 0, 0}));  // M
  append(f, bytes_of({1, 0, 0, 0, 0, 0, 0, 0}));  // d
  append(f, bytes_of({2, 0, 0, 0, '{', '}'}));    // metadata
  append(f, bytes_of({1}));                       // label
  append(f, bytes_of({0}));                       // has_pairs
  append(f, bytes_of({0x00, 0x00, 0x00, 0x3f}));  // 0.5f little-endian
  return f;
}

ErrorCode decode_error(std::span<const char> bytes) {
  try {
    decode_hsds(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorCode::InvalidArgument;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("hslab_test_" + name);
}

}  // namespace

// ============================================================================
// HSDS format
// ============================================================================

TEST(Hsds, MinimalFileDecodes) {
  const auto m = decode_hsds(minimal_file());
  ASSERT_EQ(m.rows(), 1u);
  ASSERT_EQ(m.dims(), 1u);
  EXPECT_EQ(m.labels, std::vector<std::uint8_t>{1});
  EXPECT_EQ(m.data(0, 0), 0.5f);
  EXPECT_FALSE(m.pair_ids.has_value());
  EXPECT_TRUE(m.meta.empty());
}

TEST(Hsds, MinimalFileEncodesToExactBytes) {
  LabeledMatrix m;
  m.data = Matrix<float>(1, 1, {0.5f});
  m.labels = {1};
  EXPECT_EQ(encode_hsds(m), minimal_file());
  // header 8 + 16 + 4 + 2 meta, 1 label, 1 flag, 4 payload
  EXPECT_EQ(encode_hsds(m).size(), 36u);
}

TEST(Hsds, PairIdsSetFlag) {
  LabeledMatrix m;
  m.data = Matrix<float>(2, 1, {1.f, 2.f});
  m.labels = {1, 0};
  m.pair_ids = std::vector<std::uint32_t>{7, 7};
  const auto bytes = encode_hsds(m);
  EXPECT_EQ(bytes[32], 1);  // flag follows 30-byte header and 2 labels
  EXPECT_EQ(bytes.size(), 30u + 2 + 1 + 8 + 8);
  EXPECT_EQ(decode_hsds(bytes), m);
}

TEST(Hsds, LabelTwoIsRejected) {
  auto f = minimal_file();
  f[30] = 2;
  EXPECT_EQ(decode_error(f), ErrorCode::LabelOutOfRange);
}

TEST(Hsds, BadMagicAndVersion) {
  auto f = minimal_file();
  f[0] = 'X';
  EXPECT_EQ(decode_error(f), ErrorCode::MagicMismatch);
  f = minimal_file();
  f[4] = 2;
  EXPECT_EQ(decode_error(f), ErrorCode::UnsupportedVersion);
}

TEST(Hsds, EveryTruncationIsDetected) {
  const auto f = minimal_file();
  for (std::size_t n = 0; n < f.size(); ++n) {
    const auto code = decode_error(std::span(f.data(), n));
    EXPECT_TRUE(code == ErrorCode::TruncatedFile) << "prefix " << n << " gave " << error_name(code);
  }
}

TEST(Hsds, TruncationMessageNamesOffset) {
  const auto f = minimal_file();
  try {
    decode_hsds(std::span(f.data(), 33));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(e.message().find("byte offset 32"), std::string::npos) << e.message();
  }
}

TEST(Hsds, NonFiniteValueNamesOffset) {
  auto f = minimal_file();
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(f.data() + 32, &nan, 4);
  try {
    decode_hsds(f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteValue);
    EXPECT_NE(e.message().find("byte offset 32"), std::string::npos) << e.message();
  }
}

TEST(Hsds, TrailingBytesAndBadMetadata) {
  auto f = minimal_file();
  f.push_back(0);
  EXPECT_EQ(decode_error(f), ErrorCode::InvalidMetadata);
  f = minimal_file();
  f[28] = '[';
  f[29] = ']';
  EXPECT_EQ(decode_error(f), ErrorCode::InvalidMetadata);
}

TEST(Hsds, HugeDimensionsDoNotOverflow) {
  auto f = minimal_file();
  for (int i = 16; i < 24; ++i) f[static_cast<std::size_t>(i)] = static_cast<char>(0xff);
  EXPECT_EQ(decode_error(f), ErrorCode::TruncatedFile);
}

TEST(Hsds, EncodeRejectsInvalidMatrix) {
  LabeledMatrix m;
  m.data = Matrix<float>(1, 1, {std::numeric_limits<float>::infinity()});
  m.labels = {0};
  EXPECT_THROW(encode_hsds(m), Error);
  m.data = Matrix<float>(1, 1, {0.f});
  m.labels = {3};
  EXPECT_THROW(encode_hsds(m), Error);
}

TEST(Hsds, RandomRoundTripThroughFiles) {
  std::mt19937_64 gen(11);
  const auto path = temp_path("roundtrip.hsds");
  for (int trial = 0; trial < 20; ++trial) {
    auto m = oracle::random_matrix(gen, 100, 16, trial % 2 == 0);
    m.meta = {{"layer", std::to_string(trial)}, {"model", "t\"est"}};
    write_hsds(m, path);
    const auto back = read_hsds(path);
    EXPECT_EQ(back, m);
    EXPECT_EQ(encode_hsds(back), encode_hsds(m));
  }
  std::filesystem::remove(path);
}

TEST(Hsds, NegativeZeroSurvives) {
  LabeledMatrix m;
  m.data = Matrix<float>(1, 2, {-0.0f, 0.0f});
  m.labels = {0};
  const auto back = decode_hsds(encode_hsds(m));
  EXPECT_TRUE(std::signbit(back.data(0, 0)));
  EXPECT_FALSE(std::signbit(back.data(0, 1)));
}

TEST(Hsds, ReadErrorsCarryPath) {
  const auto path = temp_path("bad.hsds");
  auto f = minimal_file();
  f[0] = 'Q';
  detail::write_file(path, f);
  try {
    read_hsds(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MagicMismatch);
    EXPECT_NE(e.message().find(path.string()), std::string::npos);
  }
  std::filesystem::remove(path);
  EXPECT_THROW(read_hsds(temp_path("does_not_exist.hsds")), Error);
}

TEST(Hsds, LayerIndexParsing) {
  LabeledMatrix m;
  EXPECT_FALSE(layer_index(m));
  m.meta["layer"] = "12";
  EXPECT_EQ(layer_index(m), 12);
  m.meta["layer"] = "12a";
  EXPECT_FALSE(layer_index(m));
}

// ============================================================================
// split
// ============================================================================

namespace {

LabeledMatrix labeled(std::size_t n0, std::size_t n1) {
  LabeledMatrix m;
  m.data = Matrix<float>(n0 + n1, 1);
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    m.data(i, 0) = static_cast<float>(i);
    m.labels.push_back(i < n0 ? 0 : 1);
  }
  return m;
}

}  // namespace

TEST(Split, TenRowsSeventyPercent) {
  const auto [train, test] = split(labeled(5, 5), SplitSpec{0.7, 3, true});
  EXPECT_EQ(train.count(0), 3u);
  EXPECT_EQ(train.count(1), 3u);
  EXPECT_EQ(test.count(0), 2u);
  EXPECT_EQ(test.count(1), 2u);
}

TEST(Split, FractionOutsideOpenIntervalRejected) {
  EXPECT_THROW(split(labeled(5, 5), SplitSpec{1.0, 0, true}), Error);
  EXPECT_THROW(split(labeled(5, 5), SplitSpec{0.0, 0, true}), Error);
}

TEST(Split, DisjointCoverAndDeterministic) {
  const auto m = labeled(37, 23);
  const auto a = split(m, SplitSpec{0.7, 99, true});
  const auto b = split(m, SplitSpec{0.7, 99, true});
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  std::multiset<float> seen;
  for (const auto* part : {&a.first, &a.second})
    for (std::size_t i = 0; i < part->rows(); ++i) seen.insert(part->data(i, 0));
  ASSERT_EQ(seen.size(), 60u);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(seen.count(static_cast<float>(i)), 1u);
  EXPECT_EQ(a.first.count(0), 25u);  // floor(0.7 * 37)
  EXPECT_EQ(a.first.count(1), 16u);  // floor(0.7 * 23)
  const auto c = split(m, SplitSpec{0.7, 100, true});
  EXPECT_FALSE(c.first == a.first);
}

TEST(Split, ClassTooSmall) {
  try {
    split(labeled(1, 5), SplitSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ClassTooSmall);
  }
}

TEST(Split, UnbalancedModeUsesGlobalFloor) {
  const auto [train, test] = split(labeled(3, 7), SplitSpec{0.5, 1, false});
  EXPECT_EQ(train.rows(), 5u);
  EXPECT_EQ(test.rows(), 5u);
}

// ============================================================================
// pair_by_id
// ============================================================================

TEST(Pairing, SinglePair) {
  LabeledMatrix m;
  m.data = Matrix<float>(2, 2, {1, 2, 3, 4});
  m.labels = {1, 0};
  m.pair_ids = std::vector<std::uint32_t>{1, 1};
  const auto pa = pair_by_id(m);
  ASSERT_EQ(pa.z_regret.rows(), 1u);
  EXPECT_EQ(pa.z_regret(0, 1), 2.f);
  EXPECT_EQ(pa.z_non_regret(0, 0), 3.f);
}

TEST(Pairing, Errors) {
  LabeledMatrix m;
  m.data = Matrix<float>(2, 1, {1, 2});
  m.labels = {1, 1};
  try {
    pair_by_id(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPairIds);
  }
  m.pair_ids = std::vector<std::uint32_t>{0, 1};
  try {
    pair_by_id(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoPairs);
  }
}

TEST(Pairing, MatchesBruteForceOnShuffledPairs) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    // 50 complete pairs, some duplicated rows and some orphans, shuffled
    LabeledMatrix m;
    std::vector<std::pair<std::uint32_t, std::uint8_t>> rows;
    for (std::uint32_t id = 0; id < 50; ++id) {
      rows.emplace_back(id, 1);
      rows.emplace_back(id, 0);
    }
    for (std::uint32_t id = 0; id < 10; ++id) rows.emplace_back(100 + id, static_cast<std::uint8_t>(id % 2));
    for (std::uint32_t id = 0; id < 10; ++id) rows.emplace_back(id * 3, static_cast<std::uint8_t>(id % 2));
    std::shuffle(rows.begin(), rows.end(), gen);
    m.data = Matrix<float>(rows.size(), 3);
    std::normal_distribution<float> normal;
    for (auto& v : m.data.values()) v = normal(gen);
    auto& ids = m.pair_ids.emplace();
    for (const auto& [id, label] : rows) {
      ids.push_back(id);
      m.labels.push_back(label);
    }

    const auto pa = pair_by_id(m);
    const auto expected = oracle::pairs(m);
    ASSERT_EQ(pa.z_regret.rows(), expected.size());
    EXPECT_EQ(expected.size(), 50u);
    EXPECT_EQ(pa.unmatched_pairs, 10u);
    EXPECT_EQ(pa.duplicate_rows, 10u);
    for (std::size_t i = 0; i < expected.size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(pa.z_regret(i, k), m.data(expected[i].first, k));
        EXPECT_EQ(pa.z_non_regret(i, k), m.data(expected[i].second, k));
      }
      EXPECT_EQ(pa.pair_ids[i], ids[expected[i].first]);
    }
  }
}

// ============================================================================
// Random streams and parallel_for
// ============================================================================

TEST(Random, SeedDerivationSeparatesStages) {
  EXPECT_EQ(derive_seed(1, "probe"), derive_seed(1, "probe"));
  EXPECT_NE(derive_seed(1, "probe"), derive_seed(1, "split"));
  EXPECT_NE(derive_seed(1, "probe"), derive_seed(2, "probe"));
  EXPECT_NE(derive_seed(1, std::uint64_t{0}), derive_seed(1, std::uint64_t{1}));
}

TEST(Random, SampleWithoutReplacementIsDistinct) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto s = rng.sample_without_replacement(30, 12);
    EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 12u);
    for (auto v : s) EXPECT_LT(v, 30u);
  }
}

TEST(Random, NormalMoments) {
  Rng rng(8);
  double s = 0, ss = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    ss += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(ss / n, 1.0, 0.02);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  std::vector<double> a(1000), b(1000);
  auto work = [](std::vector<double>& out) {
    parallel_for(out.size(), [&](std::size_t i) { out[i] = std::sqrt(static_cast<double>(i)); });
  };
  setenv("HSLAB_THREADS", "1", 1);
  work(a);
  setenv("HSLAB_THREADS", "7", 1);
  work(b);
  unsetenv("HSLAB_THREADS");
  EXPECT_EQ(a, b);
}

TEST(Parallel, LowestIndexExceptionWins) {
  setenv("HSLAB_THREADS", "4", 1);
  try {
    parallel_for(100, [](std::size_t i) {
      if (i == 17 || i == 80) fail(ErrorCode::InvalidArgument, "item " + std::to_string(i));
    });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.message(), "item 17");
  }
  unsetenv("HSLAB_THREADS");
}
