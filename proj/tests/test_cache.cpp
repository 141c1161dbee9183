#include <gtest/gtest.h>

#include <atomic>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "navtoken/cache.hpp"
#include "navtoken/random.hpp"

using namespace navtoken;
using namespace navtoken::cache;
namespace fs = std::filesystem;

namespace {

class CacheTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("navtoken_cache_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path file(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

CacheEntry entry_for(const CacheKey& key, int channels) {
  DeterministicRng rng(mix_seed(std::hash<std::string>{}(key.episode), key.t * 131 + key.camera));
  std::vector<float> v(4 * static_cast<std::size_t>(channels));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-10, 10));
  return CacheEntry(channels, std::move(v));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCode::ConfigError;
}

}  // namespace

TEST_F(CacheTest, CreateAndReopen) {
  const auto path = file("a.nfc");
  { auto s = CacheStore::create(path, 64); EXPECT_EQ(s.channels(), 64); }
  EXPECT_EQ(code_of([&] { CacheStore::create(path, 64); }), ErrorCode::IoError);
  EXPECT_EQ(CacheStore::open(path).channels(), 64);
  EXPECT_EQ(CacheStore::open(path, 64).stats().entries, 0u);
  EXPECT_EQ(code_of([&] { CacheStore::open(path, 32); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { CacheStore::open(file("missing.nfc")); }), ErrorCode::IoError);
}

TEST_F(CacheTest, CorruptHeader) {
  const auto path = file("bad.nfc");
  { std::ofstream(path, std::ios::binary) << "NFC2\x01\0\0\0"; }
  EXPECT_EQ(code_of([&] { CacheStore::open(path); }), ErrorCode::VersionMismatch);
  { std::ofstream(path, std::ios::binary) << "NF"; }
  EXPECT_EQ(code_of([&] { CacheStore::open(path); }), ErrorCode::VersionMismatch);
}

TEST_F(CacheTest, RoundTripIsBitExactAcrossReopen) {
  const auto path = file("rt.nfc");
  std::vector<CacheKey> keys;
  {
    auto s = CacheStore::create(path, 64);
    for (const std::string ep : {"ep-a", "ep-b"}) {
      for (int t = 1; t <= 10; ++t) {
        for (int cam = 0; cam < 4; ++cam) {
          keys.push_back({ep, t, cam});
          s.put(keys.back(), entry_for(keys.back(), 64));
        }
      }
    }
    for (const auto& k : keys) EXPECT_EQ(s.get(k), entry_for(k, 64));
    s.sync();
  }
  const auto s = CacheStore::open(path, 64);
  for (const auto& k : keys) {
    const auto got = s.get(k);
    const auto want = entry_for(k, 64);
    ASSERT_EQ(got.values().size(), want.values().size());
    EXPECT_EQ(std::memcmp(got.values().data(), want.values().data(), want.values().size() * sizeof(float)), 0);
  }
  auto sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(s.keys(), sorted);
  EXPECT_EQ(code_of([&] { s.get({"ep-a", 11, 0}); }), ErrorCode::NotFound);
  EXPECT_FALSE(s.contains({"ep-c", 1, 0}));
}

TEST_F(CacheTest, FlippedPayloadByteDetected) {
  const auto path = file("flip.nfc");
  const CacheKey key{"ep", 3, 1};
  {
    auto s = CacheStore::create(path, 8);
    s.put(key, entry_for(key, 8));
  }
  // Header 12 bytes, then u16 key_len, 2 key bytes, u32 t, u16 camera.
  const std::streamoff payload = 12 + 2 + 2 + 4 + 2;
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(payload + 5);
    char c = 0;
    f.get(c);
    f.seekp(payload + 5);
    f.put(static_cast<char>(c ^ 0x10));
  }
  const auto s = CacheStore::open(path);
  EXPECT_EQ(code_of([&] { s.get(key); }), ErrorCode::ChecksumFailure);
}

TEST_F(CacheTest, TornTailIgnored) {
  const auto path = file("torn.nfc");
  {
    auto s = CacheStore::create(path, 4);
    s.put({"e", 1, 0}, entry_for({"e", 1, 0}, 4));
    s.put({"e", 2, 0}, entry_for({"e", 2, 0}, 4));
  }
  fs::resize_file(path, fs::file_size(path) - 3);
  auto s = CacheStore::open(path);
  EXPECT_TRUE(s.contains({"e", 1, 0}));
  EXPECT_FALSE(s.contains({"e", 2, 0}));
}

TEST_F(CacheTest, Stats) {
  auto s = CacheStore::create(file("stats.nfc"), 64);
  const auto empty = s.stats();
  EXPECT_EQ(empty.entries, 0u);
  EXPECT_EQ(empty.payload_bytes, 0u);
  EXPECT_TRUE(empty.per_episode.empty());
  EXPECT_EQ(empty.file_bytes, 12u);
  const int n = 37;
  for (int i = 0; i < n; ++i) {
    const CacheKey k{i % 3 == 0 ? "x" : "yy", i, 0};
    s.put(k, entry_for(k, 64));
  }
  const auto st = s.stats();
  EXPECT_EQ(st.entries, static_cast<std::size_t>(n));
  EXPECT_EQ(st.payload_bytes, static_cast<std::size_t>(n) * 4 * 64 * 4);
  std::size_t sum = 0;
  for (const auto& [ep, count] : st.per_episode) sum += count;
  EXPECT_EQ(sum, st.entries);
  EXPECT_EQ(st.per_episode.at("x"), 13u);
  EXPECT_EQ(st.file_bytes, fs::file_size(file("stats.nfc")));
}

TEST_F(CacheTest, Rejections) {
  auto s = CacheStore::create(file("rej.nfc"), 16);
  const CacheKey k{"ep", 1, 0};
  s.put(k, entry_for(k, 16));
  EXPECT_EQ(code_of([&] { s.put(k, entry_for(k, 16)); }), ErrorCode::DuplicateKey);
  EXPECT_EQ(code_of([&] { s.put({"ep", 2, 0}, entry_for(k, 8)); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { CacheEntry(organizer::FeatureMatrix(64, 16)); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { CacheEntry(0, {}); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(s.get(k), entry_for(k, 16));
}

TEST_F(CacheTest, CachedFeaturesServesCoarseOnly) {
  auto s = CacheStore::create(file("cf.nfc"), 8);
  s.put({"ep", 1, 0}, entry_for({"ep", 1, 0}, 8));
  CachedFeatures f(s, "ep");
  EXPECT_EQ(f.coarse(1, 0), entry_for({"ep", 1, 0}, 8).to_matrix());
  EXPECT_EQ(code_of([&] { f.coarse(2, 0); }), ErrorCode::MissingFeature);
  EXPECT_EQ(code_of([&] { f.fine(1, 0); }), ErrorCode::MissingFeature);
}

TEST_F(CacheTest, ConcurrentReadersAndWriter) {
  auto s = CacheStore::create(file("stress.nfc"), 16);
  constexpr int kEntries = 10000;
  const auto key_of = [](int i) { return CacheKey{"ep" + std::to_string(i % 50), i / 50 + 1, i % 4}; };
  std::atomic<int> published{0};
  std::atomic<bool> failed{false};
  std::atomic<long> reads{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 4; ++r) {
    readers.emplace_back([&, r] {
      DeterministicRng rng(r);
      while (true) {
        const int upto = published.load(std::memory_order_acquire);
        if (upto > 0) {
          const int i = static_cast<int>(rng.uniform(0, upto)) % upto;
          const auto k = key_of(i);
          try {
            if (!(s.get(k) == entry_for(k, 16))) failed = true;
          } catch (const Error&) {
            failed = true;
          }
          ++reads;
        }
        if (upto == kEntries) break;
      }
    });
  }
  for (int i = 0; i < kEntries; ++i) {
    s.put(key_of(i), entry_for(key_of(i), 16));
    published.store(i + 1, std::memory_order_release);
  }
  for (auto& t : readers) t.join();
  EXPECT_FALSE(failed.load());
  EXPECT_GT(reads.load(), 0);
  EXPECT_EQ(s.stats().entries, static_cast<std::size_t>(kEntries));
  for (int i = 0; i < kEntries; i += 97) EXPECT_EQ(s.get(key_of(i)), entry_for(key_of(i), 16));
}
