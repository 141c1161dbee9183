#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "navtoken/error.hpp"
#include "navtoken/organizer.hpp"

// Persistent store of coarse (4-token) visual features keyed by
// (episode, timestep, camera).
//
// File layout, little-endian:
//   header  "NFC1" | u32 version | u32 C
//   record  u16 key_len | key bytes | u32 t | u16 camera | f32[4 * C] payload | u32 crc32
// The CRC covers every record byte before it. Records are only ever appended;
// the index is rebuilt by scanning the log on open.
namespace navtoken::cache {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr int kTokensPerEntry = organizer::kCoarseTarget;

struct CacheKey {
  std::string episode;
  int t = 0;
  int camera = 0;

  friend bool operator==(const CacheKey&, const CacheKey&) = default;
  friend auto operator<=>(const CacheKey&, const CacheKey&) = default;
};

// Exactly four coarse tokens of width C. Anything else (fine 64-token blocks
// included) is rejected at construction.
class CacheEntry {
 public:
  CacheEntry(int channels, std::vector<float> values);
  explicit CacheEntry(const organizer::FeatureMatrix& coarse);

  int channels() const noexcept { return channels_; }
  std::span<const float> values() const noexcept { return values_; }
  organizer::FeatureMatrix to_matrix() const;

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;

 private:
  int channels_;
  std::vector<float> values_;
};

struct CacheStats {
  std::size_t entries = 0;
  std::size_t payload_bytes = 0;
  std::size_t file_bytes = 0;
  std::map<std::string, std::size_t> per_episode;
};

// Single writer, many concurrent readers. get() and stats() may run on any
// thread while put() appends; file I/O happens outside the index lock.
class CacheStore {
 public:
  static CacheStore create(const std::filesystem::path& path, int channels);
  static CacheStore open(const std::filesystem::path& path, std::optional<int> expected_channels = std::nullopt);

  CacheStore(CacheStore&&) noexcept;
  CacheStore& operator=(CacheStore&&) noexcept;
  ~CacheStore();

  int channels() const noexcept;
  const std::filesystem::path& path() const noexcept;

  void put(const CacheKey& key, const CacheEntry& entry);
  CacheEntry get(const CacheKey& key) const;
  bool contains(const CacheKey& key) const;
  CacheStats stats() const;
  std::vector<CacheKey> keys() const;
  void sync();

 private:
  struct State;
  explicit CacheStore(std::unique_ptr<State> state);
  std::unique_ptr<State> state_;
};

// Serves coarse tokens for one episode out of a store; fine tokens are never
// cached, so fine() delegates to `fine_source` (or throws MissingFeature).
class CachedFeatures : public organizer::FeatureSource {
 public:
  CachedFeatures(const CacheStore& store, std::string episode, const organizer::FeatureSource* fine_source = nullptr);

  organizer::FeatureMatrix coarse(int t, int camera) const override;
  organizer::FeatureMatrix fine(int t, int camera) const override;

 private:
  const CacheStore& store_;
  std::string episode_;
  const organizer::FeatureSource* fine_source_;
};

}  // namespace navtoken::cache
