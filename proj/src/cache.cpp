#include "navtoken/cache.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <shared_mutex>
#include <unordered_map>

#include "navtoken/binary_io.hpp"

namespace navtoken::cache {

namespace {

constexpr char kMagic[4] = {'N', 'F', 'C', '1'};
constexpr std::size_t kHeaderBytes = 12;

struct KeyHash {
  std::size_t operator()(const CacheKey& k) const noexcept {
    std::size_t h = std::hash<std::string>{}(k.episode);
    h ^= std::hash<long long>{}((static_cast<long long>(k.t) << 20) ^ k.camera) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
  }
};

struct IndexEntry {
  std::uint64_t offset = 0;  // start of the record
  std::uint32_t length = 0;  // whole record, CRC included
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::size_t record_length(std::size_t key_len, int channels) {
  return 2 + key_len + 4 + 2 + static_cast<std::size_t>(kTokensPerEntry) * channels * 4 + 4;
}

std::string errno_text() { return std::strerror(errno); }

void read_exact(int fd, std::uint8_t* dst, std::size_t len, std::uint64_t offset, const std::string& what) {
  std::size_t done = 0;
  while (done < len) {
    const auto n = ::pread(fd, dst + done, len - done, static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::IoError, "read failed on " + what + ": " + (n == 0 ? "unexpected EOF" : errno_text()));
    done += static_cast<std::size_t>(n);
  }
}

void write_exact(int fd, const std::uint8_t* src, std::size_t len, std::uint64_t offset, const std::string& what) {
  std::size_t done = 0;
  while (done < len) {
    const auto n = ::pwrite(fd, src + done, len - done, static_cast<off_t>(offset + done));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error(ErrorCode::IoError, "write failed on " + what + ": " + errno_text());
    done += static_cast<std::size_t>(n);
  }
}

class FileHandle {
 public:
  FileHandle() = default;
  explicit FileHandle(int fd) : fd_(fd) {}
  FileHandle(FileHandle&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  FileHandle& operator=(FileHandle&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~FileHandle() { reset(); }

  int get() const noexcept { return fd_; }

 private:
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

}  // namespace

CacheEntry::CacheEntry(int channels, std::vector<float> values) : channels_(channels), values_(std::move(values)) {
  if (channels_ <= 0) throw Error(ErrorCode::DimensionMismatch, "entry width must be positive");
  if (values_.size() != static_cast<std::size_t>(kTokensPerEntry) * channels_) {
    throw Error(ErrorCode::ShapeMismatch, "cache entries hold exactly 4 coarse tokens of width " +
                                              std::to_string(channels_) + "; got " + std::to_string(values_.size()) +
                                              " values");
  }
}

CacheEntry::CacheEntry(const organizer::FeatureMatrix& coarse) : CacheEntry(coarse.cols, coarse.values) {
  if (coarse.rows != kTokensPerEntry) {
    throw Error(ErrorCode::ShapeMismatch, "only coarse 4-token blocks are cacheable, got " + std::to_string(coarse.rows) + " tokens");
  }
}

organizer::FeatureMatrix CacheEntry::to_matrix() const {
  return organizer::FeatureMatrix(kTokensPerEntry, channels_, values_);
}

struct CacheStore::State {
  std::filesystem::path path;
  int channels = 0;
  FileHandle reader;
  FileHandle writer;
  std::mutex write_mutex;
  mutable std::shared_mutex index_mutex;
  std::unordered_map<CacheKey, IndexEntry, KeyHash> index;
  std::uint64_t end = kHeaderBytes;  // guarded by write_mutex
  std::size_t payload_bytes = 0;     // guarded by index_mutex
  std::map<std::string, std::size_t> per_episode;

  void scan();
};

void CacheStore::State::scan() {
  struct stat st{};
  if (::fstat(reader.get(), &st) != 0) throw Error(ErrorCode::IoError, "stat failed on " + path.string());
  const auto size = static_cast<std::uint64_t>(st.st_size);
  std::uint64_t pos = kHeaderBytes;
  std::vector<std::uint8_t> buf;
  const std::size_t fixed = record_length(0, channels);
  while (pos + 2 <= size) {
    std::uint8_t len_bytes[2];
    read_exact(reader.get(), len_bytes, 2, pos, path.string());
    const std::size_t key_len = binary::get_u16(len_bytes);
    const std::size_t rec_len = fixed + key_len;
    if (pos + rec_len > size) break;  // torn tail from an interrupted append
    buf.resize(rec_len);
    read_exact(reader.get(), buf.data(), rec_len, pos, path.string());
    CacheKey key;
    key.episode.assign(reinterpret_cast<const char*>(buf.data() + 2), key_len);
    key.t = static_cast<int>(binary::get_u32(buf.data() + 2 + key_len));
    key.camera = binary::get_u16(buf.data() + 6 + key_len);
    if (!index.count(key)) {
      ++per_episode[key.episode];
      payload_bytes += static_cast<std::size_t>(kTokensPerEntry) * channels * sizeof(float);
    }
    index[key] = {pos, static_cast<std::uint32_t>(rec_len)};
    pos += rec_len;
  }
  end = pos;
}

CacheStore::CacheStore(std::unique_ptr<State> state) : state_(std::move(state)) {}
CacheStore::CacheStore(CacheStore&&) noexcept = default;
CacheStore& CacheStore::operator=(CacheStore&&) noexcept = default;
CacheStore::~CacheStore() = default;

CacheStore CacheStore::create(const std::filesystem::path& path, int channels) {
  if (channels <= 0) throw Error(ErrorCode::DimensionMismatch, "channel count must be positive");
  FileHandle w(::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644));
  if (w.get() < 0) throw Error(ErrorCode::IoError, "cannot create " + path.string() + ": " + errno_text());
  std::vector<std::uint8_t> header(std::begin(kMagic), std::end(kMagic));
  binary::put_u32(header, kFormatVersion);
  binary::put_u32(header, static_cast<std::uint32_t>(channels));
  write_exact(w.get(), header.data(), header.size(), 0, path.string());
  w = FileHandle();
  return open(path, channels);
}

CacheStore CacheStore::open(const std::filesystem::path& path, std::optional<int> expected_channels) {
  auto st = std::make_unique<State>();
  st->path = path;
  st->reader = FileHandle(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (st->reader.get() < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string() + ": " + errno_text());
  std::uint8_t header[kHeaderBytes];
  try {
    read_exact(st->reader.get(), header, kHeaderBytes, 0, path.string());
  } catch (const Error&) {
    throw Error(ErrorCode::VersionMismatch, path.string() + " has a truncated header");
  }
  if (std::memcmp(header, kMagic, 4) != 0) throw Error(ErrorCode::VersionMismatch, path.string() + " is not an NFC1 store");
  const auto version = binary::get_u32(header + 4);
  if (version != kFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, "unsupported store version " + std::to_string(version));
  }
  st->channels = static_cast<int>(binary::get_u32(header + 8));
  if (st->channels <= 0 || st->channels > (1 << 20)) throw Error(ErrorCode::VersionMismatch, "implausible channel count");
  if (expected_channels && *expected_channels != st->channels) {
    throw Error(ErrorCode::DimensionMismatch, "store has C=" + std::to_string(st->channels) + ", expected " +
                                                  std::to_string(*expected_channels));
  }
  st->scan();
  st->writer = FileHandle(::open(path.c_str(), O_WRONLY | O_CLOEXEC));
  if (st->writer.get() < 0) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for append: " + errno_text());
  return CacheStore(std::move(st));
}

int CacheStore::channels() const noexcept { return state_->channels; }
const std::filesystem::path& CacheStore::path() const noexcept { return state_->path; }

void CacheStore::put(const CacheKey& key, const CacheEntry& entry) {
  auto& st = *state_;
  if (entry.channels() != st.channels) {
    throw Error(ErrorCode::DimensionMismatch, "entry width " + std::to_string(entry.channels()) + " in a C=" +
                                                  std::to_string(st.channels) + " store");
  }
  if (key.episode.size() > 0xFFFF) throw Error(ErrorCode::FieldOutOfRange, "episode id longer than 65535 bytes");
  if (key.t < 0 || key.camera < 0 || key.camera > 0xFFFF) throw Error(ErrorCode::FieldOutOfRange, "key t/camera out of range");

  std::vector<std::uint8_t> rec;
  rec.reserve(record_length(key.episode.size(), st.channels));
  binary::put_u16(rec, static_cast<std::uint16_t>(key.episode.size()));
  binary::put_bytes(rec, std::span(reinterpret_cast<const std::uint8_t*>(key.episode.data()), key.episode.size()));
  binary::put_u32(rec, static_cast<std::uint32_t>(key.t));
  binary::put_u16(rec, static_cast<std::uint16_t>(key.camera));
  binary::put_f32s(rec, entry.values());
  binary::put_u32(rec, crc_of(rec));

  std::lock_guard write_lock(st.write_mutex);
  if (contains(key)) throw Error(ErrorCode::DuplicateKey, key.episode + " t=" + std::to_string(key.t) + " cam=" + std::to_string(key.camera));
  const auto offset = st.end;
  write_exact(st.writer.get(), rec.data(), rec.size(), offset, st.path.string());
  st.end += rec.size();
  std::unique_lock index_lock(st.index_mutex);
  st.index.emplace(key, IndexEntry{offset, static_cast<std::uint32_t>(rec.size())});
  ++st.per_episode[key.episode];
  st.payload_bytes += entry.values().size_bytes();
}

CacheEntry CacheStore::get(const CacheKey& key) const {
  const auto& st = *state_;
  IndexEntry where;
  {
    std::shared_lock lock(st.index_mutex);
    const auto it = st.index.find(key);
    if (it == st.index.end()) {
      throw Error(ErrorCode::NotFound, key.episode + " t=" + std::to_string(key.t) + " cam=" + std::to_string(key.camera));
    }
    where = it->second;
  }
  std::vector<std::uint8_t> rec(where.length);
  read_exact(st.reader.get(), rec.data(), rec.size(), where.offset, st.path.string());
  const auto body = std::span<const std::uint8_t>(rec).first(rec.size() - 4);
  if (crc_of(body) != binary::get_u32(rec.data() + rec.size() - 4)) {
    throw Error(ErrorCode::ChecksumFailure, "record for " + key.episode + " t=" + std::to_string(key.t) + " cam=" +
                                                std::to_string(key.camera) + " is corrupt");
  }
  const std::size_t payload_at = 2 + key.episode.size() + 4 + 2;
  const std::size_t count = static_cast<std::size_t>(kTokensPerEntry) * st.channels;
  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = binary::get_f32(rec.data() + payload_at + 4 * i);
  return CacheEntry(st.channels, std::move(values));
}

bool CacheStore::contains(const CacheKey& key) const {
  std::shared_lock lock(state_->index_mutex);
  return state_->index.count(key) != 0;
}

CacheStats CacheStore::stats() const {
  const auto& st = *state_;
  std::shared_lock lock(st.index_mutex);
  CacheStats s;
  s.entries = st.index.size();
  s.payload_bytes = st.payload_bytes;
  s.per_episode = st.per_episode;
  struct stat fs{};
  if (::fstat(st.reader.get(), &fs) == 0) s.file_bytes = static_cast<std::size_t>(fs.st_size);
  return s;
}

std::vector<CacheKey> CacheStore::keys() const {
  std::shared_lock lock(state_->index_mutex);
  std::vector<CacheKey> out;
  out.reserve(state_->index.size());
  for (const auto& [k, v] : state_->index) out.push_back(k);
  std::sort(out.begin(), out.end());
  return out;
}

void CacheStore::sync() {
  std::lock_guard lock(state_->write_mutex);
  if (::fdatasync(state_->writer.get()) != 0) throw Error(ErrorCode::IoError, "fdatasync failed: " + errno_text());
}

CachedFeatures::CachedFeatures(const CacheStore& store, std::string episode, const organizer::FeatureSource* fine_source)
    : store_(store), episode_(std::move(episode)), fine_source_(fine_source) {}

organizer::FeatureMatrix CachedFeatures::coarse(int t, int camera) const {
  try {
    return store_.get({episode_, t, camera}).to_matrix();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotFound) throw Error(ErrorCode::MissingFeature, e.what());
    throw;
  }
}

organizer::FeatureMatrix CachedFeatures::fine(int t, int camera) const {
  if (!fine_source_) {
    throw Error(ErrorCode::MissingFeature, "fine tokens are not cached (t=" + std::to_string(t) + " camera=" +
                                               std::to_string(camera) + ")");
  }
  return fine_source_->fine(t, camera);
}

}  // namespace navtoken::cache
