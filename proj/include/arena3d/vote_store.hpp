#pragma once

// Append-only vote log.
//
// One JSON object per line with keys in alphabetical order and a "kind"
// field (model, prompt, asset, vote, flag). A cleanly closed file ends with a
// trailer line "#fnv1a64 <16 hex digits>\n" holding the FNV-1a 64-bit hash of
// every byte before it. The byte-level layout is documented in
// docs/log-format.md.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "arena3d/domain.hpp"
#include "arena3d/error.hpp"
#include "arena3d/time.hpp"
#include "json.hpp"

namespace arena3d {

using Json = nlohmann::json;

using Record = std::variant<ModelEntry, PromptEntry, AssetEntry, VoteRecord, FlagRecord>;

// ---------------------------------------------------------------------------
// Checksums

class Fnv1a64 {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a64_hex(std::string_view bytes) {
  Fnv1a64 h;
  h.update(bytes);
  return h.hex();
}

inline constexpr std::string_view kTrailerPrefix = "#fnv1a64 ";

inline std::string trailer_line(const Fnv1a64& hash) {
  return std::string(kTrailerPrefix) + hash.hex() + "\n";
}

// ---------------------------------------------------------------------------
// Record encoding

namespace detail {

template <typename T>
T required(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::parse_error, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::parse_error, std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> optional_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorCode::parse_error, std::string("field '") + key + "' has the wrong type");
  }
}

inline Timestamp required_time(const Json& j, const char* key) {
  auto t = parse_iso8601(required<std::string>(j, key));
  if (!t) throw Error(ErrorCode::parse_error, std::string("field '") + key + "' is not an ISO-8601 UTC timestamp");
  return *t;
}

template <typename E, typename Parse>
E required_enum(const Json& j, const char* key, Parse parse) {
  auto v = parse(required<std::string>(j, key));
  if (!v) throw Error(ErrorCode::parse_error, std::string("field '") + key + "' has an unknown value");
  return *v;
}

}  // namespace detail

inline Json to_json(const Record& record) {
  return std::visit(
      [](const auto& r) -> Json {
        using T = std::decay_t<decltype(r)>;
        Json j = Json::object();
        if constexpr (std::is_same_v<T, ModelEntry>) {
          j["kind"] = "model";
          j["model_id"] = r.model_id;
          j["display_name"] = r.display_name;
          j["format"] = to_string(r.format);
          j["textured"] = r.textured;
          j["anonymous"] = r.anonymous;
          if (r.source_url) j["source_url"] = *r.source_url;
          j["registered_at"] = to_iso8601(r.registered_at);
        } else if constexpr (std::is_same_v<T, PromptEntry>) {
          j["kind"] = "prompt";
          j["prompt_id"] = r.prompt_id;
          j["image_ref"] = r.image_ref;
          if (r.description) j["description"] = *r.description;
        } else if constexpr (std::is_same_v<T, AssetEntry>) {
          j["kind"] = "asset";
          j["asset_id"] = r.asset_id;
          j["model_id"] = r.model_id;
          j["prompt_id"] = r.prompt_id;
          j["format"] = to_string(r.format);
          j["polygon_count"] = r.polygon_count;
          j["file_ref"] = r.file_ref;
          j["textured"] = r.textured;
        } else if constexpr (std::is_same_v<T, VoteRecord>) {
          j["kind"] = "vote";
          j["vote_id"] = r.vote_id;
          j["user_id"] = r.user_id;
          j["prompt_id"] = r.prompt_id;
          j["model_a"] = r.model_a;
          j["model_b"] = r.model_b;
          j["winner"] = to_string(r.winner);
          j["left_slot"] = to_string(r.left_slot);
          j["mode"] = to_string(r.mode);
          j["cast_at"] = to_iso8601(r.cast_at);
        } else {
          j["kind"] = "flag";
          j["user_id"] = r.user_id;
          j["flagged"] = r.flagged;
          if (r.p_value) j["p_value"] = *r.p_value;
          j["at"] = to_iso8601(r.at);
        }
        return j;
      },
      record);
}

/// Canonical single-line encoding (no trailing newline).
inline std::string encode_line(const Record& record) { return to_json(record).dump(); }

inline Record record_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) throw Error(ErrorCode::parse_error, "record is not an object");
  const std::string kind = required<std::string>(j, "kind");
  if (kind == "model") {
    ModelEntry m;
    m.model_id = required<std::string>(j, "model_id");
    m.display_name = required<std::string>(j, "display_name");
    m.format = required_enum<Format>(j, "format", parse_format);
    m.textured = required<bool>(j, "textured");
    m.anonymous = required<bool>(j, "anonymous");
    m.source_url = optional_field<std::string>(j, "source_url");
    m.registered_at = required_time(j, "registered_at");
    return m;
  }
  if (kind == "prompt") {
    PromptEntry p;
    p.prompt_id = required<std::string>(j, "prompt_id");
    p.image_ref = required<std::string>(j, "image_ref");
    p.description = optional_field<std::string>(j, "description");
    return p;
  }
  if (kind == "asset") {
    AssetEntry a;
    a.asset_id = required<std::string>(j, "asset_id");
    a.model_id = required<std::string>(j, "model_id");
    a.prompt_id = required<std::string>(j, "prompt_id");
    a.format = required_enum<Format>(j, "format", parse_format);
    a.polygon_count = required<std::int64_t>(j, "polygon_count");
    a.file_ref = required<std::string>(j, "file_ref");
    a.textured = required<bool>(j, "textured");
    return a;
  }
  if (kind == "vote") {
    VoteRecord v;
    v.vote_id = required<std::string>(j, "vote_id");
    v.user_id = required<std::string>(j, "user_id");
    v.prompt_id = required<std::string>(j, "prompt_id");
    v.model_a = required<std::string>(j, "model_a");
    v.model_b = required<std::string>(j, "model_b");
    v.winner = required_enum<Slot>(j, "winner", parse_slot);
    v.left_slot = required_enum<Slot>(j, "left_slot", parse_slot);
    v.mode = required_enum<Mode>(j, "mode", parse_mode);
    v.cast_at = required_time(j, "cast_at");
    return v;
  }
  if (kind == "flag") {
    FlagRecord f;
    f.user_id = required<std::string>(j, "user_id");
    f.flagged = required<bool>(j, "flagged");
    f.p_value = optional_field<double>(j, "p_value");
    f.at = required_time(j, "at");
    return f;
  }
  throw Error(ErrorCode::unknown_kind, "unknown record kind '" + kind + "'");
}

inline Record decode_line(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
  return record_from_json(j);
}

// ---------------------------------------------------------------------------
// In-memory state

/// Everything a log replays into: the registry, the vote sequence and the
/// flag history.
class LogState {
 public:
  Registry registry;

  const std::vector<VoteRecord>& votes() const { return votes_; }
  const std::vector<FlagRecord>& flags() const { return flags_; }

  std::optional<std::string> check(const Record& record) const {
    return std::visit(
        [&](const auto& r) -> std::optional<std::string> {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, ModelEntry>) {
            return registry.check_model(r);
          } else if constexpr (std::is_same_v<T, PromptEntry>) {
            return registry.check_prompt(r);
          } else if constexpr (std::is_same_v<T, AssetEntry>) {
            return registry.check_asset(r);
          } else if constexpr (std::is_same_v<T, VoteRecord>) {
            if (r.vote_id.empty() || r.user_id.empty()) return "vote needs vote_id and user_id";
            if (vote_ids_.contains(r.vote_id)) return "duplicate vote_id '" + r.vote_id + "'";
            std::optional<Timestamp> last;
            if (!votes_.empty()) last = votes_.back().cast_at;
            if (auto why = validate_vote(r, registry, last)) return std::string(to_string(*why));
            if (!votes_.empty() && !vote_order_less(votes_.back(), r))
              return "vote '" + r.vote_id + "' breaks (cast_at, vote_id) ordering";
            return std::nullopt;
          } else {
            if (r.user_id.empty()) return "flag needs user_id";
            if (r.flagged && !r.p_value) return "flagged user needs p_value";
            if (r.p_value && !(*r.p_value >= 0.0 && *r.p_value <= 1.0)) return "p_value outside [0, 1]";
            return std::nullopt;
          }
        },
        record);
  }

  void apply(Record record) {
    if (auto why = check(record)) throw Error(ErrorCode::validation_failure, *why);
    std::visit(
        [&](auto&& r) {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, ModelEntry>) {
            registry.add_model(std::move(r));
          } else if constexpr (std::is_same_v<T, PromptEntry>) {
            registry.add_prompt(std::move(r));
          } else if constexpr (std::is_same_v<T, AssetEntry>) {
            registry.add_asset(std::move(r));
          } else if constexpr (std::is_same_v<T, VoteRecord>) {
            vote_ids_.insert(r.vote_id);
            votes_.push_back(std::move(r));
          } else {
            flags_.push_back(std::move(r));
          }
        },
        std::move(record));
  }

  /// Users whose latest flag record is a flag.
  UserSet flagged_users() const {
    std::map<std::string, bool> latest;
    for (const FlagRecord& f : flags_) latest[f.user_id] = f.flagged;
    UserSet out;
    for (const auto& [user, flagged] : latest) {
      if (flagged) out.insert(user);
    }
    return out;
  }

  std::vector<UserRecord> users() const {
    std::map<std::string, UserRecord> by_id;
    for (const VoteRecord& v : votes_) {
      auto [it, inserted] = by_id.try_emplace(v.user_id);
      if (inserted) {
        it->second.user_id = v.user_id;
        it->second.first_seen = v.cast_at;
      }
      ++it->second.vote_count;
    }
    for (const FlagRecord& f : flags_) {
      auto [it, inserted] = by_id.try_emplace(f.user_id);
      if (inserted) {
        it->second.user_id = f.user_id;
        it->second.first_seen = f.at;
      }
      it->second.flagged = f.flagged;
      it->second.flag_p_value = f.flagged ? f.p_value : std::nullopt;
    }
    std::vector<UserRecord> out;
    for (auto& [id, rec] : by_id) out.push_back(std::move(rec));
    return out;
  }

  std::size_t record_count() const {
    return registry.models().size() + registry.prompts().size() + registry.assets().size() + votes_.size() +
           flags_.size();
  }

  bool operator==(const LogState& other) const {
    return registry == other.registry && votes_ == other.votes_ && flags_ == other.flags_;
  }

 private:
  std::vector<VoteRecord> votes_;
  std::vector<FlagRecord> flags_;
  std::set<std::string, std::less<>> vote_ids_;
};

/// Canonical byte image of a state: models, prompts, assets, votes, flags,
/// then the checksum trailer.
inline std::string serialize(const LogState& state) {
  std::string out;
  auto put = [&](const Record& r) {
    out += encode_line(r);
    out += '\n';
  };
  for (const auto& m : state.registry.models()) put(m);
  for (const auto& p : state.registry.prompts()) put(p);
  for (const auto& a : state.registry.assets()) put(a);
  for (const auto& v : state.votes()) put(v);
  for (const auto& f : state.flags()) put(f);
  Fnv1a64 hash;
  hash.update(out);
  out += trailer_line(hash);
  return out;
}

// ---------------------------------------------------------------------------
// Replay

struct ReplayOptions {
  // Accept logs without a valid trailer, dropping a partial or invalid tail.
  bool recover = false;
};

struct ReplayResult {
  LogState state;
  std::int64_t records = 0;
  bool checksum_verified = false;
  // Length of the prefix made of complete, valid records (trailer excluded).
  std::size_t valid_bytes = 0;
  std::size_t dropped_bytes = 0;
  std::optional<std::string> dropped_reason;
};

/// Where a replay stands: the outcome if the stream ended at this byte.
struct ReplayProgress {
  std::int64_t records = 0;
  std::size_t valid_bytes = 0;
  std::size_t dropped_bytes = 0;
  std::optional<std::string> dropped_reason;
  bool has_trailer = false;
  bool checksum_verified = false;
};

/// Incremental replay. Complete lines are decoded and applied as they
/// arrive; a trailer is only recognised as the final line of the stream.
class LogReplayer {
 public:
  explicit LogReplayer(ReplayOptions opts = {}) : opts_(opts) {}

  void feed(std::string_view bytes) {
    fed_ += bytes.size();
    while (!bytes.empty()) {
      const std::size_t nl = bytes.find('\n');
      if (nl == std::string_view::npos) {
        partial_.append(bytes);
        return;
      }
      if (partial_.empty()) {
        take_line(bytes.substr(0, nl));
      } else {
        partial_.append(bytes.substr(0, nl));
        const std::string line = std::move(partial_);
        partial_.clear();
        take_line(line);
      }
      bytes.remove_prefix(nl + 1);
    }
  }

  ReplayProgress progress() const {
    ReplayProgress p{.records = records_, .valid_bytes = valid_};
    const bool trailer_is_last = trailer_ && partial_.empty();
    if (trailer_is_last) {
      p.has_trailer = true;
      p.checksum_verified = std::string_view(*trailer_).substr(kTrailerPrefix.size()) == body_hash_.hex();
    } else if (fed_ == 0) {
      p.checksum_verified = true;
    }
    const std::size_t body_end = fed_ - (trailer_is_last ? trailer_->size() + 1 : 0);
    p.dropped_bytes = body_end - valid_;
    if (stop_reason_) {
      p.dropped_reason = stop_reason_;
    } else if (trailer_ && !trailer_is_last) {
      p.dropped_reason = "unexpected trailer before end of log";
    } else if (!partial_.empty()) {
      p.dropped_reason = "partial final line";
    }
    return p;
  }

  const LogState& state() const { return state_; }

  ReplayResult finish() && {
    const ReplayProgress p = progress();
    if (!opts_.recover) {
      if (!p.has_trailer && fed_ > 0)
        throw Error(ErrorCode::checksum_mismatch,
                    "missing checksum trailer (log not cleanly closed); replay in recovery mode");
      if (!p.checksum_verified) throw Error(ErrorCode::checksum_mismatch, "trailer does not match log contents");
      if (p.dropped_reason) throw Error(ErrorCode::parse_error, *p.dropped_reason);
    }
    return {.state = std::move(state_),
            .records = p.records,
            .checksum_verified = p.checksum_verified,
            .valid_bytes = p.valid_bytes,
            .dropped_bytes = p.dropped_bytes,
            .dropped_reason = p.dropped_reason};
  }

 private:
  void take_line(std::string_view line) {
    if (trailer_) {
      // The previous trailer-looking line was not the last one.
      body_hash_.update(*trailer_);
      body_hash_.update("\n");
      trailer_.reset();
      stop("unexpected trailer before end of log");
    }
    if (line.starts_with(kTrailerPrefix)) {
      trailer_ = std::string(line);
      return;
    }
    body_hash_.update(line);
    body_hash_.update("\n");
    if (stop_reason_) return;
    try {
      if (line.starts_with("#")) throw Error(ErrorCode::parse_error, "unexpected trailer before end of log");
      state_.apply(decode_line(line));
    } catch (const Error& e) {
      if (!opts_.recover) throw;
      stop(e.what());
      return;
    }
    ++records_;
    valid_ += line.size() + 1;
  }

  void stop(std::string reason) {
    if (stop_reason_) return;
    if (!opts_.recover) throw Error(ErrorCode::parse_error, reason);
    stop_reason_ = std::move(reason);
  }

  ReplayOptions opts_;
  LogState state_;
  Fnv1a64 body_hash_;
  std::string partial_;
  std::optional<std::string> trailer_;
  std::optional<std::string> stop_reason_;
  std::int64_t records_ = 0;
  std::size_t valid_ = 0;
  std::size_t fed_ = 0;
};

namespace detail {

// The trailer is checked before any record is decoded, so a tampered log
// reports checksum_mismatch rather than whatever its first bad line is.
inline void require_trailer(std::string_view bytes) {
  if (bytes.empty()) return;
  if (bytes.back() == '\n') {
    const std::size_t start = bytes.rfind('\n', bytes.size() - 2);
    const std::size_t line_start = start == std::string_view::npos ? 0 : start + 1;
    const std::string_view last = bytes.substr(line_start, bytes.size() - 1 - line_start);
    if (last.starts_with(kTrailerPrefix)) {
      if (last.substr(kTrailerPrefix.size()) != fnv1a64_hex(bytes.substr(0, line_start)))
        throw Error(ErrorCode::checksum_mismatch, "trailer does not match log contents");
      return;
    }
  }
  throw Error(ErrorCode::checksum_mismatch, "missing checksum trailer (log not cleanly closed); replay in recovery mode");
}

}  // namespace detail

inline ReplayResult replay_bytes(std::string_view bytes, const ReplayOptions& opts = {}) {
  if (!opts.recover) detail::require_trailer(bytes);
  LogReplayer replayer(opts);
  replayer.feed(bytes);
  return std::move(replayer).finish();
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ReplayResult replay_file(const std::filesystem::path& path, const ReplayOptions& opts = {}) {
  return replay_bytes(read_file_bytes(path), opts);
}

// ---------------------------------------------------------------------------
// Writer

/// Single writer over one log file. Opening an existing file replays it in
/// recovery mode, cuts any torn tail and strips the trailer; close() writes a
/// fresh trailer.
class LogWriter {
 public:
  struct Options {
    bool fsync = true;
  };

  explicit LogWriter(std::filesystem::path path) : LogWriter(std::move(path), Options{}) {}

  LogWriter(std::filesystem::path path, Options opts) : path_(std::move(path)), opts_(opts) {
    std::error_code ec;
    if (std::filesystem::exists(path_, ec)) {
      const std::string bytes = read_file_bytes(path_);
      ReplayResult replayed = replay_bytes(bytes, {.recover = true});
      recovery_ = replayed.dropped_reason;
      state_ = std::move(replayed.state);
      offset_ = replayed.records;
      hash_.update(std::string_view(bytes).substr(0, replayed.valid_bytes));
      if (replayed.valid_bytes != bytes.size()) {
        std::filesystem::resize_file(path_, replayed.valid_bytes, ec);
        if (ec) throw Error(ErrorCode::io_error, "cannot truncate '" + path_.string() + "': " + ec.message());
      }
      size_ = replayed.valid_bytes;
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::io_error, "cannot open '" + path_.string() + "': " + std::strerror(errno));
  }

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  ~LogWriter() {
    try {
      close();
    } catch (...) {
    }
  }

  /// Validates, writes and flushes one record; returns its ordinal offset.
  std::int64_t append(const Record& record) {
    if (fd_ < 0) throw Error(ErrorCode::io_error, "log is closed");
    if (auto why = state_.check(record)) throw Error(ErrorCode::validation_failure, *why);
    const std::string line = encode_line(record) + "\n";
    write_all(line);
    state_.apply(record);
    hash_.update(line);
    size_ += line.size();
    return offset_++;
  }

  /// Writes the checksum trailer and closes the file.
  void close() {
    if (fd_ < 0) return;
    const std::string trailer = trailer_line(hash_);
    write_all(trailer);
    ::close(fd_);
    fd_ = -1;
  }

  /// Drops the file handle without a trailer, as a crash would.
  void abandon() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  bool is_open() const { return fd_ >= 0; }
  const LogState& state() const { return state_; }
  std::int64_t next_offset() const { return offset_; }
  const std::filesystem::path& path() const { return path_; }
  /// Set when opening dropped a torn or invalid tail.
  const std::optional<std::string>& recovery_note() const { return recovery_; }

 private:
  void write_all(std::string_view data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(fd_, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        // Leave the file exactly as it was before this write.
        [[maybe_unused]] const int rc = ::ftruncate(fd_, static_cast<off_t>(size_));
        if (err == ENOSPC || err == EDQUOT || err == EFBIG)
          throw Error(ErrorCode::storage_full, std::strerror(err));
        throw Error(ErrorCode::io_error, std::strerror(err));
      }
      done += static_cast<std::size_t>(n);
    }
    if (opts_.fsync) ::fsync(fd_);
  }

  std::filesystem::path path_;
  Options opts_;
  int fd_ = -1;
  LogState state_;
  Fnv1a64 hash_;
  std::int64_t offset_ = 0;
  std::size_t size_ = 0;
  std::optional<std::string> recovery_;
};

}  // namespace arena3d
