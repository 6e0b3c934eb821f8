#pragma once

// Filesystem blob store keyed by SHA-256 digest.

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "arena3d/error.hpp"

namespace arena3d {

inline std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw Error(ErrorCode::io_error, "sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

inline bool is_sha256_hex(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

class ContentStore {
 public:
  explicit ContentStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create '" + root_.string() + "': " + ec.message());
  }

  /// Stores `bytes` and returns the digest. Writing the same content twice is
  /// a no-op.
  std::string put(std::string_view bytes) {
    const std::string digest = sha256_hex(bytes);
    const auto target = path_for(digest);
    std::error_code ec;
    if (std::filesystem::exists(target, ec)) return digest;
    const auto tmp = root_ / (digest + ".tmp" + std::to_string(std::random_device{}()));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      out.close();
      if (!out) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::storage_full, "cannot write blob " + digest);
      }
    }
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot store blob " + digest + ": " + ec.message());
    return digest;
  }

  bool contains(std::string_view digest) const {
    std::error_code ec;
    return is_sha256_hex(digest) && std::filesystem::exists(path_for(digest), ec);
  }

  std::optional<std::string> get(std::string_view digest) const {
    if (!is_sha256_hex(digest)) return std::nullopt;
    std::ifstream in(path_for(digest), std::ios::binary);
    if (!in) return std::nullopt;
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path path_for(std::string_view digest) const { return root_ / std::string(digest); }

  std::filesystem::path root_;
};

}  // namespace arena3d
