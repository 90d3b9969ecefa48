#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uapatch {

// FNV-1a over bytes. Used for config fingerprints and artifact integrity.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s);

std::string to_hex(std::uint64_t x);

std::uint64_t hash_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

std::string iso8601_now();

}  // namespace uapatch
