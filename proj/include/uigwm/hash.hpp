#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace uigwm {

// Hex-encoded SHA-256 of a byte buffer.
std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_hex(const std::string& bytes);

// Hex-encoded SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace uigwm
