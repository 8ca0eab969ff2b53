#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace uigwm {

// Versioned binary container shared by network and generator checkpoints:
// magic + version, a JSON header (role, shapes, arch, extra metadata), then
// named double blobs, then a checksum of everything after the magic.
struct CheckpointData {
  nlohmann::json header;
  std::vector<std::pair<std::string, std::vector<double>>> blobs;
};

// Writes the container; returns the checkpoint id (SHA-256 of the file bytes).
std::string write_checkpoint_file(const std::filesystem::path& path,
                                  const CheckpointData& data);

// Throws CheckpointVersionError on wrong magic/version, CheckpointCorrupt on
// truncation or checksum failure.
CheckpointData read_checkpoint_file(const std::filesystem::path& path);

}  // namespace uigwm
