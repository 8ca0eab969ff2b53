#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uigwm/tensor.hpp"

namespace uigwm {

// The four image domains of the verification protocol.
//   A       raw outputs of the protected tool
//   A'      those outputs after watermark embedding
//   B       outputs of the suspicious surrogate model
//   X       outputs of clean same-task models (false-positive suppression)
enum class DomainTag { kA, kAPrime, kB, kX };

const char* domain_tag_name(DomainTag tag);
DomainTag domain_tag_from_name(const std::string& name);

enum class Provenance { kPrivate, kStolen };

struct ManifestEntry {
  std::string path;
  std::string sha256;
  Provenance provenance = Provenance::kPrivate;
  // For released watermarked images: hash of the cover they were derived from.
  std::string cover_sha256;
};

// An image batch with a domain label and per-image provenance manifest.
struct LabeledDataset {
  Tensor images;  // n x c x h x w, values in [0,1]
  DomainTag tag = DomainTag::kA;
  std::vector<ManifestEntry> manifest;

  int size() const { return images.n(); }
  // Order-sensitive digest of the per-image content hashes.
  std::string content_hash() const;
  // Serialized manifest: one {path, sha256, domain_tag, provenance} per image.
  std::string manifest_json() const;
  void save_manifest(const std::filesystem::path& path) const;
};

// Rows of `ds` selected by index, manifest kept in sync.
LabeledDataset subset(const LabeledDataset& ds, std::span<const int> idx);

// The secret watermark image delta1 and the constant blank image delta0.
// delta0 defaults to all zeros: "no watermark" then coincides with the
// decoder's loss-minimizing trivial output.
struct WatermarkPair {
  Tensor delta1;  // 1 x c x h x w
  Tensor delta0;  // 1 x c x h x w, constant-valued
};

// Validates the pair invariants (same shape, delta0 constant, delta1 != delta0).
WatermarkPair make_watermark_pair(Tensor delta1, double blank_value = 0.0);

// The four labeled parts used by decoder fine-tuning.
struct ValidationSet {
  std::map<DomainTag, LabeledDataset> parts;
  int per_part_size = 0;

  const LabeledDataset& part(DomainTag tag) const { return parts.at(tag); }
};

// ---- dataset ingestion ----

// Loads every PNG/JPEG under `root_path` (non-recursive), lexicographic by
// file name, center-cropped to the source aspect ratio then bilinearly
// resized to `height` x `width`, scaled to [0,1].
LabeledDataset load_dataset(const std::filesystem::path& root_path, int height, int width,
                            int channels, DomainTag tag = DomainTag::kA);

// Loads one image file as a 1 x c x h x w tensor.
Tensor load_image(const std::filesystem::path& path, int height, int width, int channels);

// 8-bit PNG writers. Tensors are clamped and quantized on the way out.
void save_image_png(const std::filesystem::path& path, const Tensor& image, int index = 0);
// Grid of the first `limit` images, `cols` per row.
void save_grid_png(const std::filesystem::path& path, const Tensor& images, int cols,
                   int limit = 64);

// Round to the 256-level grid used by 8-bit storage.
Tensor quantize8(Tensor images);
// PNG bytes of one image (deterministic for fixed inputs).
std::string encode_png(const Tensor& images, int index);

// ---- splitting / mixing ----

// Deterministic disjoint partition: `stealer_count` images go to the stealer
// side, the rest to the owner side.
std::pair<LabeledDataset, LabeledDataset> split_owner_stealer(const LabeledDataset& dataset,
                                                              int stealer_count,
                                                              std::uint64_t seed);

// Surrogate training mixture: round(dtr*total) images from `stolen`, the rest
// from `private_images`, shuffled deterministically. Per-image provenance is
// retained in the manifest.
LabeledDataset mix_by_dtr(const LabeledDataset& stolen, const LabeledDataset& private_images,
                          double dtr, int total, std::uint64_t seed);

// Assembles the four-part validation set, truncating each part to
// `per_part_size` (seeded shuffle, then prefix).
ValidationSet build_validation_set(const LabeledDataset& a, const LabeledDataset& a_prime,
                                   const LabeledDataset& b, const LabeledDataset& x,
                                   int per_part_size, std::uint64_t seed = 0);

}  // namespace uigwm
