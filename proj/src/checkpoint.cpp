#include "uigwm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "uigwm/error.hpp"
#include "uigwm/hash.hpp"

namespace uigwm {

namespace {

constexpr char kMagic[8] = {'U', 'I', 'G', 'W', 'M', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t fnv1a64(const char* data, std::size_t len) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void append(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_value(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw CheckpointCorrupt("truncated checkpoint");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string write_checkpoint_file(const std::filesystem::path& path,
                                  const CheckpointData& data) {
  std::string body;
  append(body, kVersion);
  const std::string header = data.header.dump();
  append(body, static_cast<std::uint32_t>(header.size()));
  body += header;
  append(body, static_cast<std::uint64_t>(data.blobs.size()));
  for (const auto& [name, values] : data.blobs) {
    append(body, static_cast<std::uint32_t>(name.size()));
    body += name;
    append(body, static_cast<std::uint64_t>(values.size()));
    body.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  }

  std::string file(kMagic, sizeof(kMagic));
  file += body;
  const std::uint64_t checksum = fnv1a64(body.data(), body.size());
  append(file, checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(file.data(), static_cast<std::streamsize>(file.size()));
  out.close();
  return sha256_hex(file);
}

CheckpointData read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointCorrupt("cannot open checkpoint: " + path.string());
  std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (file.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t) ||
      std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointVersionError("not a uigwm checkpoint: " + path.string());

  const std::string body = file.substr(sizeof(kMagic), file.size() - sizeof(kMagic) - 8);
  std::size_t trailer_pos = file.size() - 8;
  std::uint64_t stored_checksum;
  std::memcpy(&stored_checksum, file.data() + trailer_pos, 8);
  if (fnv1a64(body.data(), body.size()) != stored_checksum)
    throw CheckpointCorrupt("checksum mismatch: " + path.string());

  std::size_t pos = 0;
  const auto version = read_value<std::uint32_t>(body, pos);
  if (version != kVersion)
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));

  const auto header_len = read_value<std::uint32_t>(body, pos);
  if (pos + header_len > body.size()) throw CheckpointCorrupt("truncated checkpoint header");
  CheckpointData data;
  try {
    data.header = nlohmann::json::parse(body.substr(pos, header_len));
  } catch (const nlohmann::json::exception&) {
    throw CheckpointCorrupt("unparseable checkpoint header");
  }
  pos += header_len;

  const auto blob_count = read_value<std::uint64_t>(body, pos);
  for (std::uint64_t i = 0; i < blob_count; ++i) {
    const auto name_len = read_value<std::uint32_t>(body, pos);
    if (pos + name_len > body.size()) throw CheckpointCorrupt("truncated blob name");
    std::string name = body.substr(pos, name_len);
    pos += name_len;
    const auto count = read_value<std::uint64_t>(body, pos);
    if (pos + count * sizeof(double) > body.size())
      throw CheckpointCorrupt("truncated blob data");
    std::vector<double> values(count);
    std::memcpy(values.data(), body.data() + pos, count * sizeof(double));
    pos += count * sizeof(double);
    data.blobs.emplace_back(std::move(name), std::move(values));
  }
  return data;
}

}  // namespace uigwm
