#include "uigwm/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <json.hpp>

#include "uigwm/hash.hpp"
#include "uigwm/rng.hpp"

namespace uigwm {

namespace {

bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Largest centered crop with the target aspect ratio, then bilinear resize.
cv::Mat crop_resize(const cv::Mat& src, int height, int width) {
  const double target_ar = static_cast<double>(width) / height;
  const double src_ar = static_cast<double>(src.cols) / src.rows;
  int cw = src.cols, ch = src.rows;
  if (src_ar > target_ar)
    cw = std::max(1, static_cast<int>(std::lround(src.rows * target_ar)));
  else
    ch = std::max(1, static_cast<int>(std::lround(src.cols / target_ar)));
  const int x0 = (src.cols - cw) / 2;
  const int y0 = (src.rows - ch) / 2;
  cv::Mat cropped = src(cv::Rect(x0, y0, cw, ch));
  if (cw == width && ch == height) return cropped.clone();
  cv::Mat out;
  cv::resize(cropped, out, cv::Size(width, height), 0.0, 0.0, cv::INTER_LINEAR);
  return out;
}

// 8-bit cv::Mat (BGR or gray) from one tensor image, clamped and quantized.
cv::Mat to_mat8(const Tensor& images, int index) {
  const int c = images.c(), h = images.h(), w = images.w();
  cv::Mat m(h, w, c == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (c == 1) {
        double v = std::clamp(images(index, 0, y, x), 0.0, 1.0);
        m.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(v * 255.0));
      } else {
        cv::Vec3b px;  // BGR
        for (int ch = 0; ch < 3; ++ch) {
          double v = std::clamp(images(index, ch, y, x), 0.0, 1.0);
          px[2 - ch] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        m.at<cv::Vec3b>(y, x) = px;
      }
    }
  return m;
}

void mat_to_tensor(const cv::Mat& m, Tensor& out, int index) {
  const int c = out.c();
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (c == 1) {
        out(index, 0, y, x) = m.at<unsigned char>(y, x) / 255.0;
      } else {
        const cv::Vec3b px = m.at<cv::Vec3b>(y, x);  // BGR
        for (int ch = 0; ch < 3; ++ch) out(index, ch, y, x) = px[2 - ch] / 255.0;
      }
    }
}

const char* provenance_name(Provenance p) {
  return p == Provenance::kStolen ? "stolen" : "private";
}

}  // namespace

const char* domain_tag_name(DomainTag tag) {
  switch (tag) {
    case DomainTag::kA: return "A";
    case DomainTag::kAPrime: return "A_prime";
    case DomainTag::kB: return "B";
    case DomainTag::kX: return "X";
  }
  return "?";
}

DomainTag domain_tag_from_name(const std::string& name) {
  if (name == "A") return DomainTag::kA;
  if (name == "A_prime") return DomainTag::kAPrime;
  if (name == "B") return DomainTag::kB;
  if (name == "X") return DomainTag::kX;
  throw DomainMismatch("unknown domain tag: " + name);
}

std::string LabeledDataset::content_hash() const {
  std::string joined;
  for (const auto& e : manifest) joined += e.sha256;
  return sha256_hex(joined);
}

std::string LabeledDataset::manifest_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : manifest) {
    nlohmann::json item = {{"path", e.path},
                           {"sha256", e.sha256},
                           {"domain_tag", domain_tag_name(tag)},
                           {"provenance", provenance_name(e.provenance)}};
    if (!e.cover_sha256.empty()) item["cover_sha256"] = e.cover_sha256;
    j.push_back(std::move(item));
  }
  return j.dump(2);
}

void LabeledDataset::save_manifest(const std::filesystem::path& path) const {
  std::ofstream out(path);
  out << manifest_json() << "\n";
}

LabeledDataset subset(const LabeledDataset& ds, std::span<const int> idx) {
  LabeledDataset out;
  out.tag = ds.tag;
  out.images = gather_batch(ds.images, idx);
  out.manifest.reserve(idx.size());
  for (int i : idx) out.manifest.push_back(ds.manifest[static_cast<std::size_t>(i)]);
  return out;
}

WatermarkPair make_watermark_pair(Tensor delta1, double blank_value) {
  if (delta1.n() != 1) throw ShapeMismatch("watermark must be a single image");
  if (!in_unit_range(delta1)) throw NumericalDomainError("watermark values must lie in [0,1]");
  if (blank_value < 0.0 || blank_value > 1.0)
    throw NumericalDomainError("blank value must lie in [0,1]");
  Tensor delta0(1, delta1.c(), delta1.h(), delta1.w(), blank_value);
  bool differs = false;
  for (std::size_t i = 0; i < delta1.size() && !differs; ++i)
    differs = delta1.flat(i) != blank_value;
  if (!differs) throw NumericalDomainError("delta1 must differ from the constant blank image");
  return WatermarkPair{std::move(delta1), std::move(delta0)};
}

LabeledDataset load_dataset(const std::filesystem::path& root_path, int height, int width,
                            int channels, DomainTag tag) {
  if (channels != 1 && channels != 3)
    throw ShapeMismatch("channels must be 1 or 3, got " + std::to_string(channels));
  if (!std::filesystem::is_directory(root_path))
    throw DatasetEmpty(root_path.string());

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root_path))
    if (entry.is_regular_file() && has_image_extension(entry.path()))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename() < b.filename(); });
  if (files.empty()) throw DatasetEmpty(root_path.string());

  LabeledDataset ds;
  ds.tag = tag;
  ds.images = Tensor(static_cast<int>(files.size()), channels, height, width);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < files.size(); ++i) {
    cv::Mat m = cv::imread(files[i].string(),
                           channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
    if (m.empty()) throw CorruptImage(files[i].string());
    mat_to_tensor(crop_resize(m, height, width), ds.images, static_cast<int>(i));
    ManifestEntry e;
    e.path = files[i].string();
    e.sha256 = sha256_file(files[i]);
    if (!seen.insert(e.sha256).second)
      throw Error("duplicate image content in dataset: " + e.path);
    ds.manifest.push_back(std::move(e));
  }
  return ds;
}

Tensor load_image(const std::filesystem::path& path, int height, int width, int channels) {
  cv::Mat m = cv::imread(path.string(),
                         channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (m.empty()) throw CorruptImage(path.string());
  Tensor out(1, channels, height, width);
  mat_to_tensor(crop_resize(m, height, width), out, 0);
  return out;
}

std::string encode_png(const Tensor& images, int index) {
  std::vector<unsigned char> buf;
  cv::imencode(".png", to_mat8(images, index), buf);
  return std::string(buf.begin(), buf.end());
}

void save_image_png(const std::filesystem::path& path, const Tensor& image, int index) {
  const std::string bytes = encode_png(image, index);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_grid_png(const std::filesystem::path& path, const Tensor& images, int cols,
                   int limit) {
  const int count = std::min(images.n(), limit);
  if (count == 0) return;
  const int rows = (count + cols - 1) / cols;
  const int pad = 2;
  Tensor grid(1, images.c(), rows * (images.h() + pad) - pad,
              cols * (images.w() + pad) - pad, 1.0);
  for (int i = 0; i < count; ++i) {
    const int r = i / cols, col = i % cols;
    const int y0 = r * (images.h() + pad), x0 = col * (images.w() + pad);
    for (int ch = 0; ch < images.c(); ++ch)
      for (int y = 0; y < images.h(); ++y)
        for (int x = 0; x < images.w(); ++x)
          grid(0, ch, y0 + y, x0 + x) = images(i, ch, y, x);
  }
  save_image_png(path, grid, 0);
}

Tensor quantize8(Tensor images) {
  for (std::size_t i = 0; i < images.size(); ++i) {
    const double v = std::clamp(images.flat(i), 0.0, 1.0);
    images.flat(i) = std::lround(v * 255.0) / 255.0;
  }
  return images;
}

std::pair<LabeledDataset, LabeledDataset> split_owner_stealer(const LabeledDataset& dataset,
                                                              int stealer_count,
                                                              std::uint64_t seed) {
  const int n = dataset.size();
  if (stealer_count < 0 || stealer_count >= n)
    throw InvalidSplit(static_cast<std::size_t>(stealer_count), static_cast<std::size_t>(n));

  Rng rng(seed);
  std::vector<int> perm = rng.permutation(n);
  std::vector<int> stealer_idx(perm.begin(), perm.begin() + stealer_count);
  std::vector<int> owner_idx(perm.begin() + stealer_count, perm.end());
  std::sort(stealer_idx.begin(), stealer_idx.end());
  std::sort(owner_idx.begin(), owner_idx.end());
  return {subset(dataset, owner_idx), subset(dataset, stealer_idx)};
}

LabeledDataset mix_by_dtr(const LabeledDataset& stolen, const LabeledDataset& private_images,
                          double dtr, int total, std::uint64_t seed) {
  if (!(dtr >= 0.0 && dtr <= 1.0))
    throw NumericalDomainError("dtr must lie in [0,1], got " + std::to_string(dtr));
  const int n_stolen = static_cast<int>(std::llround(dtr * total));
  const int n_private = total - n_stolen;
  if (n_stolen > stolen.size())
    throw InsufficientData("stolen", static_cast<std::size_t>(n_stolen),
                           static_cast<std::size_t>(stolen.size()));
  if (n_private > private_images.size())
    throw InsufficientData("private", static_cast<std::size_t>(n_private),
                           static_cast<std::size_t>(private_images.size()));

  Rng rng(seed);
  std::vector<int> stolen_perm = rng.fork("stolen").permutation(stolen.size());
  std::vector<int> private_perm = rng.fork("private").permutation(private_images.size());
  stolen_perm.resize(static_cast<std::size_t>(n_stolen));
  private_perm.resize(static_cast<std::size_t>(n_private));
  LabeledDataset stolen_part = subset(stolen, stolen_perm);
  LabeledDataset private_part = subset(private_images, private_perm);
  for (auto& e : stolen_part.manifest) e.provenance = Provenance::kStolen;
  for (auto& e : private_part.manifest) e.provenance = Provenance::kPrivate;

  LabeledDataset out;
  out.tag = n_stolen > 0 ? stolen.tag : private_images.tag;
  out.images = Tensor(total, stolen.images.c(), stolen.images.h(), stolen.images.w());
  out.manifest.resize(static_cast<std::size_t>(total));
  std::vector<int> order = rng.fork("shuffle").permutation(total);
  for (int i = 0; i < total; ++i) {
    const bool from_stolen = order[static_cast<std::size_t>(i)] < n_stolen;
    const int src_idx = from_stolen ? order[static_cast<std::size_t>(i)]
                                    : order[static_cast<std::size_t>(i)] - n_stolen;
    const LabeledDataset& src = from_stolen ? stolen_part : private_part;
    std::copy(src.images.data() + src_idx * src.images.sample_size(),
              src.images.data() + (src_idx + 1) * src.images.sample_size(),
              out.images.data() + i * out.images.sample_size());
    out.manifest[static_cast<std::size_t>(i)] = src.manifest[static_cast<std::size_t>(src_idx)];
  }
  return out;
}

ValidationSet build_validation_set(const LabeledDataset& a, const LabeledDataset& a_prime,
                                   const LabeledDataset& b, const LabeledDataset& x,
                                   int per_part_size, std::uint64_t seed) {
  const std::pair<const LabeledDataset*, DomainTag> inputs[] = {
      {&a, DomainTag::kA},
      {&a_prime, DomainTag::kAPrime},
      {&b, DomainTag::kB},
      {&x, DomainTag::kX}};

  ValidationSet vset;
  vset.per_part_size = per_part_size;
  Rng rng(seed);
  for (const auto& [ds, tag] : inputs) {
    if (ds->tag != tag)
      throw DomainMismatch(std::string("expected domain ") + domain_tag_name(tag) +
                           ", got " + domain_tag_name(ds->tag));
    if (ds->images.c() != a.images.c() || ds->images.h() != a.images.h() ||
        ds->images.w() != a.images.w())
      throw DomainMismatch(std::string("domain ") + domain_tag_name(tag) +
                           " images are " + ds->images.shape_str() +
                           ", domain A images are " + a.images.shape_str());
    if (ds->size() < per_part_size)
      throw InsufficientData(domain_tag_name(tag), static_cast<std::size_t>(per_part_size),
                             static_cast<std::size_t>(ds->size()));
    std::vector<int> perm = rng.fork(domain_tag_name(tag)).permutation(ds->size());
    perm.resize(static_cast<std::size_t>(per_part_size));
    vset.parts.emplace(tag, subset(*ds, perm));
  }
  return vset;
}

}  // namespace uigwm
