#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include <doctest.h>

#include <json.hpp>

#include "oracles.hpp"
#include "uigwm/error.hpp"
#include "uigwm/hash.hpp"
#include "uigwm/imaging.hpp"
#include "uigwm/rng.hpp"
#include "uigwm/toydata.hpp"

using namespace uigwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("uigwm_test_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LabeledDataset toy_dataset(int n, int hw, std::uint64_t seed, DomainTag tag) {
  LabeledDataset ds;
  ds.images = make_toy_images(n, hw, hw, seed);
  ds.tag = tag;
  ds.manifest.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    ds.manifest[static_cast<std::size_t>(i)].path = "mem_" + std::to_string(i);
    ds.manifest[static_cast<std::size_t>(i)].sha256 = sha256_hex(encode_png(ds.images, i));
  }
  return ds;
}

}  // namespace

TEST_SUITE("png io") {
  TEST_CASE("write then load reproduces the quantized image exactly") {
    TempDir tmp("roundtrip");
    const Tensor imgs = make_toy_images(3, 24, 24, 42);
    for (int i = 0; i < 3; ++i)
      save_image_png(tmp.path / ("img_0" + std::to_string(i) + ".png"), imgs, i);

    const LabeledDataset loaded = load_dataset(tmp.path, 24, 24, 3);
    REQUIRE(loaded.size() == 3);
    const Tensor q = quantize8(imgs);
    CHECK(mse(loaded.images, q) == 0.0);
  }

  TEST_CASE("files are loaded in lexicographic name order") {
    TempDir tmp("order");
    const Tensor imgs = make_toy_images(3, 16, 16, 7);
    // Written out of order on purpose.
    save_image_png(tmp.path / "c.png", imgs, 0);
    save_image_png(tmp.path / "a.png", imgs, 1);
    save_image_png(tmp.path / "b.png", imgs, 2);

    const LabeledDataset loaded = load_dataset(tmp.path, 16, 16, 3);
    REQUIRE(loaded.size() == 3);
    const Tensor q = quantize8(imgs);
    CHECK(mse(slice_batch(loaded.images, 0, 1), slice_batch(q, 1, 2)) == 0.0);
    CHECK(mse(slice_batch(loaded.images, 1, 2), slice_batch(q, 2, 3)) == 0.0);
    CHECK(mse(slice_batch(loaded.images, 2, 3), slice_batch(q, 0, 1)) == 0.0);
    CHECK(fs::path(loaded.manifest[0].path).filename() == "a.png");
    CHECK(fs::path(loaded.manifest[2].path).filename() == "c.png");
  }

  TEST_CASE("larger sources are cropped and resized to the target shape") {
    TempDir tmp("resize");
    const Tensor imgs = make_toy_images(1, 48, 64, 3);
    save_image_png(tmp.path / "wide.png", imgs, 0);
    const Tensor small = load_image(tmp.path / "wide.png", 16, 16, 3);
    CHECK(small.n() == 1);
    CHECK(small.c() == 3);
    CHECK(small.h() == 16);
    CHECK(small.w() == 16);
    CHECK(in_unit_range(small));
  }

  TEST_CASE("a corrupt file names its path in the error") {
    TempDir tmp("corrupt");
    std::ofstream(tmp.path / "bad.png") << "not a png at all";
    try {
      load_dataset(tmp.path, 16, 16, 3);
      FAIL("expected CorruptImage");
    } catch (const CorruptImage& e) {
      CHECK(e.path().find("bad.png") != std::string::npos);
    }
  }

  TEST_CASE("an imageless directory raises DatasetEmpty") {
    TempDir tmp("empty");
    std::ofstream(tmp.path / "notes.txt") << "no images here";
    CHECK_THROWS_AS(load_dataset(tmp.path, 16, 16, 3), DatasetEmpty);
    CHECK_THROWS_AS(load_dataset(tmp.path / "missing", 16, 16, 3), DatasetEmpty);
  }

  TEST_CASE("quantize8 snaps to the 8-bit grid and is idempotent") {
    Tensor t(1, 1, 1, 4);
    t.data()[0] = 0.004;   // nearest level is 1/255
    t.data()[1] = 0.5;
    t.data()[2] = 1.0;
    t.data()[3] = 0.0;
    const Tensor q = quantize8(t);
    CHECK(q.data()[0] == doctest::Approx(1.0 / 255.0).epsilon(1e-15));
    CHECK(q.data()[1] == doctest::Approx(std::lround(0.5 * 255) / 255.0).epsilon(1e-15));
    CHECK(q.data()[2] == 1.0);
    CHECK(q.data()[3] == 0.0);
    const Tensor qq = quantize8(q);
    CHECK(mse(q, qq) == 0.0);
  }

  TEST_CASE("encode_png is deterministic for identical content") {
    const Tensor imgs = make_toy_images(2, 16, 16, 5);
    CHECK(encode_png(imgs, 0) == encode_png(imgs, 0));
    CHECK(encode_png(imgs, 0) != encode_png(imgs, 1));
  }
}

TEST_SUITE("manifest") {
  TEST_CASE("content_hash is order-sensitive") {
    LabeledDataset ds = toy_dataset(4, 16, 11, DomainTag::kA);
    const std::string h1 = ds.content_hash();
    std::swap(ds.manifest[0], ds.manifest[1]);
    CHECK(ds.content_hash() != h1);
  }

  TEST_CASE("manifest_json carries path, hash, domain, and provenance") {
    LabeledDataset ds = toy_dataset(2, 16, 13, DomainTag::kB);
    ds.manifest[1].provenance = Provenance::kStolen;
    const auto j = nlohmann::json::parse(ds.manifest_json());
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 2);
    CHECK(j[0]["domain_tag"] == "B");
    CHECK(j[0]["path"] == "mem_0");
    CHECK(j[0]["sha256"] == ds.manifest[0].sha256);
    CHECK(j[0]["provenance"] == "private");
    CHECK(j[1]["provenance"] == "stolen");
  }

  TEST_CASE("subset keeps rows and manifest aligned") {
    const LabeledDataset ds = toy_dataset(5, 16, 17, DomainTag::kA);
    const std::vector<int> idx{3, 0, 4};
    const LabeledDataset sub = subset(ds, idx);
    REQUIRE(sub.size() == 3);
    CHECK(sub.tag == ds.tag);
    for (int i = 0; i < 3; ++i) {
      CHECK(mse(slice_batch(sub.images, i, i + 1),
                slice_batch(ds.images, idx[static_cast<std::size_t>(i)],
                            idx[static_cast<std::size_t>(i)] + 1)) == 0.0);
      CHECK(sub.manifest[static_cast<std::size_t>(i)].path ==
            ds.manifest[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].path);
    }
  }

  TEST_CASE("domain tag names roundtrip") {
    for (DomainTag tag : {DomainTag::kA, DomainTag::kAPrime, DomainTag::kB, DomainTag::kX})
      CHECK(domain_tag_from_name(domain_tag_name(tag)) == tag);
    CHECK_THROWS_AS(domain_tag_from_name("Q"), Error);
  }
}

TEST_SUITE("watermark pair") {
  TEST_CASE("make_watermark_pair builds a constant blank of the same shape") {
    const WatermarkPair wm = make_watermark_pair(make_toy_watermark(16, 16));
    CHECK(wm.delta1.n() == 1);
    CHECK(wm.delta0.n() == 1);
    CHECK(wm.delta0.c() == wm.delta1.c());
    CHECK(wm.delta0.h() == wm.delta1.h());
    for (std::size_t i = 0; i < wm.delta0.size(); ++i) CHECK(wm.delta0.data()[i] == 0.0);

    const WatermarkPair gray = make_watermark_pair(make_toy_watermark(16, 16), 0.5);
    for (std::size_t i = 0; i < gray.delta0.size(); ++i)
      CHECK(gray.delta0.data()[i] == 0.5);
  }

  TEST_CASE("a blank-valued mark is rejected") {
    CHECK_THROWS_AS(make_watermark_pair(Tensor(1, 3, 16, 16, 0.0)), Error);
    CHECK_THROWS_AS(make_watermark_pair(Tensor(1, 3, 16, 16, 1.5)), Error);
    CHECK_THROWS_AS(make_watermark_pair(Tensor(2, 3, 16, 16, 0.5)), Error);
  }
}

TEST_SUITE("split and mix") {
  TEST_CASE("split_owner_stealer partitions without overlap") {
    const LabeledDataset ds = toy_dataset(10, 16, 19, DomainTag::kA);
    const auto [owner, stealer] = split_owner_stealer(ds, 4, 99);
    CHECK(owner.size() == 6);
    CHECK(stealer.size() == 4);

    std::set<std::string> seen;
    for (const auto& e : owner.manifest) seen.insert(e.sha256);
    for (const auto& e : stealer.manifest) seen.insert(e.sha256);
    std::set<std::string> all;
    for (const auto& e : ds.manifest) all.insert(e.sha256);
    CHECK(seen == all);

    const auto [owner2, stealer2] = split_owner_stealer(ds, 4, 99);
    CHECK(owner2.content_hash() == owner.content_hash());
    const auto [owner3, stealer3] = split_owner_stealer(ds, 4, 100);
    CHECK(owner3.content_hash() != owner.content_hash());

    CHECK_THROWS_AS(split_owner_stealer(ds, 11, 1), InvalidSplit);
    CHECK_THROWS_AS(split_owner_stealer(ds, -1, 1), InvalidSplit);
  }

  TEST_CASE("mix_by_dtr draws round(dtr*total) stolen rows") {
    const LabeledDataset stolen = toy_dataset(20, 16, 23, DomainTag::kAPrime);
    const LabeledDataset priv = toy_dataset(20, 16, 29, DomainTag::kA);

    for (const auto& [dtr, want_stolen] :
         {std::pair{1.0, 12}, {0.0, 0}, {0.5, 6}, {0.26, 3}, {0.1, 1}}) {
      const LabeledDataset mixed = mix_by_dtr(stolen, priv, dtr, 12, 5);
      REQUIRE(mixed.size() == 12);
      int n_stolen = 0;
      for (const auto& e : mixed.manifest)
        if (e.provenance == Provenance::kStolen) ++n_stolen;
      CHECK(n_stolen == want_stolen);
    }

    const LabeledDataset m1 = mix_by_dtr(stolen, priv, 0.5, 12, 5);
    const LabeledDataset m2 = mix_by_dtr(stolen, priv, 0.5, 12, 5);
    CHECK(m1.content_hash() == m2.content_hash());
    const LabeledDataset m3 = mix_by_dtr(stolen, priv, 0.5, 12, 6);
    CHECK(m3.content_hash() != m1.content_hash());

    CHECK_THROWS_AS(mix_by_dtr(stolen, priv, 1.5, 12, 5), NumericalDomainError);
    CHECK_THROWS_AS(mix_by_dtr(stolen, priv, -0.1, 12, 5), NumericalDomainError);
    CHECK_THROWS_AS(mix_by_dtr(stolen, priv, 1.0, 21, 5), InsufficientData);
    CHECK_THROWS_AS(mix_by_dtr(stolen, priv, 0.0, 21, 5), InsufficientData);
  }

  TEST_CASE("build_validation_set sizes every part and checks shapes") {
    const LabeledDataset a = toy_dataset(8, 16, 31, DomainTag::kA);
    const LabeledDataset ap = toy_dataset(8, 16, 37, DomainTag::kAPrime);
    const LabeledDataset b = toy_dataset(8, 16, 41, DomainTag::kB);
    const LabeledDataset x = toy_dataset(8, 16, 43, DomainTag::kX);

    const ValidationSet vs = build_validation_set(a, ap, b, x, 6, 1);
    CHECK(vs.per_part_size == 6);
    for (DomainTag tag : {DomainTag::kA, DomainTag::kAPrime, DomainTag::kB, DomainTag::kX}) {
      CHECK(vs.part(tag).size() == 6);
      CHECK(vs.part(tag).tag == tag);
    }

    CHECK_THROWS_AS(build_validation_set(a, ap, b, x, 9, 1), InsufficientData);

    LabeledDataset odd = toy_dataset(8, 24, 47, DomainTag::kB);
    CHECK_THROWS_AS(build_validation_set(a, ap, odd, x, 6, 1), DomainMismatch);
  }
}
