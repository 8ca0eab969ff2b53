#include <unistd.h>

#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "oracles.hpp"
#include "uigwm/error.hpp"
#include "uigwm/networks.hpp"
#include "uigwm/rng.hpp"

using namespace uigwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("uigwm_net_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Interior-valued random image batch: away from the [0,1] clamp and from
// activation kinks, so finite differences stay clean.
Tensor interior(int n, int c, int h, int w, std::uint64_t seed) {
  Tensor t(n, c, h, w);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(0.25, 0.75);
  return t;
}

double projected(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
  return s;
}

void check_network_grads(NetworkHandle& net, Tensor x, std::uint64_t seed,
                         double rel_tol = 1e-3) {
  Tensor probe = net.forward(x);
  Tensor r(probe.n(), probe.c(), probe.h(), probe.w());
  Rng rng(seed);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform(-1.0, 1.0);

  const auto f = [&] { return projected(net.forward(x), r); };

  net.zero_grads();
  net.forward(x);
  const Tensor gx = net.backward(r);

  std::vector<std::pair<double*, double>> slots;
  for (std::size_t i : oracle::sample_indices(x.size(), 8))
    slots.emplace_back(x.data() + i, gx.data()[i]);
  oracle::check_grads(f, slots, rel_tol, 1e-7);

  int checked = 0;
  for (nn::Param* p : net.params()) {
    if (checked >= 3) break;  // three parameter tensors keep the test fast
    net.zero_grads();
    net.forward(x);
    net.backward(r);
    std::vector<std::pair<double*, double>> pslots;
    for (std::size_t i : oracle::sample_indices(p->value.size(), 5))
      pslots.emplace_back(p->value.data() + i, p->grad.data()[i]);
    oracle::check_grads(f, pslots, rel_tol, 1e-7);
    ++checked;
  }
  net.zero_grads();
}

const ImageShape kShape{3, 16, 16};
const ArchConfig kSmall{.base_channels = 4, .depth = 1, .kernel = 3};

}  // namespace

TEST_SUITE("network builders") {
  TEST_CASE("each role has the advertised i/o contract") {
    NetworkHandle enc = make_encoder(kShape, kSmall, 1);
    NetworkHandle dec = make_decoder(kShape, kSmall, 2);
    NetworkHandle disc = make_discriminator(kShape, kSmall, 3);

    CHECK(enc.input_shape() == ImageShape{6, 16, 16});
    CHECK(enc.output_shape() == ImageShape{3, 16, 16});
    CHECK(dec.input_shape() == ImageShape{3, 16, 16});
    CHECK(dec.output_shape() == ImageShape{3, 16, 16});
    CHECK(disc.input_shape() == ImageShape{3, 16, 16});
    CHECK(disc.output_shape() == ImageShape{1, 1, 1});

    const Tensor x = interior(2, 6, 16, 16, 4);
    const Tensor y = enc.forward(x);
    CHECK(y.c() == 3);
    CHECK(in_unit_range(y));

    const Tensor img = interior(2, 3, 16, 16, 5);
    const Tensor d = disc.forward(img);
    REQUIRE(d.c() == 1);
    REQUIRE(d.h() == 1);
    REQUIRE(d.w() == 1);
    for (std::size_t i = 0; i < d.size(); ++i) {
      CHECK(d.data()[i] > 0.0);
      CHECK(d.data()[i] < 1.0);
    }

    CHECK(enc.param_count() > 0);
    CHECK(dec.forward(img).c() == 3);
  }

  TEST_CASE("the same seed rebuilds identical parameters") {
    NetworkHandle a = make_decoder(kShape, kSmall, 7);
    NetworkHandle b = make_decoder(kShape, kSmall, 7);
    NetworkHandle c = make_decoder(kShape, kSmall, 8);
    REQUIRE(a.param_count() == b.param_count());
    auto pa = a.params();
    auto pb = b.params();
    auto pc = c.params();
    bool all_equal = true, any_diff_seed = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      for (std::size_t j = 0; j < pa[i]->value.size(); ++j) {
        if (pa[i]->value.data()[j] != pb[i]->value.data()[j]) all_equal = false;
        if (pa[i]->value.data()[j] != pc[i]->value.data()[j]) any_diff_seed = true;
      }
    }
    CHECK(all_equal);
    CHECK(any_diff_seed);
  }

  TEST_CASE("encoder embeds a residual: output tracks the cover") {
    NetworkHandle enc = make_encoder(kShape, kSmall, 9);
    const Tensor cover = interior(2, 3, 16, 16, 10);
    const Tensor mark = interior(1, 3, 16, 16, 11);
    const Tensor x = concat_channels(cover, repeat_batch(mark, 2));
    const Tensor out = enc.forward(x);
    // A freshly initialized encoder has a small residual head, so the
    // watermarked image starts near its cover.
    CHECK(mse(out, cover) < 0.05);
  }

  TEST_CASE("invalid architectures are rejected") {
    CHECK_THROWS_AS(make_decoder({2, 16, 16}, kSmall, 0), ArchConfigError);
    CHECK_THROWS_AS(make_decoder({3, 15, 16}, kSmall, 0), ArchConfigError);
    CHECK_THROWS_AS(make_decoder({3, 16, 18}, kSmall, 0), ArchConfigError);
    CHECK_THROWS_AS(make_decoder({3, 12, 12}, kSmall, 0), ArchConfigError);
    CHECK_THROWS_AS(make_decoder(kShape, {.base_channels = 1}, 0), ArchConfigError);
    CHECK_THROWS_AS(make_decoder(kShape, {.base_channels = 4, .depth = 9}, 0),
                    ArchConfigError);
    CHECK_THROWS_AS(make_decoder(kShape, {.base_channels = 4, .kernel = 4}, 0),
                    ArchConfigError);
  }

  TEST_CASE("forward rejects inputs that break the contract") {
    NetworkHandle enc = make_encoder(kShape, kSmall, 12);
    CHECK_THROWS_AS(enc.forward(interior(1, 3, 16, 16, 13)), ShapeMismatch);
    NetworkHandle dec = make_decoder(kShape, kSmall, 14);
    CHECK_THROWS_AS(dec.forward(interior(1, 3, 32, 32, 15)), ShapeMismatch);
  }

  TEST_CASE("clone copies parameters but trains independently") {
    NetworkHandle a = make_decoder(kShape, kSmall, 16);
    NetworkHandle b = a.clone();
    const Tensor x = interior(1, 3, 16, 16, 17);
    CHECK(mse(a.forward(x), b.forward(x)) == 0.0);

    b.params()[0]->value.data()[0] += 0.5;
    CHECK(mse(a.forward(x), b.forward(x)) > 0.0);
  }
}

TEST_SUITE("network gradients") {
  TEST_CASE("encoder gradients match finite differences") {
    NetworkHandle enc = make_encoder(kShape, kSmall, 21);
    check_network_grads(enc, interior(1, 6, 16, 16, 22), 23);
  }

  TEST_CASE("decoder gradients match finite differences") {
    NetworkHandle dec = make_decoder(kShape, kSmall, 24);
    check_network_grads(dec, interior(1, 3, 16, 16, 25), 26);
  }

  TEST_CASE("discriminator gradients match finite differences") {
    NetworkHandle disc = make_discriminator(kShape, kSmall, 27);
    check_network_grads(disc, interior(1, 3, 16, 16, 28), 29);
  }
}

TEST_SUITE("network checkpoints") {
  TEST_CASE("save then load reproduces the forward pass bit for bit") {
    TempDir tmp("ckpt");
    NetworkHandle dec = make_decoder(kShape, kSmall, 31);
    const Tensor x = interior(2, 3, 16, 16, 32);
    const Tensor before = dec.forward(x);

    const std::string id1 = save_checkpoint(dec, tmp.path / "dec.ckpt");
    CHECK(id1.size() == 64);
    const std::string id2 = save_checkpoint(dec, tmp.path / "dec2.ckpt");
    CHECK(id1 == id2);

    NetworkHandle loaded = load_checkpoint(tmp.path / "dec.ckpt");
    CHECK(loaded.role() == NetRole::kDecoder);
    CHECK(loaded.image_shape() == kShape);
    CHECK(loaded.arch_config().base_channels == kSmall.base_channels);
    CHECK(mse(loaded.forward(x), before) == 0.0);
  }

  TEST_CASE("role checks on load") {
    TempDir tmp("role");
    NetworkHandle dec = make_decoder(kShape, kSmall, 33);
    save_checkpoint(dec, tmp.path / "dec.ckpt");
    CHECK_THROWS_AS(load_checkpoint_as(tmp.path / "dec.ckpt", NetRole::kEncoder),
                    CheckpointRoleMismatch);
    NetworkHandle ok = load_checkpoint_as(tmp.path / "dec.ckpt", NetRole::kDecoder);
    CHECK(ok.valid());
  }

  TEST_CASE("wrong magic raises the version error") {
    TempDir tmp("magic");
    std::ofstream(tmp.path / "junk.ckpt") << "GARBAGEFILECONTENT";
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "junk.ckpt"), CheckpointVersionError);
  }

  TEST_CASE("bit flips and truncation are caught by the checksum") {
    TempDir tmp("flip");
    NetworkHandle dec = make_decoder(kShape, kSmall, 34);
    save_checkpoint(dec, tmp.path / "dec.ckpt");

    auto bytes = [&] {
      std::ifstream in(tmp.path / "dec.ckpt", std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    }();
    REQUIRE(bytes.size() > 100);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x40);
    std::ofstream(tmp.path / "flipped.ckpt", std::ios::binary) << flipped;
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "flipped.ckpt"), CheckpointCorrupt);

    std::ofstream(tmp.path / "short.ckpt", std::ios::binary)
        << bytes.substr(0, bytes.size() - 9);
    CHECK_THROWS_AS(load_checkpoint(tmp.path / "short.ckpt"), CheckpointCorrupt);
  }
}
