#include <unistd.h>

#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "oracles.hpp"
#include "uigwm/error.hpp"
#include "uigwm/toydata.hpp"
#include "uigwm/uigmodels.hpp"

using namespace uigwm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("uigwm_gen_" + tag + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

LabeledDataset tiny_dataset(int n, std::uint64_t seed) {
  LabeledDataset ds;
  ds.images = make_toy_images(n, 16, 16, seed);
  ds.tag = DomainTag::kA;
  ds.manifest.resize(static_cast<std::size_t>(n));
  return ds;
}

GenTrainConfig quick(GeneratorKind kind) {
  GenTrainConfig cfg;
  cfg.batch_size = 16;
  cfg.base_channels = 4;
  cfg.latent_dim = 8;
  cfg.timesteps = 8;
  switch (kind) {
    case GeneratorKind::kTinyVae: cfg.epochs = 2; break;
    case GeneratorKind::kTinyGan: cfg.epochs = 1; break;
    default: cfg.epochs = 2; break;
  }
  return cfg;
}

}  // namespace

TEST_SUITE("generator kinds") {
  TEST_CASE("kind names roundtrip") {
    for (GeneratorKind kind : {GeneratorKind::kTinyVae, GeneratorKind::kTinyGan,
                               GeneratorKind::kTinyDdpm, GeneratorKind::kTinyDdpmFast})
      CHECK(parse_generator_kind(generator_kind_name(kind)) == kind);
    CHECK(std::string(generator_kind_name(GeneratorKind::kTinyVae)) == "TINY_VAE");
    CHECK_THROWS_AS(parse_generator_kind("TINY_RNN"), Error);
  }

  TEST_CASE("config json roundtrip") {
    GenTrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 5e-4;
    cfg.timesteps = 12;
    cfg.sample_stride = 2;
    const GenTrainConfig back = GenTrainConfig::from_json(cfg.to_json());
    CHECK(back.epochs == 3);
    CHECK(back.lr == doctest::Approx(5e-4));
    CHECK(back.timesteps == 12);
    CHECK(back.sample_stride == 2);
  }
}

TEST_SUITE("generator training") {
  TEST_CASE("every kind trains to finite losses and samples valid images") {
    const LabeledDataset ds = tiny_dataset(48, 101);
    for (GeneratorKind kind : {GeneratorKind::kTinyVae, GeneratorKind::kTinyGan,
                               GeneratorKind::kTinyDdpm}) {
      CAPTURE(generator_kind_name(kind));
      GeneratorHandle gen = train_generator(kind, ds, quick(kind), 7);
      REQUIRE(gen.valid());
      CHECK(gen.kind() == kind);
      CHECK(gen.meta().epochs_run == quick(kind).epochs);
      REQUIRE(gen.meta().epoch_loss.size() ==
              static_cast<std::size_t>(quick(kind).epochs));
      for (double l : gen.meta().epoch_loss) CHECK(std::isfinite(l));

      const Tensor s = gen.sample(5, 99);
      CHECK(s.n() == 5);
      CHECK(s.c() == 3);
      CHECK(s.h() == 16);
      CHECK(s.w() == 16);
      CHECK(in_unit_range(s));
      CHECK(all_finite(s));

      // Same seed, same images; different seed, different images.
      CHECK(mse(gen.sample(5, 99), s) == 0.0);
      CHECK(mse(gen.sample(5, 100), s) > 0.0);
    }
  }

  TEST_CASE("sampling is independent of internal batching") {
    const LabeledDataset ds = tiny_dataset(32, 103);
    GeneratorHandle gen =
        train_generator(GeneratorKind::kTinyVae, ds, quick(GeneratorKind::kTinyVae), 11);
    const Tensor many = gen.sample(70, 5);  // crosses the internal chunk size
    const Tensor few = gen.sample(5, 5);
    // Per-image noise streams: agreement to float reduction order, and exact
    // in the 8-bit form the images are released in.
    CHECK(mse(slice_batch(many, 0, 5), few) < 1e-30);
    CHECK(mse(quantize8(slice_batch(many, 0, 5)), quantize8(few)) == 0.0);
  }

  TEST_CASE("the full chain and stride-1 fast sampler agree") {
    const LabeledDataset ds = tiny_dataset(32, 107);
    GenTrainConfig cfg = quick(GeneratorKind::kTinyDdpm);

    cfg.sample_stride = 1;
    GeneratorHandle full = train_generator(GeneratorKind::kTinyDdpm, ds, cfg, 13);
    GeneratorHandle fast1 = train_generator(GeneratorKind::kTinyDdpmFast, ds, cfg, 13);
    // One code path: training histories are bit-identical, samples agree to
    // float reduction order and exactly after quantization.
    REQUIRE(full.meta().epoch_loss.size() == fast1.meta().epoch_loss.size());
    for (std::size_t i = 0; i < full.meta().epoch_loss.size(); ++i)
      CHECK(full.meta().epoch_loss[i] == fast1.meta().epoch_loss[i]);
    CHECK(mse(full.sample(4, 21), fast1.sample(4, 21)) < 1e-30);
    CHECK(mse(quantize8(full.sample(4, 21)), quantize8(fast1.sample(4, 21))) == 0.0);

    cfg.sample_stride = 4;
    GeneratorHandle fast4 = train_generator(GeneratorKind::kTinyDdpmFast, ds, cfg, 13);
    const Tensor s4 = fast4.sample(4, 21);
    CHECK(in_unit_range(s4));
    CHECK(mse(s4, full.sample(4, 21)) > 1e-8);
  }

  TEST_CASE("too little data or a divergent run raises") {
    const LabeledDataset tiny = tiny_dataset(8, 109);
    GenTrainConfig cfg = quick(GeneratorKind::kTinyVae);
    cfg.batch_size = 16;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyVae, tiny, cfg, 1),
                    InsufficientData);

    LabeledDataset empty;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyVae, empty, cfg, 1), EmptyInput);

    const LabeledDataset ds = tiny_dataset(32, 113);
    GenTrainConfig wild = quick(GeneratorKind::kTinyDdpm);
    wild.lr = 1e150;  // first step catapults the weights, second forward is NaN
    wild.epochs = 2;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyDdpm, ds, wild, 1),
                    TrainingDiverged);
  }

  TEST_CASE("bad configs are rejected") {
    const LabeledDataset ds = tiny_dataset(32, 127);
    GenTrainConfig cfg = quick(GeneratorKind::kTinyVae);
    cfg.epochs = 0;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyVae, ds, cfg, 1), ArchConfigError);
    cfg = quick(GeneratorKind::kTinyDdpm);
    cfg.timesteps = 1;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyDdpm, ds, cfg, 1), ArchConfigError);
    cfg = quick(GeneratorKind::kTinyDdpmFast);
    cfg.sample_stride = 0;
    CHECK_THROWS_AS(train_generator(GeneratorKind::kTinyDdpmFast, ds, cfg, 1),
                    ArchConfigError);
  }
}

TEST_SUITE("generator checkpoints") {
  TEST_CASE("save then load reproduces samples bit for bit") {
    TempDir tmp("roundtrip");
    const LabeledDataset ds = tiny_dataset(32, 131);
    GeneratorHandle gen =
        train_generator(GeneratorKind::kTinyVae, ds, quick(GeneratorKind::kTinyVae), 17);
    const Tensor before = gen.sample(4, 3);

    const std::string id = save_generator(gen, tmp.path / "gen.ckpt");
    CHECK(id.size() == 64);

    GeneratorHandle loaded = load_generator(tmp.path / "gen.ckpt");
    CHECK(loaded.kind() == GeneratorKind::kTinyVae);
    CHECK(loaded.meta().epochs_run == gen.meta().epochs_run);
    CHECK(loaded.config().latent_dim == 8);
    CHECK(mse(loaded.sample(4, 3), before) == 0.0);
  }

  TEST_CASE("a network checkpoint is not a generator checkpoint") {
    TempDir tmp("confuse");
    NetworkHandle dec = make_decoder({3, 16, 16}, {.base_channels = 4}, 1);
    save_checkpoint(dec, tmp.path / "dec.ckpt");
    CHECK_THROWS_AS(load_generator(tmp.path / "dec.ckpt"), CheckpointCorrupt);
  }
}
