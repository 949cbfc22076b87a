#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tripletlens/augment.hpp"
#include "tripletlens/datagen.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/optim.hpp"
#include "tripletlens/trainer.hpp"

using namespace tl;
using tl::test::random_tensor;
using tl::test::to_vector;

TEST_CASE("sgd momentum step") {
  SUBCASE("plain SGD") {
    std::vector<double> p{0.0}, g{1.0}, v{0.0};
    sgd_momentum_step(p, g, v, 0.1, 0.0);
    CHECK(p[0] == -0.1);
  }
  SUBCASE("fixed point") {
    std::vector<double> p{1.5, -2.0}, g{0, 0}, v{0, 0};
    sgd_momentum_step(p, g, v, 0.1, 0.9);
    CHECK(p == std::vector<double>{1.5, -2.0});
  }
  SUBCASE("two heavy-ball steps") {
    std::vector<double> p{0.0}, g{1.0}, v{0.0};
    sgd_momentum_step(p, g, v, 0.1, 0.9);
    sgd_momentum_step(p, g, v, 0.1, 0.9);
    CHECK(std::abs(p[0] - (-0.29)) <= 1e-15);
  }
  SUBCASE("momentum zero reproduces vanilla SGD exactly") {
    Rng rng(1);
    std::vector<double> p(10), q(10), v(10, 0.0);
    for (std::size_t i = 0; i < 10; ++i) p[i] = q[i] = rng.normal();
    for (int s = 0; s < 5; ++s) {
      std::vector<double> g(10);
      for (double& x : g) x = rng.normal();
      sgd_momentum_step(p, g, v, 0.05, 0.0);
      for (std::size_t i = 0; i < 10; ++i) q[i] -= 0.05 * g[i];
    }
    CHECK(p == q);
  }
  SUBCASE("shape mismatch") {
    std::vector<double> p{0.0}, g{1.0, 2.0}, v{0.0};
    CHECK_THROWS_AS(sgd_momentum_step(p, g, v, 0.1, 0.9), DimensionError);
  }
}

TEST_CASE("augmentation") {
  Rng rng(2);
  const Tensor img = random_tensor({3, 6, 6}, rng);
  CHECK(to_vector(apply_augmentation(img, AugmentDraw{}).data()) == to_vector(img.data()));
  CHECK(to_vector(flip_horizontal(flip_horizontal(img)).data()) == to_vector(img.data()));
  CHECK(to_vector(flip_vertical(flip_vertical(img)).data()) == to_vector(img.data()));
  CHECK(to_vector(rotate_quarter(rotate_quarter(img, 2), 2).data()) == to_vector(img.data()));
  CHECK(to_vector(rotate_quarter(img, 4).data()) == to_vector(img.data()));

  // 2x2 marker [[a,b],[c,d]] turned 90 degrees counter-clockwise is [[b,d],[a,c]].
  const Tensor marker(Shape{1, 2, 2}, {1, 2, 3, 4});
  CHECK(to_vector(rotate_quarter(marker, 1).data()) == std::vector<double>{2, 4, 1, 3});
  CHECK(to_vector(flip_horizontal(marker).data()) == std::vector<double>{2, 1, 4, 3});
  CHECK(to_vector(flip_vertical(marker).data()) == std::vector<double>{3, 4, 1, 2});

  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = augment(img, a);
    CHECK(x.shape() == img.shape());
    CHECK(to_vector(x.data()) == to_vector(augment(img, b).data()));
  }
  int flips = 0, turns[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4000; ++i) {
    const AugmentDraw d = draw_augmentation(rng);
    flips += d.flip_horizontal;
    ++turns[d.quarter_turns];
  }
  CHECK(std::abs(flips - 2000) < 200);
  for (int t : turns) CHECK(std::abs(t - 1000) < 150);
}

TEST_CASE("arbitrary rotation") {
  const Tensor flat(Shape{1, 9, 9}, 0.5);
  CHECK(to_vector(rotate_bilinear(flat, 0.0).data()) == to_vector(flat.data()));
  const Tensor r = rotate_bilinear(flat, 0.7);
  CHECK(r[4 * 9 + 4] == doctest::Approx(0.5));
  CHECK(r[0] == 0.0);
}

TEST_CASE("preprocess") {
  SUBCASE("constant frame") {
    const Tensor out = preprocess(Tensor(Shape{3, 576, 576}, 0.37));
    CHECK(out.shape() == Shape{3, 224, 224});
    for (double v : out.data()) CHECK(v == 0.37);
  }
  SUBCASE("black border is cropped away") {
    Tensor f(Shape{3, 576, 576}, 1.0);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 576; ++i) {
        for (std::size_t j = 0; j < 576; ++j) {
          if (i < 38 || j < 38 || i >= 538 || j >= 538) f[(c * 576 + i) * 576 + j] = 0.0;
        }
      }
    }
    const Tensor out = preprocess(f);
    for (double v : out.data()) CHECK(v > 0.0);
  }
  SUBCASE("checkerboard mean is preserved") {
    Tensor f(Shape{3, 576, 576});
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < 576; ++i) {
        for (std::size_t j = 0; j < 576; ++j) f[(c * 576 + i) * 576 + j] = ((i / 4 + j / 4) % 2) ? 1.0 : 0.0;
      }
    }
    const Tensor crop = center_crop(f, 500);
    double in = 0.0, out = 0.0;
    for (double v : crop.data()) in += v;
    const Tensor p = preprocess(f);
    for (double v : p.data()) out += v;
    in /= static_cast<double>(crop.numel());
    out /= static_cast<double>(p.numel());
    CHECK(std::abs(out - in) <= 0.01 * in);
  }
  SUBCASE("undersized") {
    CHECK_THROWS_AS(preprocess(Tensor(Shape{3, 400, 600})), DimensionError);
  }
}

namespace {

Dataset tiny_dataset(std::size_t per_class, std::size_t classes, std::uint64_t seed) {
  const auto specs = default_class_specs();
  Dataset d;
  d.image_size = 32;
  Rng rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      d.add(generate_frame(specs[c], 32, rng), static_cast<int>(c), Split::Train,
            "c" + std::to_string(c) + "_" + std::to_string(i));
    }
  }
  return d;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.epochs == 50);
  CHECK(cfg.learning_rate == 0.001);
  CHECK(cfg.momentum == 0.9);
  auto bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.learning_rate = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.preset = "nope";
  CHECK_THROWS_AS(train(tiny_dataset(3, 2, 1), bad), ConfigError);
}

TEST_CASE("triplet training with lr 0 leaves parameters at init") {
  const Dataset d = tiny_dataset(4, 3, 1);
  TrainConfig cfg = tiny_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const TrainResult r = train(d, cfg);
  const EmbeddingNet fresh = EmbeddingNet::build(make_preset("alex-lite", 32), cfg.seed);
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
    CHECK(to_vector(r.checkpoint.net.parameters()[i].tensor.data()) ==
          to_vector(fresh.parameters()[i].tensor.data()));
  }
  CHECK(r.log.epochs.size() == 1);
}

TEST_CASE("triplet training is deterministic and records metadata") {
  const Dataset d = tiny_dataset(4, 3, 2);
  const TrainConfig cfg = tiny_config();
  const TrainResult a = train(d, cfg);
  const TrainResult b = train(d, cfg);
  CHECK(encode_checkpoint(a.checkpoint) == encode_checkpoint(b.checkpoint));
  REQUIRE(a.log.epochs.size() == 2);
  for (std::size_t e = 0; e < 2; ++e) CHECK(a.log.epochs[e].mean_loss == b.log.epochs[e].mean_loss);
  CHECK(a.checkpoint.meta.trained_classes == std::vector<int>{0, 1, 2});
  CHECK(a.checkpoint.meta.epochs == 2);
  CHECK(a.checkpoint.meta.seed == 11);
  CHECK(a.log.to_csv().rfind("epoch,mean_loss,seconds\n1,", 0) == 0);
}

TEST_CASE("triplet training only uses the train split") {
  Dataset d = tiny_dataset(4, 3, 3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] == 2) d.splits[i] = Split::Test;
  }
  const TrainResult r = train(d, tiny_config());
  CHECK(r.checkpoint.meta.trained_classes == std::vector<int>{0, 1});
}

TEST_CASE("triplet training rejects degenerate data before training") {
  CHECK_THROWS_AS(train(tiny_dataset(4, 1, 1), tiny_config()), ConfigError);
  Dataset d = tiny_dataset(1, 2, 1);
  CHECK_THROWS_AS(train(d, tiny_config()), ConfigError);
}

TEST_CASE("classifier training") {
  const Dataset d = tiny_dataset(4, 4, 4);
  TrainConfig cfg = tiny_config();
  cfg.mode = TrainMode::Classifier;
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const TrainResult r = train_classifier(d, cfg);
  CHECK(r.checkpoint.net.output_dim() == 4);
  CHECK(r.checkpoint.meta.mode == TrainMode::Classifier);
  const EmbeddingNet fresh = build_classifier(make_preset("alex-lite", 32, 4), cfg.seed);
  for (double v : fresh.find("fc.weight")->data()) CHECK(v == 0.0);
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i) {
    CHECK(to_vector(r.checkpoint.net.parameters()[i].tensor.data()) ==
          to_vector(fresh.parameters()[i].tensor.data()));
  }
  // The untrained head is a uniform predictor on balanced 4-class data.
  CHECK(std::abs(r.log.epochs[0].mean_loss - std::log(4.0)) < 0.05);
  const std::vector<int> pred = predict_classes(r.checkpoint.net, d.all_images());
  CHECK(pred.size() == d.size());
  for (int p : pred) CHECK((p >= 0 && p < 4));

  Dataset gap = d;
  for (int& l : gap.labels) l = l == 3 ? 5 : l;
  CHECK_THROWS_AS(train_classifier(gap, cfg), ConfigError);
}
