#include <doctest.h>

#include <cmath>

#include "op_gradients.hpp"
#include "sealkit/errors.hpp"
#include "sealkit/attacks.hpp"
#include "sealkit/jpeg_like.hpp"
#include "test_helpers.hpp"

using namespace sealkit;
using namespace sealkit::testing;
namespace ops = sealkit::nd;
using ops::Tensor;

TEST_SUITE_BEGIN("attacks");

TEST_CASE("identity and factor-1 brightness are bit-exact") {
  Rng rng(3);
  Tensor<float> img = random_image<float>({1, 3, 16, 16}, rng);
  CHECK(bit_equal(apply_attack_eval(AttackSpec::identity_(), img), img));
  CHECK(bit_equal(apply_attack_eval(AttackSpec::brightness(1.0), img), img));
}

TEST_CASE("brightness maps x to clip(b*x)") {
  Tensor<float> img({1, 3, 2, 2});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = 0.4f;
  Tensor<float> out = apply_attack_eval(AttackSpec::brightness(2.0), img);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == doctest::Approx(0.8f));
  out = apply_attack_eval(AttackSpec::brightness(3.0), img);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 1.0f);  // clamped
}

TEST_CASE("crop 0.71 of 100x100 is the 71x71 centre region") {
  Rng rng(5);
  Tensor<float> img = random_image<float>({1, 3, 100, 100}, rng);
  Tensor<float> out = apply_attack_eval(AttackSpec::crop(0.71), img);
  CHECK(out.dim(2) == 71);
  CHECK(out.dim(3) == 71);
  // centre offset (100-71)/2 = 14
  for (int64_t y : {0L, 35L, 70L})
    CHECK(out.at(0, 1, y, 13) == img.at(0, 1, y + 14, 13 + 14));
  // side ratio 1.0 is the identity
  CHECK(bit_equal(apply_attack_eval(AttackSpec::crop(1.0), img), img));
}

TEST_CASE("horizontal flip is an involution") {
  Rng rng(7);
  Tensor<float> img = random_image<float>({1, 3, 9, 13}, rng);
  Tensor<float> twice =
      apply_attack_eval(AttackSpec::horizontal_flip(),
                        apply_attack_eval(AttackSpec::horizontal_flip(), img));
  CHECK(bit_equal(twice, img));
}

TEST_CASE("rotate 90 of a labelled 2x2 image is an exact permutation") {
  // [[a,b],[c,d]], counter-clockwise quarter turn -> [[b,d],[a,c]]
  Tensor<float> img({1, 3, 2, 2});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 4; ++i) img[c * 4 + i] = static_cast<float>(i + 1 + 10 * c);
  Tensor<float> out = apply_attack_eval(AttackSpec::rotate(90.0), img);
  CHECK(out[0] == 2);
  CHECK(out[1] == 4);
  CHECK(out[2] == 1);
  CHECK(out[3] == 3);
  CHECK(out[4] == 12);
  // 4 quarter turns are identity
  Tensor<float> x = img;
  for (int i = 0; i < 4; ++i) x = apply_attack_eval(AttackSpec::rotate(90.0), x);
  CHECK(bit_equal(x, img));
  // non-square 90-degree rotation swaps dimensions losslessly
  Rng rng(9);
  Tensor<float> rect = random_image<float>({1, 3, 6, 10}, rng);
  Tensor<float> rot = apply_attack_eval(AttackSpec::rotate(90.0), rect);
  CHECK(rot.dim(2) == 10);
  CHECK(rot.dim(3) == 6);
}

TEST_CASE("small-angle rotation fills out-of-frame with mid-gray") {
  Tensor<float> img = Tensor<float>::full({1, 3, 21, 21}, 1.0f);
  Tensor<float> out = apply_attack_eval(AttackSpec::rotate(30.0), img);
  CHECK(out.shape() == img.shape());
  // corners rotate out of frame
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.5f));
  CHECK(out.at(0, 0, 10, 10) == doctest::Approx(1.0f));
}

TEST_CASE("perspective scale 0 is the bit-exact identity") {
  Rng rng(11);
  Tensor<float> img = random_image<float>({1, 3, 15, 17}, rng);
  CHECK(bit_equal(apply_attack_eval(AttackSpec::perspective(0.0), img), img));
}

TEST_CASE("perspective warps corners inward") {
  Tensor<float> img = Tensor<float>::full({1, 3, 32, 32}, 1.0f);
  Tensor<float> out = apply_attack_eval(AttackSpec::perspective(0.5), img);
  CHECK(out.at(0, 0, 16, 16) == doctest::Approx(1.0f));
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.5f));  // fill
}

TEST_CASE("hue 0 is identity; +0.5 then -0.5 round trips") {
  Rng rng(13);
  Tensor<float> img = random_image<float>({1, 3, 12, 12}, rng);
  CHECK(bit_equal(apply_attack_eval(AttackSpec::hue(0.0), img), img));
  // low-saturation image stays inside the gamut through the rotation
  Tensor<float> grayish({1, 3, 8, 8});
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t x = 0; x < 8; ++x) {
      float v = 0.35f + 0.3f * static_cast<float>(x) / 8;
      grayish.at(0, 0, y, x) = v + 0.03f;
      grayish.at(0, 1, y, x) = v;
      grayish.at(0, 2, y, x) = v - 0.03f;
    }
  Tensor<float> rt = apply_attack_eval(AttackSpec::hue(-0.5),
                                       apply_attack_eval(AttackSpec::hue(0.5), grayish));
  CHECK(max_abs_diff(rt, grayish) < 1e-6);
}

TEST_CASE("grayscale: already-gray images are bit-exact; output channels equal") {
  Tensor<float> gray({1, 3, 6, 6});
  Rng rng(17);
  for (int64_t y = 0; y < 6; ++y)
    for (int64_t x = 0; x < 6; ++x) {
      float v = static_cast<float>(rng.uniform(0.1, 0.9));
      for (int64_t c = 0; c < 3; ++c) gray.at(0, c, y, x) = v;
    }
  CHECK(bit_equal(apply_attack_eval(AttackSpec::grayscale(), gray), gray));

  Tensor<float> col = random_image<float>({1, 3, 6, 6}, rng);
  Tensor<float> g = apply_attack_eval(AttackSpec::grayscale(), col);
  for (int64_t y = 0; y < 6; ++y)
    for (int64_t x = 0; x < 6; ++x) {
      CHECK(g.at(0, 0, y, x) == g.at(0, 1, y, x));
      CHECK(g.at(0, 1, y, x) == g.at(0, 2, y, x));
    }
}

TEST_CASE("contrast 1 and saturation 1 are near-identities") {
  Rng rng(19);
  Tensor<float> img = random_image<float>({1, 3, 10, 10}, rng);
  CHECK(max_abs_diff(apply_attack_eval(AttackSpec::contrast(1.0), img), img) < 1e-6);
  CHECK(max_abs_diff(apply_attack_eval(AttackSpec::saturation(1.0), img), img) < 1e-6);
}

TEST_CASE("gaussian blur preserves constants and smooths edges") {
  Tensor<float> flat = Tensor<float>::full({1, 3, 16, 16}, 0.42f);
  CHECK(max_abs_diff(apply_attack_eval(AttackSpec::gaussian_blur(5), flat), flat) < 1e-6);
  Rng rng(23);
  Tensor<float> img = random_image<float>({1, 3, 16, 16}, rng);
  Tensor<float> out = apply_attack_eval(AttackSpec::gaussian_blur(9), img);
  // blurred image has lower total variation
  auto tv = [](const Tensor<float>& t) {
    double s = 0;
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x + 1 < 16; ++x)
          s += std::abs(t.at(0, c, y, x + 1) - t.at(0, c, y, x));
    return s;
  };
  CHECK(tv(out) < 0.5 * tv(img));
  CHECK_THROWS_AS(apply_attack_eval(AttackSpec::gaussian_blur(4), img), std::invalid_argument);
}

TEST_CASE("resize changes dimensions by the factor") {
  Rng rng(29);
  Tensor<float> img = random_image<float>({1, 3, 20, 30}, rng);
  Tensor<float> half = apply_attack_eval(AttackSpec::resize(0.5), img);
  CHECK(half.dim(2) == 10);
  CHECK(half.dim(3) == 15);
}

TEST_CASE("straight-through jpeg value equals the bare codec bit-exactly") {
  Rng rng(31);
  Tensor<float> img = random_image<float>({1, 3, 24, 24}, rng);
  auto v = apply_attack<float>(AttackSpec::jpeg(60), ops::leaf(img, true), nullptr);
  CHECK(bit_equal(v.value(), jpeg_like(img, 60)));
  // backward of sum is the all-ones gradient
  ops::backward(v, Tensor<float>::full(v.shape(), 1.0f));
}

TEST_CASE("every attack maps [0,1] into [0,1]") {
  Rng rng(37);
  Tensor<float> img({1, 3, 20, 20});
  for (int64_t i = 0; i < img.numel(); ++i) img[i] = static_cast<float>(rng.uniform());
  for (const auto& suite : build_suites(SuiteKind::image))
    for (const auto& spec : suite.specs) {
      if (spec.is_external()) continue;
      Tensor<float> out = apply_attack_eval(spec, img);
      for (int64_t i = 0; i < out.numel(); ++i) {
        CHECK(out[i] >= 0.0f);
        CHECK(out[i] <= 1.0f);
      }
    }
}

TEST_CASE("eval-mode attacks never consume the rng") {
  Rng rng(41);
  Rng before = rng;
  Rng img_rng(1);
  Tensor<float> img = random_image<float>({1, 3, 24, 24}, img_rng);
  for (const auto& suite : build_suites(SuiteKind::image))
    for (const auto& spec : suite.specs) {
      if (spec.is_external()) continue;
      apply_attack<float>(spec, ops::constant(img), &rng);
    }
  CHECK(rng == before);
}

TEST_CASE("train-mode attacks sample within the configured range") {
  Rng rng(43);
  AttackSpec spec = AttackSpec::crop(0.8);
  spec.mode = AttackMode::train_random;
  spec.lo = 0.5;
  spec.hi = 1.0;
  Tensor<float> img = random_image<float>({1, 3, 40, 40}, rng);
  for (int i = 0; i < 20; ++i) {
    Tensor<float> out = apply_attack<float>(spec, ops::constant(img), &rng).value();
    CHECK(out.dim(2) >= 20);
    CHECK(out.dim(2) <= 40);
  }
}

TEST_CASE("grad_check passes through every differentiable attack (64-bit)") {
  for (const auto& c : attack_grad_cases()) {
    Rng rng(47);
    double worst = 0;
    for (int rep = 0; rep < 3; ++rep) worst = std::max(worst, c.run(rng, c.step));
    INFO(c.name);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("image suite counts match the evaluation grid") {
  auto suites = build_suites(SuiteKind::image);
  REQUIRE(suites.size() == 5);
  CHECK(suites[0].category == "identity");
  CHECK(suites[0].specs.size() == 1);
  CHECK(bit_equal(apply_attack_eval(suites[0].specs[0],
                                    Tensor<float>::full({1, 3, 8, 8}, 0.3f)),
                  Tensor<float>::full({1, 3, 8, 8}, 0.3f)));
  CHECK(suites[1].category == "valuemetric");
  CHECK(suites[1].specs.size() == 34);  // 9 brightness + 9 contrast + 10 hue + gray + 5 blur
  CHECK(suites[2].category == "compression");
  CHECK(suites[2].specs.size() == 6);  // JPEG 40..90
  CHECK(suites[3].category == "geometric");
  CHECK(suites[3].specs.size() == 24);  // flip + 5 rotate + 10 crop + 8 perspective
  CHECK(suites[4].category == "combined");
  CHECK(suites[4].specs.size() == 3);
}

TEST_CASE("video suite marks real-codec entries as external") {
  auto suites = build_suites(SuiteKind::video);
  REQUIRE(suites.size() == 5);
  CHECK(suites[1].specs.size() == 9);
  int external = 0;
  for (const auto& s : suites[2].specs) external += s.is_external();
  CHECK(suites[2].specs.size() == 13);  // jpeg + 12 codec entries
  CHECK(external == 12);
  for (const auto& s : suites[4].specs) CHECK(s.is_external());  // h264-based combos
  CHECK(suites[4].specs.size() == 4);
}

TEST_CASE("combined image attack chains jpeg, crop, brightness") {
  auto suites = build_suites(SuiteKind::image);
  const AttackSpec& combo = suites[4].specs[1];  // jpeg 60 variant
  REQUIRE(combo.children.size() == 3);
  CHECK(combo.children[0].kind == AttackKind::jpeg_like);
  CHECK(combo.children[0].int_param == 60);
  CHECK(combo.children[1].kind == AttackKind::crop);
  CHECK(combo.children[1].strength == doctest::Approx(0.71));
  CHECK(combo.children[2].kind == AttackKind::brightness);
  CHECK(combo.children[2].strength == doctest::Approx(0.5));
  Rng rng(53);
  Tensor<float> img = random_image<float>({1, 3, 64, 64}, rng);
  Tensor<float> out = apply_attack_eval(combo, img);
  CHECK(out.dim(2) == 45);  // round(0.71 * 64)
}

TEST_CASE("external codec without the env hook raises DataError") {
  if (external_encoder_available()) return;  // environment provides one; skip
  Tensor<float> frames = Tensor<float>::full({2, 3, 16, 16}, 0.5f);
  CHECK_THROWS_AS(apply_attack_eval(AttackSpec::video_codec_("h264", 23), frames), DataError);
}

TEST_SUITE_END();
