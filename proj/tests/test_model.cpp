#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "pairlearn/losses.hpp"
#include "pairlearn/model.hpp"
#include "pairlearn/render.hpp"
#include "test_util.hpp"

using namespace pairlearn;

namespace {

// Desk layout shrunk so the whole model stays under 1e4 parameters.
EncoderConfig small_desk(std::uint64_t seed) {
  EncoderConfig c = desk_encoder(seed);
  c.input_width = c.input_height = 32;
  c.base_width = 4;
  c.embedding_dim = 16;
  c.projection_dim = 16;
  return c;
}

RenderedPair sample_pair(int size, std::uint64_t seed, PairKind kind = PairKind::contrast) {
  const AttributeSpace space;
  Rng rng(seed);
  const auto cats = default_categories(space);
  const auto& b = cats[seed % cats.size()];
  return render_pair(space, make_pair(space, b.rule, b.alignment, kind, rng), size, size);
}

// Random image, not a stimulus, so activations are generic.
Image noise_image(int size, std::mt19937_64& g) {
  Image img(size, size);
  std::uniform_int_distribution<int> px(0, 255);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(px(g));
  return img;
}

double loss_at(const ModelParams& p, const RenderedPair& rp, const TrainingTrial& t,
               const LossWeights& w, double margin) {
  return total_loss(t, forward_pair(p, rp), w, margin);
}

std::vector<double> analytic_grad(const ModelParams& p, const RenderedPair& rp,
                                  const TrainingTrial& t, const LossWeights& w, double margin) {
  const SiameseNet net(p.config);
  const auto l = net.forward(p, image_to_tensor(rp.left_half));
  const auto r = net.forward(p, image_to_tensor(rp.right_half));
  PairForward pf;
  pf.logit_left = l.logit;
  pf.logit_right = r.logit;
  pf.prob_left = logistic(l.logit);
  pf.prob_right = logistic(r.logit);
  pf.latent_left = l.latent;
  pf.latent_right = r.latent;
  const auto g = total_loss_grad(t, pf, w, margin);
  std::vector<double> grad(p.size(), 0.0);
  const std::vector<double> zero(l.latent.size(), 0.0);
  net.backward(p, l, g.d_logit_left, g.d_latent_left.empty() ? zero : g.d_latent_left, grad);
  net.backward(p, r, g.d_logit_right, g.d_latent_right.empty() ? zero : g.d_latent_right, grad);
  return grad;
}

struct GradCase {
  const char* name;
  LossWeights weights;
  bool supervised;
  bool same;
  double margin;
};

}  // namespace

TEST_CASE("desk architecture has 6 to 10 convolutions and the configured widths") {
  const auto a = build_architecture(desk_encoder());
  CHECK(a.blocks.size() == 6);
  CHECK(a.conv_layer_count() >= 6);
  CHECK(a.conv_layer_count() <= 10);
  CHECK(a.embedding_dim == 128);
  const auto f = build_architecture(full_encoder());
  int convs = 1;
  for (const auto& b : f.blocks) convs += 1 + (b.conv2 ? 1 : 0);
  CHECK(convs + 1 == 18);  // 17 convolutions plus the classifier
  CHECK(f.feature_channels == 512);
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = desk_encoder();
  c.embedding_dim = 0;
  CHECK_THROWS(c.validate());
  c = desk_encoder();
  c.input_width = 8;
  CHECK_THROWS(c.validate());
}

TEST_CASE("parameter groups are contiguous and ordered") {
  const auto p = init_params(desk_encoder(3));
  CHECK(p.theta().size() + p.eta().size() + p.phi().size() == p.size());
  CHECK(p.theta().data() == p.values.data());
  CHECK(p.eta().data() == p.theta().data() + p.theta().size());
  CHECK(p.phi().data() == p.eta().data() + p.eta().size());
  CHECK(p.view("cls.w").size() == 128);
  CHECK(p.view("cls.b").size() == 1);
  CHECK_THROWS_AS(p.slot("nope"), std::out_of_range);
}

TEST_CASE("initialization is seeded") {
  const auto a = init_params(desk_encoder(0));
  const auto b = init_params(desk_encoder(0));
  const auto c = init_params(desk_encoder(1));
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (double g : a.view("stem.norm.g")) CHECK(g == 1.0);
  for (double v : a.view("cls.b")) CHECK(v == 0.0);
}

TEST_CASE("forward shapes and probability range") {
  const auto p = init_params(desk_encoder(2));
  const SiameseNet net(p.config);
  const auto rp = sample_pair(64, 4);
  const auto c = net.forward(p, image_to_tensor(rp.left_half));
  CHECK(c.embedding.size() == 128);
  CHECK(c.latent.size() == 128);
  double n = 0;
  for (double v : c.latent) n += v * v;
  CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-12));
  const auto pf = forward_pair(p, rp);
  CHECK(pf.prob_left > 0.0);
  CHECK(pf.prob_left < 1.0);
  CHECK(std::abs(pf.prob_right - 1.0 / (1.0 + std::exp(-pf.logit_right))) < 1e-6);
}

TEST_CASE("shared weights: swapping halves swaps outputs") {
  const auto p = init_params(desk_encoder(5));
  const auto rp = sample_pair(64, 6);
  RenderedPair swapped{concat_horizontal(rp.right_half, rp.left_half), rp.right_half, rp.left_half};
  const auto a = forward_pair(p, rp);
  const auto b = forward_pair(p, swapped);
  CHECK(a.logit_left == b.logit_right);
  CHECK(a.logit_right == b.logit_left);
  CHECK(a.latent_left == b.latent_right);
  RenderedPair twin{concat_horizontal(rp.left_half, rp.left_half), rp.left_half, rp.left_half};
  const auto t = forward_pair(p, twin);
  CHECK(t.logit_left == t.logit_right);
  CHECK(t.latent_left == t.latent_right);
  CHECK(predict_image(p, rp.left_half) == a.prob_left);
  CHECK(predict_image(p, rp.left_half) == predict_image(p, rp.left_half));
}

TEST_CASE("wrong half size is a shape mismatch") {
  const auto p = init_params(desk_encoder(1));
  CHECK_THROWS_AS(predict_image(p, Image(32, 32)), ShapeMismatch);
  CHECK_THROWS_AS(forward_pair(p, sample_pair(48, 1)), ShapeMismatch);
}

TEST_CASE("untrained predictions sit in a moderate band") {
  const auto p = init_params(desk_encoder(9));
  std::mt19937_64 g(10);
  double sum = 0;
  for (int i = 0; i < 100; ++i) sum += predict_image(p, noise_image(64, g));
  const double mean = sum / 100;
  CHECK(mean > 0.2);
  CHECK(mean < 0.8);
}

TEST_CASE("small desk model stays below ten thousand parameters") {
  CHECK(init_params(small_desk(0)).size() <= 10000);
}

TEST_CASE("loss gradients through the encoder match central differences") {
  const auto base = init_params(small_desk(11));
  const double h = 1e-6;
  const GradCase cases[] = {
      {"bce", {1, 0, 0}, true, false, 0.0},
      {"consistency-same", {0, 1, 0}, false, true, 0.0},
      {"consistency-different", {0, 1, 0}, true, false, 0.0},
      {"contrastive-same", {0, 0, 1}, false, true, 0.0},
      {"contrastive-different", {0, 0, 1}, false, false, -0.5},
      {"total", {1, 1, 1}, true, false, -0.5},
  };
  std::mt19937_64 g(12);
  for (const auto& gc : cases) {
    CAPTURE(gc.name);
    const auto rp = sample_pair(32, 13, gc.same ? PairKind::compare : PairKind::contrast);
    TrainingTrial t;
    t.supervised = gc.supervised;
    t.same = gc.same;
    if (t.supervised) t.labels = HalfLabels{1, 0};
    const auto grad = analytic_grad(base, rp, t, gc.weights, gc.margin);

    // 20 uniform coordinates plus a few from normalization gains.
    std::vector<std::size_t> coords;
    std::uniform_int_distribution<std::size_t> any(0, base.size() - 1);
    while (coords.size() < 20) {
      const std::size_t i = any(g);
      if (std::abs(grad[i]) > 1e-9) coords.push_back(i);
    }
    for (const char* slot : {"stem.norm.g", "block2.conv1.norm.b", "block4.proj.norm.g"}) {
      const auto& s = base.slot(slot);
      coords.push_back(s.offset + s.size / 2);
    }
    for (std::size_t i : coords) {
      auto p = base, m = base;
      p.values[i] += h;
      m.values[i] -= h;
      const double numeric = (loss_at(p, rp, t, gc.weights, gc.margin) -
                              loss_at(m, rp, t, gc.weights, gc.margin)) /
                             (2 * h);
      CAPTURE(base.slots.size());
      CAPTURE(i);
      CHECK(test_util::rel_error(grad[i], numeric, 1e-7) < 1e-3);
    }
  }
}

TEST_CASE("checkpoint round trip and mismatch rejection") {
  test_util::TempDir dir;
  const auto p = init_params(small_desk(21));
  save_checkpoint(p, CheckpointInfo{21, 7}, dir.path() / "m.ckpt");
  CheckpointInfo info;
  const auto q = load_checkpoint(dir.path() / "m.ckpt", small_desk(0), &info);
  CHECK(q.values == p.values);
  CHECK(info.seed == 21);
  CHECK(info.epoch == 7);

  auto other = small_desk(21);
  other.base_width = 8;
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.ckpt", other), std::runtime_error);
  other = small_desk(21);
  other.embedding_dim = 32;
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "m.ckpt", other), std::runtime_error);
  CHECK_THROWS(load_checkpoint(dir.path() / "missing.ckpt", small_desk(0)));
}
