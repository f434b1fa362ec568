#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "helpers.hpp"
#include "spursever/error.hpp"
#include "spursever/nn.hpp"

using namespace spursever;

namespace {

Architecture arch(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes) {
  Architecture a;
  a.input_dim = in;
  a.hidden = std::move(hidden);
  a.classes = classes;
  return a;
}

/// Zero weights; the last bias carries the logits.
Network logit_net(std::size_t in, std::vector<float> logits) {
  auto a = arch(in, {4}, logits.size());
  Network n = Network::zeros(a);
  n.parameters().tensors.back() = std::move(logits);
  return n;
}

struct Blobs {
  std::vector<float> x;
  std::vector<std::uint32_t> y;
};

Blobs separable_blobs(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<float> noise(0.0f, 0.3f);
  Blobs b;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t y = i % 2;
    b.y.push_back(y);
    for (std::size_t d = 0; d < dim; ++d) b.x.push_back((y ? 1.5f : -1.5f) * (d % 2 ? 1.0f : 0.5f) + noise(eng));
  }
  return b;
}

double accuracy(const Network& net, const Blobs& b) {
  const auto p = predict(net, b.x, b.y.size(), kernels::Mode::reference);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += p[i] == b.y[i];
  return double(ok) / double(p.size());
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("architecture descriptor round-trips") {
  auto a = arch(1024, {128, 64}, 10);
  CHECK(a.descriptor() == "mlp:1024-128-64-10");
  CHECK(Architecture::parse(a.descriptor()) == a);
  CHECK(Architecture::parse("mlp:5-3") == arch(5, {}, 3));
  CHECK_THROWS_AS(Architecture::parse("cnn:3-3"), InputError);
  CHECK_THROWS_AS(Architecture::parse("mlp:5-0-3"), InputError);
}

TEST_CASE("parameter count fixed by the architecture") {
  auto a = arch(6, {5, 4}, 3);
  auto n = Network::initialize(a, 1);
  CHECK(n.parameter_count() == 6 * 5 + 5 + 5 * 4 + 4 + 4 * 3 + 3);
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / double(a.layer_in(l)));
    for (float w : n.weight(l)) CHECK(std::abs(w) <= bound);
    for (float b : n.bias(l)) CHECK(b == 0.0f);
  }
  CHECK(bitwise_equal(n, Network::initialize(a, 1)));
  CHECK_FALSE(bitwise_equal(n, Network::initialize(a, 2)));
}

TEST_CASE("zero-weight net gives uniform probabilities") {
  auto net = Network::zeros(arch(12, {8, 6}, 10));
  auto x = testutil::random_floats(3 * 12, 4);
  const auto p = forward_probs(net, x, 3);
  for (double v : p.values) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("large logits do not overflow") {
  std::vector<float> logits(10, 0.0f);
  logits[0] = 1000.0f;
  auto net = logit_net(3, logits);
  std::vector<float> x(3, 0.5f);
  const auto p = forward_probs(net, x, 1);
  CHECK(std::abs(p.values[0] - 1.0) < 1e-6);
  for (double v : p.values) CHECK(std::isfinite(v));
}

TEST_CASE("softmax rows sum to one") {
  auto net = Network::initialize(arch(20, {16, 8}, 7), 3);
  auto x = testutil::random_floats(64 * 20, 5, -3.0f, 3.0f);
  const auto p = forward_probs(net, x, 64);
  for (std::size_t r = 0; r < 64; ++r) {
    const auto row = p.row(r);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    CHECK(std::abs(s - 1.0) < 1e-6);
    for (double v : row) CHECK(v >= 0.0);
  }
  std::vector<double> out(4);
  const float extreme[] = {-1e30f, 1e30f, 0.0f, 3.0f};
  softmax(extreme, out);
  CHECK(std::abs(out[0] + out[1] + out[2] + out[3] - 1.0) < 1e-6);
}

TEST_CASE("forward rejects a shape mismatch") {
  auto net = Network::zeros(arch(5, {3}, 2));
  std::vector<float> x(9);
  CHECK_THROWS_AS(forward_probs(net, x, 2), InputError);
  CHECK_THROWS_AS(forward_probs(net, x, 0), InputError);
}

TEST_CASE("cross-entropy analytic cases") {
  SUBCASE("confident and correct") {
    std::vector<float> logits(10, 0.0f);
    logits[3] = 1000.0f;
    auto net = logit_net(2, logits);
    std::vector<float> x(4, 0.1f);
    std::vector<std::uint32_t> y{3, 3};
    CHECK(loss_and_grads(net, x, 2, y, 0.0).loss == 0.0);
  }
  SUBCASE("uniform") {
    auto net = Network::zeros(arch(3, {4}, 10));
    std::vector<float> x(6, 0.2f);
    std::vector<std::uint32_t> y{0, 9};
    CHECK(loss_and_grads(net, x, 2, y, 0.0).loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
  SUBCASE("label out of range") {
    auto net = Network::zeros(arch(3, {4}, 10));
    std::vector<float> x(3, 0.2f);
    std::vector<std::uint32_t> y{10};
    CHECK_THROWS_AS(loss_and_grads(net, x, 1, y, 0.0), InputError);
  }
}

TEST_CASE("weight decay enters objective and gradient") {
  auto net = Network::initialize(arch(4, {3}, 2), 9);
  auto x = testutil::random_floats(8, 1);
  std::vector<std::uint32_t> y{0, 1};
  const auto a = loss_and_grads(net, x, 2, y, 0.0);
  const auto b = loss_and_grads(net, x, 2, y, 0.5);
  double sq = 0.0;
  for (const auto& t : net.parameters().tensors)
    for (float v : t) sq += double(v) * v;
  CHECK(b.objective == doctest::Approx(a.loss + 0.25 * sq).epsilon(1e-12));
  CHECK(b.grads.at(0) == doctest::Approx(a.grads.at(0) + 0.5 * net.parameters().at(0)).epsilon(1e-6));
}

TEST_CASE("gradients match central differences on 10 random configurations") {
  const std::vector<std::vector<std::size_t>> hidden = {{}, {6}, {8, 5}, {12, 7}, {5, 5, 4}};
  for (std::uint64_t cfg = 0; cfg < 10; ++cfg) {
    CAPTURE(cfg);
    const std::size_t in = 3 + cfg % 5, classes = 2 + cfg % 4, rows = 1 + (cfg * 3) % 9;
    auto net = Network::initialize(arch(in, hidden[cfg % hidden.size()], classes), 100 + cfg);
    // Non-zero biases so every parameter kind is exercised.
    for (std::size_t l = 0; l < net.architecture().layer_count(); ++l)
      net.parameters().tensors[2 * l + 1] = testutil::random_floats(net.architecture().layer_out(l), cfg, -0.3f, 0.3f);
    auto x = testutil::random_floats(rows * in, 200 + cfg, -2.0f, 2.0f);
    auto y = testutil::random_labels(rows, classes, 300 + cfg);
    GradCheckOptions opt;
    opt.seed = cfg;
    opt.weight_decay = cfg % 2 ? 1e-3 : 0.0;
    const auto r = grad_check(net, x, rows, y, opt);
    CHECK(r.pass);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.checked >= std::min<std::size_t>(50, net.parameter_count() - r.skipped_kinks));
  }
}

TEST_CASE("grad check catches a corrupted coordinate") {
  auto net = Network::initialize(arch(5, {6}, 3), 42);
  auto x = testutil::random_floats(4 * 5, 1);
  auto y = testutil::random_labels(4, 3, 2);
  auto lg = loss_and_grads(net, x, 4, y, 0.0);
  GradCheckOptions opt;
  opt.coordinates = net.parameter_count();  // every coordinate
  CHECK(compare_gradients(net, x, 4, y, lg.grads, opt).pass);
  // Largest-magnitude coordinate doubled.
  std::size_t worst = 0;
  for (std::size_t i = 0; i < lg.grads.count(); ++i)
    if (std::abs(lg.grads.at(i)) > std::abs(lg.grads.at(worst))) worst = i;
  lg.grads.at(worst) *= 2.0f;
  const auto r = compare_gradients(net, x, 4, y, lg.grads, opt);
  CHECK_FALSE(r.pass);
  CHECK(r.max_relative_error > 0.1);
}

TEST_CASE("grad check guards") {
  auto net = Network::initialize(arch(3, {2}, 2), 1);
  std::vector<float> x;
  std::vector<std::uint32_t> y;
  CHECK_THROWS_AS(grad_check(net, x, 0, y, {}), InputError);
  std::vector<float> x1(3, 0.0f);
  std::vector<std::uint32_t> y1{0};
  GradCheckOptions bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(grad_check(net, x1, 1, y1, bad), InputError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.difficulty_epoch = 60;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.lr_milestones = {45, 30};
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  c.lr_milestones = {60};
  CHECK_THROWS_AS(c.validate(), InputError);
  c = {};
  CHECK(c.lr_at(0) == doctest::Approx(0.01));
  CHECK(c.lr_at(30) == doctest::Approx(0.001));
  CHECK(c.lr_at(59) == doctest::Approx(0.0001));
}

TEST_CASE("zero epochs returns the initial net") {
  auto b = separable_blobs(20, 4, 1);
  auto init = Network::initialize(arch(4, {5}, 2), 7);
  TrainConfig c;
  c.epochs = 0;
  c.lr_milestones = {};
  c.difficulty_epoch = 0;
  const auto r = train(init, b.x, b.y, c);
  CHECK(bitwise_equal(r.final_net, init));
  CHECK(bitwise_equal(r.snapshot, init));
  CHECK(r.epochs_run == 0);
}

TEST_CASE("separable blobs are fit and loss decreases") {
  auto b = separable_blobs(400, 8, 3);
  TrainConfig c;
  c.epochs = 50;
  c.lr_milestones = {30, 40};
  c.difficulty_epoch = 5;
  c.seed = 11;
  std::size_t hook_calls = 0;
  TrainOptions opt;
  opt.mode = kernels::Mode::reference;
  opt.on_epoch = [&](const EpochRecord& rec, const Network&) { CHECK(rec.epoch == hook_calls++); };
  const auto r = train(Network::initialize(arch(8, {16, 8}, 2), 11), b.x, b.y, c, opt);
  CHECK(hook_calls == 50);
  CHECK(accuracy(r.final_net, b) > 0.99);
  const auto& L = r.epoch_loss;
  const double first = std::accumulate(L.begin(), L.begin() + 5, 0.0) / 5;
  const double last = std::accumulate(L.end() - 5, L.end(), 0.0) / 5;
  CHECK(last < first);
}

TEST_CASE("reference mode is bit-exact across runs") {
  auto b = separable_blobs(130, 6, 5);
  TrainConfig c;
  c.epochs = 4;
  c.lr_milestones = {2};
  c.difficulty_epoch = 2;
  c.batch_size = 16;  // leaves a partial last batch
  TrainOptions opt;
  opt.mode = kernels::Mode::reference;
  const auto a = train(Network::initialize(arch(6, {7}, 2), 1), b.x, b.y, c, opt);
  const auto d = train(Network::initialize(arch(6, {7}, 2), 1), b.x, b.y, c, opt);
  CHECK(bitwise_equal(a.final_net, d.final_net));
  CHECK(bitwise_equal(a.snapshot, d.snapshot));
  CHECK_FALSE(bitwise_equal(a.snapshot, a.final_net));
}

TEST_CASE("snapshot equals an early-stopped run") {
  auto b = separable_blobs(90, 6, 8);
  TrainConfig c;
  c.epochs = 6;
  c.lr_milestones = {};
  c.difficulty_epoch = 3;
  TrainOptions opt;
  opt.mode = kernels::Mode::reference;
  const auto full = train(Network::initialize(arch(6, {5}, 2), 2), b.x, b.y, c, opt);
  opt.stop_after_snapshot = true;
  const auto early = train(Network::initialize(arch(6, {5}, 2), 2), b.x, b.y, c, opt);
  CHECK(early.epochs_run == 3);
  CHECK(bitwise_equal(full.snapshot, early.snapshot));
  CHECK(bitwise_equal(early.final_net, early.snapshot));
}

TEST_CASE("empty dataset is rejected") {
  std::vector<float> x;
  std::vector<std::uint32_t> y;
  CHECK_THROWS_AS(train(Network::zeros(arch(2, {2}, 2)), x, y, TrainConfig{}), InputError);
}

TEST_CASE("predict ties go to the lowest class") {
  auto net = logit_net(2, {0.5f, 2.0f, 2.0f});
  std::vector<float> x(2, 0.0f);
  CHECK(predict(net, x, 1, kernels::Mode::reference) == std::vector<std::uint32_t>{1});
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "spursever_ckpt_test";
  std::filesystem::remove_all(dir);
  auto net = Network::initialize(arch(9, {4, 3}, 5), 77);
  save_checkpoint(dir, net, {77, 12});
  CheckpointInfo info;
  auto back = load_checkpoint(dir, &info);
  CHECK(bitwise_equal(net, back));
  CHECK(info.seed == 77);
  CHECK(info.epoch == 12);
  std::filesystem::resize_file(dir / "params.bin", 8);
  CHECK_THROWS(load_checkpoint(dir));
  std::filesystem::remove_all(dir);
}

}
