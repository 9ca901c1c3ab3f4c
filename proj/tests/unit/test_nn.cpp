#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "scatterbench/errors.hpp"
#include "scatterbench/nn/adam.hpp"
#include "scatterbench/nn/checkpoint.hpp"
#include "scatterbench/nn/net.hpp"
#include "scatterbench/resample.hpp"
#include "support/gradcheck.hpp"

using namespace scatterbench;
using namespace scatterbench::nn;
using namespace scatterbench::testing;

namespace {

Net single(Layer layer, int channels) {
  Net net(channels);
  net.add(layer);
  net.init_weights(3);
  return net;
}

constexpr double kTolerance = 1e-4;
constexpr int kTrials = 20;

}  // namespace

TEST_CASE("gradient check: every layer kind on random shapes") {
  for (GradLayer kind : kAllGradLayers) {
    std::mt19937 rng(11 + static_cast<unsigned>(kind));
    for (int t = 0; t < kTrials; ++t) {
      const GradCheck g = layer_trial(kind, t, rng);
      CAPTURE(name(kind));
      CAPTURE(t);
      CHECK(g.worst_input < kTolerance);
      CHECK(g.worst_param < kTolerance);
    }
  }
}

TEST_CASE("gradient check: composite graph with skip, upsample-to-size and concat") {
  std::mt19937 rng(14);
  std::uniform_int_distribution<int> dim(4, 9);
  for (int t = 0; t < kTrials; ++t) {
    const int c = 1 + t % 2;
    Net net(c);
    const int a = net.add(Conv2d{3, 3, c, 3, 1, 1, false});
    net.add(BatchNorm{3});
    const int act = net.add(LeakyReLU{0.2f});
    net.add(MaxPool2{});
    const int deep = net.add(Conv2d{3, 3, 3, 4, 1, 1, true});
    const int up = net.add(BilinearUp2{}, {deep, act});
    net.add(Concat{}, {up, a});
    net.add(Conv2d{1, 1, 7, 1, 1, 0, true});
    net.init_weights(static_cast<std::uint64_t>(t));
    randomize_bn(net, rng);
    const Shape4 s{2, static_cast<std::size_t>(c), static_cast<std::size_t>(dim(rng)),
                   static_cast<std::size_t>(dim(rng))};
    const GradCheck g = check_gradients(net, random_tensor(s, rng), rng, 1e-3);
    CAPTURE(t);
    // Float32 rounding compounds through eight layers; each layer alone meets kTolerance.
    CHECK(g.worst_input < 1e-3);
    CHECK(g.worst_param < 1e-3);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Net net(2);
  net.add(Conv2d{3, 3, 2, 3, 1, 1, true});
  net.add(BatchNorm{3});
  net.add(LeakyReLU{});
  net.init_weights(1);
  std::mt19937 rng(1);
  const Tensor4 x = random_tensor({2, 2, 5, 5}, rng);
  net.zero_grad();
  const Tensor4 y = net.forward(x, Mode::Train);
  const Tensor4 dx = net.backward(Tensor4(y.shape()));
  for (float v : dx.values()) CHECK(v == 0.0f);
  for (ParamRef p : net.parameters()) {
    for (float g : p.grad) CHECK(g == 0.0f);
  }
}

TEST_CASE("backward without a cached forward is a state error") {
  Net net = single(Conv2d{3, 3, 1, 1, 1, 1, false}, 1);
  CHECK_THROWS_AS(net.backward(Tensor4({1, 1, 4, 4})), StateError);
  net.forward(Tensor4({1, 1, 4, 4}), Mode::Eval);
  CHECK_THROWS_AS(net.backward(Tensor4({1, 1, 4, 4})), StateError);
}

TEST_CASE("mse loss") {
  std::mt19937 rng(2);
  const Tensor4 a = random_tensor({2, 1, 3, 3}, rng);
  const Loss same = mse_loss(a, a);
  CHECK(same.value == 0.0);
  for (float g : same.grad.values()) CHECK(g == 0.0f);
  Tensor4 b = a;
  for (float& v : b.values()) v += 0.5f;
  const Loss off = mse_loss(b, a);
  CHECK(off.value == doctest::Approx(0.25));
  for (float g : off.grad.values()) CHECK(g == doctest::Approx(2.0 * 0.5 / 18.0));
}

TEST_CASE("forward layer semantics") {
  SUBCASE("delta kernel conv is the identity") {
    Net net = single(Conv2d{3, 3, 1, 1, 1, 1, false}, 1);
    auto& wts = net.state(0).weight;
    std::fill(wts.begin(), wts.end(), 0.0f);
    wts[4] = 1.0f;
    std::mt19937 rng(3);
    const Tensor4 x = random_tensor({1, 1, 8, 8}, rng);
    const Tensor4 y = net.forward(x, Mode::Eval);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
  }
  SUBCASE("max pool keeps block maxima") {
    Net net = single(MaxPool2{}, 1);
    Tensor4 x({1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) x.values()[i] = static_cast<float>(i);
    const Tensor4 y = net.forward(x, Mode::Eval);
    REQUIRE(y.shape() == Shape4{1, 1, 2, 2});
    CHECK(y(0, 0, 0, 0) == 5.0f);
    CHECK(y(0, 0, 0, 1) == 7.0f);
    CHECK(y(0, 0, 1, 0) == 13.0f);
    CHECK(y(0, 0, 1, 1) == 15.0f);
    CHECK(net.output_shape({1, 1, 5, 7}) == Shape4{1, 1, 2, 3});
  }
  SUBCASE("leaky relu") {
    Net net = single(LeakyReLU{0.01f}, 1);
    Tensor4 x({1, 1, 1, 3});
    x.values()[0] = -1.0f;
    x.values()[1] = 0.0f;
    x.values()[2] = 2.0f;
    const Tensor4 y = net.forward(x, Mode::Eval);
    CHECK(y.values()[0] == doctest::Approx(-0.01));
    CHECK(y.values()[1] == 0.0f);
    CHECK(y.values()[2] == 2.0f);
  }
  SUBCASE("bilinear upsampling then bilinear halving preserves constants") {
    Net net = single(BilinearUp2{}, 1);
    const Tensor4 y = net.forward(Tensor4({1, 1, 5, 3}, 2.5f), Mode::Eval);
    REQUIRE(y.shape() == Shape4{1, 1, 10, 6});
    Image2D img(10, 6, std::vector<float>(y.values().begin(), y.values().end()));
    const Image2D down = resample::resize(img, 5, 3, {resample::Kind::Bilinear, false});
    for (float v : down.pixels()) CHECK(v == 2.5f);
  }
  SUBCASE("bilinear upsampling matches the resample module") {
    Net net = single(BilinearUp2{}, 1);
    std::mt19937 rng(4);
    const Tensor4 x = random_tensor({1, 1, 4, 6}, rng);
    const Tensor4 y = net.forward(x, Mode::Eval);
    const Image2D ref = resample::resize(Image2D(4, 6, std::vector<float>(x.values().begin(), x.values().end())),
                                         8, 12, {resample::Kind::Bilinear, false});
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == doctest::Approx(ref.pixels()[i]).epsilon(1e-6));
  }
  SUBCASE("batch norm eval uses running statistics") {
    Net net = single(BatchNorm{1}, 1);
    net.state(0).running_mean[0] = 2.0f;
    net.state(0).running_var[0] = 4.0f;
    const Tensor4 y = net.forward(Tensor4({1, 1, 2, 2}, 6.0f), Mode::Eval);
    for (float v : y.values()) CHECK(v == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
  }
  SUBCASE("batch norm train updates running statistics") {
    Net net = single(BatchNorm{1, 0.1f}, 1);
    Tensor4 x({2, 1, 1, 2});
    const float vals[] = {1.0f, 2.0f, 3.0f, 6.0f};
    std::copy(std::begin(vals), std::end(vals), x.values().begin());
    net.forward(x, Mode::Train);
    CHECK(net.state(0).running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 3.0));
    // Unbiased batch variance (14/3).
    CHECK(net.state(0).running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 14.0 / 3.0));
  }
}

TEST_CASE("graph validation names the failing layer") {
  Net net(3);
  net.add(Conv2d{3, 3, 2, 4, 1, 1, false});
  CHECK_THROWS_AS(net.output_shape({1, 3, 8, 8}), InvalidArgument);
  try {
    net.output_shape({1, 3, 8, 8});
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  Net bad(1);
  CHECK_THROWS_AS(bad.add(Concat{}, {kNetInput}), InvalidArgument);
  CHECK_THROWS_AS(bad.add(LeakyReLU{}, {3}), InvalidArgument);
  Net pool(1);
  pool.add(MaxPool2{});
  CHECK_THROWS_AS(pool.output_shape({1, 1, 1, 4}), InvalidArgument);
}

TEST_CASE("conv is linear in its input and eval is deterministic") {
  Net net = single(Conv2d{3, 3, 2, 3, 1, 1, false}, 2);
  std::mt19937 rng(5);
  const Tensor4 a = random_tensor({1, 2, 6, 5}, rng);
  const Tensor4 b = random_tensor({1, 2, 6, 5}, rng);
  Tensor4 mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = 3.0f * a.values()[i] - 2.0f * b.values()[i];
  const Tensor4 ya = net.forward(a, Mode::Eval);
  const Tensor4 yb = net.forward(b, Mode::Eval);
  const Tensor4 ym = net.forward(mix, Mode::Eval);
  for (std::size_t i = 0; i < ym.size(); ++i) {
    CHECK(ym.values()[i] == doctest::Approx(3.0 * ya.values()[i] - 2.0 * yb.values()[i]).epsilon(1e-5));
  }
  const Tensor4 again = net.forward(a, Mode::Eval);
  CHECK(std::equal(again.values().begin(), again.values().end(), ya.values().begin()));
}

TEST_CASE("non-finite activations are reported") {
  Net net = single(Conv2d{1, 1, 1, 1, 1, 0, false}, 1);
  net.set_check_finite(true);
  Tensor4 x({1, 1, 2, 2}, 1.0f);
  x.values()[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(net.forward(x, Mode::Eval), NumericError);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves weights unchanged") {
    std::vector<float> w{1.0f, -2.0f};
    std::vector<float> g{0.0f, 0.0f};
    Adam opt;
    opt.step({{w, g}}, 0.1);
    CHECK(w[0] == 1.0f);
    CHECK(w[1] == -2.0f);
  }
  SUBCASE("first step moves by the learning rate") {
    std::vector<float> w{0.5f};
    std::vector<float> g{1.0f};
    Adam opt;
    opt.step({{w, g}}, 0.1);
    // m_hat = 1, v_hat = 1: w -= 0.1 * 1 / (1 + 1e-8)
    CHECK(w[0] == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("second step follows the hand-evaluated recurrence") {
    std::vector<float> w{0.0f};
    std::vector<float> g{1.0f};
    Adam opt;
    opt.step({{w, g}}, 0.01);
    g[0] = -2.0f;
    opt.step({{w, g}}, 0.01);
    const double m = 0.9 * (0.1 * 1.0) + 0.1 * -2.0;
    const double v = 0.999 * (0.001 * 1.0) + 0.001 * 4.0;
    const double mh = m / (1.0 - 0.81);
    const double vh = v / (1.0 - 0.999 * 0.999);
    CHECK(w[0] == doctest::Approx(-0.01 - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-6));
  }
  SUBCASE("layout changes are rejected") {
    std::vector<float> w{1.0f, 2.0f};
    std::vector<float> g{1.0f, 1.0f};
    Adam opt;
    opt.step({{w, g}}, 0.1);
    std::vector<float> w3{1.0f, 2.0f, 3.0f};
    std::vector<float> g3{1.0f, 1.0f, 1.0f};
    CHECK_THROWS_AS(opt.step({{w3, g3}}, 0.1), InvalidArgument);
    CHECK_THROWS_AS(opt.step({{w, g}, {w, g}}, 0.1), InvalidArgument);
  }
  SUBCASE("identical runs give identical trajectories") {
    auto run = [] {
      Net net(1);
      net.add(Conv2d{3, 3, 1, 2, 1, 1, true});
      net.add(BatchNorm{2});
      net.init_weights(9);
      std::mt19937 rng(9);
      const Tensor4 x = random_tensor({2, 1, 5, 5}, rng);
      const Tensor4 t = random_tensor({2, 2, 5, 5}, rng);
      Adam opt;
      for (int i = 0; i < 5; ++i) {
        net.zero_grad();
        const Loss l = mse_loss(net.forward(x, Mode::Train), t);
        net.backward(l.grad);
        opt.step(net.parameters(), 1e-2);
      }
      return net.state(0).weight;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("cost accounting") {
  Net conv = single(Conv2d{3, 3, 1, 16, 1, 1, false}, 1);
  const CostReport r = count_cost(conv, {1, 1, 40, 32});
  CHECK(r.flops == 368640u);
  CHECK(r.params == 144u);
  CHECK(count_cost(conv, {1, 1, 20, 16}).flops * 4 == r.flops);
  CHECK(count_cost(conv, {3, 1, 40, 32}).flops == 3 * r.flops);

  const CostReport empty = count_cost(Net(1), {1, 1, 8, 8});
  CHECK(empty.params == 0);
  CHECK(empty.flops == 0);

  Net net(1);
  net.add(Conv2d{3, 3, 1, 4, 1, 1, true});
  net.add(BatchNorm{4});
  net.add(LeakyReLU{});
  net.add(MaxPool2{});
  net.add(BilinearUp2{});
  const CostReport all = count_cost(net, {1, 1, 8, 8});
  const std::uint64_t conv_flops = 2ull * 9 * 4 * 64 + 4 * 64;
  const std::uint64_t expected = conv_flops + 2 * 4 * 64 + 4 * 64 + 3 * 4 * 16 + 7 * 4 * 64;
  CHECK(all.flops == expected);
  CHECK(all.params == 36 + 4 + 8);
  std::uint64_t fsum = 0;
  std::uint64_t psum = 0;
  for (const LayerCost& l : all.per_layer) {
    fsum += l.flops;
    psum += l.params;
  }
  CHECK(fsum == all.flops);
  CHECK(psum == all.params);
  CHECK(net.parameter_count() == all.params);
}

TEST_CASE("profile reports time and allocation") {
  Net net = single(Conv2d{3, 3, 1, 8, 1, 1, false}, 1);
  const CostReport r = profile(net, Tensor4({2, 1, 16, 16}, 1.0f));
  CHECK(r.wall_clock_ms >= 0.0);
  CHECK(r.peak_alloc_bytes >= 2u * 8 * 16 * 16 * sizeof(float));
  CHECK(r.flops == count_cost(net, {2, 1, 16, 16}).flops);
}

TEST_CASE("SCW1 round-trip is bit-exact") {
  Net net(3);
  const int a = net.add(Conv2d{3, 3, 3, 4, 1, 1, false});
  net.add(BatchNorm{4, 0.2f, 1e-3f});
  const int b = net.add(LeakyReLU{0.05f});
  net.add(MaxPool2{});
  const int up = net.add(BilinearUp2{}, {net.add(Conv2d{3, 3, 4, 4, 1, 1, false}), b});
  net.add(Concat{}, {up, a});
  net.add(Conv2d{1, 1, 8, 1, 1, 0, true});
  net.init_weights(7);
  std::mt19937 rng(7);
  net.forward(random_tensor({3, 3, 6, 6}, rng), Mode::Train);
  net.clear_cache();

  std::stringstream ss;
  write_scw1(ss, net);
  CHECK(ss.str().substr(0, 4) == "SCW1");
  Net back = read_scw1(ss);
  REQUIRE(back.size() == net.size());
  CHECK(back.input_channels() == 3);
  for (std::size_t i = 0; i < net.size(); ++i) {
    CHECK(layer_name(back.node(i).layer) == layer_name(net.node(i).layer));
    CHECK(back.node(i).inputs == net.node(i).inputs);
    CHECK(back.state(i).weight == net.state(i).weight);
    CHECK(back.state(i).bias == net.state(i).bias);
    CHECK(back.state(i).running_mean == net.state(i).running_mean);
    CHECK(back.state(i).running_var == net.state(i).running_var);
  }
  const Tensor4 x = random_tensor({1, 3, 6, 6}, rng);
  const Tensor4 y0 = net.forward(x, Mode::Eval);
  const Tensor4 y1 = back.forward(x, Mode::Eval);
  CHECK(std::equal(y0.values().begin(), y0.values().end(), y1.values().begin()));

  std::stringstream again;
  write_scw1(again, back);
  CHECK(again.str() == ss.str());

  std::istringstream bad("SCW2");
  CHECK_THROWS_AS(read_scw1(bad), IoError);
  std::istringstream truncated(ss.str().substr(0, ss.str().size() - 3));
  CHECK_THROWS_AS(read_scw1(truncated), IoError);
}
