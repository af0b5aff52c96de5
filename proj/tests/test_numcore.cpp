#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <random>

#include "spikekour/checkpoint.hpp"
#include "spikekour/graph.hpp"
#include "spikekour/nn.hpp"
#include "test_util.hpp"

using namespace spikekour;
using namespace spikekour::num;

namespace {

Tensor t2(int r, int c, std::vector<float> v) { return Tensor({r, c}, std::move(v)); }

}  // namespace

TEST_CASE("affine matches hand arithmetic", "[numcore]") {
  Graph g;
  SECTION("identity weights") {
    Var y = g.affine(g.leaf(t2(1, 2, {1, 2})), g.leaf(t2(2, 2, {1, 0, 0, 1})),
                     g.leaf(Tensor({2}, {0, 0})));
    REQUIRE(g.value(y).data == std::vector<float>{1, 2});
  }
  SECTION("1x2 times 2x1 plus bias") {
    Var y = g.affine(g.leaf(t2(1, 2, {1, 1})), g.leaf(t2(2, 1, {2, 3})),
                     g.leaf(Tensor({1}, {1})));
    REQUIRE(g.value(y).data[0] == Catch::Approx(6.0));
  }
  SECTION("zero input broadcasts bias") {
    Var y = g.affine(g.leaf(Tensor({3, 2})), g.leaf(t2(2, 2, {5, 5, 5, 5})),
                     g.leaf(Tensor({2}, {0.5f, -1.5f})));
    for (int i = 0; i < 3; ++i) {
      REQUIRE(g.value(y).at2(i, 0) == 0.5f);
      REQUIRE(g.value(y).at2(i, 1) == -1.5f);
    }
  }
  SECTION("shape mismatch throws") {
    REQUIRE_THROWS_AS(g.affine(g.leaf(t2(1, 3, {1, 2, 3})), g.leaf(t2(2, 1, {2, 3})),
                               g.leaf(Tensor({1}, {0}))),
                      Error);
  }
}

TEST_CASE("conv2d matches hand arithmetic", "[numcore]") {
  Graph g;
  SECTION("1x1 kernel of value 1 sums channels") {
    Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    Var y = g.conv2d(g.leaf(x), g.leaf(Tensor({1, 2, 1, 1}, {1, 1})), 1, 0);
    REQUIRE(g.value(y).shape == std::vector<int>{1, 1, 2, 2});
    REQUIRE(g.value(y).data == std::vector<float>{11, 22, 33, 44});
  }
  SECTION("3x3 ones with 2x2 ones kernel gives all 4") {
    Var y = g.conv2d(g.leaf(Tensor({1, 1, 3, 3}, std::vector<float>(9, 1.0f))),
                     g.leaf(Tensor({1, 1, 2, 2}, std::vector<float>(4, 1.0f))), 1, 0);
    REQUIRE(g.value(y).shape == std::vector<int>{1, 1, 2, 2});
    for (float v : g.value(y).data) REQUIRE(v == 4.0f);
  }
  SECTION("3x3 kernel with pad 1 preserves shape") {
    Var y = g.conv2d(g.leaf(Tensor({2, 1, 5, 7})), g.leaf(Tensor({3, 1, 3, 3})), 1, 1);
    REQUIRE(g.value(y).shape == std::vector<int>{2, 3, 5, 7});
  }
  SECTION("kernel larger than padded input throws") {
    REQUIRE_THROWS_AS(g.conv2d(g.leaf(Tensor({1, 1, 2, 2})), g.leaf(Tensor({1, 1, 4, 4})), 1, 0),
                      Error);
  }
}

TEST_CASE("gru cell closed forms", "[numcore]") {
  SECTION("all params zero halves the hidden state") {
    ParamStore store;
    std::mt19937 rng(0);
    init_gru(store, "gru", 1, 1, rng);
    for (auto& [k, v] : store.params()) v = Tensor(v.shape);  // zero everything
    Graph g(&store);
    Var h = gru_cell(g, g.leaf(t2(1, 1, {0.3f})), g.leaf(t2(1, 1, {0.8f})), "gru");
    // z = r = sigmoid(0) = 0.5, n = tanh(0) = 0, h' = 0.5*0 + 0.5*h
    REQUIRE(g.value(h).data[0] == Catch::Approx(0.4).margin(1e-6));
  }
  SECTION("zero input and state stays zero") {
    ParamStore store;
    std::mt19937 rng(7);
    init_gru(store, "gru", 3, 4, rng);
    Graph g(&store);
    Var h = gru_cell(g, g.leaf(Tensor({2, 3})), g.leaf(Tensor({2, 4})), "gru");
    for (float v : g.value(h).data) REQUIRE(v == Catch::Approx(0.0).margin(1e-7));
  }
  SECTION("scalar cell matches the hand-evaluated equations") {
    ParamStore store;
    auto set = [&](const std::string& n, float v) { store.create(n, Tensor({1, 1}, {v})); };
    auto setb = [&](const std::string& n, float v) { store.create(n, Tensor({1}, {v})); };
    set("gru.z_x.w", 0.2f); setb("gru.z_x.b", 0.1f);
    set("gru.z_h.w", -0.3f); setb("gru.z_h.b", 0.0f);
    set("gru.r_x.w", 0.4f); setb("gru.r_x.b", -0.1f);
    set("gru.r_h.w", 0.2f); setb("gru.r_h.b", 0.0f);
    set("gru.n_x.w", 0.5f); setb("gru.n_x.b", 0.05f);
    set("gru.n_h.w", -0.2f); setb("gru.n_h.b", 0.15f);
    double x = 0.3, h = 0.8;
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double z = sig(0.2 * x + 0.1 - 0.3 * h);
    double r = sig(0.4 * x - 0.1 + 0.2 * h);
    double n = std::tanh(0.5 * x + 0.05 + r * (-0.2 * h + 0.15));
    double expected = (1.0 - z) * n + z * h;

    Graph g(&store);
    Var out = gru_cell(g, g.leaf(t2(1, 1, {0.3f})), g.leaf(t2(1, 1, {0.8f})), "gru");
    REQUIRE(g.value(out).data[0] == Catch::Approx(expected).margin(1e-5));
  }
  SECTION("saturated update gate preserves the hidden state") {
    ParamStore store;
    std::mt19937 rng(3);
    init_gru(store, "gru", 2, 3, rng);
    store.get("gru.z_x.b") = Tensor({3}, {30.0f, 30.0f, 30.0f});
    Graph g(&store);
    Tensor hv = uniform({1, 3}, -0.9f, 0.9f, rng);
    Var h = gru_cell(g, g.leaf(uniform({1, 2}, -1, 1, rng)), g.leaf(hv), "gru");
    for (int j = 0; j < 3; ++j)
      REQUIRE(g.value(h).at2(0, j) == Catch::Approx(hv.at2(0, j)).margin(1e-3));
  }
}

TEST_CASE("mse matches hand arithmetic", "[numcore]") {
  Graph g;
  SECTION("equal inputs give zero") {
    Var l = g.mse(g.leaf(t2(2, 2, {1, 2, 3, 4})), g.leaf(t2(2, 2, {1, 2, 3, 4})));
    REQUIRE(g.value(l).data[0] == 0.0f);
  }
  SECTION("identity vs zeros gives 0.5") {
    Var l = g.mse(g.leaf(t2(2, 2, {1, 0, 0, 1})), g.leaf(Tensor({2, 2})));
    REQUIRE(g.value(l).data[0] == Catch::Approx(0.5));
  }
  SECTION("singleton difference squared") {
    Var l = g.mse(g.leaf(Tensor({1}, {3})), g.leaf(Tensor({1}, {1})));
    REQUIRE(g.value(l).data[0] == Catch::Approx(4.0));
  }
  SECTION("shape mismatch throws") {
    REQUIRE_THROWS_AS(g.mse(g.leaf(Tensor({2})), g.leaf(Tensor({3}))), Error);
  }
}

TEST_CASE("backward chain rule and tape rules", "[numcore]") {
  SECTION("1x1 regression gradient is 2(Wx-y)x") {
    ParamStore store;
    store.create("w", Tensor({1, 1}, {2.0f}));
    store.create("b", Tensor({1}));
    Graph g(&store);
    Var pred = g.affine(g.leaf(t2(1, 1, {3.0f})), g.param("w"), g.param("b"));
    Var loss = g.mse(pred, g.leaf(t2(1, 1, {5.0f})));
    store.zero_grads();
    g.backward(loss);
    REQUIRE(store.grad("w").data[0] == Catch::Approx(6.0));
    REQUIRE(store.grad("b").data[0] == Catch::Approx(2.0));
  }
  SECTION("parameters unreachable from the loss get zero gradient") {
    ParamStore store;
    store.create("used", Tensor({1, 1}, {1.0f}));
    store.create("unused", Tensor({1, 1}, {1.0f}));
    Graph g(&store);
    Var loss = g.mse(g.affine(g.leaf(t2(1, 1, {1.0f})), g.param("used"), g.leaf(Tensor({1}))),
                     g.leaf(t2(1, 1, {0.0f})));
    store.zero_grads();
    g.backward(loss);
    REQUIRE(store.grad("unused").data[0] == 0.0f);
    REQUIRE(store.grad("used").data[0] != 0.0f);
  }
  SECTION("backward twice without a new forward throws") {
    ParamStore store;
    store.create("w", Tensor({1, 1}, {2.0f}));
    Graph g(&store);
    Var loss = g.mse(g.affine(g.leaf(t2(1, 1, {3.0f})), g.param("w"), g.leaf(Tensor({1}))),
                     g.leaf(t2(1, 1, {5.0f})));
    store.zero_grads();
    g.backward(loss);
    REQUIRE_THROWS_AS(g.backward(loss), Error);
  }
  SECTION("backward on a sum equals the sum of separate backwards") {
    auto build = [](ParamStore& store) {
      std::mt19937 rng(11);
      store.create("w", uniform({3, 2}, -1, 1, rng));
      store.create("b", uniform({2}, -0.5f, 0.5f, rng));
    };
    auto forward_two = [](Graph& g, ParamStore&) {
      Tensor x1({2, 3}, {0.3f, -0.2f, 0.5f, 0.1f, 0.9f, -0.7f});
      Tensor x2({1, 3}, {-0.4f, 0.6f, 0.2f});
      Var l1 = g.mse(g.affine(g.leaf(x1), g.param("w"), g.param("b")), g.leaf(Tensor({2, 2}, 0.1f)));
      Var l2 = g.mse(g.affine(g.leaf(x2), g.param("w"), g.param("b")), g.leaf(Tensor({1, 2}, -0.3f)));
      return std::pair<Var, Var>(l1, l2);
    };
    ParamStore a;
    build(a);
    {
      Graph g(&a);
      auto [l1, l2] = forward_two(g, a);
      a.zero_grads();
      g.backward(g.add(l1, l2));
    }
    ParamStore b;
    build(b);
    {
      b.zero_grads();
      Graph g1(&b);
      auto [l1, l2] = forward_two(g1, b);
      g1.backward(l1);
      Graph g2(&b);
      auto [m1, m2] = forward_two(g2, b);
      (void)m1;
      g2.backward(m2);
    }
    for (auto& [name, ga] : a.grads()) {
      const Tensor& gb = b.grads().at(name);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        REQUIRE(ga.data[i] == Catch::Approx(gb.data[i]).margin(1e-6));
    }
  }
}

TEST_CASE("analytic gradients match finite differences", "[numcore]") {
  // Composite net touching affine, conv, gru, sigmoid/tanh, concat, mse.
  ParamStore store;
  std::mt19937 rng(42);
  init_conv(store, "c1", 1, 2, 3, rng);
  init_linear(store, "fc", 2 * 2 * 2, 3, rng);
  init_gru(store, "gru", 3, 3, rng);
  init_linear(store, "head", 6, 2, rng);

  Tensor img = uniform({2, 1, 4, 4}, -1, 1, rng);
  Tensor h0 = uniform({2, 3}, -0.5f, 0.5f, rng);
  Tensor target = uniform({2, 2}, -1, 1, rng);

  auto forward = [&](ParamStore& s) {
    Graph g(&s);
    Var x = g.conv2d(g.leaf(img), g.param("c1.k"), 1, 0);
    x = g.tanh_(x);
    x = g.reshape(x, {2, 2 * 2 * 2});
    x = g.sigmoid(linear(g, x, "fc"));
    Var h = gru_cell(g, x, g.leaf(h0), "gru");
    Var out = linear(g, g.concat_cols(h, x), "head");
    return static_cast<double>(g.value(g.mse(out, g.leaf(target))).data[0]);
  };
  auto backward = [&](ParamStore& s) {
    Graph g(&s);
    Var x = g.conv2d(g.leaf(img), g.param("c1.k"), 1, 0);
    x = g.tanh_(x);
    x = g.reshape(x, {2, 2 * 2 * 2});
    x = g.sigmoid(linear(g, x, "fc"));
    Var h = gru_cell(g, x, g.leaf(h0), "gru");
    Var out = linear(g, g.concat_cols(h, x), "head");
    g.backward(g.mse(out, g.leaf(target)));
  };

  auto rep = testutil::finite_diff_check(store, forward, backward);
  INFO("worst " << rep.worst_param << " violation ratio " << rep.worst << " over " << rep.checked);
  REQUIRE(rep.checked > 50);
  REQUIRE(rep.worst < 1.0);
}

TEST_CASE("adam update", "[numcore]") {
  SECTION("zero gradient leaves parameters unchanged") {
    ParamStore store;
    store.create("w", Tensor({2, 2}, {1, 2, 3, 4}));
    store.zero_grads();
    adam_step(store, {});
    REQUIRE(store.get("w").data == std::vector<float>{1, 2, 3, 4});
  }
  SECTION("first step moves by about -lr*sign(g)") {
    ParamStore store;
    store.create("w", Tensor({2}, {1.0f, -1.0f}));
    store.zero_grads();
    store.grad("w") = Tensor({2}, {2.0f, -0.5f});
    AdamConfig cfg;
    cfg.lr = 0.01f;
    adam_step(store, cfg);
    REQUIRE(store.get("w").data[0] == Catch::Approx(1.0 - 0.01).margin(1e-6));
    REQUIRE(store.get("w").data[1] == Catch::Approx(-1.0 + 0.01).margin(1e-6));
  }
  SECTION("constant gradient keeps moving against it") {
    ParamStore store;
    store.create("w", Tensor({1}, {0.0f}));
    float prev = 0.0f;
    for (int i = 0; i < 3; ++i) {
      store.zero_grads();
      store.grad("w") = Tensor({1}, {1.5f});
      adam_step(store, {});
      REQUIRE(store.get("w").data[0] < prev);
      prev = store.get("w").data[0];
    }
  }
  SECTION("missing gradients throw") {
    ParamStore store;
    store.create("w", Tensor({1}, {0.0f}));
    REQUIRE_THROWS_AS(adam_step(store, {}), Error);
  }
}

TEST_CASE("forward passes are deterministic for a fixed seed", "[numcore]") {
  auto run = [](uint64_t seed) {
    ParamStore store;
    std::mt19937 rng(make_rng(seed, "init"));
    init_linear(store, "l1", 4, 8, rng);
    init_linear(store, "l2", 8, 2, rng);
    Graph g(&store);
    Var x = g.leaf(uniform({3, 4}, -1, 1, rng));
    Var y = linear(g, g.tanh_(linear(g, x, "l1")), "l2");
    return g.value(y).data;
  };
  auto a = run(123);
  auto b = run(123);
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
  REQUIRE(run(124) != a);
}

TEST_CASE("checkpoint round-trips bit-exactly", "[numcore]") {
  ParamStore store;
  std::mt19937 rng(99);
  store.create("enc.w", uniform({7, 5}, -2, 2, rng));
  store.create("enc.b", uniform({5}, -1, 1, rng));
  store.create("odd", Tensor({1}, {1e-37f}));

  auto dir = std::filesystem::temp_directory_path() / "spikekour_ckpt_test";
  std::filesystem::create_directories(dir);
  std::string prefix = (dir / "net").string();
  save_checkpoint(store, prefix);
  ParamStore back = load_checkpoint(prefix);

  REQUIRE(back.params().size() == store.params().size());
  for (auto& [name, t] : store.params()) {
    REQUIRE(back.has(name));
    REQUIRE(back.get(name).shape == t.shape);
    REQUIRE(std::memcmp(back.get(name).data.data(), t.data.data(),
                        t.data.size() * sizeof(float)) == 0);
  }

  SECTION("manifest diff reports shape changes") {
    ParamStore other;
    other.create("enc.w", Tensor({7, 4}));
    other.create("enc.b", Tensor({5}));
    std::string diff = manifest_diff(other, back);
    REQUIRE(diff.find("shape mismatch: enc.w") != std::string::npos);
    REQUIRE(diff.find("unexpected: odd") != std::string::npos);
  }
}
