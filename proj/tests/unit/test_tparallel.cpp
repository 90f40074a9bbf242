#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"
#include "edgelam/tparallel.hpp"

using namespace edgelam;
using namespace edgelam::tparallel;

namespace {

struct DeviceSpec {
  double compute;
  double storage;
  netsim::RateSchedule rate;
};

netsim::Topology star(const std::vector<DeviceSpec>& devs, double server_flops = 1e9) {
  std::vector<netsim::NodeSpec> nodes{{"server", server_flops, 1e12, netsim::NodeRole::server}};
  std::vector<netsim::LinkState> links;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    const std::string id = "d" + std::to_string(i);
    nodes.push_back({id, devs[i].compute, devs[i].storage, netsim::NodeRole::device});
    links.push_back({id, "server", devs[i].rate, 0.001 * static_cast<double>(i)});
  }
  return netsim::Topology(nodes, links, 0);
}

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.flat()) v = gaussian(rng, 1.0);
  return m;
}

// Independent oracle: per-device finish time written out from the netsim
// primitives, minimized over every composition of N.
double finish_time(const GemmTask& t, const netsim::Topology& topo, const std::string& dev,
                   std::size_t w) {
  if (w == 0) return 0.0;
  const double down_bytes = 4.0 * static_cast<double>(t.k * w + t.m * t.k);
  const double up_bytes = 4.0 * static_cast<double>(t.m * w);
  const double storage = topo.node(dev).storage;
  if (4.0 * static_cast<double>((t.k + t.m) * w) > storage) return std::numeric_limits<double>::infinity();
  const double down = netsim::route_latency(topo, "server", dev, down_bytes, 0.0);
  const double comp = 2.0 * static_cast<double>(t.m * t.k * w) / topo.node(dev).compute_rate;
  const double up = netsim::route_latency(topo, dev, "server", up_bytes, down + comp);
  return down + comp + up;
}

struct BruteResult {
  double latency;
  std::vector<std::size_t> widths;
};

BruteResult brute_force(const GemmTask& t, const netsim::Topology& topo,
                        const std::vector<std::string>& devs) {
  BruteResult best{std::numeric_limits<double>::infinity(), {}};
  std::vector<std::size_t> cur(devs.size());
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
    if (i == devs.size()) {
      if (left != 0) return;
      double worst = 0.0;
      for (std::size_t j = 0; j < devs.size(); ++j) worst = std::max(worst, finish_time(t, topo, devs[j], cur[j]));
      if (worst < best.latency) {
        best.latency = worst;
        best.widths = cur;
      }
      return;
    }
    for (std::size_t w = 0; w <= left; ++w) {
      cur[i] = w;
      rec(i + 1, left - w);
    }
  };
  rec(0, t.n);
  const double mn = static_cast<double>(t.m * t.n);
  best.latency += (mn + 4.0 * mn) / topo.node("server").compute_rate;
  return best;
}

std::vector<DeviceSpec> random_devices(Rng& rng, std::size_t count, bool varying) {
  std::vector<DeviceSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double compute = 1e5 * (1.0 + 9.0 * uniform01(rng));
    const double storage = 4.0 * 16.0 * static_cast<double>(2 + rng() % 16);
    netsim::RateSchedule rate = netsim::RateSchedule::constant(1e4 * (1.0 + 9.0 * uniform01(rng)));
    if (varying) {
      rate = netsim::RateSchedule::steps({{0.0, 1e4 * (1.0 + uniform01(rng))},
                                          {0.01 + 0.05 * uniform01(rng), 1e4 * (1.0 + 9.0 * uniform01(rng))},
                                          {0.2, 5e3}});
    }
    out.push_back({compute, storage, rate});
  }
  return out;
}

std::vector<std::size_t> widths_of(const SplitPlan& plan, const std::vector<std::string>& devs) {
  std::vector<std::size_t> w(devs.size(), 0);
  for (const auto& a : plan.assignments)
    for (std::size_t i = 0; i < devs.size(); ++i)
      if (devs[i] == a.device) w[i] = a.width;
  return w;
}

}  // namespace

TEST_CASE("plan_split small examples") {
  SUBCASE("single device takes everything") {
    const auto topo = star({{1e6, 1e9, netsim::RateSchedule::constant(1e6)}});
    const auto plan = plan_split({8, 8, 12}, topo, "server");
    REQUIRE(plan.assignments.size() == 1);
    CHECK(plan.assignments[0].width == 12);
    CHECK(plan.exact);
  }
  SUBCASE("two identical devices split evenly") {
    std::vector<netsim::NodeSpec> nodes{{"server", 1e9, 1e12, netsim::NodeRole::server},
                                        {"a", 1e6, 1e9, netsim::NodeRole::device},
                                        {"b", 1e6, 1e9, netsim::NodeRole::device}};
    std::vector<netsim::LinkState> links{{"a", "server", netsim::RateSchedule::constant(1e6), 0.0},
                                         {"b", "server", netsim::RateSchedule::constant(1e6), 0.0}};
    netsim::Topology topo(nodes, links, 0);
    auto plan = plan_split({8, 8, 12}, topo, "server");
    REQUIRE(plan.assignments.size() == 2);
    CHECK(plan.assignments[0].device == "a");
    CHECK(plan.assignments[0].width == 6);
    CHECK(plan.assignments[1].width == 6);
    plan = plan_split({8, 8, 13}, topo, "server");
    CHECK(plan.assignments[0].width == 7);
    CHECK(plan.assignments[1].width == 6);
  }
  SUBCASE("three heterogeneous devices match brute force") {
    const auto topo = star({{1e5, 1e9, netsim::RateSchedule::constant(2e4)},
                            {4e5, 1e9, netsim::RateSchedule::constant(1e4)},
                            {2e5, 1e9, netsim::RateSchedule::constant(8e4)}});
    const GemmTask task{8, 8, 12};
    const auto plan = plan_split(task, topo, "server");
    const auto brute = brute_force(task, topo, {"d0", "d1", "d2"});
    CHECK(plan.predicted_latency_s == brute.latency);
    CHECK(plan.total_width() == 12);
  }
}

TEST_CASE("plan_split errors") {
  const auto topo = star({{1e6, 100.0, netsim::RateSchedule::constant(1e6)}});
  try {
    plan_split({8, 8, 12}, topo, "server");
    FAIL("expected infeasible-storage");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::infeasible_storage);
  }
  const auto small = star({{1e6, 4.0 * 16 * 5, netsim::RateSchedule::constant(1e6)}});
  CHECK_THROWS_AS(plan_split({8, 8, 12}, small, "server"), Error);
  CHECK(plan_split({8, 8, 5}, small, "server").total_width() == 5);
  CHECK_THROWS_AS(plan_split({0, 8, 5}, small, "server"), Error);
}

TEST_CASE("plan_split is exact on random small topologies") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t count = 1 + rng() % 4;
    const auto devs = random_devices(rng, count, trial % 2 == 1);
    const auto topo = star(devs);
    const GemmTask task{1 + rng() % 8, 1 + rng() % 8, 1 + rng() % 16};
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < count; ++i) ids.push_back("d" + std::to_string(i));
    const auto brute = brute_force(task, topo, ids);
    if (std::isinf(brute.latency)) {
      CHECK_THROWS_AS(plan_split(task, topo, "server"), Error);
      continue;
    }
    const auto plan = plan_split(task, topo, "server");
    CHECK(plan.predicted_latency_s == brute.latency);
    for (const auto& a : plan.assignments) {
      CHECK(a.width >= 1);
      CHECK(shard_storage_bytes(task, a.width) <= topo.node(a.device).storage);
    }
    CHECK(plan.total_width() == task.n);
  }
}

TEST_CASE("threshold search agrees with enumeration beyond the enumeration limit") {
  Rng rng(77);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<DeviceSpec> devs;
    for (int i = 0; i < 4; ++i) {
      devs.push_back({1e6 * (1 + 4 * uniform01(rng)), 1e9,
                      netsim::RateSchedule::constant(1e5 * (1 + 9 * uniform01(rng)))});
    }
    const auto topo = star(devs);
    const GemmTask task{4, 4, 300};  // C(303, 3) > 1e6 compositions
    const auto plan = plan_split(task, topo, "server");
    // Table-driven brute force over all compositions.
    std::vector<std::vector<double>> f(4);
    for (int i = 0; i < 4; ++i)
      for (std::size_t w = 0; w <= task.n; ++w) f[i].push_back(finish_time(task, topo, "d" + std::to_string(i), w));
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_w;
    for (std::size_t a = task.n + 1; a-- > 0;)
      for (std::size_t b = task.n - a + 1; b-- > 0;)
        for (std::size_t c = task.n - a - b + 1; c-- > 0;) {
          const std::size_t d = task.n - a - b - c;
          const double v = std::max({f[0][a], f[1][b], f[2][c], f[3][d]});
          if (v < best) {
            best = v;
            best_w = {a, b, c, d};
          }
        }
    const double mn = static_cast<double>(task.m * task.n);
    CHECK(plan.predicted_latency_s == best + 5.0 * mn / 1e9);
    CHECK(widths_of(plan, {"d0", "d1", "d2", "d3"}) == best_w);
  }
}

TEST_CASE("greedy fallback for many devices") {
  SUBCASE("proportional to compute rate") {
    std::vector<DeviceSpec> devs;
    for (int i = 0; i < 6; ++i) devs.push_back({1e6 * (i % 2 == 0 ? 1.0 : 3.0), 1e9, netsim::RateSchedule::constant(1e6)});
    const auto topo = star(devs);
    const auto plan = plan_split({4, 4, 48}, topo, "server");
    CHECK_FALSE(plan.exact);
    const auto w = widths_of(plan, {"d0", "d1", "d2", "d3", "d4", "d5"});
    CHECK(w == std::vector<std::size_t>{4, 12, 4, 12, 4, 12});
  }
  SUBCASE("storage repair keeps every shard within bounds") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const auto devs = random_devices(rng, 5 + rng() % 6, false);
      const auto topo = star(devs);
      const GemmTask task{8, 8, 1 + rng() % 40};
      try {
        const auto plan = plan_split(task, topo, "server");
        CHECK(plan.total_width() == task.n);
        for (const auto& a : plan.assignments) {
          CHECK(shard_storage_bytes(task, a.width) <= topo.node(a.device).storage);
        }
      } catch (const Error& e) {
        CHECK(e.code() == Errc::infeasible_storage);
        double cap = 0;
        for (const auto& d : devs) cap += static_cast<double>(storage_width(task, d.storage));
        CHECK(cap < static_cast<double>(task.n));
      }
    }
  }
}

TEST_CASE("uniform mode caps widths by the smallest participant") {
  const auto topo = star({{1e7, 4.0 * 16 * 3, netsim::RateSchedule::constant(1e7)},
                          {1e5, 1e9, netsim::RateSchedule::constant(1e3)},
                          {1e5, 1e9, netsim::RateSchedule::constant(1e3)},
                          {1e5, 1e9, netsim::RateSchedule::constant(1e3)}});
  PlanOptions opt;
  opt.uniform = true;
  const auto plan = plan_split({8, 8, 12}, topo, "server", opt);
  CHECK(plan.uniform);
  for (const auto& a : plan.assignments) CHECK(a.width <= 3);
  CHECK(plan.total_width() == 12);
}

TEST_CASE("adding a strictly better device never increases planned latency") {
  Rng rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t count = 1 + rng() % 3;
    auto devs = random_devices(rng, count, false);
    for (auto& d : devs) d.storage = 1e9;
    const GemmTask task{1 + rng() % 8, 1 + rng() % 8, 1 + rng() % 16};
    const double before = plan_split(task, star(devs), "server").predicted_latency_s;
    double best_compute = 0, best_rate = 0;
    for (const auto& d : devs) {
      best_compute = std::max(best_compute, d.compute);
      best_rate = std::max(best_rate, d.rate.rate_at(0));
    }
    devs.push_back({best_compute * 1.5, 1e9, netsim::RateSchedule::constant(best_rate * 1.5)});
    const double after = plan_split(task, star(devs), "server").predicted_latency_s;
    CHECK(after <= before);
  }
}

TEST_CASE("execute_split matches the monolithic product") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto devs = random_devices(rng, 1 + rng() % 6, trial % 3 == 0);
    auto topo_devs = devs;
    for (auto& d : topo_devs) d.storage = 1e9;
    const auto topo = star(topo_devs);
    const GemmTask task{1 + rng() % 12, 1 + rng() % 12, 1 + rng() % 24};
    const auto plan = plan_split(task, topo, "server");
    const Matrix x = random_matrix(rng, task.m, task.k);
    const Matrix w = random_matrix(rng, task.k, task.n);
    const auto res = execute_split(plan, w, x, topo);
    CHECK(relative_frobenius_error(res.result, matmul(x, w)) < 1e-10);
    CHECK(res.latency_s == plan.predicted_latency_s);
    CHECK(res.events.back().kind == "merge");
  }
}

TEST_CASE("execute_split examples and errors") {
  Rng rng(6);
  const auto topo = star({{1e6, 1e9, netsim::RateSchedule::constant(1e6)},
                          {2e6, 1e9, netsim::RateSchedule::constant(1e6)}});
  const Matrix x = random_matrix(rng, 8, 8);
  SUBCASE("identity weight") {
    const auto plan = plan_split({8, 8, 8}, topo, "server");
    const auto res = execute_split(plan, Matrix::identity(8), x, topo);
    CHECK(res.result == x);
  }
  SUBCASE("single slice is bitwise equal") {
    SplitPlan plan{"server", {{"d0", 12}}, 0.0, 0.0, true, false};
    const Matrix w = random_matrix(rng, 8, 12);
    const auto res = execute_split(plan, w, x, topo);
    const Matrix mono = matmul(x, w);
    CHECK(std::memcmp(res.result.data(), mono.data(), mono.size() * sizeof(double)) == 0);
  }
  SUBCASE("dimension mismatch") {
    SplitPlan plan{"server", {{"d0", 5}}, 0.0, 0.0, true, false};
    try {
      execute_split(plan, random_matrix(rng, 8, 6), x, topo);
      FAIL("expected dimension-mismatch");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::dimension_mismatch);
    }
    CHECK_THROWS_AS(execute_split(plan, random_matrix(rng, 7, 5), x, topo), Error);
  }
  SUBCASE("oversized shard is refused") {
    const auto tight = star({{1e6, 4.0 * 16 * 2, netsim::RateSchedule::constant(1e6)}});
    SplitPlan plan{"server", {{"d0", 8}}, 0.0, 0.0, true, false};
    try {
      execute_split(plan, random_matrix(rng, 8, 8), x, tight);
      FAIL("expected infeasible-storage");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::infeasible_storage);
    }
  }
}

TEST_CASE("encode_forward equals the centralized forward") {
  Rng rng(8);
  const auto topo = star({{1e6, 1e9, netsim::RateSchedule::constant(1e6)},
                          {1e6, 1e9, netsim::RateSchedule::constant(2e6)}});
  SUBCASE("two holders of four rows") {
    const Matrix w = random_matrix(rng, 8, 8);
    const Matrix a = random_matrix(rng, 4, 8), b = random_matrix(rng, 4, 8);
    const auto plan = plan_split({8, 8, 8}, topo, "server");
    std::vector<HeldRows> holders{{"d0", a}, {"d1", b}};
    const auto enc = encode_forward(plan, w, holders, topo);
    Matrix x(8, 8);
    std::copy_n(a.data(), 32, x.data());
    std::copy_n(b.data(), 32, x.data() + 32);
    Matrix want = matmul(x, w);
    apply(Activation::tanh, want);
    CHECK(relative_frobenius_error(enc.output, want) < 1e-10);
    for (const auto& u : enc.uploads) {
      CHECK(u.width == plan.assignments[u.slice].width);
      CHECK(u.bytes == 4.0 * static_cast<double>(u.rows * u.width));
    }
  }
  SUBCASE("uploads never carry raw-feature-sized rows") {
    const Matrix w = random_matrix(rng, 12, 8);
    const auto plan = plan_split({6, 12, 8}, topo, "server");
    std::vector<HeldRows> holders{{"d0", random_matrix(rng, 3, 12)}, {"d1", random_matrix(rng, 3, 12)}};
    const auto enc = encode_forward(plan, w, holders, topo);
    std::size_t per_row = 0;
    for (const auto& u : enc.uploads) {
      CHECK(u.width != 12);
      if (u.device == "d0") per_row += u.width;
    }
    CHECK(per_row == 8);
  }
  SUBCASE("one holder with all data, and a zero batch") {
    const Matrix w = random_matrix(rng, 8, 8);
    const Matrix x = random_matrix(rng, 5, 8);
    const auto plan = plan_split({5, 8, 8}, topo, "server");
    std::vector<HeldRows> one{{"d1", x}};
    Matrix want = matmul(x, w);
    apply(Activation::tanh, want);
    CHECK(encode_forward(plan, w, one, topo).output == want);
    std::vector<HeldRows> zero{{"d0", Matrix(5, 8)}};
    const auto enc = encode_forward(plan, w, zero, topo);
    for (double v : enc.output.flat()) CHECK(v == 0.0);
  }
  SUBCASE("feature mismatch") {
    const auto plan = plan_split({4, 8, 8}, topo, "server");
    std::vector<HeldRows> bad{{"d0", Matrix(4, 7)}};
    CHECK_THROWS_AS(encode_forward(plan, Matrix(8, 8), bad, topo), Error);
  }
}

TEST_CASE("looped_forward") {
  Rng rng(10);
  const auto topo = star({{1e6, 1e9, netsim::RateSchedule::constant(1e6)},
                          {1e6, 1e9, netsim::RateSchedule::constant(1e6)}});
  const auto plan = plan_split({8, 8, 8}, topo, "server");
  const Matrix a = random_matrix(rng, 4, 8), b = random_matrix(rng, 4, 8);
  std::vector<HeldRows> holders{{"d0", a}, {"d1", b}};
  Matrix x(8, 8);
  std::copy_n(a.data(), 32, x.data());
  std::copy_n(b.data(), 32, x.data() + 32);
  const Matrix block = random_matrix(rng, 8, 8);

  SUBCASE("depth one equals encode_forward") {
    const auto loop = looped_forward({1, block, Activation::tanh}, plan, holders, topo);
    CHECK(loop.output == encode_forward(plan, block, holders, topo).output);
  }
  SUBCASE("identity block and activation") {
    const auto loop = looped_forward({2, Matrix::identity(8), Activation::identity}, plan, holders, topo);
    CHECK(loop.output == x);
  }
  SUBCASE("depth three matches centralized application") {
    const auto loop = looped_forward({3, block, Activation::tanh}, plan, holders, topo);
    Matrix want = x;
    for (int i = 0; i < 3; ++i) {
      want = matmul(want, block);
      apply(Activation::tanh, want);
    }
    CHECK(relative_frobenius_error(loop.output, want) < 1e-9);
  }
  SUBCASE("parameter bytes do not grow with depth") {
    const double one = looped_forward({1, block, Activation::tanh}, plan, holders, topo).parameter_bytes_per_device;
    for (std::size_t depth : {2u, 5u, 9u}) {
      const auto loop = looped_forward({depth, block, Activation::tanh}, plan, holders, topo);
      CHECK(loop.parameter_bytes_per_device == one);
    }
    CHECK(looped_forward({4, block, Activation::tanh}, plan, holders, topo).latency_s >
          looped_forward({2, block, Activation::tanh}, plan, holders, topo).latency_s);
  }
  SUBCASE("non-square block") {
    try {
      looped_forward({2, Matrix(8, 6), Activation::tanh}, plan, holders, topo);
      FAIL("expected non-square-block");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::non_square_block);
    }
  }
}
