#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "edgelam/chanpred.hpp"
#include "edgelam/error.hpp"
#include "edgelam/rng.hpp"

using namespace edgelam;
using namespace edgelam::chanpred;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an edgelam::Error");
  return Errc::io_error;
}

ChannelSeries from_values(std::vector<std::complex<double>> v) {
  ChannelSeries s;
  s.samples = std::move(v);
  return s;
}

PredictorSpec small_spec(ModelKind kind, Rng& rng) {
  PredictorSpec s;
  s.kind = kind;
  s.window = 2 + rng() % 4;
  s.horizon = 1 + rng() % 3;
  s.hidden = 2 + rng() % 4;
  s.lora_rank = 1 + rng() % s.hidden;
  s.lora_alpha = 0.5 + uniform01(rng) * 2.0;
  s.freeze_base = rng() % 2 == 0;
  return s;
}

std::vector<Window> random_windows(const PredictorSpec& s, std::size_t n, Rng& rng) {
  std::vector<Window> out(n);
  for (auto& w : out) {
    w.x.resize(2 * s.window);
    w.y.resize(2 * s.horizon);
    for (auto& v : w.x) v = gaussian(rng);
    for (auto& v : w.y) v = gaussian(rng);
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Worst relative error of analytic vs central-difference gradients over
// `trials` random instances of one family.
double worst_gradient_error(ModelKind kind, int trials, std::uint64_t seed) {
  Rng rng = make_rng(seed, 7);
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto spec = small_spec(kind, rng);
    auto model = make_predictor(spec, rng());
    // Move every block (including zero-initialised adapters) off its init.
    for (auto& p : model->params()) p = gaussian(rng, 0.5);
    const auto windows = random_windows(spec, 3, rng);
    const std::vector<std::size_t> idx{0, 1, 2, 1};
    std::vector<double> grad;
    loss_and_gradient(*model, windows, idx, grad);
    std::vector<double> fd(grad.size()), scratch;
    const double h = 1e-5;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double keep = model->params()[i];
      model->params()[i] = keep + h;
      const double up = loss_and_gradient(*model, windows, idx, scratch);
      model->params()[i] = keep - h;
      const double down = loss_and_gradient(*model, windows, idx, scratch);
      model->params()[i] = keep;
      fd[i] = (up - down) / (2.0 * h);
    }
    std::vector<double> diff(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) diff[i] = grad[i] - fd[i];
    worst = std::max(worst, norm(diff) / std::max(norm(fd), 1e-12));
  }
  return worst;
}

std::vector<Window> jakes_windows(std::uint64_t seed, std::size_t window, std::size_t horizon,
                                  std::size_t length = 120) {
  return make_windows(gen_jakes(10.0, 1e-3, length, 32, seed), window, horizon);
}

}  // namespace

TEST_CASE("single-path channel is a pure complex sinusoid") {
  const double fd = 10.0, ts = 1e-3, theta = 0.7, phi = 1.3;
  const std::vector<double> th{theta}, ph{phi};
  const auto s = jakes_from_paths(fd, ts, 500, th, ph);
  const double omega = 2.0 * std::numbers::pi * fd * std::cos(theta) * ts;
  for (std::size_t t = 0; t < s.samples.size(); ++t) {
    const auto expect = std::polar(1.0, omega * static_cast<double>(t) + phi);
    CHECK(std::abs(s.samples[t] - expect) < 1e-12);
  }
}

TEST_CASE("Jakes mean power and determinism") {
  // Ensemble average: 1000 independent realizations of 100 samples. A single
  // long realization is not ergodic at P = 32 (near-equal path frequencies).
  double p = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    for (auto h : gen_jakes(10.0, 1e-3, 100, 32, 1000 + seed).samples) p += std::norm(h);
  }
  p /= 1e5;
  CHECK(p >= 0.97);
  CHECK(p <= 1.03);
  const auto a = gen_jakes(10.0, 1e-3, 300, 8, 42);
  const auto b = gen_jakes(10.0, 1e-3, 300, 8, 42);
  const auto c = gen_jakes(10.0, 1e-3, 300, 8, 43);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);
  CHECK(code_of([] { gen_jakes(0.0, 1e-3, 10, 4, 1); }) == Errc::invalid_parameter);
  CHECK(code_of([] { gen_jakes(10.0, -1.0, 10, 4, 1); }) == Errc::invalid_parameter);
  CHECK(code_of([] { gen_jakes(10.0, 1e-3, 10, 0, 1); }) == Errc::invalid_parameter);
}

TEST_CASE("windows stack real then imaginary parts") {
  std::vector<std::complex<double>> v;
  for (int t = 0; t < 7; ++t) v.emplace_back(t, -10 * t);
  const auto w = make_windows(from_values(v), 3, 2);
  REQUIRE(w.size() == 3);
  CHECK(w[0].x == std::vector<double>{0, 1, 2, 0, -10, -20});
  CHECK(w[0].y == std::vector<double>{3, 4, -30, -40});
  CHECK(w[2].x == std::vector<double>{2, 3, 4, -20, -30, -40});
  CHECK(w[2].y == std::vector<double>{5, 6, -50, -60});
  CHECK(make_windows(from_values({1, 2, 3, 4, 5}), 3, 2).size() == 1);
  CHECK(code_of([&] { make_windows(from_values({1, 2, 3, 4}), 3, 2); }) == Errc::insufficient_data);
}

TEST_CASE("predictor spec validation and kind names") {
  for (auto k : {ModelKind::linear_ar, ModelKind::rnn_cell, ModelKind::gru_cell, ModelKind::attn_lora}) {
    CHECK(parse_kind(kind_name(k)) == k);
  }
  CHECK(code_of([] { parse_kind("lstm"); }) == Errc::invalid_parameter);
  PredictorSpec s;
  s.window = 0;
  CHECK(code_of([&] { validate(s); }) == Errc::invalid_parameter);
  s.window = 4;
  s.kind = ModelKind::attn_lora;
  s.hidden = 4;
  s.lora_rank = 5;
  CHECK(code_of([&] { validate(s); }) == Errc::rank_out_of_range);
}

TEST_CASE("analytic gradients match central differences") {
  for (auto kind : {ModelKind::linear_ar, ModelKind::rnn_cell, ModelKind::gru_cell, ModelKind::attn_lora}) {
    CAPTURE(kind_name(kind));
    CHECK(worst_gradient_error(kind, 100, 11) <= 1e-4);
  }
}

TEST_CASE("linear AR learns a constant channel") {
  std::vector<std::complex<double>> v(60, {0.6, 0.8});
  const auto windows = make_windows(from_values(v), 4, 2);
  PredictorSpec spec;
  spec.window = 4;
  spec.horizon = 2;
  const auto rep = train_local(spec, windows, {50, 20, 0.05, 0}, 3);
  CHECK(rep.final_loss < 1e-12);
}

TEST_CASE("linear AR reproduces a sinusoid through its order-2 recurrence") {
  const double omega = 2.0 * std::numbers::pi * 0.1;
  std::vector<std::complex<double>> v;
  for (int t = 0; t < 80; ++t) v.emplace_back(std::cos(omega * t), 0.0);
  for (std::size_t w : {2u, 3u, 5u}) {
    PredictorSpec spec;
    spec.window = w;
    spec.horizon = 1;
    const auto windows = make_windows(from_values(v), w, 1);
    const auto rep = train_local(spec, windows, {100, 50, 0.5, 0}, 1);
    CAPTURE(w);
    CHECK(rep.final_loss < 1e-6);
  }
}

TEST_CASE("small learning rate gives nonincreasing epoch losses") {
  for (auto kind : {ModelKind::linear_ar, ModelKind::gru_cell, ModelKind::attn_lora}) {
    int monotone = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      PredictorSpec spec;
      spec.kind = kind;
      spec.window = 8;
      spec.horizon = 2;
      spec.hidden = 8;
      const auto windows = jakes_windows(seed, 8, 2, 60);
      const auto rep = train_local(spec, windows, {15, 2, 0.01, 0}, seed);
      bool ok = true;
      for (std::size_t i = 1; i < rep.losses.size(); ++i) ok = ok && rep.losses[i] <= rep.losses[i - 1];
      monotone += ok;
    }
    CAPTURE(kind_name(kind));
    CHECK(monotone >= 9);
  }
}

TEST_CASE("training errors") {
  PredictorSpec spec;
  const std::vector<Window> none;
  CHECK(code_of([&] { train_local(spec, none, {}, 1); }) == Errc::insufficient_data);
  const auto w = jakes_windows(1, spec.window, spec.horizon);
  CHECK(code_of([&] { train_local(spec, w, {0, 1, 0.1, 0}, 1); }) == Errc::invalid_parameter);
  CHECK(code_of([&] { train_local(spec, w, {1, 1, 0.0, 0}, 1); }) == Errc::invalid_parameter);
  FedConfig cfg;
  CHECK(code_of([&] { train_federated(spec, cfg, std::vector<std::vector<Window>>{}); }) ==
        Errc::invalid_parameter);
}

TEST_CASE("one-client federation equals local training") {
  for (auto kind : {ModelKind::linear_ar, ModelKind::gru_cell, ModelKind::attn_lora}) {
    PredictorSpec spec;
    spec.kind = kind;
    spec.window = 6;
    spec.horizon = 2;
    spec.hidden = 6;
    const auto shard = jakes_windows(5, 6, 2);
    const TrainSchedule sched{6, 4, 0.05, 8};
    FedConfig cfg{1, 1.0, sched, 77};
    const std::vector<std::vector<Window>> shards{shard};
    const auto fed = train_federated(spec, cfg, shards);
    const auto loc = train_local(spec, shard, sched, 77);
    CAPTURE(kind_name(kind));
    CHECK(fed.losses == loc.losses);
    CHECK(fed.params == loc.params);
  }
}

TEST_CASE("identical full-batch clients reproduce the single-client update") {
  for (auto kind : {ModelKind::linear_ar, ModelKind::rnn_cell, ModelKind::gru_cell, ModelKind::attn_lora}) {
    PredictorSpec spec;
    spec.kind = kind;
    spec.window = 6;
    spec.horizon = 2;
    spec.hidden = 6;
    const auto shard = jakes_windows(9, 6, 2, 50);
    const TrainSchedule sched{5, 3, 0.05, 0};
    for (std::size_t n : {2u, 5u, 10u}) {
      FedConfig cfg{n, 0.1, sched, 4};
      const std::vector<std::vector<Window>> shards(n, shard);
      const auto fed = train_federated(spec, cfg, shards);
      const auto loc = train_local(spec, shard, sched, 4);
      double worst = 0.0;
      for (std::size_t i = 0; i < fed.params.size(); ++i) {
        worst = std::max(worst, std::abs(fed.params[i] - loc.params[i]));
      }
      CAPTURE(kind_name(kind));
      CAPTURE(n);
      CHECK(worst <= 1e-10);
      CHECK(fed.bytes_per_round ==
            2.0 * static_cast<double>(n) * static_cast<double>(make_predictor(spec, 4)->trainable_count()) * 4.0);
    }
  }
}

TEST_CASE("zero adapters leave the frozen attention base unchanged") {
  PredictorSpec spec;
  spec.kind = ModelKind::attn_lora;
  spec.window = 6;
  spec.horizon = 2;
  spec.hidden = 8;
  spec.lora_rank = 2;
  auto model = make_predictor(spec, 3);
  auto perturbed = model->clone();
  // Scramble the A factors only: with B = 0 the base output cannot move.
  const std::size_t d = 8, w = 6, r = 2;
  const std::size_t aq = d * 2 + d + w * d + 3 * d * d;
  const std::size_t av = aq + r * d + d * r;
  Rng rng = make_rng(1, 2);
  for (std::size_t i = 0; i < r * d; ++i) {
    perturbed->params()[aq + i] = gaussian(rng);
    perturbed->params()[av + i] = gaussian(rng);
  }
  for (const auto& win : jakes_windows(2, 6, 2)) {
    std::vector<double> y0(4), y1(4);
    model->predict(win.x, y0);
    perturbed->predict(win.x, y1);
    CHECK(y0 == y1);
  }
  // Frozen entries survive training untouched.
  const auto rep = train_local(spec, jakes_windows(3, 6, 2), {3, 5, 0.05, 4}, 3);
  const auto& mask = model->trainable();
  std::size_t frozen = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) {
      ++frozen;
      CHECK(rep.params[i] == model->params()[i]);
    }
  }
  CHECK(model->trainable_count() == 2 * (r * d + d * r) + 4 * d + 4);
  CHECK(frozen + model->trainable_count() == mask.size());
}

TEST_CASE("NMSE reference values") {
  std::vector<std::complex<double>> v(40, {0.3, -0.4});
  const auto constant = from_values(v);
  CHECK(evaluate_nmse(*make_persistence(5, 3), constant) == 0.0);
  PredictorSpec spec;
  spec.window = 5;
  spec.horizon = 3;
  CHECK(evaluate_nmse(*make_predictor(spec, 1), gen_jakes(10.0, 1e-3, 200, 32, 4)) == 1.0);

  const auto s = gen_jakes(10.0, 1e-3, 400, 32, 8);
  const std::size_t W = 16, H = 4;
  double num = 0.0, den = 0.0;
  for (std::size_t t = W - 1; t + H < s.samples.size(); ++t)
    for (std::size_t k = 1; k <= H; ++k) num += std::norm(s.samples[t + k] - s.samples[t]), den += std::norm(s.samples[t + k]);
  CHECK(evaluate_nmse(*make_persistence(W, H), s) == doctest::Approx(num / den).epsilon(1e-12));
  CHECK(code_of([&] { evaluate_nmse(*make_persistence(W, H), from_values({1, 2, 3})); }) ==
        Errc::insufficient_data);
}

TEST_CASE("shards are disjoint and prefix-stable") {
  FedConfig cfg{10, 0.05, {}, 12};
  const auto ten = make_shards(1000, cfg);
  std::set<std::size_t> seen;
  for (const auto& s : ten) {
    CHECK(s.size() == 50);
    for (auto i : s) CHECK(seen.insert(i).second);
  }
  cfg.num_clients = 2;
  const auto two = make_shards(1000, cfg);
  CHECK(two[0] == ten[0]);
  CHECK(two[1] == ten[1]);
  cfg.num_clients = 21;
  CHECK(code_of([&] { make_shards(1000, cfg); }) == Errc::invalid_parameter);
  cfg.num_clients = 2;
  CHECK(code_of([&] { make_shards(10, cfg); }) == Errc::insufficient_data);
}

TEST_CASE("case study rows and CSV") {
  CaseStudyConfig cfg;
  cfg.kinds = {ModelKind::linear_ar};
  cfg.client_counts = {2, 3};
  cfg.schedule = {4, 2, 0.05, 8};
  cfg.pool_series = 4;
  cfg.held_out_series = 1;
  const auto r = run_case_study(cfg);
  REQUIRE(r.outcomes.size() == 2);
  CHECK(r.rows.size() == 2 * 2 * 4);
  CHECK(r.rows[0].setting == "federated:linear_ar");
  CHECK(r.rows[4].setting == "local:linear_ar");
  for (const auto& o : r.outcomes) {
    CHECK(o.local_losses.size() == o.num_clients);
    CHECK(o.federated_nmse >= 0.0);
  }
  const auto csv = case_study_csv(r);
  CHECK(csv.rfind("round,setting,num_clients,loss,seed\n0,federated:linear_ar,2,", 0) == 0);
  CHECK(csv == case_study_csv(run_case_study(cfg)));
}
