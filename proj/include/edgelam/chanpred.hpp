#pragma once

// Channel prediction: synthetic Rayleigh-fading series, small sequence
// predictors trained on stacked real/imaginary windows, and federated
// averaging across clients holding disjoint shards.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace edgelam::chanpred {

struct ChannelSeries {
  std::vector<std::complex<double>> samples;
  double sample_period = 1e-3;  // Ts, seconds
  double doppler = 10.0;        // fd, Hz
  std::size_t num_paths = 32;
  std::uint64_t seed = 0;
};

// h[t] = P^{-1/2} sum_p exp(i (2 pi fd cos(theta_p) t Ts + phi_p)), with
// theta_p, phi_p uniform on [0, 2 pi). Throws invalid-parameter.
ChannelSeries gen_jakes(double doppler, double sample_period, std::size_t length,
                        std::size_t num_paths, std::uint64_t seed);

// Same sum with caller-supplied angles and phases.
ChannelSeries jakes_from_paths(double doppler, double sample_period, std::size_t length,
                               std::span<const double> theta, std::span<const double> phi);

enum class ModelKind { linear_ar, rnn_cell, gru_cell, attn_lora };

std::string_view kind_name(ModelKind kind);
ModelKind parse_kind(std::string_view name);  // throws invalid-parameter

struct PredictorSpec {
  ModelKind kind = ModelKind::linear_ar;
  std::size_t window = 16;   // W past samples
  std::size_t horizon = 4;   // H future samples
  std::size_t hidden = 16;   // recurrent state / attention width
  std::size_t lora_rank = 2;
  double lora_alpha = 2.0;
  bool freeze_base = true;   // attn_lora: train adapters and head only
};

void validate(const PredictorSpec& spec);

// x = [re h[t-W+1..t], im h[t-W+1..t]], y = [re h[t+1..t+H], im h[t+1..t+H]].
struct Window {
  std::vector<double> x;
  std::vector<double> y;
};

// Every window of the series, in time order. Throws insufficient-data when
// the series is shorter than W + H.
std::vector<Window> make_windows(const ChannelSeries& series, std::size_t window, std::size_t horizon);

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::unique_ptr<Predictor> clone() const = 0;

  const PredictorSpec& spec() const noexcept { return spec_; }
  std::vector<double>& params() noexcept { return theta_; }
  const std::vector<double>& params() const noexcept { return theta_; }
  const std::vector<bool>& trainable() const noexcept { return trainable_; }
  std::size_t trainable_count() const;

  std::size_t input_size() const noexcept { return 2 * spec_.window; }
  std::size_t output_size() const noexcept { return 2 * spec_.horizon; }

  virtual void predict(std::span<const double> x, std::span<double> y) const = 0;
  // grad += d(0.5 * sum (y - target)^2 weighting given by dy) / d(theta), i.e.
  // backpropagates the output gradient dy for one window.
  virtual void backprop(std::span<const double> x, std::span<const double> dy,
                        std::span<double> grad) const = 0;

 protected:
  explicit Predictor(PredictorSpec spec) : spec_(spec) {}
  PredictorSpec spec_;
  std::vector<double> theta_;
  std::vector<bool> trainable_;
};

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, std::uint64_t seed);

// Linear predictor whose every output repeats the last observed sample.
std::unique_ptr<Predictor> make_persistence(std::size_t window, std::size_t horizon);

// Mean squared error over windows and output coordinates.
double mse(const Predictor& model, std::span<const Window> windows);

// Same loss on the windows selected by `idx`, with its gradient.
double loss_and_gradient(const Predictor& model, std::span<const Window> windows,
                         std::span<const std::size_t> idx, std::vector<double>& grad);

// sum |h_hat - h|^2 / sum |h|^2 over every window and horizon step. Throws
// insufficient-data.
double evaluate_nmse(const Predictor& model, const ChannelSeries& series);
// Pooled over several series: both sums run over every series.
double evaluate_nmse(const Predictor& model, std::span<const ChannelSeries> series);

struct TrainSchedule {
  std::size_t rounds = 20;
  std::size_t local_steps = 10;
  double lr = 0.05;
  std::size_t batch = 16;  // 0 or >= shard size: full batch
};

struct TrainReport {
  std::vector<double> losses;  // training-set MSE after each round
  double final_loss = 0.0;
  double final_nmse = -1.0;  // on the held-out series; -1 when none given
  double bytes_per_round = 0.0;
  std::vector<double> params;
};

// rounds * local_steps SGD steps from make_predictor(spec, seed); minibatch
// stream derived from (seed, 0). Throws insufficient-data for an empty shard.
TrainReport train_local(const PredictorSpec& spec, std::span<const Window> shard,
                        const TrainSchedule& schedule, std::uint64_t seed,
                        std::span<const ChannelSeries> held_out = {});

struct FedConfig {
  std::size_t num_clients = 2;
  double shard_fraction = 0.05;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
};

// Disjoint shards: the pool is shuffled with the seed and client i gets the
// i-th block of floor(fraction * pool) windows. Client i's shard does not
// depend on num_clients. Throws invalid-parameter, insufficient-data.
std::vector<std::vector<std::size_t>> make_shards(std::size_t pool_size, const FedConfig& config);

std::vector<Window> gather(std::span<const Window> pool, std::span<const std::size_t> idx);

// Each round every client runs local_steps SGD steps from the global
// parameters with its own minibatch stream (seed, client); the server sets the
// global parameters to the uniform mean of the client parameters, summed in
// client order. Loss is reported on the union of the shards.
TrainReport train_federated(const PredictorSpec& spec, const FedConfig& config,
                            std::span<const std::vector<Window>> shards,
                            std::span<const ChannelSeries> held_out = {});

struct CaseStudyConfig {
  std::vector<ModelKind> kinds{ModelKind::linear_ar, ModelKind::gru_cell, ModelKind::attn_lora};
  std::vector<std::size_t> client_counts{2, 6, 10};
  std::vector<std::uint64_t> seeds{1};
  PredictorSpec base;  // kind overwritten per run
  TrainSchedule schedule;
  double shard_fraction = 0.05;
  double doppler = 10.0;
  double sample_period = 1e-3;
  std::size_t num_paths = 32;
  std::size_t pool_series = 8;
  std::size_t series_length = 140;
  std::size_t held_out_series = 4;
};

struct CaseStudyRow {
  std::size_t round;
  std::string setting;  // "federated:<kind>" or "local:<kind>"
  std::size_t num_clients;
  double loss;
  std::uint64_t seed;
};

struct CaseStudyOutcome {
  ModelKind kind;
  std::size_t num_clients;
  std::uint64_t seed;
  double federated_loss;           // final, on the union of the shards
  double local_median_loss;        // median over clients of their local models on the same union
  std::vector<double> local_losses;
  double federated_nmse;           // held-out, common to every client count
};

struct CaseStudyResult {
  std::vector<CaseStudyRow> rows;
  std::vector<CaseStudyOutcome> outcomes;
};

// Pool windows come from `pool_series` independent realizations and held-out
// NMSE from `held_out_series` further ones. Local-only curves are the
// per-round median across clients.
CaseStudyResult run_case_study(const CaseStudyConfig& config);

// round,setting,num_clients,loss,seed
std::string case_study_csv(const CaseStudyResult& result);

}  // namespace edgelam::chanpred
