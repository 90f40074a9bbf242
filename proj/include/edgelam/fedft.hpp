#pragma once

// Split federated fine-tuning. Devices hold the embedding table and their own
// task head; the server holds the frozen decoder and the trainable low-rank
// adapters. A round is: devices upload embeddings, the server returns
// representation vectors by unicast, devices upload the Jacobian of their loss
// with respect to those representations, and the server chain-rules the
// device-averaged Jacobians into adapter gradients.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edgelam/matrix.hpp"
#include "edgelam/netsim.hpp"
#include "edgelam/rdp.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::fedft {

constexpr double kBytesPerScalar = 4.0;
constexpr double kDefaultBudgetFraction = 0.05;

struct ModelPartition {
  std::size_t width = 0;
  std::size_t vocab = 0;
  std::size_t classes = 0;
  Matrix embedding;              // vocab x width, device side, frozen
  std::vector<Matrix> decoder;   // width x width per layer, server side, frozen
  Matrix task_head;              // width x classes, initial copy for every device

  std::size_t decoder_parameter_count() const { return decoder.size() * width * width; }
};

// Decoder layers are square (width x width) with tanh between layers.
// Throws invalid-width for any zero dimension or zero layers.
ModelPartition partition_model(std::size_t width, std::size_t layers, std::size_t vocab,
                               std::size_t classes, std::uint64_t seed);

struct LoraAdapter {
  Matrix a;  // rank x width
  Matrix b;  // width x rank, zero at attach time
  double scale = 1.0;
  std::size_t layer_index = 0;

  std::size_t rank() const noexcept { return a.rows(); }
  std::size_t parameter_count() const noexcept { return a.size() + b.size(); }
};

using AdapterSet = std::vector<LoraAdapter>;

std::size_t parameter_count(const AdapterSet& adapters);

// One adapter per decoder layer; A ~ N(0, 1/width), B = 0, scale = alpha / rank.
// Throws rank-out-of-range unless 1 <= rank <= width.
AdapterSet attach_lora(const ModelPartition& partition, std::size_t rank, double alpha,
                       std::uint64_t seed);

// Largest rank whose adapters stay within `fraction` of the decoder's
// parameters: floor(fraction * L * d^2 / (2 * d * L)). May be 0.
std::size_t budget_rank(std::size_t width, std::size_t layers,
                        double fraction = kDefaultBudgetFraction);

struct Sample {
  std::vector<std::uint32_t> tokens;
  std::uint32_t label = 0;
};

// Labels come from a seeded linear teacher over token affinities, so the
// task is learnable but not trivially separable.
std::vector<Sample> synth_dataset(std::size_t vocab, std::size_t classes, std::size_t count,
                                  std::size_t tokens_per_sample, std::uint64_t seed);

// Minibatch stream of device `device_index`; draw_batch shuffles the shard
// indices and keeps the first `batch`.
Rng batch_rng(std::uint64_t seed, std::size_t device_index);
std::vector<std::size_t> draw_batch(Rng& rng, std::size_t shard_size, std::size_t batch);

struct DeviceBatch {
  std::string device;
  std::vector<Sample> samples;
};

// Mean of the sample's token embeddings, one row per sample.
Matrix embed(const ModelPartition& partition, std::span<const Sample> samples);

// Activations kept by the server for the backward pass.
struct DecoderCache {
  std::vector<Matrix> inputs;       // layer inputs h_0..h_L, each batch x width
  std::vector<Matrix> projections;  // A_l h_l per layer, batch x rank
};

// Frozen decoder only: h <- tanh(W h) per layer.
Matrix frozen_forward(const ModelPartition& partition, const Matrix& embeddings);

// Adapted decoder: h <- tanh(W h + scale * B (A h)). Output is the last input
// in the cache.
DecoderCache adapted_forward(const ModelPartition& partition, const AdapterSet& adapters,
                             const Matrix& embeddings);

struct AdapterGradient {
  Matrix a;  // rank x width
  Matrix b;  // width x rank
};

using AdapterGradients = std::vector<AdapterGradient>;

AdapterGradients zero_gradients(const AdapterSet& adapters);

// Chain rule from dL/d(representation) (batch x width) to dL/dA, dL/dB.
// Throws dimension-mismatch when the Jacobian shape disagrees with the cache.
AdapterGradients adapter_gradients(const ModelPartition& partition, const AdapterSet& adapters,
                                   const DecoderCache& cache, const Matrix& jacobian);

// Uniform average in the given (device-id) order.
AdapterGradients average(std::span<const AdapterGradients> per_device);

struct DeviceLoss {
  double loss = 0.0;   // mean cross-entropy over the batch
  Matrix jacobian;     // per-sample dl_i/dr_i, batch x width (not divided by batch)
  Matrix head_grad;    // d(mean loss)/d(head)
};

// Softmax cross-entropy on logits = r^T head.
DeviceLoss device_loss(const Matrix& representations, std::span<const Sample> samples,
                       const Matrix& head);

// Per-sample clipping to `clip_norm`; rows with norm below the bound are untouched.
// Norms are the sequential sum of squares, in row order.
void clip_rows(Matrix& jacobian, double clip_norm);

struct DeviceTraffic {
  std::string device;
  double uplink_embedding_bytes = 0.0;
  double downlink_repr_bytes = 0.0;
  double uplink_jacobian_bytes = 0.0;
  double embed_compute_s = 0.0;
  double uplink_embedding_s = 0.0;
  double downlink_repr_s = 0.0;
  double head_compute_s = 0.0;
  double uplink_jacobian_s = 0.0;
};

struct RoundTrace {
  std::vector<DeviceTraffic> devices;
  double server_forward_s = 0.0;
  double server_backward_s = 0.0;
  double forward_latency_s = 0.0;
  double backward_latency_s = 0.0;
  double round_loss = 0.0;
  // Mean squared deviation of the averaged adapter gradient caused by the
  // Jacobian noise, measured after the chain rule. 0 without privacy.
  double grad_noise_variance = 0.0;
  std::vector<netsim::FiredEvent> events;
};

struct ForwardResult {
  std::vector<Matrix> representations;  // one per device, batch x width
  std::vector<DecoderCache> caches;
  RoundTrace trace;
};

// Throws unreachable-device if a device has no link to the server.
ForwardResult forward_round(const ModelPartition& partition, const AdapterSet& adapters,
                            std::span<const DeviceBatch> batches,
                            const netsim::Topology& topology, const std::string& server,
                            double t0);

struct BackwardResult {
  AdapterGradients averaged;
  std::vector<double> device_losses;
  RoundTrace trace;  // forward phase fields carried over, backward ones filled
};

// Devices compute their Jacobians (clipped and noised per sample when
// `privacy` is set), the server averages adapter gradients uniformly across
// devices and takes one SGD step. Device heads take a local SGD step.
BackwardResult backward_round(const ModelPartition& partition, AdapterSet& adapters,
                              std::vector<Matrix>& heads, std::span<const DeviceBatch> batches,
                              const ForwardResult& forward, const netsim::Topology& topology,
                              const std::string& server, double t_start,
                              const std::optional<PrivacySpec>& privacy, double lr,
                              std::uint64_t noise_seed);

// Server flop counts used for latency accounting.
double server_forward_flops(std::size_t width, std::size_t layers, std::size_t rank,
                            std::size_t samples);

struct FedftConfig {
  std::vector<std::string> devices;
  std::string server;
  std::size_t width = 64;
  std::size_t layers = 4;
  std::size_t vocab = 32;
  std::size_t classes = 4;
  std::size_t tokens_per_sample = 3;
  std::size_t rank = 0;  // 0: largest rank within budget_fraction
  double budget_fraction = kDefaultBudgetFraction;
  double lora_alpha = 1.0;
  std::size_t samples_per_device = 64;
  std::size_t batch = 16;
  std::size_t rounds = 20;
  std::size_t eval_samples = 256;
  double lr = 0.05;
  bool privacy = true;
  double sigma = 1.0;
  double clip = 1.0;
  double delta = 1e-5;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::uint64_t seed = 0;
};

struct RoundRecord {
  std::size_t round = 0;
  double loss = 0.0;
  double eval_loss = 0.0;
  double epsilon = std::numeric_limits<double>::infinity();
  double grad_noise_variance = 0.0;
  double forward_latency_s = 0.0;
  double backward_latency_s = 0.0;
};

struct TraceRow {
  std::size_t round;
  std::string device;
  std::string phase;
  double bytes;
  double latency_s;
};

struct FedftReport {
  std::size_t rank = 0;
  std::size_t adapter_parameters = 0;
  std::size_t decoder_parameters = 0;
  std::vector<RoundRecord> rounds;
  std::vector<TraceRow> trace;
  DpGuarantee privacy;
  std::vector<double> best_alpha;  // per round; 0 without privacy
};

// Full training run. Device i trains on shard i of one seeded dataset;
// minibatches are drawn per device from a stream derived from (seed, i).
FedftReport run_fedft(const FedftConfig& config, const netsim::Topology& topology);

// Mean held-out loss across devices, each using its own head.
double evaluate(const ModelPartition& partition, const AdapterSet& adapters,
                std::span<const Matrix> heads, std::span<const Sample> samples);

std::string loss_csv(const FedftReport& report);
std::string trace_csv(const FedftReport& report);
// round,epsilon,best_alpha,grad_noise_variance
std::string privacy_csv(const FedftReport& report);

}  // namespace edgelam::fedft
