#include "edgelam/fedft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "edgelam/error.hpp"
#include "edgelam/io.hpp"
#include "edgelam/kernels.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::fedft {
namespace {

constexpr std::uint64_t kTagPartition = 0x70617274;
constexpr std::uint64_t kTagLora = 0x6c6f7261;
constexpr std::uint64_t kTagData = 0x64617461;
constexpr std::uint64_t kTagBatch = 0x62617463;
constexpr std::uint64_t kTagNoise = 0x6e6f6973;

void fill_gaussian(Matrix& m, Rng& rng, double stddev) {
  for (auto& x : m.flat()) x = gaussian(rng, stddev);
}

// Sequential sum so the clip decision does not depend on the active ISA.
double row_norm(std::span<const double> row) {
  double s = 0.0;
  for (double v : row) s += v * v;
  return std::sqrt(s);
}

}  // namespace

ModelPartition partition_model(std::size_t width, std::size_t layers, std::size_t vocab,
                               std::size_t classes, std::uint64_t seed) {
  if (width == 0 || layers == 0 || vocab == 0 || classes == 0) {
    fail(Errc::invalid_width, "partition_model: width, layers, vocab and classes must be positive");
  }
  Rng rng = make_rng(seed, kTagPartition);
  ModelPartition p;
  p.width = width;
  p.vocab = vocab;
  p.classes = classes;
  p.embedding = Matrix(vocab, width);
  fill_gaussian(p.embedding, rng, 1.0);
  const double w_std = 1.0 / std::sqrt(static_cast<double>(width));
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix w(width, width);
    fill_gaussian(w, rng, w_std);
    p.decoder.push_back(std::move(w));
  }
  p.task_head = Matrix(width, classes);
  fill_gaussian(p.task_head, rng, w_std);
  return p;
}

std::size_t parameter_count(const AdapterSet& adapters) {
  std::size_t n = 0;
  for (const auto& a : adapters) n += a.parameter_count();
  return n;
}

AdapterSet attach_lora(const ModelPartition& partition, std::size_t rank, double alpha,
                       std::uint64_t seed) {
  if (rank < 1 || rank > partition.width) {
    fail(Errc::rank_out_of_range, "LoRA rank " + std::to_string(rank) + " outside [1, " +
                                      std::to_string(partition.width) + "]");
  }
  if (!(alpha > 0.0)) fail(Errc::invalid_parameter, "LoRA alpha must be > 0");
  Rng rng = make_rng(seed, kTagLora);
  const double a_std = 1.0 / std::sqrt(static_cast<double>(partition.width));
  AdapterSet set;
  for (std::size_t l = 0; l < partition.decoder.size(); ++l) {
    LoraAdapter ad;
    ad.a = Matrix(rank, partition.width);
    fill_gaussian(ad.a, rng, a_std);
    ad.b = Matrix(partition.width, rank);
    ad.scale = alpha / static_cast<double>(rank);
    ad.layer_index = l;
    set.push_back(std::move(ad));
  }
  return set;
}

std::size_t budget_rank(std::size_t width, std::size_t layers, double fraction) {
  if (width == 0 || layers == 0) return 0;
  const double frozen = static_cast<double>(layers) * static_cast<double>(width * width);
  const double per_rank = 2.0 * static_cast<double>(width) * static_cast<double>(layers);
  return static_cast<std::size_t>(std::floor(fraction * frozen / per_rank));
}

std::vector<Sample> synth_dataset(std::size_t vocab, std::size_t classes, std::size_t count,
                                  std::size_t tokens_per_sample, std::uint64_t seed) {
  if (vocab == 0 || classes == 0 || tokens_per_sample == 0) {
    fail(Errc::invalid_parameter, "synth_dataset: empty vocabulary, classes or samples");
  }
  Rng rng = make_rng(seed, kTagData);
  Matrix affinity(vocab, classes);
  fill_gaussian(affinity, rng, 1.0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(vocab - 1));
  std::vector<Sample> out(count);
  std::vector<double> score(classes);
  for (auto& s : out) {
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t t = 0; t < tokens_per_sample; ++t) {
      const auto tok = pick(rng);
      s.tokens.push_back(tok);
      for (std::size_t c = 0; c < classes; ++c) score[c] += affinity(tok, c);
    }
    s.label = static_cast<std::uint32_t>(std::max_element(score.begin(), score.end()) - score.begin());
  }
  return out;
}

Matrix embed(const ModelPartition& partition, std::span<const Sample> samples) {
  Matrix out(samples.size(), partition.width);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& toks = samples[s].tokens;
    if (toks.empty()) fail(Errc::invalid_parameter, "sample without tokens");
    auto row = out.row(s);
    for (auto tok : toks) {
      if (tok >= partition.vocab) fail(Errc::invalid_parameter, "token index out of vocabulary");
      kernels::axpy(1.0, partition.embedding.row(tok).data(), row.data(), row.size());
    }
    const double inv = 1.0 / static_cast<double>(toks.size());
    for (auto& v : row) v *= inv;
  }
  return out;
}

Matrix frozen_forward(const ModelPartition& partition, const Matrix& embeddings) {
  const std::size_t d = partition.width;
  if (embeddings.cols() != d) fail(Errc::dimension_mismatch, "embedding width != decoder width");
  Matrix h = embeddings;
  Matrix next(h.rows(), d);
  for (const auto& w : partition.decoder) {
    for (std::size_t s = 0; s < h.rows(); ++s) {
      auto z = next.row(s);
      kernels::gemv(d, d, w.data(), d, h.row(s).data(), z.data());
      for (auto& v : z) v = std::tanh(v);
    }
    std::swap(h, next);
  }
  return h;
}

DecoderCache adapted_forward(const ModelPartition& partition, const AdapterSet& adapters,
                             const Matrix& embeddings) {
  const std::size_t d = partition.width;
  if (embeddings.cols() != d) fail(Errc::dimension_mismatch, "embedding width != decoder width");
  if (adapters.size() != partition.decoder.size()) {
    fail(Errc::dimension_mismatch, "one adapter per decoder layer required");
  }
  DecoderCache cache;
  cache.inputs.push_back(embeddings);
  const std::size_t batch = embeddings.rows();
  std::vector<double> v(d);
  for (std::size_t l = 0; l < partition.decoder.size(); ++l) {
    const auto& w = partition.decoder[l];
    const auto& ad = adapters[l];
    const std::size_t r = ad.rank();
    const Matrix& h = cache.inputs.back();
    Matrix u(batch, r);
    Matrix out(batch, d);
    for (std::size_t s = 0; s < batch; ++s) {
      auto z = out.row(s);
      kernels::gemv(d, d, w.data(), d, h.row(s).data(), z.data());
      kernels::gemv(r, d, ad.a.data(), d, h.row(s).data(), u.row(s).data());
      kernels::gemv(d, r, ad.b.data(), r, u.row(s).data(), v.data());
      kernels::axpy(ad.scale, v.data(), z.data(), d);
      for (auto& x : z) x = std::tanh(x);
    }
    cache.projections.push_back(std::move(u));
    cache.inputs.push_back(std::move(out));
  }
  return cache;
}

AdapterGradients zero_gradients(const AdapterSet& adapters) {
  AdapterGradients g;
  for (const auto& ad : adapters) g.push_back({Matrix(ad.a.rows(), ad.a.cols()), Matrix(ad.b.rows(), ad.b.cols())});
  return g;
}

AdapterGradients adapter_gradients(const ModelPartition& partition, const AdapterSet& adapters,
                                   const DecoderCache& cache, const Matrix& jacobian) {
  const std::size_t d = partition.width;
  const std::size_t layers = partition.decoder.size();
  if (cache.inputs.size() != layers + 1 || jacobian.cols() != d ||
      jacobian.rows() != cache.inputs.back().rows()) {
    fail(Errc::dimension_mismatch, "Jacobian is " + std::to_string(jacobian.rows()) + "x" +
                                       std::to_string(jacobian.cols()) + ", expected batch x " +
                                       std::to_string(d));
  }
  AdapterGradients grads = zero_gradients(adapters);
  std::vector<double> g(d), gz(d), g_prev(d);
  for (std::size_t s = 0; s < jacobian.rows(); ++s) {
    std::copy(jacobian.row(s).begin(), jacobian.row(s).end(), g.begin());
    for (std::size_t l = layers; l-- > 0;) {
      const auto& ad = adapters[l];
      const std::size_t r = ad.rank();
      const auto h_out = cache.inputs[l + 1].row(s);
      const auto h_in = cache.inputs[l].row(s);
      const auto u = cache.projections[l].row(s);
      for (std::size_t i = 0; i < d; ++i) gz[i] = g[i] * (1.0 - h_out[i] * h_out[i]);

      std::vector<double> w(r, 0.0);
      for (std::size_t i = 0; i < d; ++i) {
        kernels::axpy(ad.scale * gz[i], u.data(), grads[l].b.row(i).data(), r);
        kernels::axpy(gz[i], ad.b.row(i).data(), w.data(), r);
      }
      for (std::size_t k = 0; k < r; ++k) {
        kernels::axpy(ad.scale * w[k], h_in.data(), grads[l].a.row(k).data(), d);
      }
      if (l == 0) break;
      std::fill(g_prev.begin(), g_prev.end(), 0.0);
      const auto& wl = partition.decoder[l];
      for (std::size_t i = 0; i < d; ++i) kernels::axpy(gz[i], wl.row(i).data(), g_prev.data(), d);
      for (std::size_t k = 0; k < r; ++k) {
        kernels::axpy(ad.scale * w[k], ad.a.row(k).data(), g_prev.data(), d);
      }
      std::swap(g, g_prev);
    }
  }
  return grads;
}

DeviceLoss device_loss(const Matrix& representations, std::span<const Sample> samples,
                       const Matrix& head) {
  const std::size_t batch = representations.rows();
  const std::size_t d = representations.cols();
  const std::size_t c = head.cols();
  if (head.rows() != d || samples.size() != batch || batch == 0) {
    fail(Errc::dimension_mismatch, "device_loss: inconsistent batch, width or head shape");
  }
  const Matrix logits = matmul(representations, head);
  DeviceLoss out;
  out.jacobian = Matrix(batch, d);
  out.head_grad = Matrix(d, c);
  std::vector<double> delta(c);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t s = 0; s < batch; ++s) {
    const auto z = logits.row(s);
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) sum += std::exp(z[k] - zmax);
    const double lse = zmax + std::log(sum);
    const auto y = samples[s].label;
    if (y >= c) fail(Errc::invalid_parameter, "label out of range");
    out.loss += (lse - z[y]) * inv_b;
    for (std::size_t k = 0; k < c; ++k) delta[k] = std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0);
    kernels::gemv(d, c, head.data(), c, delta.data(), out.jacobian.row(s).data());
    const auto r = representations.row(s);
    for (std::size_t i = 0; i < d; ++i) {
      kernels::axpy(r[i] * inv_b, delta.data(), out.head_grad.row(i).data(), c);
    }
  }
  return out;
}

void clip_rows(Matrix& jacobian, double clip_norm) {
  for (std::size_t s = 0; s < jacobian.rows(); ++s) {
    auto row = jacobian.row(s);
    const double norm = row_norm(row);
    if (norm <= clip_norm) continue;
    const std::vector<double> orig(row.begin(), row.end());
    double factor = clip_norm / norm;
    while (true) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] = orig[i] * factor;
      if (row_norm(row) <= clip_norm) break;
      factor = std::nextafter(factor, 0.0);
    }
  }
}

AdapterGradients average(std::span<const AdapterGradients> per_device) {
  if (per_device.empty()) fail(Errc::invalid_parameter, "average: no gradients");
  AdapterGradients out = per_device.front();
  for (std::size_t i = 1; i < per_device.size(); ++i) {
    if (per_device[i].size() != out.size()) fail(Errc::dimension_mismatch, "average: layer count differs");
    for (std::size_t l = 0; l < out.size(); ++l) {
      kernels::axpy(1.0, per_device[i][l].a.data(), out[l].a.data(), out[l].a.size());
      kernels::axpy(1.0, per_device[i][l].b.data(), out[l].b.data(), out[l].b.size());
    }
  }
  const double inv = 1.0 / static_cast<double>(per_device.size());
  for (auto& g : out) {
    for (auto& v : g.a.flat()) v *= inv;
    for (auto& v : g.b.flat()) v *= inv;
  }
  return out;
}

Rng batch_rng(std::uint64_t seed, std::size_t device_index) {
  return make_rng(seed, kTagBatch, device_index);
}

std::vector<std::size_t> draw_batch(Rng& rng, std::size_t shard_size, std::size_t batch) {
  std::vector<std::size_t> idx(shard_size);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(batch, shard_size));
  return idx;
}

double server_forward_flops(std::size_t width, std::size_t layers, std::size_t rank,
                            std::size_t samples) {
  const double d = static_cast<double>(width);
  const double r = static_cast<double>(rank);
  return static_cast<double>(samples) * static_cast<double>(layers) *
         (2.0 * d * d + 4.0 * r * d + 2.0 * d);
}

ForwardResult forward_round(const ModelPartition& partition, const AdapterSet& adapters,
                            std::span<const DeviceBatch> batches,
                            const netsim::Topology& topology, const std::string& server,
                            double t0) {
  const auto& server_node = topology.node(server);
  const std::size_t d = partition.width;
  for (const auto& b : batches) {
    if (!topology.route(b.device, server)) {
      fail(Errc::unreachable_device, "device " + b.device + " has no link path to " + server);
    }
    if (b.samples.empty()) fail(Errc::invalid_parameter, "device " + b.device + " has an empty batch");
  }

  ForwardResult result;
  auto& trace = result.trace;
  std::size_t total_samples = 0;
  for (const auto& b : batches) {
    DeviceTraffic t;
    t.device = b.device;
    const double n = static_cast<double>(b.samples.size());
    t.uplink_embedding_bytes = n * static_cast<double>(d) * kBytesPerScalar;
    t.downlink_repr_bytes = n * static_cast<double>(d) * kBytesPerScalar;
    double embed_flops = 0.0;
    for (const auto& s : b.samples) embed_flops += static_cast<double>(s.tokens.size() * d);
    t.embed_compute_s = netsim::computation_latency(embed_flops, topology.node(b.device));
    trace.devices.push_back(t);
    total_samples += b.samples.size();

    const Matrix emb = embed(partition, b.samples);
    result.caches.push_back(adapted_forward(partition, adapters, emb));
    result.representations.push_back(result.caches.back().inputs.back());
  }
  const std::size_t rank = adapters.empty() ? 0 : adapters.front().rank();
  trace.server_forward_s = netsim::computation_latency(
      server_forward_flops(d, partition.decoder.size(), rank, total_samples), server_node);

  // Uploads run in parallel; the server starts once every embedding has
  // arrived and then unicasts each device its own representations.
  netsim::EventClock clock(t0);
  std::size_t outstanding = batches.size();
  for (std::size_t i = 0; i < batches.size(); ++i) {
    auto& dt = trace.devices[i];
    const double start = t0 + dt.embed_compute_s;
    dt.uplink_embedding_s =
        netsim::route_latency(topology, dt.device, server, dt.uplink_embedding_bytes, start);
    clock.schedule(start + dt.uplink_embedding_s,
                   {"embedding_uplink",
                    {{"device", dt.device}, {"bytes", dt.uplink_embedding_bytes}},
                    [&](netsim::EventClock& c) {
                      if (--outstanding > 0) return;
                      c.schedule_after(trace.server_forward_s,
                                       {"server_forward", {{"samples", total_samples}},
                                        [&](netsim::EventClock& c2) {
                                          for (auto& t : trace.devices) {
                                            t.downlink_repr_s = netsim::route_latency(
                                                topology, server, t.device, t.downlink_repr_bytes,
                                                c2.now());
                                            c2.schedule_after(
                                                t.downlink_repr_s,
                                                {"repr_downlink",
                                                 {{"device", t.device},
                                                  {"bytes", t.downlink_repr_bytes}},
                                                 {}});
                                          }
                                        }});
                    }});
  }
  trace.events = clock.run_until(netsim::kUnboundedHorizon);
  trace.forward_latency_s = trace.events.empty() ? 0.0 : trace.events.back().time - t0;
  return result;
}

BackwardResult backward_round(const ModelPartition& partition, AdapterSet& adapters,
                              std::vector<Matrix>& heads, std::span<const DeviceBatch> batches,
                              const ForwardResult& forward, const netsim::Topology& topology,
                              const std::string& server, double t_start,
                              const std::optional<PrivacySpec>& privacy, double lr,
                              std::uint64_t noise_seed) {
  if (heads.size() != batches.size() || forward.caches.size() != batches.size()) {
    fail(Errc::dimension_mismatch, "backward_round: one head and forward cache per device required");
  }
  if (privacy) validate(*privacy);
  const std::size_t d = partition.width;
  const std::size_t c = partition.classes;

  BackwardResult result;
  result.trace = forward.trace;
  auto& trace = result.trace;
  std::vector<AdapterGradients> noisy_grads;
  std::vector<AdapterGradients> clean_grads;
  std::size_t total_samples = 0;

  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& batch = batches[i];
    DeviceLoss dl = device_loss(forward.representations[i], batch.samples, heads[i]);
    result.device_losses.push_back(dl.loss);
    const double n = static_cast<double>(batch.samples.size());
    total_samples += batch.samples.size();

    Matrix jac = dl.jacobian;
    Matrix clean;
    if (privacy) {
      clip_rows(jac, privacy->clip_norm);
      clean = jac;
      Rng rng = make_rng(noise_seed, kTagNoise, i);
      const double stddev = privacy->noise_multiplier * privacy->clip_norm;
      for (auto& v : jac.flat()) v += gaussian(rng, stddev);
    }
    // Per-sample Jacobians become the gradient of the batch-mean loss.
    for (auto& v : jac.flat()) v /= n;
    noisy_grads.push_back(adapter_gradients(partition, adapters, forward.caches[i], jac));
    if (privacy) {
      for (auto& v : clean.flat()) v /= n;
      clean_grads.push_back(adapter_gradients(partition, adapters, forward.caches[i], clean));
    }

    kernels::axpy(-lr, dl.head_grad.data(), heads[i].data(), heads[i].size());

    auto& dt = trace.devices[i];
    dt.uplink_jacobian_bytes = n * static_cast<double>(d) * kBytesPerScalar;
    dt.head_compute_s = netsim::computation_latency(
        6.0 * n * static_cast<double>(d * c), topology.node(batch.device));
  }

  result.averaged = average(noisy_grads);
  trace.grad_noise_variance = 0.0;
  if (privacy) {
    const auto clean_avg = average(clean_grads);
    double noise_sq = 0.0;
    std::size_t entries = 0;
    for (std::size_t l = 0; l < clean_avg.size(); ++l) {
      for (std::size_t k = 0; k < clean_avg[l].a.size(); ++k) {
        const double e = result.averaged[l].a.flat()[k] - clean_avg[l].a.flat()[k];
        noise_sq += e * e;
      }
      for (std::size_t k = 0; k < clean_avg[l].b.size(); ++k) {
        const double e = result.averaged[l].b.flat()[k] - clean_avg[l].b.flat()[k];
        noise_sq += e * e;
      }
      entries += clean_avg[l].a.size() + clean_avg[l].b.size();
    }
    trace.grad_noise_variance = noise_sq / static_cast<double>(entries);
  }
  const double inv_devices = 1.0 / static_cast<double>(batches.size());

  for (std::size_t l = 0; l < adapters.size(); ++l) {
    kernels::axpy(-lr, result.averaged[l].a.data(), adapters[l].a.data(), adapters[l].a.size());
    kernels::axpy(-lr, result.averaged[l].b.data(), adapters[l].b.data(), adapters[l].b.size());
  }

  trace.round_loss = 0.0;
  for (double v : result.device_losses) trace.round_loss += v;
  trace.round_loss *= inv_devices;

  const std::size_t rank = adapters.empty() ? 0 : adapters.front().rank();
  trace.server_backward_s = netsim::computation_latency(
      2.0 * server_forward_flops(d, partition.decoder.size(), rank, total_samples),
      topology.node(server));

  netsim::EventClock clock(t_start);
  std::size_t outstanding = batches.size();
  for (auto& dt : trace.devices) {
    const double start = t_start + dt.head_compute_s;
    dt.uplink_jacobian_s =
        netsim::route_latency(topology, dt.device, server, dt.uplink_jacobian_bytes, start);
    clock.schedule(start + dt.uplink_jacobian_s,
                   {"jacobian_uplink", {{"device", dt.device}, {"bytes", dt.uplink_jacobian_bytes}},
                    [&](netsim::EventClock& c) {
                      if (--outstanding > 0) return;
                      c.schedule_after(trace.server_backward_s,
                                       {"server_backward", {{"samples", total_samples}}, {}});
                    }});
  }
  auto events = clock.run_until(netsim::kUnboundedHorizon);
  trace.backward_latency_s = events.empty() ? 0.0 : events.back().time - t_start;
  trace.events.insert(trace.events.end(), events.begin(), events.end());
  return result;
}

double evaluate(const ModelPartition& partition, const AdapterSet& adapters,
                std::span<const Matrix> heads, std::span<const Sample> samples) {
  if (heads.empty() || samples.empty()) return 0.0;
  const Matrix repr = adapted_forward(partition, adapters, embed(partition, samples)).inputs.back();
  double total = 0.0;
  for (const auto& head : heads) total += device_loss(repr, samples, head).loss;
  return total / static_cast<double>(heads.size());
}

FedftReport run_fedft(const FedftConfig& cfg, const netsim::Topology& topology) {
  if (cfg.devices.empty()) fail(Errc::invalid_parameter, "fedft needs at least one device");
  if (!topology.has_node(cfg.server)) fail(Errc::invalid_parameter, "unknown fedft server " + cfg.server);
  if (cfg.batch == 0 || cfg.samples_per_device == 0 || cfg.rounds == 0) {
    fail(Errc::invalid_parameter, "fedft batch, samples_per_device and rounds must be positive");
  }
  const ModelPartition partition =
      partition_model(cfg.width, cfg.layers, cfg.vocab, cfg.classes, cfg.seed);
  const std::size_t rank = cfg.rank > 0 ? cfg.rank : budget_rank(cfg.width, cfg.layers, cfg.budget_fraction);
  if (rank == 0) {
    fail(Errc::rank_out_of_range, "no positive rank fits " + io::format_double(cfg.budget_fraction) +
                                      " of the decoder parameters at width " + std::to_string(cfg.width));
  }
  AdapterSet adapters = attach_lora(partition, rank, cfg.lora_alpha, cfg.seed);

  std::optional<PrivacySpec> privacy;
  if (cfg.privacy) privacy = PrivacySpec{cfg.clip, cfg.sigma, cfg.delta, cfg.alpha_grid};

  const std::size_t n_dev = cfg.devices.size();
  const auto pool = synth_dataset(cfg.vocab, cfg.classes,
                                  cfg.eval_samples + n_dev * cfg.samples_per_device,
                                  cfg.tokens_per_sample, cfg.seed);
  const std::span<const Sample> eval(pool.data(), cfg.eval_samples);
  std::vector<std::span<const Sample>> shards;
  for (std::size_t i = 0; i < n_dev; ++i) {
    shards.emplace_back(pool.data() + cfg.eval_samples + i * cfg.samples_per_device,
                        cfg.samples_per_device);
  }
  std::vector<Rng> batch_rngs;
  for (std::size_t i = 0; i < n_dev; ++i) batch_rngs.push_back(batch_rng(cfg.seed, i));
  std::vector<Matrix> heads(n_dev, partition.task_head);

  FedftReport report;
  report.rank = rank;
  report.adapter_parameters = parameter_count(adapters);
  report.decoder_parameters = partition.decoder_parameter_count();

  double t = 0.0;
  for (std::size_t round = 0; round < cfg.rounds; ++round) {
    std::vector<DeviceBatch> batches;
    for (std::size_t i = 0; i < n_dev; ++i) {
      DeviceBatch b{cfg.devices[i], {}};
      for (auto k : draw_batch(batch_rngs[i], cfg.samples_per_device, cfg.batch)) {
        b.samples.push_back(shards[i][k]);
      }
      batches.push_back(std::move(b));
    }
    const auto fwd = forward_round(partition, adapters, batches, topology, cfg.server, t);
    const double t_back = t + fwd.trace.forward_latency_s;
    const auto bwd = backward_round(partition, adapters, heads, batches, fwd, topology, cfg.server,
                                    t_back, privacy, cfg.lr, derive_seed(cfg.seed, round));
    t = t_back + bwd.trace.backward_latency_s;

    RoundRecord rec;
    rec.round = round;
    rec.loss = bwd.trace.round_loss;
    rec.eval_loss = evaluate(partition, adapters, heads, eval);
    if (privacy) {
      const auto g = rdp_epsilon(*privacy, privacy->clip_norm, round + 1);
      rec.epsilon = g.epsilon;
      report.privacy = g;
      report.best_alpha.push_back(g.best_alpha);
    } else {
      report.best_alpha.push_back(0.0);
    }
    rec.grad_noise_variance = bwd.trace.grad_noise_variance;
    rec.forward_latency_s = bwd.trace.forward_latency_s;
    rec.backward_latency_s = bwd.trace.backward_latency_s;
    report.rounds.push_back(rec);

    for (const auto& dt : bwd.trace.devices) {
      report.trace.push_back({round, dt.device, "embed_compute", 0.0, dt.embed_compute_s});
      report.trace.push_back({round, dt.device, "uplink_embedding", dt.uplink_embedding_bytes, dt.uplink_embedding_s});
      report.trace.push_back({round, dt.device, "downlink_repr", dt.downlink_repr_bytes, dt.downlink_repr_s});
      report.trace.push_back({round, dt.device, "head_compute", 0.0, dt.head_compute_s});
      report.trace.push_back({round, dt.device, "uplink_jacobian", dt.uplink_jacobian_bytes, dt.uplink_jacobian_s});
    }
    report.trace.push_back({round, cfg.server, "server_forward", 0.0, bwd.trace.server_forward_s});
    report.trace.push_back({round, cfg.server, "server_backward", 0.0, bwd.trace.server_backward_s});
  }
  if (!privacy) {
    report.privacy = {std::numeric_limits<double>::infinity(), cfg.delta, 0.0};
  }
  return report;
}

std::string loss_csv(const FedftReport& report) {
  std::ostringstream out;
  out << "round,loss,epsilon\n";
  for (const auto& r : report.rounds) {
    out << r.round << ',' << io::format_double(r.loss) << ',' << io::format_double(r.epsilon) << '\n';
  }
  return out.str();
}

std::string trace_csv(const FedftReport& report) {
  std::ostringstream out;
  out << "round,device,phase,bytes,latency_s\n";
  for (const auto& r : report.trace) {
    out << r.round << ',' << io::csv_field(r.device) << ',' << r.phase << ','
        << io::format_double(r.bytes) << ',' << io::format_double(r.latency_s) << '\n';
  }
  return out.str();
}

std::string privacy_csv(const FedftReport& report) {
  std::ostringstream out;
  out << "round,epsilon,best_alpha,grad_noise_variance\n";
  for (std::size_t i = 0; i < report.rounds.size(); ++i) {
    const auto& r = report.rounds[i];
    out << r.round << ',' << io::format_double(r.epsilon) << ','
        << io::format_double(report.best_alpha[i]) << ','
        << io::format_double(r.grad_noise_variance) << '\n';
  }
  return out.str();
}

}  // namespace edgelam::fedft
