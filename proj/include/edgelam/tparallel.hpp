#pragma once

// Column-split tensor parallelism. The server holds X (M x K) and W (K x N);
// each participating device receives X and a column slice of W, computes its
// M x w block of X W and returns it, and the server concatenates the blocks.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgelam/matrix.hpp"
#include "edgelam/netsim.hpp"

namespace edgelam::tparallel {

constexpr double kBytesPerScalar = 4.0;

struct GemmTask {
  std::size_t m = 1;
  std::size_t k = 1;
  std::size_t n = 1;

  double flops() const noexcept { return 2.0 * static_cast<double>(m) * static_cast<double>(k) * static_cast<double>(n); }
};

// Throws invalid-parameter for a zero dimension.
void validate(const GemmTask& task);

struct SliceAssignment {
  std::string device;
  std::size_t width = 0;
};

struct SplitPlan {
  std::string server;
  std::vector<SliceAssignment> assignments;  // device-id order, widths >= 1
  double predicted_latency_s = 0.0;
  double merge_s = 0.0;
  bool exact = true;     // false when the greedy fallback produced the plan
  bool uniform = false;  // widths capped by the smallest participant storage

  std::size_t total_width() const;
};

struct PlanOptions {
  // Candidate devices; empty means every device-role node of the topology.
  std::vector<std::string> devices;
  bool uniform = false;
  // Exhaustive search over compositions of N is used up to this device count.
  std::size_t exhaustive_max_devices = 4;
};

// Timeline of one device for a w-column shard starting at t = 0.
struct DeviceTimeline {
  double downlink_s = 0.0;
  double compute_s = 0.0;
  double uplink_s = 0.0;
  double finish_s = 0.0;  // (downlink + compute) + uplink; 0 when w = 0
};

DeviceTimeline device_timeline(const GemmTask& task, const netsim::Topology& topology,
                               const std::string& server, const std::string& device,
                               std::size_t width);

// Bytes a w-column shard occupies on its device: (K w + M w) scalars.
double shard_storage_bytes(const GemmTask& task, std::size_t width);

// Largest width whose shard fits `storage` bytes.
std::size_t storage_width(const GemmTask& task, double storage);

// Server merge: flops M N plus the received bytes, at the server's rate.
double merge_latency(const GemmTask& task, const netsim::Topology& topology,
                     const std::string& server);

// Latency of an explicit width vector (one entry per device, 0 = unused).
double plan_latency(const GemmTask& task, const netsim::Topology& topology,
                    const std::string& server, std::span<const std::string> devices,
                    std::span<const std::size_t> widths);

// Minimizes max_i finish_i + merge subject to storage. Ties go to the
// lexicographically largest width vector in device-id order. Unreachable
// candidates are skipped. Throws infeasible-storage when the candidates
// cannot hold N columns together, invalid-parameter when there are none.
SplitPlan plan_split(const GemmTask& task, const netsim::Topology& topology,
                     const std::string& server, const PlanOptions& options = {});

struct ExecRow {
  std::string phase;
  std::string device;
  double bytes = 0.0;
  double latency_s = 0.0;
  double max_abs_err = 0.0;
};

struct SplitResult {
  Matrix result;
  double latency_s = 0.0;
  std::vector<ExecRow> rows;
  std::vector<netsim::FiredEvent> events;
};

// Runs the plan on the event clock. Throws dimension-mismatch when X, W and
// the plan disagree, infeasible-storage when a shard would not fit.
SplitResult execute_split(const SplitPlan& plan, const Matrix& w, const Matrix& x,
                          const netsim::Topology& topology);

enum class Activation { tanh, identity };

void apply(Activation act, Matrix& m);

struct HeldRows {
  std::string device;
  Matrix rows;  // m_i x K raw inputs, never transmitted
};

struct Upload {
  std::string device;
  std::size_t slice = 0;   // index into plan.assignments
  std::size_t rows = 0;
  std::size_t width = 0;   // scalars per row in the uploaded buffer
  double bytes = 0.0;
};

struct EncodeResult {
  Matrix output;  // act(X W), rows stacked in holder order
  double latency_s = 0.0;
  std::vector<Upload> uploads;
};

// Each holder encodes its own rows with every weight slice of the plan and
// uploads the m_i x w_j blocks; the server places them and applies `act` once.
EncodeResult encode_forward(const SplitPlan& plan, const Matrix& w,
                            std::span<const HeldRows> holders, const netsim::Topology& topology,
                            Activation act = Activation::tanh);

struct LoopSpec {
  std::size_t depth = 1;
  Matrix shared_block;  // d x d, reused at every depth
  Activation activation = Activation::tanh;
};

struct LoopResult {
  Matrix output;
  double latency_s = 0.0;
  double parameter_bytes_per_device = 0.0;  // independent of depth
  std::vector<Upload> uploads;
};

// Depth > 1 returns each holder its activation rows (width-sized) and
// re-encodes with the same block. Throws non-square-block.
LoopResult looped_forward(const LoopSpec& spec, const SplitPlan& plan,
                          std::span<const HeldRows> holders, const netsim::Topology& topology);

nlohmann::json plan_json(const SplitPlan& plan, const GemmTask& task);
// phase,device,bytes,latency_s,max_abs_err
std::string exec_csv(std::span<const ExecRow> rows);

}  // namespace edgelam::tparallel
