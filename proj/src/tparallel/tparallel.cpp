#include "edgelam/tparallel.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "edgelam/error.hpp"
#include "edgelam/io.hpp"
#include "edgelam/kernels.hpp"

namespace edgelam::tparallel {
namespace {

double as_double(std::size_t v) { return static_cast<double>(v); }

bool reachable(const netsim::Topology& topology, const std::string& a, const std::string& b) {
  return topology.route(a, b).has_value();
}

// Number of compositions of n into d nonnegative parts, as a double.
double composition_count(std::size_t n, std::size_t d) {
  double c = 1.0;
  for (std::size_t i = 1; i < d; ++i) c = c * as_double(n + i) / as_double(i);
  return c;
}

struct Candidate {
  std::string id;
  std::size_t cap = 0;          // storage-limited width, at most N
  std::vector<double> finish;   // finish[w] for w = 0..cap, filled lazily
};

class FinishTable {
 public:
  FinishTable(const GemmTask& task, const netsim::Topology& topology, const std::string& server)
      : task_(task), topology_(topology), server_(server) {}

  double operator()(Candidate& c, std::size_t w) const {
    if (c.finish.empty()) c.finish.assign(c.cap + 1, std::nan(""));
    double& slot = c.finish[w];
    if (std::isnan(slot)) slot = device_timeline(task_, topology_, server_, c.id, w).finish_s;
    return slot;
  }

 private:
  const GemmTask& task_;
  const netsim::Topology& topology_;
  const std::string& server_;
};

// Exhaustive enumeration in descending lexicographic order; keeps the first
// strict minimum, so ties resolve to the lexicographically largest vector.
std::vector<std::size_t> enumerate_best(std::vector<Candidate>& cands, std::size_t n,
                                        const FinishTable& fin) {
  const std::size_t d = cands.size();
  std::vector<std::size_t> cur(d, 0), best;
  double best_val = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t i, std::size_t left,
                                                                  double worst) {
    if (i + 1 == d) {
      if (left > cands[i].cap) return;
      cur[i] = left;
      const double val = std::max(worst, fin(cands[i], left));
      if (val < best_val) {
        best_val = val;
        best = cur;
      }
      return;
    }
    for (std::size_t w = std::min(cands[i].cap, left) + 1; w-- > 0;) {
      cur[i] = w;
      rec(i + 1, left - w, std::max(worst, fin(cands[i], w)));
    }
  };
  rec(0, n, 0.0);
  return best;
}

// Same optimum as enumerate_best without visiting every composition: the
// bottleneck value is one of the finish times, and per-device finish times
// are nondecreasing in width.
std::vector<std::size_t> threshold_best(std::vector<Candidate>& cands, std::size_t n,
                                        const FinishTable& fin) {
  std::vector<double> values;
  for (auto& c : cands)
    for (std::size_t w = 1; w <= c.cap; ++w) values.push_back(fin(c, w));
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  auto width_under = [&](Candidate& c, double tau) {
    fin(c, 0);
    auto it = std::upper_bound(c.finish.begin() + 1, c.finish.end(), tau);
    return static_cast<std::size_t>(it - c.finish.begin()) - 1;
  };
  auto feasible = [&](double tau) {
    std::size_t total = 0;
    for (auto& c : cands) total += width_under(c, tau);
    return total >= n;
  };
  std::size_t lo = 0, hi = values.size() - 1;
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (feasible(values[mid])) hi = mid;
    else lo = mid + 1;
  }
  const double tau = values[lo];
  std::vector<std::size_t> widths(cands.size(), 0);
  std::size_t left = n;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    widths[i] = std::min(width_under(cands[i], tau), left);
    left -= widths[i];
  }
  return widths;
}

std::vector<std::size_t> greedy_plan(std::vector<Candidate>& cands, std::size_t n,
                                     const netsim::Topology& topology, const FinishTable& fin) {
  const std::size_t d = cands.size();
  double total_rate = 0.0;
  for (const auto& c : cands) total_rate += topology.node(c.id).compute_rate;
  std::vector<std::size_t> widths(d);
  std::vector<double> frac(d);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double share = as_double(n) * topology.node(cands[i].id).compute_rate / total_rate;
    widths[i] = static_cast<std::size_t>(std::floor(share));
    frac[i] = share - std::floor(share);
    assigned += widths[i];
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++widths[order[r % d]];

  // Storage repair: move excess one column at a time to the device whose
  // finish time after receiving it is smallest (ties by id order).
  for (std::size_t i = 0; i < d; ++i) {
    while (widths[i] > cands[i].cap) {
      std::size_t target = d;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < d; ++j) {
        if (j == i || widths[j] >= cands[j].cap) continue;
        const double f = fin(cands[j], widths[j] + 1);
        if (f < best) {
          best = f;
          target = j;
        }
      }
      if (target == d) fail(Errc::infeasible_storage, "no device can absorb more columns");
      --widths[i];
      ++widths[target];
    }
  }
  return widths;
}

void check_shard_fits(const GemmTask& task, const netsim::Topology& topology,
                      const SliceAssignment& a) {
  const double need = shard_storage_bytes(task, a.width);
  const double have = topology.node(a.device).storage;
  if (need > have) {
    fail(Errc::infeasible_storage, "shard of width " + std::to_string(a.width) + " needs " +
                                       io::format_double(need) + " bytes on " + a.device +
                                       " which has " + io::format_double(have));
  }
}

}  // namespace

void validate(const GemmTask& task) {
  if (task.m == 0 || task.k == 0 || task.n == 0) {
    fail(Errc::invalid_parameter, "gemm dimensions must all be >= 1");
  }
}

std::size_t SplitPlan::total_width() const {
  std::size_t s = 0;
  for (const auto& a : assignments) s += a.width;
  return s;
}

double shard_storage_bytes(const GemmTask& task, std::size_t width) {
  return as_double((task.k + task.m) * width) * kBytesPerScalar;
}

std::size_t storage_width(const GemmTask& task, double storage) {
  const double per_column = as_double(task.k + task.m) * kBytesPerScalar;
  if (!(storage >= per_column)) return 0;
  return static_cast<std::size_t>(std::floor(storage / per_column));
}

DeviceTimeline device_timeline(const GemmTask& task, const netsim::Topology& topology,
                               const std::string& server, const std::string& device,
                               std::size_t width) {
  DeviceTimeline t;
  if (width == 0) return t;
  const double w = as_double(width);
  const double down_bytes = (as_double(task.k) * w + as_double(task.m * task.k)) * kBytesPerScalar;
  const double up_bytes = as_double(task.m) * w * kBytesPerScalar;
  t.downlink_s = netsim::route_latency(topology, server, device, down_bytes, 0.0);
  t.compute_s = netsim::computation_latency(2.0 * as_double(task.m * task.k) * w, topology.node(device));
  const double start = t.downlink_s + t.compute_s;
  t.uplink_s = netsim::route_latency(topology, device, server, up_bytes, start);
  t.finish_s = start + t.uplink_s;
  return t;
}

double merge_latency(const GemmTask& task, const netsim::Topology& topology,
                     const std::string& server) {
  const double mn = as_double(task.m * task.n);
  return netsim::computation_latency(mn + mn * kBytesPerScalar, topology.node(server));
}

double plan_latency(const GemmTask& task, const netsim::Topology& topology,
                    const std::string& server, std::span<const std::string> devices,
                    std::span<const std::size_t> widths) {
  if (devices.size() != widths.size()) fail(Errc::dimension_mismatch, "plan_latency: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    worst = std::max(worst, device_timeline(task, topology, server, devices[i], widths[i]).finish_s);
  }
  return worst + merge_latency(task, topology, server);
}

SplitPlan plan_split(const GemmTask& task, const netsim::Topology& topology,
                     const std::string& server, const PlanOptions& options) {
  validate(task);
  if (!topology.has_node(server)) fail(Errc::invalid_parameter, "unknown server " + server);
  std::vector<std::string> ids = options.devices;
  if (ids.empty()) ids = topology.node_ids(netsim::NodeRole::device);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.empty()) fail(Errc::invalid_parameter, "plan_split needs at least one candidate device");

  std::vector<Candidate> cands;
  for (const auto& id : ids) {
    if (!topology.has_node(id)) fail(Errc::invalid_parameter, "unknown device " + id);
    if (id == server || !reachable(topology, id, server)) continue;
    const std::size_t cap = std::min(storage_width(task, topology.node(id).storage), task.n);
    if (cap == 0) continue;
    cands.push_back({id, cap, {}});
  }
  if (cands.empty()) {
    fail(Errc::infeasible_storage, "no reachable candidate can hold even a width-1 shard");
  }
  if (options.uniform) {
    std::size_t shared = cands.front().cap;
    for (const auto& c : cands) shared = std::min(shared, c.cap);
    for (auto& c : cands) c.cap = shared;
  }
  std::size_t capacity = 0;
  for (const auto& c : cands) capacity += c.cap;
  if (capacity < task.n) {
    fail(Errc::infeasible_storage, "candidates hold at most " + std::to_string(capacity) +
                                       " of " + std::to_string(task.n) + " columns");
  }

  const FinishTable fin(task, topology, server);
  SplitPlan plan;
  plan.server = server;
  plan.uniform = options.uniform;
  std::vector<std::size_t> widths;
  if (cands.size() <= options.exhaustive_max_devices) {
    widths = composition_count(task.n, cands.size()) <= 1e6 ? enumerate_best(cands, task.n, fin)
                                                            : threshold_best(cands, task.n, fin);
  } else {
    plan.exact = false;
    widths = greedy_plan(cands, task.n, topology, fin);
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    worst = std::max(worst, fin(cands[i], widths[i]));
    if (widths[i] > 0) plan.assignments.push_back({cands[i].id, widths[i]});
  }
  plan.merge_s = merge_latency(task, topology, server);
  plan.predicted_latency_s = worst + plan.merge_s;
  return plan;
}

SplitResult execute_split(const SplitPlan& plan, const Matrix& w, const Matrix& x,
                          const netsim::Topology& topology) {
  if (x.cols() != w.rows()) fail(Errc::dimension_mismatch, "X columns must equal W rows");
  if (plan.total_width() != w.cols()) {
    fail(Errc::dimension_mismatch, "plan covers " + std::to_string(plan.total_width()) +
                                       " columns but W has " + std::to_string(w.cols()));
  }
  const GemmTask task{x.rows(), x.cols(), w.cols()};
  validate(task);
  for (const auto& a : plan.assignments) check_shard_fits(task, topology, a);

  const Matrix oracle = matmul(x, w);
  SplitResult out;
  out.result = Matrix(task.m, task.n);
  std::size_t col0 = 0;
  std::vector<DeviceTimeline> timelines;
  for (const auto& a : plan.assignments) {
    Matrix part(task.m, a.width);
    kernels::gemm(task.m, task.k, a.width, x.data(), task.k, w.data() + col0, task.n, part.data(),
                  a.width);
    double err = 0.0;
    for (std::size_t i = 0; i < task.m; ++i) {
      for (std::size_t j = 0; j < a.width; ++j) {
        out.result(i, col0 + j) = part(i, j);
        err = std::max(err, std::abs(part(i, j) - oracle(i, col0 + j)));
      }
    }
    const auto tl = device_timeline(task, topology, plan.server, a.device, a.width);
    const double wd = as_double(a.width);
    out.rows.push_back({"shard_downlink", a.device,
                        (as_double(task.k) * wd + as_double(task.m * task.k)) * kBytesPerScalar,
                        tl.downlink_s, 0.0});
    out.rows.push_back({"shard_compute", a.device, 0.0, tl.compute_s, err});
    out.rows.push_back({"partial_uplink", a.device, as_double(task.m) * wd * kBytesPerScalar,
                        tl.uplink_s, 0.0});
    timelines.push_back(tl);
    col0 += a.width;
  }

  const double merge_s = merge_latency(task, topology, plan.server);
  netsim::EventClock clock(0.0);
  std::size_t outstanding = plan.assignments.size();
  for (std::size_t i = 0; i < plan.assignments.size(); ++i) {
    const auto& a = plan.assignments[i];
    const auto& tl = timelines[i];
    clock.schedule(tl.downlink_s, {"shard_downlink", {{"device", a.device}, {"width", a.width}}, {}});
    clock.schedule(tl.downlink_s + tl.compute_s, {"shard_compute", {{"device", a.device}}, {}});
    clock.schedule(tl.finish_s, {"partial_uplink",
                                 {{"device", a.device}, {"width", a.width}},
                                 [&](netsim::EventClock& c) {
                                   if (--outstanding > 0) return;
                                   c.schedule_after(merge_s, {"merge", {{"server", plan.server}}, {}});
                                 }});
  }
  out.events = clock.run_until(netsim::kUnboundedHorizon);
  out.latency_s = out.events.empty() ? 0.0 : out.events.back().time;
  double total_err = 0.0;
  for (std::size_t i = 0; i < out.result.size(); ++i) {
    total_err = std::max(total_err, std::abs(out.result.flat()[i] - oracle.flat()[i]));
  }
  out.rows.push_back({"merge", plan.server, as_double(task.m * task.n) * kBytesPerScalar, merge_s,
                      total_err});
  return out;
}

void apply(Activation act, Matrix& m) {
  if (act == Activation::identity) return;
  for (auto& v : m.flat()) v = std::tanh(v);
}

EncodeResult encode_forward(const SplitPlan& plan, const Matrix& w,
                            std::span<const HeldRows> holders, const netsim::Topology& topology,
                            Activation act) {
  const std::size_t k = w.rows(), n = w.cols();
  if (plan.total_width() != n) {
    fail(Errc::dimension_mismatch, "plan covers " + std::to_string(plan.total_width()) +
                                       " columns but the weight has " + std::to_string(n));
  }
  std::size_t m = 0;
  for (const auto& h : holders) {
    if (h.rows.rows() > 0 && h.rows.cols() != k) {
      fail(Errc::dimension_mismatch, "rows on " + h.device + " have " + std::to_string(h.rows.cols()) +
                                         " features, weight expects " + std::to_string(k));
    }
    if (h.rows.rows() > 0 && !reachable(topology, h.device, plan.server)) {
      fail(Errc::unreachable_device, "holder " + h.device + " cannot reach " + plan.server);
    }
    m += h.rows.rows();
  }

  EncodeResult out;
  out.output = Matrix(m, n);
  double worst = 0.0, received = 0.0;
  std::size_t row0 = 0;
  for (const auto& h : holders) {
    const std::size_t mi = h.rows.rows();
    if (mi == 0) continue;
    std::size_t col0 = 0;
    double bytes = 0.0;
    for (std::size_t j = 0; j < plan.assignments.size(); ++j) {
      const std::size_t wj = plan.assignments[j].width;
      kernels::gemm(mi, k, wj, h.rows.data(), k, w.data() + col0, n,
                    out.output.data() + row0 * n + col0, n);
      const double b = as_double(mi * wj) * kBytesPerScalar;
      out.uploads.push_back({h.device, j, mi, wj, b});
      bytes += b;
      col0 += wj;
    }
    const double compute = netsim::computation_latency(2.0 * as_double(mi * k * n), topology.node(h.device));
    const double up = netsim::route_latency(topology, h.device, plan.server, bytes, compute);
    worst = std::max(worst, compute + up);
    received += bytes;
    row0 += mi;
  }
  apply(act, out.output);
  const double merge_flops = 2.0 * as_double(m * n) + received;
  out.latency_s = worst + netsim::computation_latency(merge_flops, topology.node(plan.server));
  return out;
}

LoopResult looped_forward(const LoopSpec& spec, const SplitPlan& plan,
                          std::span<const HeldRows> holders, const netsim::Topology& topology) {
  const Matrix& block = spec.shared_block;
  if (block.rows() != block.cols() || block.empty()) {
    fail(Errc::non_square_block, "shared block is " + std::to_string(block.rows()) + "x" +
                                     std::to_string(block.cols()));
  }
  if (spec.depth == 0) fail(Errc::invalid_parameter, "loop depth must be >= 1");
  const std::size_t d = block.rows();

  LoopResult out;
  out.parameter_bytes_per_device = as_double(block.size()) * kBytesPerScalar;
  std::vector<HeldRows> current(holders.begin(), holders.end());
  for (std::size_t depth = 0; depth < spec.depth; ++depth) {
    if (depth > 0) {
      // The server returns each holder its own activation rows.
      double worst = 0.0;
      std::size_t row0 = 0;
      for (auto& h : current) {
        const std::size_t mi = h.rows.rows();
        Matrix next(mi, d);
        std::copy_n(out.output.data() + row0 * d, mi * d, next.data());
        if (mi > 0) {
          worst = std::max(worst, netsim::route_latency(topology, plan.server, h.device,
                                                        as_double(mi * d) * kBytesPerScalar,
                                                        out.latency_s));
        }
        h.rows = std::move(next);
        row0 += mi;
      }
      out.latency_s += worst;
    }
    auto enc = encode_forward(plan, block, current, topology, spec.activation);
    out.output = std::move(enc.output);
    out.latency_s += enc.latency_s;
    out.uploads.insert(out.uploads.end(), enc.uploads.begin(), enc.uploads.end());
  }
  return out;
}

nlohmann::json plan_json(const SplitPlan& plan, const GemmTask& task) {
  nlohmann::json j;
  j["server"] = plan.server;
  j["task"] = {{"m", task.m}, {"k", task.k}, {"n", task.n}};
  j["assignments"] = nlohmann::json::array();
  for (const auto& a : plan.assignments) {
    j["assignments"].push_back({{"device", a.device}, {"width", a.width}});
  }
  j["predicted_latency_s"] = plan.predicted_latency_s;
  j["merge_s"] = plan.merge_s;
  j["search"] = plan.exact ? "exhaustive" : "greedy";
  j["uniform"] = plan.uniform;
  return j;
}

std::string exec_csv(std::span<const ExecRow> rows) {
  std::ostringstream out;
  out << "phase,device,bytes,latency_s,max_abs_err\n";
  for (const auto& r : rows) {
    out << r.phase << ',' << io::csv_field(r.device) << ',' << io::format_double(r.bytes) << ','
        << io::format_double(r.latency_s) << ',' << io::format_double(r.max_abs_err) << '\n';
  }
  return out.str();
}

}  // namespace edgelam::tparallel
