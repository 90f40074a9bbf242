#include "edgelam/chanpred.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "edgelam/error.hpp"
#include "edgelam/io.hpp"
#include "edgelam/kernels.hpp"
#include "edgelam/rng.hpp"

namespace edgelam::chanpred {
namespace {

constexpr std::uint64_t kTagPaths = 0x70617468;
constexpr std::uint64_t kTagInit = 0x696e6974;
constexpr std::uint64_t kTagBatch = 0x62617463;
constexpr std::uint64_t kTagShard = 0x73686172;
constexpr std::uint64_t kTagPool = 0x706f6f6c;
constexpr std::uint64_t kTagHeldOut = 0x686f6c64;
constexpr double kBytesPerScalar = 4.0;

// Contiguous row-major block inside the flat parameter vector.
struct Block {
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const noexcept { return rows * cols; }
};

class Layout {
 public:
  Block add(std::size_t rows, std::size_t cols = 1) {
    Block b{total_, rows, cols};
    total_ += b.size();
    return b;
  }
  std::size_t total() const noexcept { return total_; }

 private:
  std::size_t total_ = 0;
};

// y = M x (+ y when accumulate)
void matvec(const double* theta, const Block& m, const double* x, double* y, bool accumulate = false) {
  if (!accumulate) {
    kernels::gemv(m.rows, m.cols, theta + m.offset, m.cols, x, y);
    return;
  }
  for (std::size_t i = 0; i < m.rows; ++i) y[i] += kernels::dot(theta + m.offset + i * m.cols, x, m.cols);
}

// y += M^T v
void matvec_t(const double* theta, const Block& m, const double* v, double* y) {
  for (std::size_t i = 0; i < m.rows; ++i) kernels::axpy(v[i], theta + m.offset + i * m.cols, y, m.cols);
}

// dM += u v^T
void outer(double* grad, const Block& m, const double* u, const double* v) {
  for (std::size_t i = 0; i < m.rows; ++i) kernels::axpy(u[i], v, grad + m.offset + i * m.cols, m.cols);
}

void add_bias(const double* theta, const Block& b, double* y) {
  for (std::size_t i = 0; i < b.rows; ++i) y[i] += theta[b.offset + i];
}

void acc_bias(double* grad, const Block& b, const double* d) {
  for (std::size_t i = 0; i < b.rows; ++i) grad[b.offset + i] += d[i];
}

void fill_gaussian(std::vector<double>& theta, const Block& b, Rng& rng, double stddev) {
  for (std::size_t i = 0; i < b.size(); ++i) theta[b.offset + i] = gaussian(rng, stddev);
}

void mark(std::vector<bool>& trainable, const Block& b, bool value) {
  std::fill(trainable.begin() + static_cast<std::ptrdiff_t>(b.offset),
            trainable.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size()), value);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// ---------------------------------------------------------------------------

class LinearAr final : public Predictor {
 public:
  explicit LinearAr(const PredictorSpec& spec) : Predictor(spec) {
    Layout l;
    a_ = l.add(output_size(), input_size());
    b_ = l.add(output_size());
    theta_.assign(l.total(), 0.0);
    trainable_.assign(l.total(), true);
  }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<LinearAr>(*this); }

  void predict(std::span<const double> x, std::span<double> y) const override {
    matvec(theta_.data(), a_, x.data(), y.data());
    add_bias(theta_.data(), b_, y.data());
  }
  void backprop(std::span<const double> x, std::span<const double> dy,
                std::span<double> grad) const override {
    outer(grad.data(), a_, dy.data(), x.data());
    acc_bias(grad.data(), b_, dy.data());
  }

  void set_persistence() {
    const std::size_t w = spec_.window, h = spec_.horizon;
    std::fill(theta_.begin(), theta_.end(), 0.0);
    for (std::size_t k = 0; k < h; ++k) {
      theta_[a_.offset + k * a_.cols + (w - 1)] = 1.0;
      theta_[a_.offset + (h + k) * a_.cols + (2 * w - 1)] = 1.0;
    }
  }

 private:
  Block a_, b_;
};

class RnnCell final : public Predictor {
 public:
  RnnCell(const PredictorSpec& spec, Rng& rng) : Predictor(spec) {
    const std::size_t h = spec.hidden;
    Layout l;
    wx_ = l.add(h, 2);
    ws_ = l.add(h, h);
    b_ = l.add(h);
    wo_ = l.add(output_size(), h);
    bo_ = l.add(output_size());
    theta_.assign(l.total(), 0.0);
    trainable_.assign(l.total(), true);
    fill_gaussian(theta_, wx_, rng, 1.0 / std::sqrt(2.0));
    fill_gaussian(theta_, ws_, rng, 1.0 / std::sqrt(static_cast<double>(h)));
    fill_gaussian(theta_, wo_, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<RnnCell>(*this); }

  void predict(std::span<const double> x, std::span<double> y) const override {
    const auto states = run(x);
    finish(states.back(), y);
  }

  void backprop(std::span<const double> x, std::span<const double> dy,
                std::span<double> grad) const override {
    const std::size_t h = spec_.hidden, w = spec_.window;
    const double* th = theta_.data();
    double* g = grad.data();
    const auto states = run(x);
    outer(g, wo_, dy.data(), states.back().data());
    acc_bias(g, bo_, dy.data());
    std::vector<double> ds(h, 0.0), dpre(h);
    matvec_t(th, wo_, dy.data(), ds.data());
    for (std::size_t t = w; t-- > 0;) {
      const auto& s_next = states[t + 1];
      for (std::size_t i = 0; i < h; ++i) dpre[i] = ds[i] * (1.0 - s_next[i] * s_next[i]);
      const double xt[2] = {x[t], x[w + t]};
      outer(g, wx_, dpre.data(), xt);
      outer(g, ws_, dpre.data(), states[t].data());
      acc_bias(g, b_, dpre.data());
      std::fill(ds.begin(), ds.end(), 0.0);
      matvec_t(th, ws_, dpre.data(), ds.data());
    }
  }

 private:
  std::vector<std::vector<double>> run(std::span<const double> x) const {
    const std::size_t h = spec_.hidden, w = spec_.window;
    const double* th = theta_.data();
    std::vector<std::vector<double>> states(w + 1, std::vector<double>(h, 0.0));
    std::vector<double> pre(h);
    for (std::size_t t = 0; t < w; ++t) {
      const double xt[2] = {x[t], x[w + t]};
      matvec(th, wx_, xt, pre.data());
      matvec(th, ws_, states[t].data(), pre.data(), true);
      add_bias(th, b_, pre.data());
      for (std::size_t i = 0; i < h; ++i) states[t + 1][i] = std::tanh(pre[i]);
    }
    return states;
  }

  void finish(const std::vector<double>& s, std::span<double> y) const {
    matvec(theta_.data(), wo_, s.data(), y.data());
    add_bias(theta_.data(), bo_, y.data());
  }

  Block wx_, ws_, b_, wo_, bo_;
};

class GruCell final : public Predictor {
 public:
  GruCell(const PredictorSpec& spec, Rng& rng) : Predictor(spec) {
    const std::size_t h = spec.hidden;
    Layout l;
    for (int g = 0; g < 3; ++g) w_[g] = l.add(h, 2);
    for (int g = 0; g < 3; ++g) u_[g] = l.add(h, h);
    for (int g = 0; g < 3; ++g) b_[g] = l.add(h);
    wo_ = l.add(output_size(), h);
    bo_ = l.add(output_size());
    theta_.assign(l.total(), 0.0);
    trainable_.assign(l.total(), true);
    for (int g = 0; g < 3; ++g) {
      fill_gaussian(theta_, w_[g], rng, 1.0 / std::sqrt(2.0));
      fill_gaussian(theta_, u_[g], rng, 1.0 / std::sqrt(static_cast<double>(h)));
    }
    fill_gaussian(theta_, wo_, rng, 1.0 / std::sqrt(static_cast<double>(h)));
  }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<GruCell>(*this); }

  void predict(std::span<const double> x, std::span<double> y) const override {
    const auto steps = run(x);
    matvec(theta_.data(), wo_, steps.back().s.data(), y.data());
    add_bias(theta_.data(), bo_, y.data());
  }

  // z = sig(Wz x + Uz s + bz), r = sig(Wr x + Ur s + br),
  // n = tanh(Wn x + Un (r * s) + bn), s' = (1 - z) * n + z * s.
  void backprop(std::span<const double> x, std::span<const double> dy,
                std::span<double> grad) const override {
    const std::size_t h = spec_.hidden, w = spec_.window;
    const double* th = theta_.data();
    double* g = grad.data();
    const auto steps = run(x);
    outer(g, wo_, dy.data(), steps.back().s.data());
    acc_bias(g, bo_, dy.data());
    std::vector<double> ds(h, 0.0), ds_prev(h), dz(h), dr(h), dn(h), drs(h);
    matvec_t(th, wo_, dy.data(), ds.data());
    for (std::size_t t = w; t-- > 0;) {
      const Step& st = steps[t + 1];
      const std::vector<double>& s = steps[t].s;
      for (std::size_t i = 0; i < h; ++i) {
        ds_prev[i] = ds[i] * st.z[i];
        dn[i] = ds[i] * (1.0 - st.z[i]) * (1.0 - st.n[i] * st.n[i]);
        dz[i] = ds[i] * (s[i] - st.n[i]) * st.z[i] * (1.0 - st.z[i]);
      }
      std::fill(drs.begin(), drs.end(), 0.0);
      matvec_t(th, u_[2], dn.data(), drs.data());
      for (std::size_t i = 0; i < h; ++i) {
        dr[i] = drs[i] * s[i] * st.r[i] * (1.0 - st.r[i]);
        ds_prev[i] += drs[i] * st.r[i];
      }
      const double xt[2] = {x[t], x[w + t]};
      const double* gate_d[3] = {dz.data(), dr.data(), dn.data()};
      for (int gi = 0; gi < 3; ++gi) {
        outer(g, w_[gi], gate_d[gi], xt);
        acc_bias(g, b_[gi], gate_d[gi]);
      }
      outer(g, u_[0], dz.data(), s.data());
      outer(g, u_[1], dr.data(), s.data());
      outer(g, u_[2], dn.data(), st.rs.data());
      matvec_t(th, u_[0], dz.data(), ds_prev.data());
      matvec_t(th, u_[1], dr.data(), ds_prev.data());
      ds.swap(ds_prev);
    }
  }

 private:
  struct Step {
    std::vector<double> s, z, r, n, rs;
  };

  std::vector<Step> run(std::span<const double> x) const {
    const std::size_t h = spec_.hidden, w = spec_.window;
    const double* th = theta_.data();
    std::vector<Step> steps(w + 1);
    steps[0].s.assign(h, 0.0);
    std::vector<double> pre(h);
    for (std::size_t t = 0; t < w; ++t) {
      const double xt[2] = {x[t], x[w + t]};
      const auto& s = steps[t].s;
      Step& st = steps[t + 1];
      st.z.resize(h);
      st.r.resize(h);
      st.n.resize(h);
      st.rs.resize(h);
      st.s.resize(h);
      matvec(th, w_[0], xt, pre.data());
      matvec(th, u_[0], s.data(), pre.data(), true);
      add_bias(th, b_[0], pre.data());
      for (std::size_t i = 0; i < h; ++i) st.z[i] = sigmoid(pre[i]);
      matvec(th, w_[1], xt, pre.data());
      matvec(th, u_[1], s.data(), pre.data(), true);
      add_bias(th, b_[1], pre.data());
      for (std::size_t i = 0; i < h; ++i) {
        st.r[i] = sigmoid(pre[i]);
        st.rs[i] = st.r[i] * s[i];
      }
      matvec(th, w_[2], xt, pre.data());
      matvec(th, u_[2], st.rs.data(), pre.data(), true);
      add_bias(th, b_[2], pre.data());
      for (std::size_t i = 0; i < h; ++i) {
        st.n[i] = std::tanh(pre[i]);
        st.s[i] = (1.0 - st.z[i]) * st.n[i] + st.z[i] * s[i];
      }
    }
    return steps;
  }

  Block w_[3], u_[3], b_[3], wo_, bo_;
};

// One attention block over the window. Token t is e_t = E x_t + b_e + pos_t;
// a single query from the last token attends over all tokens, with low-rank
// adapters on the query and value projections. Output y = Wo (c + e_last) + bo.
class AttnLora final : public Predictor {
 public:
  AttnLora(const PredictorSpec& spec, Rng& rng) : Predictor(spec) {
    const std::size_t d = spec.hidden, w = spec.window, r = spec.lora_rank;
    Layout l;
    e_ = l.add(d, 2);
    be_ = l.add(d);
    pos_ = l.add(w, d);
    wq_ = l.add(d, d);
    wk_ = l.add(d, d);
    wv_ = l.add(d, d);
    aq_ = l.add(r, d);
    bq_ = l.add(d, r);
    av_ = l.add(r, d);
    bv_ = l.add(d, r);
    wo_ = l.add(output_size(), d);
    bo_ = l.add(output_size());
    theta_.assign(l.total(), 0.0);
    trainable_.assign(l.total(), !spec.freeze_base);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    fill_gaussian(theta_, e_, rng, 1.0 / std::sqrt(2.0));
    fill_gaussian(theta_, pos_, rng, 0.1);
    fill_gaussian(theta_, wq_, rng, inv_sqrt_d);
    fill_gaussian(theta_, wk_, rng, inv_sqrt_d);
    fill_gaussian(theta_, wv_, rng, inv_sqrt_d);
    fill_gaussian(theta_, aq_, rng, inv_sqrt_d);
    fill_gaussian(theta_, av_, rng, inv_sqrt_d);
    fill_gaussian(theta_, wo_, rng, inv_sqrt_d);
    for (const Block* b : {&aq_, &bq_, &av_, &bv_, &wo_, &bo_}) mark(trainable_, *b, true);
    scale_ = spec.lora_alpha / static_cast<double>(r);
  }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<AttnLora>(*this); }

  void predict(std::span<const double> x, std::span<double> y) const override {
    const Fwd f = forward(x);
    matvec(theta_.data(), wo_, f.hid.data(), y.data());
    add_bias(theta_.data(), bo_, y.data());
  }

  void backprop(std::span<const double> x, std::span<const double> dy,
                std::span<double> grad) const override {
    const std::size_t d = spec_.hidden, w = spec_.window, r = spec_.lora_rank;
    const double* th = theta_.data();
    double* g = grad.data();
    const Fwd f = forward(x);
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));

    outer(g, wo_, dy.data(), f.hid.data());
    acc_bias(g, bo_, dy.data());
    std::vector<double> dh(d, 0.0);
    matvec_t(th, wo_, dy.data(), dh.data());

    std::vector<std::vector<double>> de(w, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < d; ++i) de[w - 1][i] += dh[i];  // residual
    // c = sum alpha_t v_t
    std::vector<double> dalpha(w), da(w);
    for (std::size_t t = 0; t < w; ++t) dalpha[t] = kernels::dot(dh.data(), f.v[t].data(), d);
    double weighted = 0.0;
    for (std::size_t t = 0; t < w; ++t) weighted += f.alpha[t] * dalpha[t];
    for (std::size_t t = 0; t < w; ++t) da[t] = f.alpha[t] * (dalpha[t] - weighted);

    std::vector<double> dq(d, 0.0), dk(d), dv(d);
    Matrix2 dqeff(d, d), dveff(d, d);
    for (std::size_t t = 0; t < w; ++t) {
      kernels::axpy(da[t] * inv, f.k[t].data(), dq.data(), d);
      for (std::size_t i = 0; i < d; ++i) dk[i] = da[t] * inv * f.q[i];
      for (std::size_t i = 0; i < d; ++i) dv[i] = f.alpha[t] * dh[i];
      outer(g, wk_, dk.data(), f.e[t].data());
      matvec_t(th, wk_, dk.data(), de[t].data());
      dveff.outer(dv.data(), f.e[t].data());
      matvec_t_dense(f.veff, dv.data(), de[t].data(), d);
    }
    dqeff.outer(dq.data(), f.e[w - 1].data());
    matvec_t_dense(f.qeff, dq.data(), de[w - 1].data(), d);

    lora_grad(g, dqeff, wq_, aq_, bq_, d, r);
    lora_grad(g, dveff, wv_, av_, bv_, d, r);

    for (std::size_t t = 0; t < w; ++t) {
      const double xt[2] = {x[t], x[w + t]};
      outer(g, e_, de[t].data(), xt);
      acc_bias(g, be_, de[t].data());
      kernels::axpy(1.0, de[t].data(), g + pos_.offset + t * d, d);
    }
  }

 private:
  struct Matrix2 {
    Matrix2(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    void outer(const double* a, const double* b) {
      for (std::size_t i = 0; i < rows; ++i) kernels::axpy(a[i], b, v.data() + i * cols, cols);
    }
    std::size_t rows, cols;
    std::vector<double> v;
  };

  struct Fwd {
    std::vector<std::vector<double>> e, k, v;
    std::vector<double> q, alpha, hid;
    std::vector<double> qeff, veff;  // d x d effective projections
  };

  static void matvec_t_dense(const std::vector<double>& m, const double* v, double* y, std::size_t d) {
    for (std::size_t i = 0; i < d; ++i) kernels::axpy(v[i], m.data() + i * d, y, d);
  }

  std::vector<double> effective(const Block& base, const Block& a, const Block& b) const {
    const std::size_t d = spec_.hidden, r = spec_.lora_rank;
    const double* th = theta_.data();
    std::vector<double> m(th + base.offset, th + base.offset + d * d);
    std::vector<double> ba(d * d);
    kernels::gemm(d, r, d, th + b.offset, r, th + a.offset, d, ba.data(), d);
    kernels::axpy(scale_, ba.data(), m.data(), d * d);
    return m;
  }

  // Gradient of an effective projection M = W + s B A mapped onto W, A, B.
  void lora_grad(double* g, const Matrix2& dm, const Block& wb, const Block& ab, const Block& bb,
                 std::size_t d, std::size_t r) const {
    const double* th = theta_.data();
    kernels::axpy(1.0, dm.v.data(), g + wb.offset, d * d);
    // dB = s dM A^T  (d x r), dA = s B^T dM  (r x d)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < r; ++k)
        g[bb.offset + i * r + k] += scale_ * kernels::dot(dm.v.data() + i * d, th + ab.offset + k * d, d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < r; ++k)
        kernels::axpy(scale_ * th[bb.offset + i * r + k], dm.v.data() + i * d, g + ab.offset + k * d, d);
  }

  Fwd forward(std::span<const double> x) const {
    const std::size_t d = spec_.hidden, w = spec_.window;
    const double* th = theta_.data();
    Fwd f;
    f.qeff = effective(wq_, aq_, bq_);
    f.veff = effective(wv_, av_, bv_);
    f.e.assign(w, std::vector<double>(d));
    f.k.assign(w, std::vector<double>(d));
    f.v.assign(w, std::vector<double>(d));
    for (std::size_t t = 0; t < w; ++t) {
      const double xt[2] = {x[t], x[w + t]};
      matvec(th, e_, xt, f.e[t].data());
      add_bias(th, be_, f.e[t].data());
      kernels::axpy(1.0, th + pos_.offset + t * d, f.e[t].data(), d);
      matvec(th, wk_, f.e[t].data(), f.k[t].data());
      kernels::gemv(d, d, f.veff.data(), d, f.e[t].data(), f.v[t].data());
    }
    f.q.resize(d);
    kernels::gemv(d, d, f.qeff.data(), d, f.e[w - 1].data(), f.q.data());
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    f.alpha.resize(w);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < w; ++t) {
      f.alpha[t] = kernels::dot(f.q.data(), f.k[t].data(), d) * inv;
      mx = std::max(mx, f.alpha[t]);
    }
    double z = 0.0;
    for (auto& a : f.alpha) z += (a = std::exp(a - mx));
    for (auto& a : f.alpha) a /= z;
    f.hid = f.e[w - 1];
    for (std::size_t t = 0; t < w; ++t) kernels::axpy(f.alpha[t], f.v[t].data(), f.hid.data(), d);
    return f;
  }

  Block e_, be_, pos_, wq_, wk_, wv_, aq_, bq_, av_, bv_, wo_, bo_;
  double scale_ = 1.0;
};

void sgd_step(Predictor& model, std::span<const Window> shard, Rng& rng, const TrainSchedule& s,
              std::vector<double>& grad, std::vector<std::size_t>& idx) {
  const std::size_t n = shard.size();
  idx.clear();
  if (s.batch == 0 || s.batch >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
  } else {
    for (std::size_t b = 0; b < s.batch; ++b) idx.push_back(static_cast<std::size_t>(rng() % n));
  }
  loss_and_gradient(model, shard, idx, grad);
  auto& theta = model.params();
  const auto& mask = model.trainable();
  for (std::size_t i = 0; i < theta.size(); ++i)
    if (mask[i]) theta[i] -= s.lr * grad[i];
}

void check_schedule(const TrainSchedule& s) {
  if (s.rounds == 0 || s.local_steps == 0) fail(Errc::invalid_parameter, "rounds and local_steps must be >= 1");
  if (!(s.lr > 0.0)) fail(Errc::invalid_parameter, "learning rate must be > 0");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

ChannelSeries jakes_from_paths(double doppler, double sample_period, std::size_t length,
                               std::span<const double> theta, std::span<const double> phi) {
  if (!(doppler > 0.0) || !(sample_period > 0.0)) {
    fail(Errc::invalid_parameter, "Doppler and sample period must be > 0");
  }
  if (theta.empty() || theta.size() != phi.size()) {
    fail(Errc::invalid_parameter, "need matching nonempty path angle and phase lists");
  }
  ChannelSeries out;
  out.sample_period = sample_period;
  out.doppler = doppler;
  out.num_paths = theta.size();
  out.samples.resize(length);
  const double norm = 1.0 / std::sqrt(static_cast<double>(theta.size()));
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t t = 0; t < length; ++t) {
    std::complex<double> acc(0.0, 0.0);
    const double tt = static_cast<double>(t) * sample_period;
    for (std::size_t p = 0; p < theta.size(); ++p) {
      acc += std::polar(1.0, two_pi * doppler * std::cos(theta[p]) * tt + phi[p]);
    }
    out.samples[t] = acc * norm;
  }
  return out;
}

ChannelSeries gen_jakes(double doppler, double sample_period, std::size_t length,
                        std::size_t num_paths, std::uint64_t seed) {
  if (num_paths == 0) fail(Errc::invalid_parameter, "num_paths must be >= 1");
  Rng rng = make_rng(seed, kTagPaths, 0);
  std::vector<double> theta(num_paths), phi(num_paths);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t p = 0; p < num_paths; ++p) {
    theta[p] = two_pi * uniform01(rng);
    phi[p] = two_pi * uniform01(rng);
  }
  auto out = jakes_from_paths(doppler, sample_period, length, theta, phi);
  out.seed = seed;
  return out;
}

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear_ar: return "linear_ar";
    case ModelKind::rnn_cell: return "rnn_cell";
    case ModelKind::gru_cell: return "gru_cell";
    case ModelKind::attn_lora: return "attn_lora";
  }
  return "unknown";
}

ModelKind parse_kind(std::string_view name) {
  for (auto k : {ModelKind::linear_ar, ModelKind::rnn_cell, ModelKind::gru_cell, ModelKind::attn_lora}) {
    if (kind_name(k) == name) return k;
  }
  fail(Errc::invalid_parameter, "unknown predictor kind " + std::string(name));
}

void validate(const PredictorSpec& spec) {
  if (spec.window == 0 || spec.horizon == 0) fail(Errc::invalid_parameter, "window and horizon must be >= 1");
  if (spec.kind != ModelKind::linear_ar && spec.hidden == 0) fail(Errc::invalid_parameter, "hidden width must be >= 1");
  if (spec.kind == ModelKind::attn_lora) {
    if (spec.lora_rank == 0 || spec.lora_rank > spec.hidden) {
      fail(Errc::rank_out_of_range, "lora rank must be in [1, hidden]");
    }
  }
}

std::vector<Window> make_windows(const ChannelSeries& series, std::size_t window, std::size_t horizon) {
  const std::size_t n = series.samples.size();
  if (window == 0 || horizon == 0) fail(Errc::invalid_parameter, "window and horizon must be >= 1");
  if (n < window + horizon) {
    fail(Errc::insufficient_data, "series of length " + std::to_string(n) + " is shorter than W + H = " +
                                      std::to_string(window + horizon));
  }
  std::vector<Window> out;
  for (std::size_t t = window - 1; t + horizon < n; ++t) {
    Window w;
    w.x.resize(2 * window);
    w.y.resize(2 * horizon);
    for (std::size_t i = 0; i < window; ++i) {
      const auto h = series.samples[t + 1 - window + i];
      w.x[i] = h.real();
      w.x[window + i] = h.imag();
    }
    for (std::size_t k = 0; k < horizon; ++k) {
      const auto h = series.samples[t + 1 + k];
      w.y[k] = h.real();
      w.y[horizon + k] = h.imag();
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::size_t Predictor::trainable_count() const {
  return static_cast<std::size_t>(std::count(trainable_.begin(), trainable_.end(), true));
}

std::unique_ptr<Predictor> make_predictor(const PredictorSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng = make_rng(seed, kTagInit, static_cast<std::uint64_t>(spec.kind));
  switch (spec.kind) {
    case ModelKind::linear_ar: return std::make_unique<LinearAr>(spec);
    case ModelKind::rnn_cell: return std::make_unique<RnnCell>(spec, rng);
    case ModelKind::gru_cell: return std::make_unique<GruCell>(spec, rng);
    case ModelKind::attn_lora: return std::make_unique<AttnLora>(spec, rng);
  }
  fail(Errc::invalid_parameter, "unknown predictor kind");
}

std::unique_ptr<Predictor> make_persistence(std::size_t window, std::size_t horizon) {
  PredictorSpec spec;
  spec.kind = ModelKind::linear_ar;
  spec.window = window;
  spec.horizon = horizon;
  validate(spec);
  auto model = std::make_unique<LinearAr>(spec);
  model->set_persistence();
  return model;
}

double mse(const Predictor& model, std::span<const Window> windows) {
  if (windows.empty()) fail(Errc::insufficient_data, "no windows to evaluate");
  std::vector<double> y(model.output_size());
  double total = 0.0;
  for (const auto& w : windows) {
    model.predict(w.x, y);
    for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - w.y[i]) * (y[i] - w.y[i]);
  }
  return total / static_cast<double>(windows.size() * y.size());
}

double loss_and_gradient(const Predictor& model, std::span<const Window> windows,
                         std::span<const std::size_t> idx, std::vector<double>& grad) {
  if (idx.empty()) fail(Errc::insufficient_data, "empty minibatch");
  grad.assign(model.params().size(), 0.0);
  const std::size_t out = model.output_size();
  const double norm = 1.0 / static_cast<double>(idx.size() * out);
  std::vector<double> y(out), dy(out);
  double total = 0.0;
  for (auto i : idx) {
    const auto& w = windows[i];
    model.predict(w.x, y);
    for (std::size_t k = 0; k < out; ++k) {
      const double e = y[k] - w.y[k];
      total += e * e;
      dy[k] = 2.0 * e * norm;
    }
    model.backprop(w.x, dy, grad);
  }
  return total * norm;
}

double evaluate_nmse(const Predictor& model, const ChannelSeries& series) {
  return evaluate_nmse(model, std::span<const ChannelSeries>(&series, 1));
}

double evaluate_nmse(const Predictor& model, std::span<const ChannelSeries> series) {
  if (series.empty()) fail(Errc::insufficient_data, "no held-out series");
  std::vector<double> y(model.output_size());
  double err = 0.0, power = 0.0;
  for (const auto& s : series) {
    for (const auto& w : make_windows(s, model.spec().window, model.spec().horizon)) {
      model.predict(w.x, y);
      for (std::size_t k = 0; k < y.size(); ++k) {
        err += (y[k] - w.y[k]) * (y[k] - w.y[k]);
        power += w.y[k] * w.y[k];
      }
    }
  }
  if (!(power > 0.0)) fail(Errc::insufficient_data, "held-out series has zero power");
  return err / power;
}

TrainReport train_local(const PredictorSpec& spec, std::span<const Window> shard,
                        const TrainSchedule& schedule, std::uint64_t seed,
                        std::span<const ChannelSeries> held_out) {
  check_schedule(schedule);
  if (shard.empty()) fail(Errc::insufficient_data, "empty training shard");
  auto model = make_predictor(spec, seed);
  Rng rng = make_rng(seed, kTagBatch, 0);
  std::vector<double> grad;
  std::vector<std::size_t> idx;
  TrainReport report;
  for (std::size_t r = 0; r < schedule.rounds; ++r) {
    for (std::size_t s = 0; s < schedule.local_steps; ++s) sgd_step(*model, shard, rng, schedule, grad, idx);
    report.losses.push_back(mse(*model, shard));
  }
  report.final_loss = report.losses.back();
  if (!held_out.empty()) report.final_nmse = evaluate_nmse(*model, held_out);
  report.params = model->params();
  return report;
}

std::vector<std::vector<std::size_t>> make_shards(std::size_t pool_size, const FedConfig& config) {
  if (config.num_clients == 0) fail(Errc::invalid_parameter, "num_clients must be >= 1");
  if (!(config.shard_fraction > 0.0) ||
      config.shard_fraction * static_cast<double>(config.num_clients) > 1.0 + 1e-12) {
    fail(Errc::invalid_parameter, "shard_fraction * num_clients must be in (0, 1]");
  }
  const auto per = static_cast<std::size_t>(std::floor(config.shard_fraction * static_cast<double>(pool_size)));
  if (per == 0) fail(Errc::insufficient_data, "pool too small for the shard fraction");
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(config.seed, kTagShard, 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> shards(config.num_clients);
  for (std::size_t c = 0; c < config.num_clients; ++c) {
    shards[c].assign(order.begin() + static_cast<std::ptrdiff_t>(c * per),
                     order.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
  }
  return shards;
}

std::vector<Window> gather(std::span<const Window> pool, std::span<const std::size_t> idx) {
  std::vector<Window> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

TrainReport train_federated(const PredictorSpec& spec, const FedConfig& config,
                            std::span<const std::vector<Window>> shards,
                            std::span<const ChannelSeries> held_out) {
  check_schedule(config.schedule);
  if (shards.empty()) fail(Errc::invalid_parameter, "federated training needs at least one client");
  std::vector<Window> all;
  for (const auto& s : shards) {
    if (s.empty()) fail(Errc::insufficient_data, "a client shard is empty");
    all.insert(all.end(), s.begin(), s.end());
  }
  auto global = make_predictor(spec, config.seed);
  std::vector<Rng> rngs;
  for (std::size_t c = 0; c < shards.size(); ++c) rngs.push_back(make_rng(config.seed, kTagBatch, c));
  std::vector<double> grad, sum;
  std::vector<std::size_t> idx;
  TrainReport report;
  report.bytes_per_round =
      2.0 * static_cast<double>(shards.size() * global->trainable_count()) * kBytesPerScalar;
  const double inv = 1.0 / static_cast<double>(shards.size());
  for (std::size_t r = 0; r < config.schedule.rounds; ++r) {
    sum.assign(global->params().size(), 0.0);
    for (std::size_t c = 0; c < shards.size(); ++c) {
      auto local = global->clone();
      for (std::size_t s = 0; s < config.schedule.local_steps; ++s) {
        sgd_step(*local, shards[c], rngs[c], config.schedule, grad, idx);
      }
      kernels::axpy(1.0, local->params().data(), sum.data(), sum.size());
    }
    auto& theta = global->params();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = sum[i] * inv;
    report.losses.push_back(mse(*global, all));
  }
  report.final_loss = report.losses.back();
  if (!held_out.empty()) report.final_nmse = evaluate_nmse(*global, held_out);
  report.params = global->params();
  return report;
}

CaseStudyResult run_case_study(const CaseStudyConfig& cfg) {
  CaseStudyResult result;
  for (auto seed : cfg.seeds) {
    std::vector<Window> pool;
    for (std::size_t s = 0; s < cfg.pool_series; ++s) {
      const auto series = gen_jakes(cfg.doppler, cfg.sample_period, cfg.series_length, cfg.num_paths,
                                    derive_seed(seed, kTagPool, s));
      auto w = make_windows(series, cfg.base.window, cfg.base.horizon);
      pool.insert(pool.end(), w.begin(), w.end());
    }
    std::vector<ChannelSeries> held_out;
    for (std::size_t s = 0; s < cfg.held_out_series; ++s) {
      held_out.push_back(gen_jakes(cfg.doppler, cfg.sample_period, cfg.series_length, cfg.num_paths,
                                   derive_seed(seed, kTagHeldOut, s)));
    }
    for (auto kind : cfg.kinds) {
      PredictorSpec spec = cfg.base;
      spec.kind = kind;
      const std::string name(kind_name(kind));
      for (auto n : cfg.client_counts) {
        FedConfig fed{n, cfg.shard_fraction, cfg.schedule, seed};
        const auto idx = make_shards(pool.size(), fed);
        std::vector<std::vector<Window>> shards;
        for (const auto& i : idx) shards.push_back(gather(pool, i));
        std::vector<Window> all;
        for (const auto& s : shards) all.insert(all.end(), s.begin(), s.end());

        const auto fed_report = train_federated(spec, fed, shards, held_out);
        for (std::size_t r = 0; r < fed_report.losses.size(); ++r) {
          result.rows.push_back({r, "federated:" + name, n, fed_report.losses[r], seed});
        }

        // Local-only clients: same init and schedule, own shard, scored on
        // the same union the federation trains on.
        std::vector<std::vector<double>> per_round(cfg.schedule.rounds);
        std::vector<double> finals;
        for (std::size_t c = 0; c < n; ++c) {
          auto model = make_predictor(spec, seed);
          Rng rng = make_rng(seed, kTagBatch, c);
          std::vector<double> grad;
          std::vector<std::size_t> bidx;
          for (std::size_t r = 0; r < cfg.schedule.rounds; ++r) {
            for (std::size_t s = 0; s < cfg.schedule.local_steps; ++s) {
              sgd_step(*model, shards[c], rng, cfg.schedule, grad, bidx);
            }
            per_round[r].push_back(mse(*model, all));
          }
          finals.push_back(per_round.back().back());
        }
        for (std::size_t r = 0; r < per_round.size(); ++r) {
          result.rows.push_back({r, "local:" + name, n, median(per_round[r]), seed});
        }
        result.outcomes.push_back(
            {kind, n, seed, fed_report.final_loss, median(finals), finals, fed_report.final_nmse});
      }
    }
  }
  return result;
}

std::string case_study_csv(const CaseStudyResult& result) {
  std::ostringstream out;
  out << "round,setting,num_clients,loss,seed\n";
  for (const auto& r : result.rows) {
    out << r.round << ',' << r.setting << ',' << r.num_clients << ',' << io::format_double(r.loss)
        << ',' << r.seed << '\n';
  }
  return out.str();
}

}  // namespace edgelam::chanpred
