#include <algorithm>
#include <cmath>

#include "nn_ops.hpp"
#include "touchfetch/encoder.hpp"

namespace touchfetch::detail {
namespace {

using nn::Buffer;

// GRU gate order inside the 3d-wide projections: reset, update, candidate.
class RecurrentPass final : public EncoderPass {
 public:
  RecurrentPass(const EncoderModel& model, std::span<const Vec3> points) : m_(model) {
    const auto& c = model.config();
    t_ = points.size();
    d_ = static_cast<std::size_t>(c.d_model);
    e_ = static_cast<std::size_t>(c.d_embed);
    lift_w_ = model.shape("lift.weight").offset;
    lift_b_ = model.shape("lift.bias").offset;
    wx_ = model.shape("gru.wx").offset;
    bx_ = model.shape("gru.bx").offset;
    wh_ = model.shape("gru.wh").offset;
    bh_ = model.shape("gru.bh").offset;
    head_w_ = model.shape("head.weight").offset;
    head_b_ = model.shape("head.bias").offset;
    tokens_.resize(t_ * 3);
    for (std::size_t i = 0; i < t_; ++i) {
      tokens_[3 * i] = c.input_scale * points[i].x;
      tokens_[3 * i + 1] = c.input_scale * points[i].y;
      tokens_[3 * i + 2] = c.input_scale * points[i].z;
    }
    run();
  }

  const std::vector<double>& output() const override { return out_; }

  void backward(std::span<const double> d_output, std::span<double> grad) override {
    double* gp = grad.data();
    const double* p = m_.params().data();
    const std::size_t g3 = 3 * d_;
    const auto dpooled =
        nn::pool_head_backward(d_, e_, p + head_w_, head_, out_, d_output, gp + head_w_, gp + head_b_);
    Buffer dxg(t_ * g3, 0.0), dhg(t_ * g3, 0.0);
    Buffer carry(d_, 0.0), dh(d_);
    for (std::size_t t = t_; t-- > 0;) {
      const double* r = r_.data() + t * d_;
      const double* z = z_.data() + t * d_;
      const double* n = n_.data() + t * d_;
      const double* hn = hgn_.data() + t * d_;
      const double* hp = hprev_.data() + t * d_;
      double* xg = dxg.data() + t * g3;
      double* hg = dhg.data() + t * g3;
      for (std::size_t j = 0; j < d_; ++j) {
        dh[j] = carry[j] + dpooled[j] / static_cast<double>(t_);
        const double dn = dh[j] * (1.0 - z[j]);
        const double dz = dh[j] * (hp[j] - n[j]);
        const double dn_pre = dn * (1.0 - n[j] * n[j]);
        const double dr = dn_pre * hn[j];
        xg[j] = dr * r[j] * (1.0 - r[j]);
        xg[d_ + j] = dz * z[j] * (1.0 - z[j]);
        xg[2 * d_ + j] = dn_pre;
        hg[j] = xg[j];
        hg[d_ + j] = xg[d_ + j];
        hg[2 * d_ + j] = dn_pre * r[j];
        carry[j] = dh[j] * z[j];
      }
      simd::gemm_nt(1, d_, g3, hg, p + wh_, carry.data());
    }
    simd::gemm_tn(d_, g3, t_, hprev_.data(), dhg.data(), gp + wh_);
    for (std::size_t t = 0; t < t_; ++t) simd::axpy(1.0, dhg.data() + t * g3, gp + bh_, g3);
    Buffer dx(t_ * d_, 0.0);
    nn::linear_backward(t_, d_, g3, x_.data(), p + wx_, dxg.data(), dx.data(), gp + wx_, gp + bx_);
    nn::linear_backward(t_, 3, d_, tokens_.data(), p + lift_w_, dx.data(), nullptr, gp + lift_w_, gp + lift_b_);
  }

 private:
  void run() {
    const double* p = m_.params().data();
    const std::size_t g3 = 3 * d_;
    x_.resize(t_ * d_);
    nn::linear(t_, 3, d_, tokens_.data(), p + lift_w_, p + lift_b_, x_.data());
    Buffer xg(t_ * g3);
    nn::linear(t_, d_, g3, x_.data(), p + wx_, p + bx_, xg.data());
    r_.resize(t_ * d_);
    z_.resize(t_ * d_);
    n_.resize(t_ * d_);
    hgn_.resize(t_ * d_);
    hprev_.assign(t_ * d_, 0.0);
    Buffer hs(t_ * d_);
    Buffer h(d_, 0.0), hg(g3);
    for (std::size_t t = 0; t < t_; ++t) {
      std::copy(h.begin(), h.end(), hprev_.begin() + static_cast<std::ptrdiff_t>(t * d_));
      nn::linear(1, d_, g3, h.data(), p + wh_, p + bh_, hg.data());
      const double* xt = xg.data() + t * g3;
      for (std::size_t j = 0; j < d_; ++j) {
        const double r = nn::sigmoid(xt[j] + hg[j]);
        const double z = nn::sigmoid(xt[d_ + j] + hg[d_ + j]);
        const double n = std::tanh(xt[2 * d_ + j] + r * hg[2 * d_ + j]);
        r_[t * d_ + j] = r;
        z_[t * d_ + j] = z;
        n_[t * d_ + j] = n;
        hgn_[t * d_ + j] = hg[2 * d_ + j];
        h[j] = (1.0 - z) * n + z * h[j];
      }
      std::copy(h.begin(), h.end(), hs.begin() + static_cast<std::ptrdiff_t>(t * d_));
    }
    nn::pool_head(t_, d_, e_, hs.data(), p + head_w_, p + head_b_, head_, out_);
  }

  const EncoderModel& m_;
  std::size_t t_, d_, e_;
  std::size_t lift_w_, lift_b_, wx_, bx_, wh_, bh_, head_w_, head_b_;
  Buffer tokens_, x_, r_, z_, n_, hgn_, hprev_;
  nn::HeadCache head_;
  std::vector<double> out_;
};

}  // namespace

std::unique_ptr<EncoderPass> recurrent_forward(const EncoderModel& model, std::span<const Vec3> points) {
  return std::make_unique<RecurrentPass>(model, points);
}

}  // namespace touchfetch::detail
