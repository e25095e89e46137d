#include <algorithm>
#include <cmath>

#include "nn_ops.hpp"
#include "touchfetch/encoder.hpp"

namespace touchfetch::detail {
namespace {

using nn::Buffer;

struct LayerParams {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct LayerCache {
  Buffer x_in;
  nn::LayerNormCache ln1;
  Buffer a;
  Buffer q, k, v;  // head-major: [head][token][dh]
  Buffer probs;    // [head][token][token]
  Buffer o;        // token-major concatenation of head outputs
  Buffer x_mid;
  nn::LayerNormCache ln2;
  Buffer b;
  Buffer hpre;
  Buffer g;
};

class AttentionPass final : public EncoderPass {
 public:
  AttentionPass(const EncoderModel& model, std::span<const Vec3> points) : m_(model) {
    const auto& c = model.config();
    t_ = points.size();
    d_ = static_cast<std::size_t>(c.d_model);
    h_ = static_cast<std::size_t>(c.n_heads);
    dh_ = d_ / h_;
    f_ = static_cast<std::size_t>(c.d_ff);
    e_ = static_cast<std::size_t>(c.d_embed);
    lift_w_ = model.shape("lift.weight").offset;
    lift_b_ = model.shape("lift.bias").offset;
    pos_ = model.shape("pos").offset;
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto off = [&](const char* n) { return model.shape(p + n).offset; };
      layers_.push_back({off("ln1.gain"), off("ln1.bias"), off("attn.wq"), off("attn.bq"), off("attn.wk"),
                         off("attn.bk"), off("attn.wv"), off("attn.bv"), off("attn.wo"), off("attn.bo"),
                         off("ln2.gain"), off("ln2.bias"), off("ff.w1"), off("ff.b1"), off("ff.w2"), off("ff.b2")});
    }
    lnf_g_ = model.shape("final_ln.gain").offset;
    lnf_b_ = model.shape("final_ln.bias").offset;
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
    const auto dpooled =
        nn::pool_head_backward(d_, e_, p + head_w_, head_, out_, d_output, gp + head_w_, gp + head_b_);
    Buffer df(t_ * d_);
    for (std::size_t i = 0; i < t_; ++i)
      for (std::size_t j = 0; j < d_; ++j) df[i * d_ + j] = dpooled[j] / static_cast<double>(t_);
    Buffer dx(t_ * d_, 0.0);
    nn::layer_norm_backward(t_, d_, lnf_, p + lnf_g_, df.data(), dx.data(), gp + lnf_g_, gp + lnf_b_);
    for (std::size_t l = layers_.size(); l-- > 0;) dx = layer_backward(layers_[l], caches_[l], dx, gp);
    nn::linear_backward(t_, 3, d_, tokens_.data(), p + lift_w_, dx.data(), nullptr, gp + lift_w_, gp + lift_b_);
    simd::axpy(1.0, dx.data(), gp + pos_, t_ * d_);
  }

 private:
  void run() {
    const double* p = m_.params().data();
    Buffer x(t_ * d_);
    nn::linear(t_, 3, d_, tokens_.data(), p + lift_w_, p + lift_b_, x.data());
    simd::axpy(1.0, p + pos_, x.data(), t_ * d_);
    caches_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) x = layer_forward(layers_[l], caches_[l], std::move(x));
    x_final_ = std::move(x);
    Buffer fin(t_ * d_);
    nn::layer_norm(t_, d_, x_final_.data(), p + lnf_g_, p + lnf_b_, fin.data(), lnf_);
    nn::pool_head(t_, d_, e_, fin.data(), p + head_w_, p + head_b_, head_, out_);
  }

  Buffer layer_forward(const LayerParams& lp, LayerCache& c, Buffer x) {
    const double* p = m_.params().data();
    const std::size_t td = t_ * d_;
    c.x_in = std::move(x);
    c.a.resize(td);
    nn::layer_norm(t_, d_, c.x_in.data(), p + lp.ln1_g, p + lp.ln1_b, c.a.data(), c.ln1);

    Buffer qf(td), kf(td), vf(td);
    nn::linear(t_, d_, d_, c.a.data(), p + lp.wq, p + lp.bq, qf.data());
    nn::linear(t_, d_, d_, c.a.data(), p + lp.wk, p + lp.bk, kf.data());
    nn::linear(t_, d_, d_, c.a.data(), p + lp.wv, p + lp.bv, vf.data());
    c.q = to_heads(qf);
    c.k = to_heads(kf);
    c.v = to_heads(vf);

    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
    c.probs.assign(h_ * t_ * t_, 0.0);
    Buffer oh(h_ * t_ * dh_, 0.0);
    for (std::size_t h = 0; h < h_; ++h) {
      double* s = c.probs.data() + h * t_ * t_;
      simd::gemm_nt(t_, t_, dh_, c.q.data() + h * t_ * dh_, c.k.data() + h * t_ * dh_, s);
      for (std::size_t i = 0; i < t_; ++i) {
        double* row = s + i * t_;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < t_; ++j) mx = std::max(mx, row[j] * scale);
        double sum = 0.0;
        for (std::size_t j = 0; j < t_; ++j) sum += row[j] = std::exp(row[j] * scale - mx);
        for (std::size_t j = 0; j < t_; ++j) row[j] /= sum;
      }
      simd::gemm_nn(t_, dh_, t_, s, c.v.data() + h * t_ * dh_, oh.data() + h * t_ * dh_);
    }
    c.o = from_heads(oh);

    c.x_mid.resize(td);
    nn::linear(t_, d_, d_, c.o.data(), p + lp.wo, p + lp.bo, c.x_mid.data());
    simd::axpy(1.0, c.x_in.data(), c.x_mid.data(), td);

    c.b.resize(td);
    nn::layer_norm(t_, d_, c.x_mid.data(), p + lp.ln2_g, p + lp.ln2_b, c.b.data(), c.ln2);
    c.hpre.resize(t_ * f_);
    nn::linear(t_, d_, f_, c.b.data(), p + lp.w1, p + lp.b1, c.hpre.data());
    c.g.resize(t_ * f_);
    for (std::size_t i = 0; i < c.g.size(); ++i) c.g[i] = nn::gelu(c.hpre[i]);
    Buffer out(td);
    nn::linear(t_, f_, d_, c.g.data(), p + lp.w2, p + lp.b2, out.data());
    simd::axpy(1.0, c.x_mid.data(), out.data(), td);
    return out;
  }

  Buffer layer_backward(const LayerParams& lp, const LayerCache& c, const Buffer& dx_out, double* gp) {
    const double* p = m_.params().data();
    const std::size_t td = t_ * d_;

    // Feed-forward branch.
    Buffer dx_mid = dx_out;
    Buffer dg(t_ * f_, 0.0);
    nn::linear_backward(t_, f_, d_, c.g.data(), p + lp.w2, dx_out.data(), dg.data(), gp + lp.w2, gp + lp.b2);
    for (std::size_t i = 0; i < dg.size(); ++i) dg[i] *= nn::gelu_grad(c.hpre[i]);
    Buffer db(td, 0.0);
    nn::linear_backward(t_, d_, f_, c.b.data(), p + lp.w1, dg.data(), db.data(), gp + lp.w1, gp + lp.b1);
    nn::layer_norm_backward(t_, d_, c.ln2, p + lp.ln2_g, db.data(), dx_mid.data(), gp + lp.ln2_g, gp + lp.ln2_b);

    // Attention branch.
    Buffer dx_in = dx_mid;
    Buffer d_o(td, 0.0);
    nn::linear_backward(t_, d_, d_, c.o.data(), p + lp.wo, dx_mid.data(), d_o.data(), gp + lp.wo, gp + lp.bo);
    const Buffer doh = to_heads(d_o);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh_));
    Buffer dq(h_ * t_ * dh_, 0.0), dk(h_ * t_ * dh_, 0.0), dv(h_ * t_ * dh_, 0.0);
    Buffer dp(t_ * t_);
    for (std::size_t h = 0; h < h_; ++h) {
      const std::size_t ho = h * t_ * dh_;
      const double* pr = c.probs.data() + h * t_ * t_;
      std::fill(dp.begin(), dp.end(), 0.0);
      simd::gemm_nt(t_, t_, dh_, doh.data() + ho, c.v.data() + ho, dp.data());
      simd::gemm_tn(t_, dh_, t_, pr, doh.data() + ho, dv.data() + ho);
      for (std::size_t i = 0; i < t_; ++i) {
        double* row = dp.data() + i * t_;
        const double* prow = pr + i * t_;
        const double s = simd::dot(row, prow, t_);
        for (std::size_t j = 0; j < t_; ++j) row[j] = prow[j] * (row[j] - s) * scale;
      }
      simd::gemm_nn(t_, dh_, t_, dp.data(), c.k.data() + ho, dq.data() + ho);
      simd::gemm_tn(t_, dh_, t_, dp.data(), c.q.data() + ho, dk.data() + ho);
    }
    Buffer da(td, 0.0);
    const Buffer dqf = from_heads(dq), dkf = from_heads(dk), dvf = from_heads(dv);
    nn::linear_backward(t_, d_, d_, c.a.data(), p + lp.wq, dqf.data(), da.data(), gp + lp.wq, gp + lp.bq);
    nn::linear_backward(t_, d_, d_, c.a.data(), p + lp.wk, dkf.data(), da.data(), gp + lp.wk, gp + lp.bk);
    nn::linear_backward(t_, d_, d_, c.a.data(), p + lp.wv, dvf.data(), da.data(), gp + lp.wv, gp + lp.bv);
    nn::layer_norm_backward(t_, d_, c.ln1, p + lp.ln1_g, da.data(), dx_in.data(), gp + lp.ln1_g, gp + lp.ln1_b);
    return dx_in;
  }

  Buffer to_heads(const Buffer& x) const {
    Buffer out(h_ * t_ * dh_);
    for (std::size_t i = 0; i < t_; ++i)
      for (std::size_t h = 0; h < h_; ++h)
        std::copy_n(x.data() + i * d_ + h * dh_, dh_, out.data() + (h * t_ + i) * dh_);
    return out;
  }

  Buffer from_heads(const Buffer& x) const {
    Buffer out(t_ * d_);
    for (std::size_t i = 0; i < t_; ++i)
      for (std::size_t h = 0; h < h_; ++h)
        std::copy_n(x.data() + (h * t_ + i) * dh_, dh_, out.data() + i * d_ + h * dh_);
    return out;
  }

  const EncoderModel& m_;
  std::size_t t_, d_, h_, dh_, f_, e_;
  std::size_t lift_w_, lift_b_, pos_, lnf_g_, lnf_b_, head_w_, head_b_;
  std::vector<LayerParams> layers_;
  Buffer tokens_;
  std::vector<LayerCache> caches_;
  Buffer x_final_;
  nn::LayerNormCache lnf_;
  nn::HeadCache head_;
  std::vector<double> out_;
};

}  // namespace

std::unique_ptr<EncoderPass> attention_forward(const EncoderModel& model, std::span<const Vec3> points) {
  return std::make_unique<AttentionPass>(model, points);
}

}  // namespace touchfetch::detail
