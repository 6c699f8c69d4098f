#include "rsqair/air.hpp"

#include <cmath>
#include <numbers>

#include "rsqair/errors.hpp"
#include "rsqair/glimpse.hpp"
#include "rsqair/kernels.hpp"

namespace rsqair {

using namespace rsqair::ad;

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)
}

double geometric_logp(int n, double theta) {
    if (n < 0) throw ConfigError("geometric count must be non-negative");
    if (!(theta > 0.0) || theta > 1.0) throw ConfigError("geometric theta must be in (0,1]");
    if (n == 0) return std::log(theta);
    return n * std::log1p(-theta) + std::log(theta);
}

Var std_from_raw(Var raw, double floor) { return add_const(softplus_(raw), floor); }

Var gaussian_logp(Tape& t, Var x, Var mean, Var std) {
    Var d = div(sub(x, mean), std);
    Var quad = mul_const(sum_(mul(d, d)), -0.5);
    Var logdet = sum_(log_clamped(std, 1e-300));
    Var c = t.scalar(-0.5 * kLogTwoPi * x.numel());
    return add(add(quad, mul_const(logdet, -1.0)), c);
}

Var std_normal_logp(Tape& t, Var x) {
    Var quad = mul_const(sum_(mul(x, x)), -0.5);
    return add(quad, t.scalar(-0.5 * kLogTwoPi * x.numel()));
}

Var relaxed_bernoulli_logp(Tape& t, Var x, Var logit, double tau) {
    // density of x = (logit + L)/tau with L ~ Logistic(0,1):
    // log tau + (logit - tau*x) - 2*softplus(logit - tau*x)
    Var a = sub(logit, mul_const(x, tau));
    Var lp = sub(a, mul_const(softplus_(a), 2.0));
    return add(lp, t.scalar(std::log(tau)));
}

Var bernoulli_logp(Tape& t, double value, Var logit) {
    (void)t;
    // log sigmoid(logit) if value==1 else log sigmoid(-logit)
    if (value >= 0.5) return mul_const(softplus_(mul_const(logit, -1.0)), -1.0);
    return mul_const(softplus_(logit), -1.0);
}

Var where_squash_var(Tape& t, Var u, double scale_max, double shift_max) {
    (void)t;
    Var s = mul_const(sigmoid_(slice_(u, 0, 2)), scale_max);
    Var sh = mul_const(tanh_(slice_(u, 2, 2)), shift_max);
    return concat_vec({s, sh});
}

// ---- FrameEncoder ----

FrameEncoder::FrameEncoder(ParamStore& ps, const ModelConfig& mc, uint64_t seed)
    : crop_(mc.crop) {
    c1w_ = ps.add("enc/c1/W", Shape::mat(6, 1 * 5 * 5));
    c1b_ = ps.add("enc/c1/b", Shape::vec(6));
    c2w_ = ps.add("enc/c2/W", Shape::mat(12, 6 * 5 * 5));
    c2b_ = ps.add("enc/c2/b", Shape::vec(12));
    nn::init_gaussian(ps, c1w_, seed, 1.0 / 5.0);
    nn::init_constant(ps, c1b_, 0.0);
    nn::init_gaussian(ps, c2w_, seed, 1.0 / std::sqrt(150.0));
    nn::init_constant(ps, c2b_, 0.0);
    int n1 = kernels::conv_out(mc.crop, 5, 2);
    // two stride-2 stages of kernel 5 need at least a 13-pixel frame
    if (mc.crop < 5 || n1 < 5)
        throw ConfigError("model.crop must be at least 13 for the conv encoder");
    int n2 = kernels::conv_out(n1, 5, 2);
    flat_ = 12 * n2 * n2;
    fc_ = nn::Linear(ps, "enc/fc", flat_, mc.enc_feat, seed);
}

Var FrameEncoder::operator()(Tape& t, Var frame) const {
    Var x = reshape(frame, Shape::chw(1, crop_, crop_));
    Var h1 = tanh_(conv2d_(x, t.param(c1w_), t.param(c1b_), 5, 2));
    Var h2 = tanh_(conv2d_(h1, t.param(c2w_), t.param(c2b_), 5, 2));
    return tanh_(fc_(t, reshape(h2, Shape::vec(flat_))));
}

// ---- GlimpseDecoder ----

GlimpseDecoder::GlimpseDecoder(ParamStore& ps, const ModelConfig& mc, uint64_t seed)
    : g_(mc.glimpse) {
    net_ = nn::Mlp(ps, "dec", {mc.d_what, 48, mc.glimpse * mc.glimpse}, seed);
}

Var GlimpseDecoder::operator()(Tape& t, Var z_what) const {
    return reshape(sigmoid_(net_(t, z_what)), Shape::mat(g_, g_));
}

// ---- GlimpseEncoder ----

GlimpseEncoder::GlimpseEncoder(ParamStore& ps, const ModelConfig& mc, uint64_t seed) {
    fc_ = nn::Linear(ps, "genc/fc", mc.glimpse * mc.glimpse, mc.glimpse_feat, seed);
}

Var GlimpseEncoder::operator()(Tape& t, Var glimpse) const {
    return tanh_(fc_(t, reshape(glimpse, Shape::vec(glimpse.numel()))));
}

// ---- slot head ----

SlotHead split_slot_head(Var h, int d_what, double std_floor) {
    SlotHead s;
    s.what_mean = slice_(h, 0, d_what);
    s.what_std = std_from_raw(slice_(h, d_what, d_what), std_floor);
    s.where_mean = slice_(h, 2 * d_what, 4);
    s.where_std = std_from_raw(slice_(h, 2 * d_what + 4, 4), std_floor);
    s.pres_logit = slice_(h, 2 * d_what + 8, 1);
    return s;
}

// ---- AirCore ----

AirCore::AirCore(ParamStore& ps, const ModelConfig& mc, uint64_t seed) {
    in_dim_ = mc.enc_feat + 2 * mc.latent_dim();
    gru_ = nn::Gru(ps, "disc/gru", in_dim_, mc.temporal_hidden, seed);
    head_ = nn::Linear(ps, "disc/head", mc.temporal_hidden, slot_head_dim(mc.d_what), seed);
}

Var AirCore::step(Tape& t, Var input, Var h) const { return gru_.step(t, input, h); }

SlotHead AirCore::head(Tape& t, Var h, int d_what, double std_floor) const {
    return split_slot_head(head_(t, h), d_what, std_floor);
}

// ---- rendering ----

Var render_mean(Tape& t, const GlimpseDecoder& dec, const std::vector<SlotDraw>& slots,
                int H, int W) {
    Var acc;
    for (const auto& s : slots) {
        Var glimpse = dec(t, s.z_what);
        Var placed = scale_by(place_glimpse(t, glimpse, s.z_where, H, W), s.pres);
        acc = acc.valid() ? add(acc, placed) : placed;
    }
    if (!acc.valid()) return t.constant(Shape::mat(H, W), 0.0);
    return clamp01(acc);
}

Var frame_gaussian_logp(Tape& t, Var mean, const Tensor& frame, double sigma_x) {
    Var d = sub(t.constant(frame), mean);
    Var ss = sum_(mul(d, d));
    double c = -0.5 * frame.size() * (kLogTwoPi + 2.0 * std::log(sigma_x));
    return add_const(mul_const(ss, -0.5 / (sigma_x * sigma_x)), c);
}

double frame_gaussian_logp(const Tensor& mean, const Tensor& frame, double sigma_x) {
    double ss = 0.0;
    for (int i = 0; i < frame.size(); ++i) {
        double d = frame[i] - mean[i];
        ss += d * d;
    }
    return -0.5 * ss / (sigma_x * sigma_x) -
           0.5 * frame.size() * (kLogTwoPi + 2.0 * std::log(sigma_x));
}

double masked_gaussian_logp(const Tensor& mean, const Tensor& frame, const Tensor& mask,
                            double sigma_x) {
    double ss = 0.0;
    int n = 0;
    for (int i = 0; i < frame.size(); ++i) {
        if (!(mask[i] > 0.0)) continue;
        double d = frame[i] - mean[i];
        ss += d * d;
        ++n;
    }
    return -0.5 * ss / (sigma_x * sigma_x) -
           0.5 * n * (kLogTwoPi + 2.0 * std::log(sigma_x));
}

}  // namespace rsqair
