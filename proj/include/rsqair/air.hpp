#ifndef RSQAIR_AIR_HPP
#define RSQAIR_AIR_HPP

// Single-frame attention machinery: frame/glimpse encoders, the recurrent
// discovery core emitting one object per step, the glimpse decoder, the
// additive scene renderer with a fixed-noise Gaussian observation model, and
// the geometric prior over object count.

#include <vector>

#include "rsqair/autodiff.hpp"
#include "rsqair/config.hpp"
#include "rsqair/nn.hpp"
#include "rsqair/scene.hpp"

namespace rsqair {

// log pmf of Geom(theta): n * log(1-theta) + log(theta), n >= 0
double geometric_logp(int n, double theta);

// ---- distribution helpers on the tape ----

// strictly positive std from an unconstrained head output
ad::Var std_from_raw(ad::Var raw, double floor);

// sum of independent Gaussian log-densities over the vector
ad::Var gaussian_logp(ad::Tape& t, ad::Var x, ad::Var mean, ad::Var std);
ad::Var std_normal_logp(ad::Tape& t, ad::Var x);

// density over the pre-sigmoid sample x of a concrete/Gumbel-sigmoid
// relaxed Bernoulli with the given logit and temperature
ad::Var relaxed_bernoulli_logp(ad::Tape& t, ad::Var x, ad::Var logit, double tau);

// discrete Bernoulli log-pmf of a hard 0/1 value under sigmoid(logit)
ad::Var bernoulli_logp(ad::Tape& t, double value, ad::Var logit);

// physical window from unconstrained u: s = scale_max*sigmoid(u),
// t = shift_max*tanh(u)
ad::Var where_squash_var(ad::Tape& t, ad::Var u, double scale_max, double shift_max);

// ---- networks ----

class FrameEncoder {
public:
    FrameEncoder() = default;
    FrameEncoder(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    // frame (H, W) -> feature vector (enc_feat)
    ad::Var operator()(ad::Tape& t, ad::Var frame) const;

private:
    ad::ParamRef c1w_ = -1, c1b_ = -1, c2w_ = -1, c2b_ = -1;
    nn::Linear fc_;
    int crop_ = 0, flat_ = 0;
};

class GlimpseDecoder {
public:
    GlimpseDecoder() = default;
    GlimpseDecoder(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    // z_what -> (G, G) glimpse in (0,1)
    ad::Var operator()(ad::Tape& t, ad::Var z_what) const;

private:
    nn::Mlp net_;
    int g_ = 0;
};

class GlimpseEncoder {
public:
    GlimpseEncoder() = default;
    GlimpseEncoder(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    // (G, G) glimpse -> feature vector (glimpse_feat)
    ad::Var operator()(ad::Tape& t, ad::Var glimpse) const;

private:
    nn::Linear fc_;
};

// q-side parameters of one slot, split from a head output of width
// 2*d_what + 2*4 + 1 (what mean/raw-std, where mean/raw-std, pres logit)
struct SlotHead {
    ad::Var what_mean, what_std, where_mean, where_std, pres_logit;
};
SlotHead split_slot_head(ad::Var h, int d_what, double std_floor);
inline int slot_head_dim(int d_what) { return 2 * d_what + 9; }

// recurrent discovery core: one GRU step per attended object
class AirCore {
public:
    AirCore() = default;
    AirCore(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    int input_dim() const { return in_dim_; }
    int hidden() const { return gru_.hidden(); }
    // one step: input = [frame features ; discovered summary ; propagated summary]
    ad::Var step(ad::Tape& t, ad::Var input, ad::Var h) const;
    SlotHead head(ad::Tape& t, ad::Var h, int d_what, double std_floor) const;

private:
    nn::Gru gru_;
    nn::Linear head_;
    int in_dim_ = 0;
};

// ---- rendering ----

struct SlotDraw {
    ad::Var z_what;   // (d_what)
    ad::Var z_where;  // (4) physical
    ad::Var pres;     // scalar weight: hard 0/1 or relaxed in (0,1)
};

// clamp(sum_k pres_k * place(decode(z_what_k), z_where_k), 0, 1)
ad::Var render_mean(ad::Tape& t, const GlimpseDecoder& dec,
                    const std::vector<SlotDraw>& slots, int H, int W);

// sum over pixels of N(frame | mean, sigma_x^2) log-densities
ad::Var frame_gaussian_logp(ad::Tape& t, ad::Var mean, const Tensor& frame,
                            double sigma_x);
double frame_gaussian_logp(const Tensor& mean, const Tensor& frame, double sigma_x);

// per-pixel Gaussian log-density restricted to mask > 0 pixels
double masked_gaussian_logp(const Tensor& mean, const Tensor& frame,
                            const Tensor& mask, double sigma_x);

}  // namespace rsqair

#endif
