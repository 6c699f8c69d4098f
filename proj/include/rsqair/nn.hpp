#ifndef RSQAIR_NN_HPP
#define RSQAIR_NN_HPP

// Small trainable building blocks on top of the tape.
//
// Every parameter is initialized from a stream keyed by (seed, parameter
// name), so two models built with the same seed get identical weights for
// identically named parameters regardless of construction order.

#include <string>
#include <vector>

#include "rsqair/autodiff.hpp"
#include "rsqair/rng.hpp"

namespace rsqair::nn {

// fills a parameter with N(0, scale^2) draws from its name-keyed stream
void init_gaussian(ad::ParamStore& ps, ad::ParamRef r, uint64_t seed, double scale);
void init_constant(ad::ParamStore& ps, ad::ParamRef r, double value);

class Linear {
public:
    Linear() = default;
    // weight scale gain/sqrt(in); bias constant bias_init
    Linear(ad::ParamStore& ps, const std::string& name, int in, int out, uint64_t seed,
           double gain = 1.0, double bias_init = 0.0);
    ad::Var operator()(ad::Tape& t, ad::Var x) const;
    int out_dim() const { return out_; }

private:
    ad::ParamRef W_ = -1, b_ = -1;
    int out_ = 0;
};

// dims = {in, h1, ..., out}; tanh between layers, linear final output
class Mlp {
public:
    Mlp() = default;
    Mlp(ad::ParamStore& ps, const std::string& name, const std::vector<int>& dims,
        uint64_t seed);
    ad::Var operator()(ad::Tape& t, ad::Var x) const;
    int out_dim() const { return layers_.back().out_dim(); }

private:
    std::vector<Linear> layers_;
};

// gate-first GRU cell:
//   r = sig(xr + hr), u = sig(xu + hu), c = tanh(xc + r*hc), h' = u*h + (1-u)*c
class Gru {
public:
    Gru() = default;
    Gru(ad::ParamStore& ps, const std::string& name, int in, int hidden, uint64_t seed);
    ad::Var step(ad::Tape& t, ad::Var x, ad::Var h) const;
    int hidden() const { return hidden_; }

private:
    Linear xg_, hg_;  // in -> 3h with bias, h -> 3h without
    int hidden_ = 0;
};

// returns the pre-clip norm; scales grads so the global norm is <= max_norm
double clip_grad_norm(ad::ParamStore& ps, double max_norm);

class Adam {
public:
    struct Slot {
        Tensor m, v;
    };

    Adam(ad::ParamStore& ps, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    void step();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    int64_t steps() const { return t_; }
    std::vector<Slot>& slots() { return s_; }
    const std::vector<Slot>& slots() const { return s_; }
    void set_steps(int64_t t) { t_ = t; }

private:
    ad::ParamStore* ps_;
    double lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<Slot> s_;
};

}  // namespace rsqair::nn

#endif
