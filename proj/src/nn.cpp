#include "rsqair/nn.hpp"

#include <cmath>

namespace rsqair::nn {

using namespace rsqair::ad;

void init_gaussian(ParamStore& ps, ParamRef r, uint64_t seed, double scale) {
    auto& e = ps.at(r);
    Rng rng = Rng::derive(seed, e.name);
    for (int i = 0; i < e.value.size(); ++i) e.value[i] = scale * rng.normal();
}

void init_constant(ParamStore& ps, ParamRef r, double value) {
    auto& e = ps.at(r);
    for (int i = 0; i < e.value.size(); ++i) e.value[i] = value;
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, uint64_t seed,
               double gain, double bias_init)
    : out_(out) {
    W_ = ps.add(name + "/W", Shape::mat(out, in));
    b_ = ps.add(name + "/b", Shape::vec(out));
    init_gaussian(ps, W_, seed, gain / std::sqrt(static_cast<double>(in)));
    init_constant(ps, b_, bias_init);
}

Var Linear::operator()(Tape& t, Var x) const { return linear(x, t.param(W_), t.param(b_)); }

Mlp::Mlp(ParamStore& ps, const std::string& name, const std::vector<int>& dims,
         uint64_t seed) {
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        layers_.emplace_back(ps, name + "/l" + std::to_string(i), dims[i], dims[i + 1], seed);
}

Var Mlp::operator()(Tape& t, Var x) const {
    Var h = x;
    for (size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i](t, h);
        if (i + 1 < layers_.size()) h = tanh_(h);
    }
    return h;
}

Gru::Gru(ParamStore& ps, const std::string& name, int in, int hidden, uint64_t seed)
    : hidden_(hidden) {
    xg_ = Linear(ps, name + "/x", in, 3 * hidden, seed);
    hg_ = Linear(ps, name + "/h", hidden, 3 * hidden, seed);
}

Var Gru::step(Tape& t, Var x, Var h) const {
    Var xg = xg_(t, x);
    Var hg = hg_(t, h);
    int n = hidden_;
    Var r = sigmoid_(add(slice_(xg, 0, n), slice_(hg, 0, n)));
    Var u = sigmoid_(add(slice_(xg, n, n), slice_(hg, n, n)));
    Var c = tanh_(add(slice_(xg, 2 * n, n), mul(r, slice_(hg, 2 * n, n))));
    Var one_minus_u = add_const(mul_const(u, -1.0), 1.0);
    return add(mul(u, h), mul(one_minus_u, c));
}

double clip_grad_norm(ParamStore& ps, double max_norm) {
    double norm = ps.grad_norm();
    if (norm > max_norm && norm > 0.0) ps.scale_grads(max_norm / norm);
    return norm;
}

Adam::Adam(ParamStore& ps, double lr, double beta1, double beta2, double eps)
    : ps_(&ps), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    s_.resize(ps.count());
    for (int i = 0; i < ps.count(); ++i) {
        Shape sh = ps.at(i).value.shape();
        s_[i].m = Tensor(sh);
        s_[i].v = Tensor(sh);
    }
}

void Adam::step() {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (int r = 0; r < ps_->count(); ++r) {
        auto& e = ps_->at(r);
        auto& s = s_[r];
        for (int i = 0; i < e.value.size(); ++i) {
            double g = e.grad[i];
            s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g;
            s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g * g;
            double mhat = s.m[i] / c1;
            double vhat = s.v[i] / c2;
            e.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace rsqair::nn
