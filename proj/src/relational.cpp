#include "rsqair/relational.hpp"

#include <cmath>
#include <vector>

#include "rsqair/errors.hpp"

namespace rsqair {

using ad::Tape;
using ad::Var;

Var hstack(Var a, Var b) {
    if (a.shape.rows() != b.shape.rows())
        throw ShapeError("hstack: row mismatch " + a.shape.str() + " vs " + b.shape.str());
    std::vector<Var> rows(a.shape.rows());
    for (int i = 0; i < a.shape.rows(); ++i)
        rows[i] = ad::concat_vec({ad::row_(a, i), ad::row_(b, i)});
    return ad::stack_rows(rows);
}

Var vstack(Var a, Var b) {
    if (a.shape.cols() != b.shape.cols())
        throw ShapeError("vstack: col mismatch " + a.shape.str() + " vs " + b.shape.str());
    int c = a.shape.cols();
    Var flat = ad::concat_vec({ad::reshape(a, Shape::vec(a.numel())),
                               ad::reshape(b, Shape::vec(b.numel()))});
    return ad::reshape(flat, Shape::mat(a.shape.rows() + b.shape.rows(), c));
}

// (rows, len) block of contiguous columns [c0, c0+len) from each row
static Var col_slice(Var x, int c0, int len) {
    std::vector<Var> rows(x.shape.rows());
    for (int i = 0; i < x.shape.rows(); ++i)
        rows[i] = ad::slice_(ad::row_(x, i), c0, len);
    return ad::stack_rows(rows);
}

// ---- identity ----

GammaResult GammaIdentity::apply(Tape&, Var latents, Var, Var memory) const {
    // pass-through: downstream consumers see the exact latent rows
    return {latents, memory};
}

// ---- interaction network ----

GammaIn::GammaIn(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed)
    : embed_(mc.in_embed) {
    int d = mc.latent_dim();
    int h = mc.in_hidden;
    f_ = nn::Mlp(ps, "gamma_in/f", {d, h, embed_}, seed);
    g_ = nn::Mlp(ps, "gamma_in/g", {2 * embed_, h, embed_}, seed);
    g_eff_ = nn::Mlp(ps, "gamma_in/eff", {embed_, h, embed_}, seed);
    g_att_ = nn::Linear(ps, "gamma_in/att", embed_, 1, seed);
}

int64_t GammaIn::param_count(const ad::ParamStore& ps) const {
    return ps.total_params("gamma_in/");
}

GammaResult GammaIn::apply(Tape& t, Var latents, Var pres, Var memory) const {
    int K = latents.shape.rows();
    Var zh = f_(t, latents);  // (K, E)

    if (K < 2) {
        // no pairs: every effect is exactly zero
        Var e = t.constant(Shape::mat(K, embed_), 0.0);
        return {hstack(latents, e), memory};
    }

    std::vector<int> ks, is;
    ks.reserve(K * (K - 1));
    is.reserve(K * (K - 1));
    for (int k = 0; k < K; ++k)
        for (int i = 0; i < K; ++i)
            if (i != k) {
                ks.push_back(k);
                is.push_back(i);
            }
    int P = static_cast<int>(ks.size());

    Var zk = ad::gather_rows(zh, ks);              // (P, E) receiver
    Var zi = ad::gather_rows(zh, is);              // (P, E) sender
    Var xi = g_(t, hstack(zk, zi));                // (P, E) pair embedding
    Var att = ad::sigmoid_(ad::reshape(g_att_(t, xi), Shape::vec(P)));
    Var eff = g_eff_(t, xi);                       // (P, E)

    // pair weight att * pres_k * pres_i; an absent endpoint kills the pair
    Var pm = ad::reshape(pres, Shape::mat(K, 1));
    Var pk = ad::reshape(ad::gather_rows(pm, ks), Shape::vec(P));
    Var pi = ad::reshape(ad::gather_rows(pm, is), Shape::vec(P));
    Var w = ad::mul(ad::mul(att, pk), pi);

    Var e = ad::scatter_sum_rows(ad::scale_rows(eff, w), ks, K);  // (K, E)
    return {hstack(latents, e), memory};
}

// ---- relational memory core ----

GammaRmc::GammaRmc(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed)
    : heads_(mc.rmc_heads), head_dim_(mc.rmc_head_dim), m_dim_(mc.m_dim()) {
    int d = mc.latent_dim();
    int m = m_dim_;
    in_proj_ = nn::Linear(ps, "gamma_rmc/in", d, m, seed);
    q_ = nn::Linear(ps, "gamma_rmc/q", m, m, seed);
    k_ = nn::Linear(ps, "gamma_rmc/k", m, m, seed);
    v_ = nn::Linear(ps, "gamma_rmc/v", m, m, seed);
    out_ = nn::Linear(ps, "gamma_rmc/out", m, m, seed);
    gate_i_ = nn::Linear(ps, "gamma_rmc/gate_i", 2 * m, m, seed, 1.0, 0.0);
    gate_f_ = nn::Linear(ps, "gamma_rmc/gate_f", 2 * m, m, seed, 1.0, 1.0);
}

int64_t GammaRmc::param_count(const ad::ParamStore& ps) const {
    return ps.total_params("gamma_rmc/");
}

GammaResult GammaRmc::apply(Tape& t, Var latents, Var pres, Var memory) const {
    if (!memory.valid()) throw ShapeError("rmc: missing memory input");
    int K = latents.shape.rows();

    Var zp = in_proj_(t, latents);   // (K, m)
    Var kv = vstack(memory, zp);     // (2K, m) memory rows then latent rows
    Var qm = q_(t, memory);          // (K, m)
    Var km = k_(t, kv);              // (2K, m)
    Var vm = v_(t, kv);              // (2K, m)

    // additive mask: memory keys always visible, latent keys weighted by
    // log pres so absent slots contribute a vanishing attention weight
    Var mask_row = ad::concat_vec({t.constant(Shape::vec(K), 0.0),
                                   ad::log_clamped(pres, 1e-300)});
    std::vector<Var> mask_rows(K, mask_row);
    Var mask = ad::stack_rows(mask_rows);  // (K, 2K)

    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim_));
    std::vector<Var> heads(heads_);
    for (int h = 0; h < heads_; ++h) {
        Var qh = col_slice(qm, h * head_dim_, head_dim_);  // (K, hd)
        Var kh = col_slice(km, h * head_dim_, head_dim_);  // (2K, hd)
        Var vh = col_slice(vm, h * head_dim_, head_dim_);  // (2K, hd)
        Var scores = ad::add(ad::mul_const(ad::matmul_nt_(qh, kh), inv_sqrt), mask);
        Var attn = ad::softmax_rows(scores);               // rows sum to 1
        heads[h] = ad::matmul_(attn, vh);               // (K, hd)
    }
    // concatenate head outputs per row back to (K, m)
    std::vector<Var> rows(K);
    for (int i = 0; i < K; ++i) {
        std::vector<Var> frags(heads_);
        for (int h = 0; h < heads_; ++h) frags[h] = ad::row_(heads[h], i);
        rows[i] = ad::concat_vec(frags);
    }
    Var attended = out_(t, ad::stack_rows(rows));  // (K, m)

    // LSTM-style gated write keeps memory bounded over time
    Var gin = hstack(zp, memory);  // (K, 2m)
    Var gi = ad::sigmoid_(gate_i_(t, gin));
    Var gf = ad::sigmoid_(gate_f_(t, gin));
    Var new_mem = ad::add(ad::mul(gf, memory), ad::mul(gi, ad::tanh_(attended)));

    return {hstack(latents, new_mem), new_mem};
}

std::unique_ptr<GammaModule> make_gamma(const std::string& id, ad::ParamStore& ps,
                                        const ModelConfig& mc, uint64_t seed) {
    if (id == "identity") return std::make_unique<GammaIdentity>();
    if (id == "in") return std::make_unique<GammaIn>(ps, mc, seed);
    if (id == "rmc") return std::make_unique<GammaRmc>(ps, mc, seed);
    throw ConfigError("unknown relational module '" + id + "'");
}

}  // namespace rsqair
