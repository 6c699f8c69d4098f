#ifndef RSQAIR_RELATIONAL_HPP
#define RSQAIR_RELATIONAL_HPP

// Relational context modules. Each maps the previous frame's K latent rows
// (canonical layout z_what ‖ z_where ‖ z_pres) to K context rows
// gamma_k = [z_k ; e_k] with module-specific effect width E:
//   identity: E = 0, exact pass-through (recovers the plain sequential model)
//   in:       pairwise interactions with a [0,1] attention coefficient
//   rmc:      slot memory updated by one multi-head self-attention pass
// Absent objects (z_pres = 0) neither receive nor contribute effects.

#include <memory>
#include <string>

#include "rsqair/autodiff.hpp"
#include "rsqair/config.hpp"
#include "rsqair/nn.hpp"

namespace rsqair {

struct GammaResult {
    ad::Var gamma;       // (K, latent_dim + effect_dim)
    ad::Var new_memory;  // (K, m_dim) for memory-based modules, else invalid
};

class GammaModule {
public:
    virtual ~GammaModule() = default;
    virtual std::string id() const = 0;
    virtual int effect_dim() const = 0;
    virtual bool uses_memory() const = 0;
    virtual int64_t param_count(const ad::ParamStore& ps) const = 0;
    // latents (K, latent_dim); pres (K); memory (K, m_dim) iff uses_memory()
    virtual GammaResult apply(ad::Tape& t, ad::Var latents, ad::Var pres,
                              ad::Var memory) const = 0;
};

class GammaIdentity final : public GammaModule {
public:
    std::string id() const override { return "identity"; }
    int effect_dim() const override { return 0; }
    bool uses_memory() const override { return false; }
    int64_t param_count(const ad::ParamStore&) const override { return 0; }
    GammaResult apply(ad::Tape& t, ad::Var latents, ad::Var pres,
                      ad::Var memory) const override;
};

class GammaIn final : public GammaModule {
public:
    GammaIn(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    std::string id() const override { return "in"; }
    int effect_dim() const override { return embed_; }
    bool uses_memory() const override { return false; }
    int64_t param_count(const ad::ParamStore& ps) const override;
    GammaResult apply(ad::Tape& t, ad::Var latents, ad::Var pres,
                      ad::Var memory) const override;

private:
    nn::Mlp f_, g_, g_eff_;
    nn::Linear g_att_;
    int embed_ = 0;
};

class GammaRmc final : public GammaModule {
public:
    GammaRmc(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);
    std::string id() const override { return "rmc"; }
    int effect_dim() const override { return m_dim_; }
    bool uses_memory() const override { return true; }
    int64_t param_count(const ad::ParamStore& ps) const override;
    GammaResult apply(ad::Tape& t, ad::Var latents, ad::Var pres,
                      ad::Var memory) const override;

private:
    nn::Linear in_proj_, q_, k_, v_, out_, gate_i_, gate_f_;
    int heads_ = 0, head_dim_ = 0, m_dim_ = 0;
};

std::unique_ptr<GammaModule> make_gamma(const std::string& id, ad::ParamStore& ps,
                                        const ModelConfig& mc, uint64_t seed);

inline int64_t count_params(const GammaModule& g, const ad::ParamStore& ps) {
    return g.param_count(ps);
}

// row-wise concatenation helpers shared with the dynamics code
ad::Var hstack(ad::Var a, ad::Var b);
ad::Var vstack(ad::Var a, ad::Var b);

}  // namespace rsqair

#endif
