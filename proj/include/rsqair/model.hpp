#ifndef RSQAIR_MODEL_HPP
#define RSQAIR_MODEL_HPP

// The temporal state-space model over K object slots: per frame, surviving
// objects are propagated through a temporal GRU conditioned on relational
// context rows gamma = Gamma(z_prev), then free slots are filled by the
// recurrent discovery chain. Learned priors: a propagation prior over each
// gamma row and a discovery prior conditioned on the sum of propagated
// latents. Per-frame log-weight = log p(x|z) + log p(z|.) - log q(z|.).
//
// Sampling modes:
//   relaxed  training-time surrogate with concrete presence and a fixed
//            graph: every slot is discovered at the first frame and
//            propagated afterwards; density terms are weighted by the soft
//            presence chain
//   hard     exact 0/1 presence with chain termination; absent slots draw
//            nothing and contribute no terms
//
// Slots are positional: a survivor keeps its slot index, discoveries fill
// free indices in ascending order, and the relational memory row k always
// belongs to slot k.

#include <memory>
#include <vector>

#include "rsqair/air.hpp"
#include "rsqair/autodiff.hpp"
#include "rsqair/config.hpp"
#include "rsqair/relational.hpp"
#include "rsqair/rng.hpp"
#include "rsqair/scene.hpp"

namespace rsqair {

enum class SampleMode { relaxed, hard };

struct RunOptions {
    SampleMode mode = SampleMode::hard;
    double temperature = 1.0;  // concrete-relaxation temperature (relaxed mode)
    uint64_t noise_key = 0;    // root stream of every sampling site
};

struct FrameLogWeight {
    ad::Var log_px, log_p, log_q;
    double value() const { return log_px.val() + log_p.val() - log_q.val(); }
};

struct FilterResult {
    std::vector<SceneState> states;
    std::vector<FrameLogWeight> frames;
    std::vector<Tensor> frame_means;
    ad::Var total;  // sum over frames of log p(x|z) + log p(z|.) - log q(z|.)
};

struct RolloutStep {
    SceneState state;
    Tensor mean;
};

struct PropagateResult {
    SceneState partial;  // survivors in place, free slots empty
    ad::Var log_q, log_p;
};

struct DiscoverResult {
    SceneState scene;
    ad::Var log_q, log_p;
};

struct SceneInference {
    SceneState scene;
    ad::Var log_q, log_p;  // chain posterior vs count prior + unit Gaussians
};

// discovery-chain state for the single-frame step surface; reset per frame
struct AirCoreState {
    ad::Var feat;      // frame features, filled on the first step
    ad::Var h;         // discovery GRU hidden
    ad::Var disc_sum;  // presence-weighted sum of latents discovered so far
    ad::Var prop_sum;  // presence-weighted sum of propagated latents
    int slot = 0;
    bool alive = true;  // hard mode: chain not yet terminated
};

class RsqairModel {
public:
    RsqairModel(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed);

    const ModelConfig& config() const { return mc_; }
    ad::ParamStore& params() const { return *ps_; }
    // nullptr when configured without a relational module ("none")
    const GammaModule* gamma() const { return gamma_.get(); }
    int ctx_dim() const { return ctx_; }

    // full-sequence filtering; one independent latent trajectory
    FilterResult filter_sequence(ad::Tape& t, const FrameSequence& seq,
                                 const RunOptions& opt) const;
    // `particles` trajectories sharing per-frame encoder features on one
    // tape; particle p draws from derive(noise_key, "particle", p)
    std::vector<FilterResult> filter_particles(ad::Tape& t, const FrameSequence& seq,
                                               const RunOptions& opt, int particles) const;

    // one frame of the two-phase update, on materialized scenes
    PropagateResult propagate(ad::Tape& t, const Tensor& frame, const SceneState& prev,
                              const RunOptions& opt) const;
    DiscoverResult discover(ad::Tape& t, const Tensor& frame, const SceneState& propagated,
                            const RunOptions& opt) const;

    // generative futures from the propagation prior; no discovery
    std::vector<RolloutStep> rollout_prior(ad::Tape& t, const SceneState& state, int steps,
                                           const RunOptions& opt) const;

    // single-frame attention with the count prior and unit-Gaussian latent
    // priors (no temporal model)
    SceneInference infer_scene(ad::Tape& t, const Tensor& frame,
                               const RunOptions& opt) const;
    // one chain step; after hard termination later slots are forced absent
    std::tuple<PosteriorParams, ObjectLatent, AirCoreState> infer_step(
        ad::Tape& t, const Tensor& frame, AirCoreState state, const RunOptions& opt) const;

    // mean frame rendered from a materialized scene
    Tensor render_scene(ad::Tape& t, const SceneState& s) const;

    const GlimpseDecoder& decoder() const { return dec_; }

private:
    struct TapeSlot {
        ad::Var z_what, u_where, z_where;  // zeros when dead
        ad::Var pres;                      // scalar weight; hard: const 0/1
        ad::Var hidden;                    // temporal GRU state
        bool alive = false;
        int id = 0;
    };
    struct TapeScene {
        std::vector<TapeSlot> slots;  // exactly K, positional
        ad::Var memory;               // valid iff the module uses memory
        std::vector<int> propagated_ids, discovered_ids;
        int frame_index = -1;
    };
    struct StepLogs {
        ad::Var log_q, log_p;
    };

    TapeSlot dead_slot(ad::Tape& t, int id) const;
    TapeScene init_scene(ad::Tape& t) const;
    TapeScene lift_scene(ad::Tape& t, const SceneState& s) const;
    SceneState materialize_scene(const TapeScene& ts,
                                 const std::vector<PosteriorParams>& q) const;
    ad::Var latent_row(ad::Tape& t, const TapeSlot& s) const;
    ad::Var latent_rows(ad::Tape& t, const TapeScene& ts) const;
    ad::Var pres_vec(ad::Tape& t, const TapeScene& ts) const;
    ad::Var prop_summary(ad::Tape& t, const TapeScene& ts) const;

    // propagation phase: consumes prev scene, emits partial new scene
    TapeScene propagate_slots(ad::Tape& t, const TapeScene& prev, ad::Var frame_var,
                              const RunOptions& opt, int ti, StepLogs& w,
                              std::vector<PosteriorParams>& q_out) const;
    // discovery phase: fills free slots of the partial scene in place
    void discover_slots(ad::Tape& t, TapeScene& scene, ad::Var feat,
                        const RunOptions& opt, int ti, StepLogs& w,
                        std::vector<PosteriorParams>& q_out) const;
    ad::Var render_slots(ad::Tape& t, const TapeScene& ts) const;

    ModelConfig mc_;
    ad::ParamStore* ps_ = nullptr;
    FrameEncoder enc_;
    GlimpseDecoder dec_;
    GlimpseEncoder genc_;
    AirCore air_;
    std::unique_ptr<GammaModule> gamma_;
    nn::Gru prop_gru_;
    nn::Linear prop_head_;
    nn::Mlp prop_prior_, disc_prior_;
    int ctx_ = 0;
};

}  // namespace rsqair

#endif
