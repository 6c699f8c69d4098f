#include "rsqair/model.hpp"

#include <cmath>
#include <tuple>

#include "rsqair/errors.hpp"
#include "rsqair/glimpse.hpp"

namespace rsqair {

using ad::Tape;
using ad::Var;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// reparameterized draw: mean + std * eps with eps from the site's stream
Var sample_gauss(Tape& t, Var mean, Var std, Rng g) {
    Tensor e(Shape::vec(mean.numel()));
    for (double& v : e.vec()) v = g.normal();
    return ad::add(mean, ad::mul(std, t.constant(e)));
}

PosteriorParams materialize_head(const SlotHead& sh) {
    PosteriorParams q;
    q.what_mean = ad::materialize(sh.what_mean);
    q.what_std = ad::materialize(sh.what_std);
    q.where_mean = ad::materialize(sh.where_mean);
    q.where_std = ad::materialize(sh.where_std);
    q.pres_prob = sigmoid(sh.pres_logit.val());
    return q;
}

}  // namespace

RsqairModel::RsqairModel(ad::ParamStore& ps, const ModelConfig& mc, uint64_t seed)
    : mc_(mc), ps_(&ps) {
    
    enc_ = FrameEncoder(ps, mc_, seed);
    dec_ = GlimpseDecoder(ps, mc_, seed);
    genc_ = GlimpseEncoder(ps, mc_, seed);
    air_ = AirCore(ps, mc_, seed);
    if (mc_.relational != "none") gamma_ = make_gamma(mc_.relational, ps, mc_, seed);
    ctx_ = mc_.latent_dim() + (gamma_ ? gamma_->effect_dim() : 0);
    int head_dim = slot_head_dim(mc_.d_what);
    prop_gru_ = nn::Gru(ps, "prop/gru", mc_.glimpse_feat + ctx_, mc_.temporal_hidden, seed);
    prop_head_ = nn::Linear(ps, "prop/head", mc_.temporal_hidden + ctx_, head_dim, seed);
    prop_prior_ = nn::Mlp(ps, "prop_prior", {ctx_, mc_.temporal_hidden, head_dim}, seed);
    disc_prior_ = nn::Mlp(ps, "disc_prior", {mc_.latent_dim(), mc_.temporal_hidden, head_dim},
                          seed);
}

// ---- scene plumbing ----

RsqairModel::TapeSlot RsqairModel::dead_slot(Tape& t, int id) const {
    TapeSlot s;
    s.z_what = t.constant(Shape::vec(mc_.d_what), 0.0);
    s.u_where = t.constant(Shape::vec(4), 0.0);
    s.z_where = t.constant(Shape::vec(4), 0.0);
    s.pres = t.scalar(0.0);
    s.hidden = t.constant(Shape::vec(mc_.temporal_hidden), 0.0);
    s.alive = false;
    s.id = id;
    return s;
}

RsqairModel::TapeScene RsqairModel::init_scene(Tape& t) const {
    TapeScene ts;
    ts.frame_index = -1;
    ts.slots.reserve(mc_.k_slots);
    for (int k = 0; k < mc_.k_slots; ++k)
        ts.slots.push_back(dead_slot(t, k));
    if (gamma_ && gamma_->uses_memory())
        ts.memory = t.constant(Shape::mat(mc_.k_slots, mc_.m_dim()), 0.0);
    return ts;
}

RsqairModel::TapeScene RsqairModel::lift_scene(Tape& t, const SceneState& s) const {
    int K = mc_.k_slots;
    if (static_cast<int>(s.objects.size()) > K)
        throw ShapeError("scene has more objects than slots");
    TapeScene ts = init_scene(t);
    ts.frame_index = s.frame_index;
    ts.propagated_ids = s.propagated_ids;
    ts.discovered_ids = s.discovered_ids;
    for (int k = 0; k < static_cast<int>(s.objects.size()); ++k) {
        const ObjectLatent& o = s.objects[k];
        if (o.z_pres <= 0.0) continue;
        TapeSlot& sl = ts.slots[k];
        sl.z_what = t.constant(o.z_what);
        sl.u_where = t.constant(o.u_where);
        sl.z_where = t.constant(o.z_where);
        sl.pres = t.scalar(o.z_pres);
        sl.alive = true;
        sl.id = o.slot_id;
        if (k < static_cast<int>(s.temporal_hidden.size()) &&
            s.temporal_hidden[k].size() == mc_.temporal_hidden)
            sl.hidden = t.constant(s.temporal_hidden[k]);
    }
    if (gamma_ && gamma_->uses_memory() && s.relational_memory)
        ts.memory = t.constant(*s.relational_memory);
    return ts;
}

SceneState RsqairModel::materialize_scene(const TapeScene& ts,
                                          const std::vector<PosteriorParams>& q) const {
    SceneState s;
    s.frame_index = ts.frame_index;
    s.propagated_ids = ts.propagated_ids;
    s.discovered_ids = ts.discovered_ids;
    for (const TapeSlot& sl : ts.slots) {
        ObjectLatent o;
        o.z_what = ad::materialize(sl.z_what);
        o.u_where = ad::materialize(sl.u_where);
        o.z_where = ad::materialize(sl.z_where);
        o.z_pres = sl.pres.val();
        o.slot_id = sl.id;
        s.objects.push_back(std::move(o));
        s.temporal_hidden.push_back(ad::materialize(sl.hidden));
    }
    s.posterior = q;
    if (ts.memory.valid()) s.relational_memory = ad::materialize(ts.memory);
    return s;
}

Var RsqairModel::latent_row(Tape& t, const TapeSlot& s) const {
    (void)t;
    return ad::concat_vec({s.z_what, s.z_where, s.pres});
}

Var RsqairModel::latent_rows(Tape& t, const TapeScene& ts) const {
    std::vector<Var> rows;
    rows.reserve(ts.slots.size());
    for (const TapeSlot& s : ts.slots) rows.push_back(latent_row(t, s));
    return ad::stack_rows(rows);
}

Var RsqairModel::pres_vec(Tape& t, const TapeScene& ts) const {
    (void)t;
    std::vector<Var> ps;
    ps.reserve(ts.slots.size());
    for (const TapeSlot& s : ts.slots) ps.push_back(s.pres);
    return ad::stack_scalars(ps);
}

// presence-weighted sum of latent rows; exact zeros for absent slots
Var RsqairModel::prop_summary(Tape& t, const TapeScene& ts) const {
    Var sum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);
    for (const TapeSlot& s : ts.slots)
        sum = ad::add(sum, ad::scale_by(latent_row(t, s), s.pres));
    return sum;
}

// ---- propagation phase ----

RsqairModel::TapeScene RsqairModel::propagate_slots(Tape& t, const TapeScene& prev,
                                                    Var frame_var, const RunOptions& opt,
                                                    int ti, StepLogs& w,
                                                    std::vector<PosteriorParams>& q_out) const {
    int K = mc_.k_slots;
    bool relaxed = opt.mode == SampleMode::relaxed;
    double tau = opt.temperature;

    TapeScene ns;
    ns.frame_index = ti;
    ns.memory = prev.memory;
    if (ti == 0) {
        // nothing exists yet; the first frame is pure discovery
        for (int k = 0; k < K; ++k)
            ns.slots.push_back(dead_slot(t, k));
        return ns;
    }

    // relational context rows over the previous frame's latents
    Var rows = latent_rows(t, prev);
    Var ctx = rows;
    if (gamma_) {
        GammaResult gr = gamma_->apply(t, rows, pres_vec(t, prev), prev.memory);
        ctx = gr.gamma;
        ns.memory = gr.new_memory;
    }

    for (int k = 0; k < K; ++k) {
        const TapeSlot& ps = prev.slots[k];
        if (!relaxed && !ps.alive) {
            ns.slots.push_back(dead_slot(t, k));
            continue;
        }
        Var gk = ad::row_(ctx, k);
        Var glimpse = extract_glimpse(t, frame_var, ps.z_where, mc_.glimpse);
        Var gf = genc_(t, glimpse);
        Var h = prop_gru_.step(t, ad::concat_vec({gf, gk}), ps.hidden);
        SlotHead sh = split_slot_head(prop_head_(t, ad::concat_vec({h, gk})), mc_.d_what,
                                      mc_.std_floor);
        SlotHead pp = split_slot_head(prop_prior_(t, gk), mc_.d_what, mc_.std_floor);
        q_out[k] = materialize_head(sh);

        TapeSlot nsl;
        nsl.id = ps.id;
        nsl.hidden = h;
        if (relaxed) {
            Rng gp = Rng::derive(opt.noise_key, "p/pres", ti, k);
            Var x = ad::mul_const(ad::add_const(sh.pres_logit, gp.logistic()), 1.0 / tau);
            Var a = ad::sigmoid_(x);
            Var wk = ad::mul(ps.pres, a);  // survival never raises presence
            w.log_q = ad::add(w.log_q,
                              ad::mul(ps.pres, relaxed_bernoulli_logp(t, x, sh.pres_logit, tau)));
            w.log_p = ad::add(w.log_p,
                              ad::mul(ps.pres, relaxed_bernoulli_logp(t, x, pp.pres_logit, tau)));
            nsl.z_what = sample_gauss(t, sh.what_mean, sh.what_std,
                                      Rng::derive(opt.noise_key, "p/what", ti, k));
            nsl.u_where = sample_gauss(t, sh.where_mean, sh.where_std,
                                       Rng::derive(opt.noise_key, "p/where", ti, k));
            nsl.z_where = where_squash_var(t, nsl.u_where, mc_.scale_max, mc_.shift_max);
            Var lq = ad::add(gaussian_logp(t, nsl.z_what, sh.what_mean, sh.what_std),
                             gaussian_logp(t, nsl.u_where, sh.where_mean, sh.where_std));
            Var lp = ad::add(gaussian_logp(t, nsl.z_what, pp.what_mean, pp.what_std),
                             gaussian_logp(t, nsl.u_where, pp.where_mean, pp.where_std));
            w.log_q = ad::add(w.log_q, ad::mul(wk, lq));
            w.log_p = ad::add(w.log_p, ad::mul(wk, lp));
            nsl.pres = wk;
            nsl.alive = true;
        } else {
            double prob = sigmoid(sh.pres_logit.val());
            bool b = Rng::derive(opt.noise_key, "p/pres", ti, k).uniform() < prob;
            w.log_q = ad::add(w.log_q, bernoulli_logp(t, b ? 1.0 : 0.0, sh.pres_logit));
            w.log_p = ad::add(w.log_p, bernoulli_logp(t, b ? 1.0 : 0.0, pp.pres_logit));
            if (!b) {
                // death removes the object; no further draws or terms
                ns.slots.push_back(dead_slot(t, k));
                continue;
            }
            nsl.z_what = sample_gauss(t, sh.what_mean, sh.what_std,
                                      Rng::derive(opt.noise_key, "p/what", ti, k));
            nsl.u_where = sample_gauss(t, sh.where_mean, sh.where_std,
                                       Rng::derive(opt.noise_key, "p/where", ti, k));
            nsl.z_where = where_squash_var(t, nsl.u_where, mc_.scale_max, mc_.shift_max);
            w.log_q = ad::add(w.log_q,
                              ad::add(gaussian_logp(t, nsl.z_what, sh.what_mean, sh.what_std),
                                      gaussian_logp(t, nsl.u_where, sh.where_mean, sh.where_std)));
            w.log_p = ad::add(w.log_p,
                              ad::add(gaussian_logp(t, nsl.z_what, pp.what_mean, pp.what_std),
                                      gaussian_logp(t, nsl.u_where, pp.where_mean, pp.where_std)));
            nsl.pres = t.scalar(1.0);
            nsl.alive = true;
        }
        ns.propagated_ids.push_back(k);
        ns.slots.push_back(std::move(nsl));
    }
    return ns;
}

// ---- discovery phase ----

void RsqairModel::discover_slots(Tape& t, TapeScene& scene, Var feat, const RunOptions& opt,
                                 int ti, StepLogs& w,
                                 std::vector<PosteriorParams>& q_out) const {
    bool relaxed = opt.mode == SampleMode::relaxed;
    double tau = opt.temperature;

    std::vector<int> free;
    for (int k = 0; k < mc_.k_slots; ++k)
        if (!scene.slots[k].alive) free.push_back(k);
    if (free.empty()) return;  // zero capacity: empty discovery, log 1

    Var psum = prop_summary(t, scene);
    SlotHead pd = split_slot_head(disc_prior_(t, psum), mc_.d_what, mc_.std_floor);
    Var h = t.constant(Shape::vec(air_.hidden()), 0.0);
    Var disc_sum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);
    Var chain = t.scalar(1.0);

    for (int kpos : free) {
        Var input = ad::concat_vec({feat, disc_sum, psum});
        h = air_.step(t, input, h);
        SlotHead sh = air_.head(t, h, mc_.d_what, mc_.std_floor);
        q_out[kpos] = materialize_head(sh);

        TapeSlot& sl = scene.slots[kpos];
        sl.hidden = t.constant(Shape::vec(mc_.temporal_hidden), 0.0);
        if (relaxed) {
            Rng gp = Rng::derive(opt.noise_key, "d/pres", ti, kpos);
            Var x = ad::mul_const(ad::add_const(sh.pres_logit, gp.logistic()), 1.0 / tau);
            Var a = ad::sigmoid_(x);
            Var wk = ad::mul(chain, a);
            w.log_q = ad::add(w.log_q,
                              ad::mul(chain, relaxed_bernoulli_logp(t, x, sh.pres_logit, tau)));
            w.log_p = ad::add(w.log_p,
                              ad::mul(chain, relaxed_bernoulli_logp(t, x, pd.pres_logit, tau)));
            sl.z_what = sample_gauss(t, sh.what_mean, sh.what_std,
                                     Rng::derive(opt.noise_key, "d/what", ti, kpos));
            sl.u_where = sample_gauss(t, sh.where_mean, sh.where_std,
                                      Rng::derive(opt.noise_key, "d/where", ti, kpos));
            sl.z_where = where_squash_var(t, sl.u_where, mc_.scale_max, mc_.shift_max);
            Var lq = ad::add(gaussian_logp(t, sl.z_what, sh.what_mean, sh.what_std),
                             gaussian_logp(t, sl.u_where, sh.where_mean, sh.where_std));
            Var lp = ad::add(gaussian_logp(t, sl.z_what, pd.what_mean, pd.what_std),
                             gaussian_logp(t, sl.u_where, pd.where_mean, pd.where_std));
            w.log_q = ad::add(w.log_q, ad::mul(wk, lq));
            w.log_p = ad::add(w.log_p, ad::mul(wk, lp));
            sl.pres = wk;
            sl.alive = true;
            chain = wk;
        } else {
            double prob = sigmoid(sh.pres_logit.val());
            bool b = Rng::derive(opt.noise_key, "d/pres", ti, kpos).uniform() < prob;
            w.log_q = ad::add(w.log_q, bernoulli_logp(t, b ? 1.0 : 0.0, sh.pres_logit));
            w.log_p = ad::add(w.log_p, bernoulli_logp(t, b ? 1.0 : 0.0, pd.pres_logit));
            if (!b) break;  // chain terminated; later slots stay absent, no terms
            sl.z_what = sample_gauss(t, sh.what_mean, sh.what_std,
                                     Rng::derive(opt.noise_key, "d/what", ti, kpos));
            sl.u_where = sample_gauss(t, sh.where_mean, sh.where_std,
                                      Rng::derive(opt.noise_key, "d/where", ti, kpos));
            sl.z_where = where_squash_var(t, sl.u_where, mc_.scale_max, mc_.shift_max);
            w.log_q = ad::add(w.log_q,
                              ad::add(gaussian_logp(t, sl.z_what, sh.what_mean, sh.what_std),
                                      gaussian_logp(t, sl.u_where, sh.where_mean, sh.where_std)));
            w.log_p = ad::add(w.log_p,
                              ad::add(gaussian_logp(t, sl.z_what, pd.what_mean, pd.what_std),
                                      gaussian_logp(t, sl.u_where, pd.where_mean, pd.where_std)));
            sl.pres = t.scalar(1.0);
            sl.alive = true;
        }
        disc_sum = ad::add(disc_sum, ad::scale_by(latent_row(t, sl), sl.pres));
        scene.discovered_ids.push_back(kpos);
    }
}

Var RsqairModel::render_slots(Tape& t, const TapeScene& ts) const {
    std::vector<SlotDraw> draws;
    for (const TapeSlot& s : ts.slots)
        if (s.alive) draws.push_back({s.z_what, s.z_where, s.pres});
    return render_mean(t, dec_, draws, mc_.crop, mc_.crop);
}

// ---- public filtering ----

std::vector<FilterResult> RsqairModel::filter_particles(Tape& t, const FrameSequence& seq,
                                                        const RunOptions& opt,
                                                        int particles) const {
    if (particles < 1) throw ConfigError("particles must be >= 1");
    int T = seq.t_len();
    if (seq.height() != mc_.crop || seq.width() != mc_.crop)
        throw ShapeError("sequence frame size does not match the model crop");

    // per-frame constants and encoder features, shared across particles
    std::vector<Tensor> frames(T);
    std::vector<Var> frame_vars(T), feats(T);
    for (int ti = 0; ti < T; ++ti) {
        frames[ti] = seq.frame(ti);
        frame_vars[ti] = t.constant(frames[ti]);
        feats[ti] = enc_(t, frame_vars[ti]);
    }

    std::vector<FilterResult> out;
    out.reserve(particles);
    for (int p = 0; p < particles; ++p) {
        RunOptions popt = opt;
        popt.noise_key = Rng::derive(opt.noise_key, "particle", p).key();
        FilterResult fr;
        fr.total = t.scalar(0.0);
        TapeScene cur = init_scene(t);
        for (int ti = 0; ti < T; ++ti) {
            std::vector<PosteriorParams> q(mc_.k_slots);
            StepLogs w{t.scalar(0.0), t.scalar(0.0)};
            TapeScene ns = propagate_slots(t, cur, frame_vars[ti], popt, ti, w, q);
            discover_slots(t, ns, feats[ti], popt, ti, w, q);
            Var mean = render_slots(t, ns);
            Var log_px = frame_gaussian_logp(t, mean, frames[ti], mc_.sigma_x);
            fr.frames.push_back({log_px, w.log_p, w.log_q});
            fr.total = ad::add(fr.total, ad::add(log_px, ad::sub(w.log_p, w.log_q)));
            fr.frame_means.push_back(ad::materialize(mean));
            fr.states.push_back(materialize_scene(ns, q));
            cur = std::move(ns);
        }
        out.push_back(std::move(fr));
    }
    return out;
}

FilterResult RsqairModel::filter_sequence(Tape& t, const FrameSequence& seq,
                                          const RunOptions& opt) const {
    return std::move(filter_particles(t, seq, opt, 1)[0]);
}

PropagateResult RsqairModel::propagate(Tape& t, const Tensor& frame, const SceneState& prev,
                                       const RunOptions& opt) const {
    TapeScene pts = lift_scene(t, prev);
    std::vector<PosteriorParams> q(mc_.k_slots);
    StepLogs w{t.scalar(0.0), t.scalar(0.0)};
    Var frame_var = t.constant(frame);
    TapeScene ns = propagate_slots(t, pts, frame_var, opt, prev.frame_index + 1, w, q);
    return {materialize_scene(ns, q), w.log_q, w.log_p};
}

DiscoverResult RsqairModel::discover(Tape& t, const Tensor& frame, const SceneState& propagated,
                                     const RunOptions& opt) const {
    TapeScene ts = lift_scene(t, propagated);
    std::vector<PosteriorParams> q = propagated.posterior;
    q.resize(mc_.k_slots);
    StepLogs w{t.scalar(0.0), t.scalar(0.0)};
    Var feat = enc_(t, t.constant(frame));
    discover_slots(t, ts, feat, opt, propagated.frame_index, w, q);
    return {materialize_scene(ts, q), w.log_q, w.log_p};
}

// ---- rollout ----

std::vector<RolloutStep> RsqairModel::rollout_prior(Tape& t, const SceneState& state, int steps,
                                                    const RunOptions& opt) const {
    TapeScene cur = lift_scene(t, state);
    std::vector<RolloutStep> out;
    out.reserve(steps);
    for (int s = 1; s <= steps; ++s) {
        Var rows = latent_rows(t, cur);
        Var ctx = rows;
        TapeScene ns;
        ns.frame_index = cur.frame_index + 1;
        ns.memory = cur.memory;
        if (gamma_) {
            GammaResult gr = gamma_->apply(t, rows, pres_vec(t, cur), cur.memory);
            ctx = gr.gamma;
            ns.memory = gr.new_memory;
        }
        for (int k = 0; k < mc_.k_slots; ++k) {
            const TapeSlot& ps = cur.slots[k];
            if (!ps.alive) {
                ns.slots.push_back(dead_slot(t, k));
                continue;
            }
            SlotHead pp = split_slot_head(prop_prior_(t, ad::row_(ctx, k)), mc_.d_what,
                                          mc_.std_floor);
            double prob = sigmoid(pp.pres_logit.val());
            bool b = Rng::derive(opt.noise_key, "r/pres", s, k).uniform() < prob;
            if (!b) {
                ns.slots.push_back(dead_slot(t, k));
                continue;
            }
            TapeSlot nsl;
            nsl.id = ps.id;
            nsl.z_what = sample_gauss(t, pp.what_mean, pp.what_std,
                                      Rng::derive(opt.noise_key, "r/what", s, k));
            nsl.u_where = sample_gauss(t, pp.where_mean, pp.where_std,
                                       Rng::derive(opt.noise_key, "r/where", s, k));
            nsl.z_where = where_squash_var(t, nsl.u_where, mc_.scale_max, mc_.shift_max);
            nsl.pres = t.scalar(1.0);
            nsl.hidden = ps.hidden;  // inference state is inert during rollout
            nsl.alive = true;
            ns.propagated_ids.push_back(k);
            ns.slots.push_back(std::move(nsl));
        }
        Var mean = render_slots(t, ns);
        out.push_back({materialize_scene(ns, std::vector<PosteriorParams>(mc_.k_slots)),
                       ad::materialize(mean)});
        cur = std::move(ns);
    }
    return out;
}

// ---- single-frame attention with the count prior ----

std::tuple<PosteriorParams, ObjectLatent, AirCoreState> RsqairModel::infer_step(
    Tape& t, const Tensor& frame, AirCoreState state, const RunOptions& opt) const {
    if (!state.feat.valid()) {
        state.feat = enc_(t, t.constant(frame));
        state.h = t.constant(Shape::vec(air_.hidden()), 0.0);
        state.disc_sum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);
        if (!state.prop_sum.valid())
            state.prop_sum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);
    }
    int k = state.slot;
    ObjectLatent o;
    o.z_what = Tensor(Shape::vec(mc_.d_what));
    o.u_where = Tensor(Shape::vec(4));
    o.z_where = Tensor(Shape::vec(4));
    o.slot_id = k;

    if (opt.mode == SampleMode::hard && !state.alive) {
        // terminated chain: presence forced to zero, nothing is inferred
        PosteriorParams q;
        q.what_mean = Tensor(Shape::vec(mc_.d_what));
        q.what_std = Tensor(Shape::vec(mc_.d_what));
        q.where_mean = Tensor(Shape::vec(4));
        q.where_std = Tensor(Shape::vec(4));
        q.pres_prob = 0.0;
        state.slot = k + 1;
        return {q, o, state};
    }

    state.h = air_.step(t, ad::concat_vec({state.feat, state.disc_sum, state.prop_sum}),
                        state.h);
    SlotHead sh = air_.head(t, state.h, mc_.d_what, mc_.std_floor);
    PosteriorParams q = materialize_head(sh);

    Var what = sample_gauss(t, sh.what_mean, sh.what_std,
                            Rng::derive(opt.noise_key, "a/what", 0, k));
    Var u = sample_gauss(t, sh.where_mean, sh.where_std,
                         Rng::derive(opt.noise_key, "a/where", 0, k));
    Var zw = where_squash_var(t, u, mc_.scale_max, mc_.shift_max);

    if (opt.mode == SampleMode::hard) {
        bool b = Rng::derive(opt.noise_key, "a/pres", 0, k).uniform() < q.pres_prob;
        if (b) {
            o.z_what = ad::materialize(what);
            o.u_where = ad::materialize(u);
            o.z_where = ad::materialize(zw);
            o.z_pres = 1.0;
            Var row = ad::concat_vec({what, zw, t.scalar(1.0)});
            state.disc_sum = ad::add(state.disc_sum, row);
        } else {
            state.alive = false;
        }
    } else {
        Rng gp = Rng::derive(opt.noise_key, "a/pres", 0, k);
        Var x = ad::mul_const(ad::add_const(sh.pres_logit, gp.logistic()),
                              1.0 / opt.temperature);
        Var a = ad::sigmoid_(x);
        o.z_what = ad::materialize(what);
        o.u_where = ad::materialize(u);
        o.z_where = ad::materialize(zw);
        o.z_pres = a.val();
        Var row = ad::concat_vec({what, zw, a});
        state.disc_sum = ad::add(state.disc_sum, ad::scale_by(row, a));
    }
    state.slot = k + 1;
    return {q, o, state};
}

SceneInference RsqairModel::infer_scene(Tape& t, const Tensor& frame,
                                        const RunOptions& opt) const {
    // hard chain regardless of the requested mode: the count prior has
    // integer support
    Var feat = enc_(t, t.constant(frame));
    Var h = t.constant(Shape::vec(air_.hidden()), 0.0);
    Var disc_sum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);
    Var psum = t.constant(Shape::vec(mc_.latent_dim()), 0.0);

    Var log_q = t.scalar(0.0), log_p = t.scalar(0.0);
    TapeScene ts = init_scene(t);
    ts.frame_index = 0;
    std::vector<PosteriorParams> q_out(mc_.k_slots);
    int n = 0;
    for (int k = 0; k < mc_.k_slots; ++k) {
        h = air_.step(t, ad::concat_vec({feat, disc_sum, psum}), h);
        SlotHead sh = air_.head(t, h, mc_.d_what, mc_.std_floor);
        q_out[k] = materialize_head(sh);
        double prob = sigmoid(sh.pres_logit.val());
        bool b = Rng::derive(opt.noise_key, "a/pres", 0, k).uniform() < prob;
        log_q = ad::add(log_q, bernoulli_logp(t, b ? 1.0 : 0.0, sh.pres_logit));
        if (!b) break;
        TapeSlot& sl = ts.slots[k];
        sl.z_what = sample_gauss(t, sh.what_mean, sh.what_std,
                                 Rng::derive(opt.noise_key, "a/what", 0, k));
        sl.u_where = sample_gauss(t, sh.where_mean, sh.where_std,
                                  Rng::derive(opt.noise_key, "a/where", 0, k));
        sl.z_where = where_squash_var(t, sl.u_where, mc_.scale_max, mc_.shift_max);
        sl.pres = t.scalar(1.0);
        sl.alive = true;
        log_q = ad::add(log_q,
                        ad::add(gaussian_logp(t, sl.z_what, sh.what_mean, sh.what_std),
                                gaussian_logp(t, sl.u_where, sh.where_mean, sh.where_std)));
        log_p = ad::add(log_p, ad::add(std_normal_logp(t, sl.z_what),
                                       std_normal_logp(t, sl.u_where)));
        disc_sum = ad::add(disc_sum, latent_row(t, sl));
        ts.discovered_ids.push_back(k);
        ++n;
    }
    log_p = ad::add(log_p, t.scalar(geometric_logp(n, mc_.geometric_theta)));
    return {materialize_scene(ts, q_out), log_q, log_p};
}

Tensor RsqairModel::render_scene(Tape& t, const SceneState& s) const {
    TapeScene ts = lift_scene(t, s);
    return ad::materialize(render_slots(t, ts));
}

}  // namespace rsqair
