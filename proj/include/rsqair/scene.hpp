#ifndef RSQAIR_SCENE_HPP
#define RSQAIR_SCENE_HPP

// Latent-variable data model shared by inference, dynamics and evaluation.
//
// Each object slot carries an appearance code z_what, an attention window
// z_where = (s_x, s_y, t_x, t_y), and a presence value z_pres. Windows are
// sampled in an unconstrained space u_where and squashed to the physical
// window: s = scale_max * sigmoid(u), t = shift_max * tanh(u), which keeps
// scales strictly positive. z_pres is exactly 0/1 when sampled hard and lies
// in (0,1) under the training-time concrete relaxation.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "rsqair/tensor.hpp"

namespace rsqair {

struct ObjectLatent {
    Tensor z_what;   // (d_what)
    Tensor u_where;  // (4) unconstrained window pre-image
    Tensor z_where;  // (4) physical window (s_x, s_y, t_x, t_y)
    double z_pres = 0.0;
    int slot_id = 0;
};

// q-side distribution parameters for one slot; where_* parameterize the
// Gaussian over u_where (the unconstrained space)
struct PosteriorParams {
    Tensor what_mean, what_std;
    Tensor where_mean, where_std;
    double pres_prob = 0.0;
};

struct SceneState {
    std::vector<ObjectLatent> objects;
    std::vector<PosteriorParams> posterior;
    std::vector<Tensor> temporal_hidden;        // one row per object slot
    std::optional<Tensor> relational_memory;    // (K, m_dim), memory-based modules only
    std::vector<int> propagated_ids;            // slot ids alive via propagation
    std::vector<int> discovered_ids;            // slot ids alive via discovery this frame
    int frame_index = 0;
};

struct FrameSequence {
    Tensor frames;                                          // (T, H, W) in [0,1]
    std::vector<std::vector<uint8_t>> collisions;           // T x B
    std::vector<std::vector<std::array<float, 4>>> traj;    // T x B x (x, y, vx, vy)
    int ball_count = 0;
    int raw_size = 64;

    int t_len() const { return frames.shape().d[0]; }
    int height() const { return frames.shape().d[1]; }
    int width() const { return frames.shape().d[2]; }
    FrameSequence truncated(int t_keep) const;
    Tensor frame(int t) const;  // (H, W) copy
};

// number of present objects; defined on hard scenes where z_pres is 0/1
int present_count(const SceneState& s);

// canonical flat layout used by every relational module:
// z_what ‖ z_where (physical) ‖ z_pres
Tensor latent_concat(const ObjectLatent& o);
ObjectLatent latent_split(const Tensor& v, int d_what, int slot_id,
                          double scale_max, double shift_max);

// window squash and its inverse (tensor side; the tape twin lives in air.hpp)
Tensor where_squash(const Tensor& u, double scale_max, double shift_max);
Tensor where_unsquash(const Tensor& z, double scale_max, double shift_max);

}  // namespace rsqair

#endif
