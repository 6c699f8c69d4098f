#include "rsqair/scene.hpp"

#include <cmath>
#include <cstring>

#include "rsqair/errors.hpp"

namespace rsqair {

FrameSequence FrameSequence::truncated(int t_keep) const {
    if (t_keep < 1 || t_keep > t_len())
        throw ShapeError("truncate length out of range");
    FrameSequence out;
    int hw = height() * width();
    out.frames = Tensor(Shape::chw(t_keep, height(), width()));
    std::memcpy(out.frames.data(), frames.data(), sizeof(double) * t_keep * hw);
    out.collisions.assign(collisions.begin(), collisions.begin() + t_keep);
    if (!traj.empty()) out.traj.assign(traj.begin(), traj.begin() + t_keep);
    out.ball_count = ball_count;
    out.raw_size = raw_size;
    return out;
}

Tensor FrameSequence::frame(int t) const {
    int hw = height() * width();
    Tensor f(Shape::mat(height(), width()));
    std::memcpy(f.data(), frames.data() + static_cast<long>(t) * hw, sizeof(double) * hw);
    return f;
}

int present_count(const SceneState& s) {
    int n = 0;
    for (const auto& o : s.objects)
        if (o.z_pres >= 0.5) ++n;
    return n;
}

Tensor latent_concat(const ObjectLatent& o) {
    int d = o.z_what.size();
    Tensor v(Shape::vec(d + 5));
    for (int i = 0; i < d; ++i) v[i] = o.z_what[i];
    for (int i = 0; i < 4; ++i) v[d + i] = o.z_where[i];
    v[d + 4] = o.z_pres;
    return v;
}

ObjectLatent latent_split(const Tensor& v, int d_what, int slot_id,
                          double scale_max, double shift_max) {
    if (v.size() != d_what + 5) throw ShapeError("latent_split: wrong vector length");
    ObjectLatent o;
    o.z_what = Tensor(Shape::vec(d_what));
    for (int i = 0; i < d_what; ++i) o.z_what[i] = v[i];
    o.z_where = Tensor(Shape::vec(4));
    for (int i = 0; i < 4; ++i) o.z_where[i] = v[d_what + i];
    o.u_where = where_unsquash(o.z_where, scale_max, shift_max);
    o.z_pres = v[d_what + 4];
    o.slot_id = slot_id;
    return o;
}

Tensor where_squash(const Tensor& u, double scale_max, double shift_max) {
    Tensor z(Shape::vec(4));
    z[0] = scale_max / (1.0 + std::exp(-u[0]));
    z[1] = scale_max / (1.0 + std::exp(-u[1]));
    z[2] = shift_max * std::tanh(u[2]);
    z[3] = shift_max * std::tanh(u[3]);
    return z;
}

Tensor where_unsquash(const Tensor& z, double scale_max, double shift_max) {
    auto logit = [](double p) {
        p = std::fmin(std::fmax(p, 1e-12), 1.0 - 1e-12);
        return std::log(p) - std::log1p(-p);
    };
    auto atanh_c = [](double x) {
        x = std::fmin(std::fmax(x, -1.0 + 1e-12), 1.0 - 1e-12);
        return 0.5 * (std::log1p(x) - std::log1p(-x));
    };
    Tensor u(Shape::vec(4));
    u[0] = logit(z[0] / scale_max);
    u[1] = logit(z[1] / scale_max);
    u[2] = atanh_c(z[2] / shift_max);
    u[3] = atanh_c(z[3] / shift_max);
    return u;
}

}  // namespace rsqair
