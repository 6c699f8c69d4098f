#include "rsqair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rsqair/air.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/rng.hpp"
#include "rsqair/training.hpp"

namespace rsqair {

namespace {

// half-pixel-center convention shared with the glimpse sampler
inline double to_pixel(double norm, int n) { return 0.5 * (norm + 1.0) * n - 0.5; }

inline int clamp_pixel(long v, int n) {
    if (v < 0) return 0;
    if (v >= n) return n - 1;
    return static_cast<int>(v);
}

struct MaskSet {
    std::vector<Tensor> masks;       // per sequence, final frame
    std::vector<uint8_t> included;   // mask has at least one nonzero pixel
    int included_count = 0;
    int excluded_count = 0;
};

MaskSet build_masks(DatasetReader& ds, const DataConfig& dc, int n_seqs) {
    MaskSet ms;
    ms.masks.reserve(n_seqs);
    ms.included.reserve(n_seqs);
    for (int i = 0; i < n_seqs; ++i) {
        FrameSequence seq = ds.sequence(i);
        Tensor mask = collision_mask(seq, seq.t_len() - 1, dc);
        bool any = false;
        for (int k = 0; k < mask.size() && !any; ++k) any = mask.data()[k] > 0.0;
        ms.included.push_back(any ? 1 : 0);
        if (any) {
            ++ms.included_count;
        } else {
            ++ms.excluded_count;
        }
        ms.masks.push_back(std::move(mask));
    }
    return ms;
}

struct PassOut {
    std::vector<double> data_samples;
    std::vector<RelationalResult> rel_samples;
};

// one model over the dataset: every sequence read once, scored under
// eo.samples independent prior samples keyed by (seed, sample, sequence)
PassOut eval_pass(const RsqairModel& m, DatasetReader& ds, const EvalOptions& eo,
                  const MaskSet* masks) {
    if (eo.samples <= 0) throw ConfigError("eval samples must be positive");
    int n = ds.size();
    if (eo.max_seqs > 0 && eo.max_seqs < n) n = eo.max_seqs;
    if (n <= 0) throw ConfigError("dataset holds no sequences");
    const DatasetHeader& h = ds.header();
    if (static_cast<int>(h.height) != m.config().crop ||
        static_cast<int>(h.width) != m.config().crop)
        throw ShapeError("dataset frame size does not match the model crop");
    if (!eo.posterior_means && h.t_frames < 2)
        throw ConfigError("prior-sample scoring needs at least two frames per sequence");
    double sigma = m.config().sigma_x;

    PassOut out;
    out.data_samples.assign(eo.samples, 0.0);
    std::vector<double> rel_sum(eo.samples, 0.0);
    RunOptions opt;
    opt.mode = SampleMode::hard;
    for (int i = 0; i < n; ++i) {
        FrameSequence seq = ds.sequence(i);
        Tensor obs = seq.frame(seq.t_len() - 1);
        FrameSequence ctx;
        if (!eo.posterior_means) ctx = seq.truncated(seq.t_len() - 1);
        for (int s = 0; s < eo.samples; ++s) {
            ad::Tape t(&m.params(), false);
            opt.noise_key = Rng::derive(eo.seed, "eval/sample", s, i).key();
            Tensor mean;
            if (eo.posterior_means) {
                FilterResult fr = m.filter_sequence(t, seq, opt);
                mean = fr.frame_means.back();
            } else {
                FilterResult fr = m.filter_sequence(t, ctx, opt);
                std::vector<RolloutStep> ro = m.rollout_prior(t, fr.states.back(), 1, opt);
                mean = std::move(ro[0].mean);
            }
            out.data_samples[s] += frame_gaussian_logp(mean, obs, sigma);
            if (masks && masks->included[i])
                rel_sum[s] += masked_gaussian_logp(mean, obs, masks->masks[i], sigma);
        }
    }
    for (int s = 0; s < eo.samples; ++s) out.data_samples[s] /= n;
    if (masks) {
        out.rel_samples.assign(eo.samples, RelationalResult{});
        for (int s = 0; s < eo.samples; ++s) {
            RelationalResult& r = out.rel_samples[s];
            r.included = masks->included_count;
            r.excluded = masks->excluded_count;
            r.no_collisions = masks->included_count == 0;
            r.value = r.no_collisions ? 0.0 : rel_sum[s] / masks->included_count;
        }
    }
    return out;
}

int capped_size(DatasetReader& ds, const EvalOptions& eo) {
    int n = ds.size();
    if (eo.max_seqs > 0 && eo.max_seqs < n) n = eo.max_seqs;
    return n;
}

nlohmann::json read_manifest(const std::string& stem) {
    std::ifstream mf(stem + ".json");
    if (!mf) throw IoError("cannot read checkpoint manifest " + stem + ".json");
    nlohmann::json manifest;
    mf >> manifest;
    return manifest;
}

}  // namespace

Tensor collision_mask(const FrameSequence& seq, int t, const DataConfig& dc) {
    if (t < 0 || t >= seq.t_len()) throw ConfigError("collision_mask frame index out of range");
    if (static_cast<int>(seq.collisions.size()) != seq.t_len() ||
        static_cast<int>(seq.traj.size()) != seq.t_len())
        throw ConfigError("sequence lacks collision annotations");
    if (static_cast<int>(seq.collisions[t].size()) < seq.ball_count ||
        static_cast<int>(seq.traj[t].size()) < seq.ball_count)
        throw ConfigError("collision annotations cover fewer balls than the sequence");
    int hh = seq.height(), ww = seq.width();
    // trajectories are stored in raw-canvas coordinates; the container does
    // not carry the canvas size, so the data config is the authority
    if (dc.raw_size < hh || dc.raw_size < ww || (dc.raw_size - hh) % 2 || (dc.raw_size - ww) % 2)
        throw ConfigError("frame size is not a centered crop of the raw canvas");
    int off_r = (dc.raw_size - hh) / 2;
    int off_c = (dc.raw_size - ww) / 2;
    double rr = dc.radius + dc.contact_eps;
    Tensor mask(Shape::mat(hh, ww));
    for (int b = 0; b < seq.ball_count; ++b) {
        if (!seq.collisions[t][b]) continue;
        double cx = seq.traj[t][b][0];
        double cy = seq.traj[t][b][1];
        for (int i = 0; i < hh; ++i) {
            double dy = (i + off_r + 0.5) - cy;
            for (int j = 0; j < ww; ++j) {
                double dx = (j + off_c + 0.5) - cx;
                if (dx * dx + dy * dy <= rr * rr) mask(i, j) = 1.0;
            }
        }
    }
    return mask;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (double x : v) sum += x;
    double mean = sum / v.size();
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (v.size() - 1))};
}

std::vector<double> data_loglik_samples(const RsqairModel& m, DatasetReader& ds,
                                        const EvalOptions& eo) {
    return eval_pass(m, ds, eo, nullptr).data_samples;
}

std::vector<RelationalResult> relational_loglik_samples(const RsqairModel& m,
                                                        DatasetReader& ds,
                                                        const DataConfig& dc,
                                                        const EvalOptions& eo) {
    MaskSet ms = build_masks(ds, dc, capped_size(ds, eo));
    return eval_pass(m, ds, eo, &ms).rel_samples;
}

double data_loglik(const RsqairModel& m, DatasetReader& ds, const EvalOptions& eo) {
    std::vector<double> per = data_loglik_samples(m, ds, eo);
    double sum = 0.0;
    for (double x : per) sum += x;
    return sum / per.size();
}

RelationalResult relational_loglik(const RsqairModel& m, DatasetReader& ds,
                                   const DataConfig& dc, const EvalOptions& eo) {
    std::vector<RelationalResult> per = relational_loglik_samples(m, ds, dc, eo);
    RelationalResult out = per[0];
    if (out.no_collisions) return out;
    double sum = 0.0;
    for (const RelationalResult& r : per) sum += r.value;
    out.value = sum / per.size();
    return out;
}

void MetricsReport::aggregate() {
    std::vector<double> flat;
    for (const std::vector<double>& row : data_raw)
        flat.insert(flat.end(), row.begin(), row.end());
    std::pair<double, double> d = mean_std(flat);
    data_mean = d.first;
    data_std = d.second;
    flat.clear();
    for (const std::vector<double>& row : rel_raw)
        flat.insert(flat.end(), row.begin(), row.end());
    if (rel_no_collisions || flat.empty()) {
        rel_mean = 0.0;
        rel_std = 0.0;
    } else {
        std::pair<double, double> r = mean_std(flat);
        rel_mean = r.first;
        rel_std = r.second;
    }
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json rel;
    rel["raw"] = rel_raw;
    rel["included"] = rel_included;
    rel["excluded"] = rel_excluded;
    rel["no_collisions"] = rel_no_collisions;
    if (rel_no_collisions) {
        rel["mean"] = nullptr;
        rel["std"] = nullptr;
    } else {
        rel["mean"] = rel_mean;
        rel["std"] = rel_std;
    }
    return nlohmann::json{
        {"models", {{"stems", checkpoints}, {"relational", relational_tags}}},
        {"data_ll", {{"raw", data_raw}, {"mean", data_mean}, {"std", data_std}}},
        {"relational_ll", rel},
        {"provenance", provenance},
    };
}

MetricsReport evaluate_protocol(const std::vector<std::string>& ckpt_stems,
                                const std::string& dataset_path, const EvalOptions& eo) {
    if (ckpt_stems.empty()) throw ConfigError("evaluation needs at least one checkpoint");
    DatasetReader ds(dataset_path);
    MetricsReport rep;
    nlohmann::json model_ref, data_ref;
    MaskSet masks;
    for (size_t c = 0; c < ckpt_stems.size(); ++c) {
        const std::string& stem = ckpt_stems[c];
        nlohmann::json manifest = read_manifest(stem);
        RunConfig rc = RunConfig::from_json(manifest.at("config"));
        if (config_compat_hash(rc) != manifest.at("config_hash").get<uint64_t>())
            throw ConfigError("checkpoint/config mismatch for " + stem);
        nlohmann::json full = rc.to_json();
        if (c == 0) {
            model_ref = full.at("model");
            data_ref = full.at("data");
            masks = build_masks(ds, rc.data, capped_size(ds, eo));
        } else if (full.at("model") != model_ref || full.at("data") != data_ref) {
            throw ConfigError("checkpoints disagree on model or data config: " + stem);
        }
        ad::ParamStore ps;
        RsqairModel model(ps, rc.model, rc.seed);
        load_checkpoint(stem, ps, nullptr);
        PassOut po = eval_pass(model, ds, eo, &masks);
        rep.checkpoints.push_back(stem);
        rep.relational_tags.push_back(rc.model.relational);
        rep.data_raw.push_back(std::move(po.data_samples));
        std::vector<double> row;
        if (!po.rel_samples[0].no_collisions)
            for (const RelationalResult& r : po.rel_samples) row.push_back(r.value);
        rep.rel_raw.push_back(std::move(row));
    }
    rep.rel_included = masks.included_count;
    rep.rel_excluded = masks.excluded_count;
    rep.rel_no_collisions = masks.included_count == 0;
    rep.aggregate();
    rep.provenance = nlohmann::json{
        {"dataset", dataset_path},
        {"sequences", capped_size(ds, eo)},
        {"samples", eo.samples},
        {"seed", eo.seed},
        {"posterior_means", eo.posterior_means},
        {"model_config", model_ref},
        {"data_config", data_ref},
    };
    return rep;
}

MetricsReport generalization_eval(const std::vector<std::string>& ckpt_stems,
                                  const std::string& gen_dataset_path,
                                  const EvalOptions& eo) {
    MetricsReport rep = evaluate_protocol(ckpt_stems, gen_dataset_path, eo);
    rep.provenance["generalization"] = true;
    return rep;
}

namespace {

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

void write_bar_chart(const std::string& path, const std::vector<std::string>& labels,
                     const std::vector<double>& means, const std::vector<double>& stds,
                     const std::string& title, const std::string& y_label) {
    if (labels.empty() || labels.size() != means.size() || labels.size() != stds.size())
        throw ConfigError("bar chart needs matching non-empty labels, means and stds");
    double lo = means[0] - stds[0], hi = means[0] + stds[0];
    for (size_t i = 1; i < means.size(); ++i) {
        lo = std::min(lo, means[i] - stds[i]);
        hi = std::max(hi, means[i] + stds[i]);
    }
    if (lo == hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    double pad = 0.08 * (hi - lo);
    lo -= pad;
    hi += pad;

    const double width = 640, height = 420;
    const double ml = 80, mr = 24, mt = 52, mb = 64;
    const double pw = width - ml - mr, ph = height - mt - mb;
    auto ty = [&](double v) { return mt + (hi - v) / (hi - lo) * ph; };
    int n = static_cast<int>(labels.size());
    double slot = pw / n, bar = 0.6 * slot;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    s << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    s << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"16\">" << title << "</text>\n";
    s << "<text x=\"20\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"12\" transform=\"rotate(-90 20 " << mt + ph / 2 << ")\">" << y_label
      << "</text>\n";
    for (int k = 0; k <= 5; ++k) {
        double v = lo + (hi - lo) * k / 5.0;
        double y = ty(v);
        s << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << width - mr << "\" y2=\"" << y
          << "\" stroke=\"#dddddd\"/>\n";
        s << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_num(v)
          << "</text>\n";
    }
    for (int i = 0; i < n; ++i) {
        double cx = ml + slot * (i + 0.5);
        double x0 = cx - bar / 2;
        double ybase = mt + ph;  // bars anchor at the bottom of the padded range
        double yv = ty(means[i]);
        double top = std::min(ybase, yv), hgt = std::abs(ybase - yv);
        s << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << bar << "\" height=\"" << hgt
          << "\" fill=\"#4c78a8\"/>\n";
        if (stds[i] > 0.0) {
            double yl = ty(means[i] - stds[i]), yh = ty(means[i] + stds[i]);
            s << "<line x1=\"" << cx << "\" y1=\"" << yl << "\" x2=\"" << cx << "\" y2=\"" << yh
              << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
            s << "<line x1=\"" << cx - 6 << "\" y1=\"" << yl << "\" x2=\"" << cx + 6 << "\" y2=\""
              << yl << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
            s << "<line x1=\"" << cx - 6 << "\" y1=\"" << yh << "\" x2=\"" << cx + 6 << "\" y2=\""
              << yh << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
        }
        s << "<text x=\"" << cx << "\" y=\"" << height - mb + 20
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << labels[i]
          << "</text>\n";
        s << "<text x=\"" << cx << "\" y=\"" << height - mb + 38
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
          << fmt_num(means[i]) << "</text>\n";
    }
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << width - mr << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
    s << "</svg>\n";

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << s.str();
    if (!f) throw IoError("failed writing " + path);
}

void write_ppm(const std::string& path, const Tensor& img) {
    int hh, ww;
    bool color;
    if (img.shape().rank == 2) {
        hh = img.shape().d[0];
        ww = img.shape().d[1];
        color = false;
    } else if (img.shape().rank == 3 && img.shape().d[0] == 3) {
        hh = img.shape().d[1];
        ww = img.shape().d[2];
        color = true;
    } else {
        throw ShapeError("ppm writer expects (H, W) or (3, H, W)");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P6\n" << ww << " " << hh << "\n255\n";
    auto byte = [](double v) {
        double c = std::min(1.0, std::max(0.0, v));
        return static_cast<unsigned char>(std::lround(255.0 * c));
    };
    for (int i = 0; i < hh; ++i)
        for (int j = 0; j < ww; ++j) {
            unsigned char px[3];
            if (color) {
                const Tensor& t = img;
                px[0] = byte(t(0, i, j));
                px[1] = byte(t(1, i, j));
                px[2] = byte(t(2, i, j));
            } else {
                px[0] = px[1] = px[2] = byte(img(i, j));
            }
            f.write(reinterpret_cast<const char*>(px), 3);
        }
    if (!f) throw IoError("failed writing " + path);
}

BoxPixels window_box(const Tensor& z_where, int H, int W) {
    if (z_where.shape().rank != 1 || z_where.size() != 4)
        throw ShapeError("z_where must be a length-4 vector");
    double sx = z_where.data()[0], sy = z_where.data()[1];
    double tx = z_where.data()[2], ty = z_where.data()[3];
    BoxPixels b;
    b.c0 = clamp_pixel(std::lround(to_pixel(tx - sx, W)), W);
    b.c1 = clamp_pixel(std::lround(to_pixel(tx + sx, W)), W);
    b.r0 = clamp_pixel(std::lround(to_pixel(ty - sy, H)), H);
    b.r1 = clamp_pixel(std::lround(to_pixel(ty + sy, H)), H);
    return b;
}

namespace {

constexpr double kSlotColor[4][3] = {
    {1.0, 0.3, 0.3},
    {0.3, 1.0, 0.4},
    {0.4, 0.6, 1.0},
    {1.0, 0.85, 0.3},
};

// gray panel into the color strip at column x0, then slot outlines
void blit_panel(Tensor& strip, int x0, const Tensor& base,
                const std::vector<ObjectLatent>& objects) {
    int hh = base.shape().d[0], ww = base.shape().d[1];
    for (int i = 0; i < hh; ++i)
        for (int j = 0; j < ww; ++j) {
            double v = std::min(1.0, std::max(0.0, base(i, j)));
            for (int ch = 0; ch < 3; ++ch) strip(ch, i, x0 + j) = v;
        }
    for (const ObjectLatent& o : objects) {
        if (o.z_pres <= 0.5) continue;
        BoxPixels b = window_box(o.z_where, hh, ww);
        const double* col = kSlotColor[o.slot_id % 4];
        for (int j = b.c0; j <= b.c1; ++j)
            for (int ch = 0; ch < 3; ++ch) {
                strip(ch, b.r0, x0 + j) = col[ch];
                strip(ch, b.r1, x0 + j) = col[ch];
            }
        for (int i = b.r0; i <= b.r1; ++i)
            for (int ch = 0; ch < 3; ++ch) {
                strip(ch, i, x0 + b.c0) = col[ch];
                strip(ch, i, x0 + b.c1) = col[ch];
            }
    }
}

}  // namespace

Tensor rollout_strip(const RsqairModel& m, const FrameSequence& seq, int context,
                     int horizon, uint64_t noise_key) {
    if (context < 1 || context > seq.t_len())
        throw ConfigError("rollout context must cover 1..T observed frames");
    if (horizon < 0) throw ConfigError("rollout horizon must be non-negative");
    int hh = seq.height(), ww = seq.width();
    int panels = context + horizon;
    Tensor strip(Shape::chw(3, hh, panels * ww + (panels - 1)));
    for (int p = 1; p < panels; ++p) {
        int xs = p * (ww + 1) - 1;
        for (int i = 0; i < hh; ++i)
            for (int ch = 0; ch < 3; ++ch) strip(ch, i, xs) = 1.0;
    }

    ad::Tape t(&m.params(), false);
    RunOptions opt;
    opt.mode = SampleMode::hard;
    opt.noise_key = noise_key;
    FilterResult fr = m.filter_sequence(t, seq.truncated(context), opt);
    for (int p = 0; p < context; ++p)
        blit_panel(strip, p * (ww + 1), seq.frame(p), fr.states[p].objects);
    if (horizon > 0) {
        std::vector<RolloutStep> ro = m.rollout_prior(t, fr.states.back(), horizon, opt);
        for (int j = 0; j < horizon; ++j)
            blit_panel(strip, (context + j) * (ww + 1), ro[j].mean, ro[j].state.objects);
    }
    return strip;
}

}  // namespace rsqair
