#ifndef RSQAIR_METRICS_HPP
#define RSQAIR_METRICS_HPP

// Evaluation protocol over trained checkpoints. Both likelihood metrics
// score the observed final frame of each sequence under the Gaussian
// observation model centered on a one-step sample from the propagation
// prior (the first T-1 frames are filtered in hard mode to obtain the
// conditioning state). The data metric sums the log-density over every
// pixel; the relational metric restricts the sum to pixels inside
// ground-truth colliding balls' discs (dilated by contact_eps) at the
// final frame and excludes sequences whose mask is empty, either because
// no ball is flagged as colliding or because the colliding discs fall
// entirely outside the crop. Values are per-final-frame nats.
//
// Sampling noise is keyed by (seed, sample index, sequence index) only,
// never by the model, so different checkpoints are compared on paired
// noise. Evaluation never mutates checkpoints; aggregates are pure
// functions of the persisted raw values.

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rsqair/ballsim.hpp"
#include "rsqair/config.hpp"
#include "rsqair/model.hpp"
#include "rsqair/tensor.hpp"

namespace rsqair {

struct EvalOptions {
    int samples = 5;             // prior samples per (model, sequence)
    uint64_t seed = 0;           // root of the evaluation noise streams
    bool posterior_means = false;  // score the filtered reconstruction of the
                                   // final frame instead of a prior sample
    int max_seqs = 0;            // cap on sequences scored; 0 = all
};

struct RelationalResult {
    double value = 0.0;  // mean masked log-density over included sequences
    int included = 0;
    int excluded = 0;
    bool no_collisions = false;  // no sequence had a visible final-frame collision
};

// binary (H, W) mask over the cropped frame: 1 where the pixel center lies
// inside some colliding ball's disc of radius dc.radius + dc.contact_eps at
// frame t; all zeros when nothing collides
Tensor collision_mask(const FrameSequence& seq, int t, const DataConfig& dc);

// mean and sample standard deviation (n - 1 denominator, 0 below two values)
std::pair<double, double> mean_std(const std::vector<double>& v);

// per-sample dataset means, length eo.samples; sample s scores sequence i
// with noise derive(eo.seed, "eval/sample", s, i)
std::vector<double> data_loglik_samples(const RsqairModel& m, DatasetReader& ds,
                                        const EvalOptions& eo);
std::vector<RelationalResult> relational_loglik_samples(const RsqairModel& m,
                                                        DatasetReader& ds,
                                                        const DataConfig& dc,
                                                        const EvalOptions& eo);

// pooled means over samples of the per-sample dataset means
double data_loglik(const RsqairModel& m, DatasetReader& ds, const EvalOptions& eo);
RelationalResult relational_loglik(const RsqairModel& m, DatasetReader& ds,
                                   const DataConfig& dc, const EvalOptions& eo);

struct MetricsReport {
    std::vector<std::string> checkpoints;       // stems in evaluation order
    std::vector<std::string> relational_tags;   // per-checkpoint module variant
    std::vector<std::vector<double>> data_raw;  // [model][sample]
    std::vector<std::vector<double>> rel_raw;   // [model][sample], empty rows when no collisions
    double data_mean = 0.0, data_std = 0.0;
    double rel_mean = 0.0, rel_std = 0.0;
    int rel_included = 0, rel_excluded = 0;
    bool rel_no_collisions = false;
    nlohmann::json provenance;

    // aggregates recomputed from the raw matrices, row-major flattening
    void aggregate();
    nlohmann::json to_json() const;
};

// loads each checkpoint stem into a fresh model (manifest config is the
// authority; its stored hash must match) and scores the dataset; all stems
// must share identical model and data configs, the 5-seed ensemble contract
MetricsReport evaluate_protocol(const std::vector<std::string>& ckpt_stems,
                                const std::string& dataset_path, const EvalOptions& eo);

// same protocol on the 6-8-ball split with model hyperparameters unchanged
MetricsReport generalization_eval(const std::vector<std::string>& ckpt_stems,
                                  const std::string& gen_dataset_path,
                                  const EvalOptions& eo);

// static SVG bar chart with one bar per label and +/- one-std error bars
void write_bar_chart(const std::string& path, const std::vector<std::string>& labels,
                     const std::vector<double>& means, const std::vector<double>& stds,
                     const std::string& title, const std::string& y_label);

// binary P6 image; accepts (H, W) grayscale or (3, H, W) color in [0,1]
void write_ppm(const std::string& path, const Tensor& img);

// pixel-aligned outline of the attention window z_where on an H x W canvas,
// using the glimpse sampler's half-pixel-center coordinate convention
struct BoxPixels {
    int r0 = 0, r1 = 0, c0 = 0, c1 = 0;  // inclusive bounds, clamped to the canvas
};
BoxPixels window_box(const Tensor& z_where, int H, int W);

// qualitative strip: `context` observed frames overlaid with the filtered
// posterior's slot windows, then `horizon` mean frames rolled out from the
// propagation prior with their sampled windows; panels separated by a white
// column; returns a (3, H, width) image
Tensor rollout_strip(const RsqairModel& m, const FrameSequence& seq, int context,
                     int horizon, uint64_t noise_key);

}  // namespace rsqair

#endif
