#ifndef RSQAIR_TRAINING_HPP
#define RSQAIR_TRAINING_HPP

// Training loop: multi-particle importance-weighted bound, sequence-length
// curriculum, presence-relaxation temperature annealing, per-epoch
// validation with early stopping, and bit-compatible checkpoint resume.
//
// Checkpoint layout: a weights blob "<stem>.rsqc" (little-endian: magic
// "RSQC", version u32, flags u32 bit0 = optimizer state present, param count
// u32; per param: name u32+bytes, rank u32, dims u32 each, values f64; then
// optimizer step count i64 and per-param first/second moments f64; crc32 of
// everything before it as the final u32) plus a JSON manifest "<stem>.json".

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsqair/autodiff.hpp"
#include "rsqair/config.hpp"
#include "rsqair/model.hpp"
#include "rsqair/nn.hpp"
#include "rsqair/scene.hpp"

namespace rsqair {

// log((1/n) sum exp(w_i)), max-shifted; exact for n = 1
double log_mean_exp(const std::vector<double>& w);

// on-tape bound for one sequence: log-mean-exp over the particles' total
// sequence log-weights; throws with a per-frame component breakdown when a
// weight is non-finite
ad::Var iwae_bound_var(ad::Tape& t, const std::vector<FilterResult>& particles);

// off-tape convenience: mean bound over a batch, fresh particles per call
double iwae_bound(RsqairModel& model, const std::vector<FrameSequence>& batch,
                  int particles, const RunOptions& opt);

// configuration identity used for checkpoint compatibility checks;
// max_iterations and the output/data paths are excluded so a finished run
// can be extended with a larger stop point or resumed into a new directory
uint64_t config_compat_hash(const RunConfig& rc);

// min(start + iteration/every, max); defaults give min(3 + it/10000, 10)
int curriculum_length(int64_t iteration, const TrainConfig& tc);

// linear anneal from temp_start to temp_end over temp_anneal_iters
double relaxation_temperature(int64_t iteration, const TrainConfig& tc);

struct EarlyStopping {
    int patience = 10;
    double best = -std::numeric_limits<double>::infinity();
    int since_improvement = 0;

    // feeds one validation score; true exactly when the score has not
    // improved for `patience` consecutive epochs
    bool update(double score) {
        if (score > best) {
            best = score;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
        return since_improvement >= patience;
    }
};

void save_checkpoint(const std::string& stem, const ad::ParamStore& ps, const nn::Adam* opt,
                     const nlohmann::json& manifest);
// loads weights (and optimizer state when `opt` is given and the blob holds
// it) into an already-constructed model's store; returns the manifest
nlohmann::json load_checkpoint(const std::string& stem, ad::ParamStore& ps, nn::Adam* opt);

// crc32 of the weights blob on disk, for read-only integrity checks
uint32_t checkpoint_crc(const std::string& stem);

struct TrainResult {
    int64_t iterations = 0;
    int epochs = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    bool early_stopped = false;
    std::string final_checkpoint;  // stem of the last checkpoint written
};

// data_dir must hold train.rsqb and val.rsqb; artifacts go to out_dir:
// ckpt_latest / ckpt_best / ckpt_final blobs plus metrics.jsonl with one
// record per validation epoch; resume_stem restarts bit-compatibly from a
// saved checkpoint
TrainResult train(const RunConfig& rc, const std::string& data_dir,
                  const std::string& out_dir, const std::string& resume_stem = "");

}  // namespace rsqair

#endif
