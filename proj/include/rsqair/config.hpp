#ifndef RSQAIR_CONFIG_HPP
#define RSQAIR_CONFIG_HPP

// Layered run configuration: compiled defaults, overridden by a JSON config
// file, overridden by command-line flags. Unknown keys are rejected so typos
// fail loudly. The merged config is persisted into every artifact manifest.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsqair/errors.hpp"
#include "rsqair/rng.hpp"

namespace rsqair {

struct ModelConfig {
    std::string relational = "in";  // none | identity | in | rmc
    int k_slots = 4;
    int d_what = 5;
    int glimpse = 20;
    int crop = 50;
    double sigma_x = 0.3;
    double geometric_theta = 0.75;
    int temporal_hidden = 64;
    int enc_feat = 96;
    int glimpse_feat = 64;
    int in_embed = 5;
    int in_hidden = 16;
    int rmc_heads = 4;
    int rmc_head_dim = 10;
    double scale_max = 1.2;
    double shift_max = 1.1;
    double std_floor = 1e-4;

    int m_dim() const { return rmc_heads * rmc_head_dim; }
    int latent_dim() const { return d_what + 4 + 1; }
};

struct DataConfig {
    int raw_size = 64;
    double radius = 6.0;
    double speed_min = 1.5;
    double speed_max = 3.0;
    double contact_eps = 0.5;
    int train_seqs = 10000;
    int val_seqs = 1000;
    int test_seqs = 1000;
    int gen_seqs = 1000;
    int t_frames = 10;
    int train_balls = 4;
    int gen_balls_min = 6;
    int gen_balls_max = 8;
};

struct TrainConfig {
    int particles = 5;
    int batch_size = 32;
    double lr = 1e-4;
    double clip_norm = 5.0;
    int curriculum_start = 3;
    int curriculum_every = 10000;
    int curriculum_max = 10;
    int patience = 10;
    double temp_start = 1.0;
    double temp_end = 0.3;
    int temp_anneal_iters = 20000;
    int max_iterations = -1;  // <0: until early stopping
    int checkpoint_every = 2000;
    int val_max_seqs = 200;  // cap per-epoch validation cost
    int val_particles = 5;
};

struct RunConfig {
    ModelConfig model;
    DataConfig data;
    TrainConfig train;
    uint64_t seed = 0;
    std::string out_dir;
    std::string data_dir;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);  // partial override of defaults
    uint64_t hash() const { return fnv1a64(to_json().dump()); }
};

}  // namespace rsqair

#endif
