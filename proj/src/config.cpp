#include "rsqair/config.hpp"

namespace rsqair {

using nlohmann::json;

namespace {

// reads known keys from j into fields, rejecting anything unrecognized
class Section {
public:
    Section(const json& j, const std::string& name) : j_(j), name_(name) {
        if (!j.is_object()) throw ConfigError("config section '" + name + "' must be an object");
    }
    ~Section() = default;

    template <typename T>
    void field(const char* key, T& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            bool known = false;
            for (const char* k : seen_)
                if (it.key() == k) known = true;
            if (!known)
                throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::vector<const char*> seen_;
};

void read_model(const json& j, ModelConfig& m) {
    Section s(j, "model");
    s.field("relational", m.relational);
    s.field("k_slots", m.k_slots);
    s.field("d_what", m.d_what);
    s.field("glimpse", m.glimpse);
    s.field("crop", m.crop);
    s.field("sigma_x", m.sigma_x);
    s.field("geometric_theta", m.geometric_theta);
    s.field("temporal_hidden", m.temporal_hidden);
    s.field("enc_feat", m.enc_feat);
    s.field("glimpse_feat", m.glimpse_feat);
    s.field("in_embed", m.in_embed);
    s.field("in_hidden", m.in_hidden);
    s.field("rmc_heads", m.rmc_heads);
    s.field("rmc_head_dim", m.rmc_head_dim);
    s.field("scale_max", m.scale_max);
    s.field("shift_max", m.shift_max);
    s.field("std_floor", m.std_floor);
    s.finish();
}

void read_data(const json& j, DataConfig& d) {
    Section s(j, "data");
    s.field("raw_size", d.raw_size);
    s.field("radius", d.radius);
    s.field("speed_min", d.speed_min);
    s.field("speed_max", d.speed_max);
    s.field("contact_eps", d.contact_eps);
    s.field("train_seqs", d.train_seqs);
    s.field("val_seqs", d.val_seqs);
    s.field("test_seqs", d.test_seqs);
    s.field("gen_seqs", d.gen_seqs);
    s.field("t_frames", d.t_frames);
    s.field("train_balls", d.train_balls);
    s.field("gen_balls_min", d.gen_balls_min);
    s.field("gen_balls_max", d.gen_balls_max);
    s.finish();
}

void read_train(const json& j, TrainConfig& t) {
    Section s(j, "train");
    s.field("particles", t.particles);
    s.field("batch_size", t.batch_size);
    s.field("lr", t.lr);
    s.field("clip_norm", t.clip_norm);
    s.field("curriculum_start", t.curriculum_start);
    s.field("curriculum_every", t.curriculum_every);
    s.field("curriculum_max", t.curriculum_max);
    s.field("patience", t.patience);
    s.field("temp_start", t.temp_start);
    s.field("temp_end", t.temp_end);
    s.field("temp_anneal_iters", t.temp_anneal_iters);
    s.field("max_iterations", t.max_iterations);
    s.field("checkpoint_every", t.checkpoint_every);
    s.field("val_max_seqs", t.val_max_seqs);
    s.field("val_particles", t.val_particles);
    s.finish();
}

}  // namespace

void RunConfig::validate() const {
    if (model.relational != "none" && model.relational != "identity" &&
        model.relational != "in" && model.relational != "rmc")
        throw ConfigError("model.relational must be none, identity, in or rmc");
    if (model.k_slots < 1) throw ConfigError("model.k_slots must be >= 1");
    if (model.d_what < 1) throw ConfigError("model.d_what must be >= 1");
    if (model.sigma_x <= 0) throw ConfigError("model.sigma_x must be positive");
    if (model.geometric_theta <= 0 || model.geometric_theta > 1)
        throw ConfigError("model.geometric_theta must be in (0,1]");
    if (model.crop > data.raw_size) throw ConfigError("model.crop exceeds data.raw_size");
    if (model.std_floor <= 0) throw ConfigError("model.std_floor must be positive");
    if (data.t_frames < 1) throw ConfigError("data.t_frames must be >= 1");
    if (data.train_balls < 1) throw ConfigError("data.train_balls must be >= 1");
    if (data.speed_min > data.speed_max) throw ConfigError("data.speed_min > data.speed_max");
    if (data.gen_balls_min > data.gen_balls_max)
        throw ConfigError("data.gen_balls_min > data.gen_balls_max");
    if (data.radius <= 0) throw ConfigError("data.radius must be positive");
    if (train.particles < 1) throw ConfigError("train.particles must be >= 1");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (train.curriculum_start < 1) throw ConfigError("train.curriculum_start must be >= 1");
    if (train.curriculum_every < 1) throw ConfigError("train.curriculum_every must be >= 1");
    if (train.patience < 1) throw ConfigError("train.patience must be >= 1");
    if (train.temp_end <= 0) throw ConfigError("train.temp_end must be positive");
}

json RunConfig::to_json() const {
    json j;
    j["model"] = {{"relational", model.relational},
                  {"k_slots", model.k_slots},
                  {"d_what", model.d_what},
                  {"glimpse", model.glimpse},
                  {"crop", model.crop},
                  {"sigma_x", model.sigma_x},
                  {"geometric_theta", model.geometric_theta},
                  {"temporal_hidden", model.temporal_hidden},
                  {"enc_feat", model.enc_feat},
                  {"glimpse_feat", model.glimpse_feat},
                  {"in_embed", model.in_embed},
                  {"in_hidden", model.in_hidden},
                  {"rmc_heads", model.rmc_heads},
                  {"rmc_head_dim", model.rmc_head_dim},
                  {"scale_max", model.scale_max},
                  {"shift_max", model.shift_max},
                  {"std_floor", model.std_floor}};
    j["data"] = {{"raw_size", data.raw_size},
                 {"radius", data.radius},
                 {"speed_min", data.speed_min},
                 {"speed_max", data.speed_max},
                 {"contact_eps", data.contact_eps},
                 {"train_seqs", data.train_seqs},
                 {"val_seqs", data.val_seqs},
                 {"test_seqs", data.test_seqs},
                 {"gen_seqs", data.gen_seqs},
                 {"t_frames", data.t_frames},
                 {"train_balls", data.train_balls},
                 {"gen_balls_min", data.gen_balls_min},
                 {"gen_balls_max", data.gen_balls_max}};
    j["train"] = {{"particles", train.particles},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"clip_norm", train.clip_norm},
                  {"curriculum_start", train.curriculum_start},
                  {"curriculum_every", train.curriculum_every},
                  {"curriculum_max", train.curriculum_max},
                  {"patience", train.patience},
                  {"temp_start", train.temp_start},
                  {"temp_end", train.temp_end},
                  {"temp_anneal_iters", train.temp_anneal_iters},
                  {"max_iterations", train.max_iterations},
                  {"checkpoint_every", train.checkpoint_every},
                  {"val_max_seqs", train.val_max_seqs},
                  {"val_particles", train.val_particles}};
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["data_dir"] = data_dir;
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    RunConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k == "model")
            read_model(it.value(), c.model);
        else if (k == "data")
            read_data(it.value(), c.data);
        else if (k == "train")
            read_train(it.value(), c.train);
        else if (k == "seed")
            c.seed = it.value().get<uint64_t>();
        else if (k == "out_dir")
            c.out_dir = it.value().get<std::string>();
        else if (k == "data_dir")
            c.data_dir = it.value().get<std::string>();
        else
            throw ConfigError("unknown config key '" + k + "'");
    }
    return c;
}

}  // namespace rsqair
