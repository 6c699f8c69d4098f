#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "rsqair/ballsim.hpp"
#include "rsqair/config.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/model.hpp"
#include "rsqair/rng.hpp"
#include "rsqair/training.hpp"
#include "test_util.hpp"

using namespace rsqair;
using test::fill_uniform;
using test::gradcheck_sampled;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(const std::string& rel) {
    ModelConfig mc;
    mc.relational = rel;
    mc.k_slots = 2;
    mc.d_what = 3;
    mc.glimpse = 6;
    mc.crop = 16;
    mc.temporal_hidden = 8;
    mc.enc_feat = 12;
    mc.glimpse_feat = 8;
    mc.in_embed = 3;
    mc.in_hidden = 5;
    mc.rmc_heads = 2;
    mc.rmc_head_dim = 4;
    return mc;
}

FrameSequence rand_seq(int t_len, int hw, uint64_t seed) {
    FrameSequence s;
    s.frames = Tensor(Shape::chw(t_len, hw, hw));
    Rng g = Rng::derive(seed, "seq");
    fill_uniform(s.frames, g, 0.0, 1.0);
    s.ball_count = 0;
    s.raw_size = hw;
    return s;
}

std::string fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("rsqair_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// tiny dataset + config sized so one epoch is three optimizer steps
RunConfig smoke_config(uint64_t seed) {
    RunConfig rc;
    rc.model = tiny_model("in");
    rc.data.train_seqs = 12;
    rc.data.val_seqs = 4;
    rc.data.test_seqs = 2;
    rc.data.gen_seqs = 2;
    rc.data.t_frames = 4;
    rc.data.train_balls = 2;
    rc.train.batch_size = 4;
    rc.train.particles = 2;
    rc.train.val_particles = 2;
    rc.train.val_max_seqs = 4;
    rc.train.checkpoint_every = 100;
    rc.train.curriculum_start = 3;
    rc.train.curriculum_every = 4;
    rc.train.curriculum_max = 4;
    rc.train.temp_anneal_iters = 8;
    rc.seed = seed;
    return rc;
}

std::vector<Tensor> snapshot(const ad::ParamStore& ps) {
    std::vector<Tensor> out;
    for (int r = 0; r < ps.count(); ++r) out.push_back(ps.at(r).value);
    return out;
}

// loads a final checkpoint's weights into a fresh store built from rc
std::vector<Tensor> checkpoint_weights(const RunConfig& rc, const std::string& stem) {
    ad::ParamStore ps;
    RsqairModel model(ps, rc.model, rc.seed);
    load_checkpoint(stem, ps, nullptr);
    return snapshot(ps);
}

}  // namespace

TEST_CASE("log-mean-exp is exact for degenerate inputs") {
    CHECK(log_mean_exp({-3.25}) == -3.25);
    CHECK(log_mean_exp({2.5, 2.5, 2.5}) == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(std::isfinite(log_mean_exp({1e4, -1e4, 0.0})));
    CHECK(log_mean_exp({1e4, -1e4}) == doctest::Approx(1e4 - std::log(2.0)));
    CHECK(log_mean_exp({-1e4, -1e4 + 1.0}) ==
          doctest::Approx(-1e4 + std::log((1.0 + std::numbers::e) / 2.0)));
    CHECK_THROWS_AS(log_mean_exp({}), NumericError);
}

TEST_CASE("log-mean-exp is invariant under input permutation") {
    Rng g = Rng::derive(77, "lme perm");
    std::vector<double> w(7);
    for (double& x : w) x = g.uniform(-30.0, 30.0);
    double ref = log_mean_exp(w);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p = w;
        for (int i = static_cast<int>(p.size()) - 1; i > 0; --i) {
            std::swap(p[i], p[g.uniform_int(i + 1)]);
        }
        CHECK(log_mean_exp(p) == ref);
    }
}

TEST_CASE("single-particle bound equals the plain evidence bound on shared samples") {
    ad::ParamStore ps;
    RsqairModel model(ps, tiny_model("in"), 41);
    FrameSequence seq = rand_seq(3, 16, 42);
    RunOptions opt;
    opt.mode = SampleMode::hard;
    opt.noise_key = 4242;

    double bound = iwae_bound(model, {seq}, 1, opt);

    RunOptions inner = opt;
    inner.noise_key = Rng::derive(opt.noise_key, "iwae/seq", 0).key();
    ad::Tape t(&ps, false);
    auto parts = model.filter_particles(t, seq, inner, 1);
    CHECK(bound == parts[0].total.val());
}

TEST_CASE("bound gradient matches finite differences through log-mean-exp") {
    ad::ParamStore ps;
    RsqairModel model(ps, tiny_model("in"), 43);
    FrameSequence seq = rand_seq(2, 16, 44);
    RunOptions opt;
    opt.mode = SampleMode::relaxed;
    opt.temperature = 0.8;
    opt.noise_key = 999;
    double worst = gradcheck_sampled(
        ps,
        [&](ad::Tape& t) {
            return iwae_bound_var(t, model.filter_particles(t, seq, opt, 3));
        },
        60, 1234);
    CHECK(worst < 1e-3);
}

TEST_CASE("non-finite weights abort with a per-frame breakdown") {
    ad::ParamStore ps;
    RsqairModel model(ps, tiny_model("none"), 45);
    ps.at(0).value[0] = std::numeric_limits<double>::quiet_NaN();
    FrameSequence seq = rand_seq(2, 16, 46);
    RunOptions opt;
    opt.mode = SampleMode::hard;
    CHECK_THROWS_WITH_AS(iwae_bound(model, {seq}, 2, opt),
                         doctest::Contains("log_px"), NumericError);
}

TEST_CASE("curriculum length follows its closed form") {
    TrainConfig tc;  // defaults: start 3, every 10000, max 10
    CHECK(curriculum_length(0, tc) == 3);
    CHECK(curriculum_length(9999, tc) == 3);
    CHECK(curriculum_length(10000, tc) == 4);
    CHECK(curriculum_length(69999, tc) == 9);
    CHECK(curriculum_length(70000, tc) == 10);
    CHECK(curriculum_length(1000000, tc) == 10);
    CHECK_THROWS_AS(curriculum_length(-1, tc), ConfigError);
    tc.curriculum_start = 2;
    tc.curriculum_every = 5;
    tc.curriculum_max = 4;
    CHECK(curriculum_length(0, tc) == 2);
    CHECK(curriculum_length(5, tc) == 3);
    CHECK(curriculum_length(10, tc) == 4);
    CHECK(curriculum_length(500, tc) == 4);
}

TEST_CASE("relaxation temperature anneals linearly then holds") {
    TrainConfig tc;  // 1.0 -> 0.3 over 20000
    CHECK(relaxation_temperature(0, tc) == 1.0);
    CHECK(relaxation_temperature(10000, tc) == doctest::Approx(0.65));
    CHECK(relaxation_temperature(20000, tc) == doctest::Approx(0.3));
    CHECK(relaxation_temperature(500000, tc) == doctest::Approx(0.3));
}

TEST_CASE("early stopping fires after exactly ten flat epochs") {
    EarlyStopping stop;
    CHECK_FALSE(stop.update(-5.0));  // first score is an improvement over -inf
    for (int e = 1; e <= 9; ++e) CHECK_FALSE(stop.update(-5.0));
    CHECK(stop.update(-5.0));  // tenth non-improving epoch

    EarlyStopping s2;
    CHECK_FALSE(s2.update(1.0));
    for (int e = 0; e < 9; ++e) CHECK_FALSE(s2.update(0.5));
    CHECK_FALSE(s2.update(2.0));  // improvement resets the counter
    CHECK(s2.since_improvement == 0);
    for (int e = 0; e < 9; ++e) CHECK_FALSE(s2.update(2.0));
    CHECK(s2.update(2.0));
}

TEST_CASE("checkpoints round-trip weights and optimizer state bit-exactly") {
    ModelConfig mc = tiny_model("rmc");
    ad::ParamStore ps;
    RsqairModel model(ps, mc, 51);
    nn::Adam adam(ps, 1e-3);

    // move weights and optimizer state off their initial values
    FrameSequence seq = rand_seq(2, 16, 52);
    RunOptions opt;
    opt.mode = SampleMode::relaxed;
    opt.temperature = 0.7;
    for (int step = 0; step < 2; ++step) {
        ps.zero_grads();
        ad::Tape t(&ps);
        opt.noise_key = 1000 + step;
        ad::Var bound = iwae_bound_var(t, model.filter_particles(t, seq, opt, 2));
        t.backward(ad::mul_const(bound, -1.0));
        t.fold_param_grads();
        adam.step();
    }

    std::string dir = fresh_dir("ckpt");
    std::string stem = dir + "/ckpt_test";
    nlohmann::json manifest = {{"iteration", 2}, {"note", "round trip"}};
    save_checkpoint(stem, ps, &adam, manifest);
    CHECK(checkpoint_crc(stem) == checkpoint_crc(stem));

    ad::ParamStore ps2;
    RsqairModel model2(ps2, mc, 777);  // different init seed, fully overwritten
    nn::Adam adam2(ps2, 1e-3);
    nlohmann::json back = load_checkpoint(stem, ps2, &adam2);
    CHECK(back.at("iteration") == 2);
    CHECK(adam2.steps() == adam.steps());
    REQUIRE(ps2.count() == ps.count());
    for (int r = 0; r < ps.count(); ++r) {
        for (int i = 0; i < ps.at(r).value.size(); ++i) {
            CHECK(ps2.at(r).value[i] == ps.at(r).value[i]);
            CHECK(adam2.slots()[r].m[i] == adam.slots()[r].m[i]);
            CHECK(adam2.slots()[r].v[i] == adam.slots()[r].v[i]);
        }
    }

    // corrupting any byte is detected
    std::string wpath = stem + ".rsqc";
    std::fstream f(wpath, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    char byte;
    f.seekg(100);
    f.get(byte);
    byte = static_cast<char>(byte ^ 0x40);
    f.seekp(100);
    f.put(byte);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(stem, ps2, nullptr), IoError);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints from a different configuration are rejected") {
    std::string dir = fresh_dir("ckptcfg");
    ModelConfig mc = tiny_model("in");
    ad::ParamStore ps;
    RsqairModel model(ps, mc, 61);
    save_checkpoint(dir + "/c", ps, nullptr, nlohmann::json::object());

    ad::ParamStore ps2;
    RsqairModel model2(ps2, tiny_model("rmc"), 61);
    CHECK_THROWS_AS(load_checkpoint(dir + "/c", ps2, nullptr), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("training runs, logs one record per epoch, and checkpoints") {
    RunConfig rc = smoke_config(71);
    rc.train.max_iterations = 7;  // two full epochs of three steps, then one more
    std::string data_dir = fresh_dir("traindata");
    std::string out_dir = fresh_dir("trainout");
    generate_dataset(rc, data_dir, false);

    TrainResult res = train(rc, data_dir, out_dir);
    CHECK(res.iterations == 7);
    CHECK(res.epochs == 2);
    CHECK_FALSE(res.early_stopped);
    CHECK(std::isfinite(res.best_val));
    CHECK(fs::exists(out_dir + "/ckpt_final.rsqc"));
    CHECK(fs::exists(out_dir + "/ckpt_best.rsqc"));
    CHECK(fs::exists(out_dir + "/ckpt_latest.rsqc"));

    std::ifstream mf(out_dir + "/metrics.jsonl");
    std::vector<nlohmann::json> recs;
    std::string line;
    while (std::getline(mf, line)) recs.push_back(nlohmann::json::parse(line));
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].at("epoch") == 0);
    CHECK(recs[0].at("iteration") == 3);
    CHECK(recs[1].at("epoch") == 1);
    CHECK(recs[1].at("iteration") == 6);
    for (const auto& r : recs) {
        CHECK(r.at("train_bound").is_number());
        CHECK(r.at("val_bound").is_number());
        CHECK(r.at("curriculum_length").is_number_integer());
    }

    nlohmann::json man;
    std::ifstream(out_dir + "/ckpt_final.json") >> man;
    CHECK(man.at("iteration") == 7);
    CHECK(man.at("config_hash").get<uint64_t>() == config_compat_hash(rc));
    CHECK(man.at("relational") == "in");
    fs::remove_all(data_dir);
    fs::remove_all(out_dir);
}

TEST_CASE("resume reproduces an uninterrupted run bit-identically") {
    RunConfig rc = smoke_config(81);
    std::string data_dir = fresh_dir("resumedata");
    generate_dataset(rc, data_dir, false);

    // uninterrupted reference: five optimizer steps
    RunConfig rc_full = rc;
    rc_full.train.max_iterations = 5;
    std::string full_dir = fresh_dir("resumefull");
    train(rc_full, data_dir, full_dir);
    auto want = checkpoint_weights(rc, full_dir + "/ckpt_final");

    // interrupted mid-epoch at two steps, then resumed
    RunConfig rc_half = rc;
    rc_half.train.max_iterations = 2;
    std::string half_dir = fresh_dir("resumehalf");
    train(rc_half, data_dir, half_dir);
    TrainResult cont = train(rc_full, data_dir, half_dir, half_dir + "/ckpt_final");
    CHECK(cont.iterations == 5);
    auto got = checkpoint_weights(rc, half_dir + "/ckpt_final");
    REQUIRE(got.size() == want.size());
    for (size_t r = 0; r < want.size(); ++r) {
        for (int i = 0; i < want[r].size(); ++i) CHECK(got[r][i] == want[r][i]);
    }

    // interrupted exactly on an epoch boundary: the pending validation runs
    // on resume, so the epoch-0 record appears in the resumed metrics log
    RunConfig rc_edge = rc;
    rc_edge.train.max_iterations = 3;
    std::string edge_dir = fresh_dir("resumeedge");
    train(rc_edge, data_dir, edge_dir);
    {
        std::ifstream mf(edge_dir + "/metrics.jsonl");
        std::string line;
        int n = 0;
        while (std::getline(mf, line)) ++n;
        CHECK(n == 0);  // stopped before scoring the epoch
    }
    train(rc_full, data_dir, edge_dir, edge_dir + "/ckpt_final");
    auto got2 = checkpoint_weights(rc, edge_dir + "/ckpt_final");
    for (size_t r = 0; r < want.size(); ++r) {
        for (int i = 0; i < want[r].size(); ++i) CHECK(got2[r][i] == want[r][i]);
    }
    {
        std::ifstream mf(edge_dir + "/metrics.jsonl");
        std::string line;
        std::vector<nlohmann::json> recs;
        while (std::getline(mf, line)) recs.push_back(nlohmann::json::parse(line));
        REQUIRE(recs.size() == 1);
        CHECK(recs[0].at("epoch") == 0);
        // the score matches the uninterrupted run's epoch-0 validation
        std::ifstream ff(full_dir + "/metrics.jsonl");
        std::getline(ff, line);
        CHECK(recs[0].at("val_bound") == nlohmann::json::parse(line).at("val_bound"));
    }

    // resuming under a different configuration is refused
    RunConfig rc_other = rc_full;
    rc_other.model.relational = "rmc";
    CHECK_THROWS_AS(train(rc_other, data_dir, edge_dir, edge_dir + "/ckpt_final"),
                    ConfigError);

    fs::remove_all(data_dir);
    fs::remove_all(full_dir);
    fs::remove_all(half_dir);
    fs::remove_all(edge_dir);
}

TEST_CASE("early stopping ends training on a plateau") {
    RunConfig rc = smoke_config(91);
    rc.train.patience = 2;
    rc.train.lr = 0.0;  // frozen weights: every validation repeats the first score
    rc.train.max_iterations = -1;
    std::string data_dir = fresh_dir("plateaudata");
    std::string out_dir = fresh_dir("plateauout");
    generate_dataset(rc, data_dir, false);
    TrainResult res = train(rc, data_dir, out_dir);
    CHECK(res.early_stopped);
    // epoch 0 improves over -inf, then exactly `patience` flat epochs follow
    CHECK(res.epochs == 3);
    fs::remove_all(data_dir);
    fs::remove_all(out_dir);
}
