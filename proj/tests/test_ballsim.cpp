#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>
#include <zlib.h>

#include "doctest.h"
#include "rsqair/ballsim.hpp"
#include "rsqair/config.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/rng.hpp"

using namespace rsqair;
namespace fs = std::filesystem;

namespace {

double kinetic_energy(const std::vector<BallState>& b) {
    double e = 0.0;
    for (const auto& s : b) e += 0.5 * (s.vx * s.vx + s.vy * s.vy);
    return e;
}

std::string fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("rsqair_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::vector<uint8_t> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                                std::istreambuf_iterator<char>());
}

DataConfig tiny_data() {
    DataConfig dc;
    dc.train_seqs = 3;
    dc.val_seqs = 2;
    dc.test_seqs = 2;
    dc.gen_seqs = 2;
    dc.t_frames = 4;
    dc.train_balls = 2;
    return dc;
}

}  // namespace

TEST_CASE("head-on equal-speed collision swaps velocities exactly") {
    std::vector<BallState> b = {{20.0, 32.0, 2.0, 0.0, 6.0}, {44.0, 32.0, -2.0, 0.0, 6.0}};
    advance_balls(b, 64.0, 4.0);
    // contact at t=3 (gap 12 closing at speed 4), then one unit of reversed drift
    CHECK(b[0].vx == -2.0);
    CHECK(b[0].vy == 0.0);
    CHECK(b[1].vx == 2.0);
    CHECK(b[1].vy == 0.0);
    CHECK(b[0].x == 24.0);
    CHECK(b[1].x == 40.0);
}

TEST_CASE("single ball keeps its speed across many wall bounces") {
    std::vector<BallState> b = {{13.0, 47.0, 2.7, -1.9, 6.0}};
    double speed0 = std::hypot(b[0].vx, b[0].vy);
    for (int t = 0; t < 200; ++t) {
        advance_balls(b, 64.0, 1.0);
        CHECK(std::abs(std::hypot(b[0].vx, b[0].vy) - speed0) <= 1e-9);
        CHECK(b[0].x >= b[0].r - 1e-9);
        CHECK(b[0].x <= 64.0 - b[0].r + 1e-9);
        CHECK(b[0].y >= b[0].r - 1e-9);
        CHECK(b[0].y <= 64.0 - b[0].r + 1e-9);
    }
}

TEST_CASE("kinetic energy is conserved through long multi-ball runs") {
    DataConfig dc;
    for (uint64_t seed : {11ull, 12ull, 13ull}) {
        SimResult sim = simulate(4, 200, seed, dc);
        double e0 = kinetic_energy(sim.frames[0]);
        for (const auto& frame : sim.frames) {
            CHECK(std::abs(kinetic_energy(frame) - e0) <= 1e-9);
            for (const auto& s : frame) {
                CHECK(s.x >= s.r - 1e-9);
                CHECK(s.x <= 64.0 - s.r + 1e-9);
                CHECK(s.y >= s.r - 1e-9);
                CHECK(s.y <= 64.0 - s.r + 1e-9);
            }
        }
    }
}

TEST_CASE("ball-ball collisions conserve total momentum") {
    // off-axis approach in mid-canvas, no wall contact within the window
    std::vector<BallState> b = {{24.0, 30.0, 2.0, 0.5, 6.0}, {40.0, 34.0, -2.0, -0.25, 6.0}};
    double px = b[0].vx + b[1].vx, py = b[0].vy + b[1].vy;
    double e0 = kinetic_energy(b);
    advance_balls(b, 64.0, 3.0);
    CHECK(std::abs(b[0].vx - 2.0) > 1e-6);  // the collision actually happened
    CHECK(std::abs(b[0].vx + b[1].vx - px) <= 1e-12);
    CHECK(std::abs(b[0].vy + b[1].vy - py) <= 1e-12);
    CHECK(std::abs(kinetic_energy(b) - e0) <= 1e-12);
}

TEST_CASE("collision flags match a brute-force distance check") {
    DataConfig dc;
    int flagged = 0;
    for (uint64_t seed : {21ull, 22ull, 23ull, 24ull}) {
        SimResult sim = simulate(5, 60, seed, dc);
        for (size_t t = 0; t < sim.frames.size(); ++t) {
            const auto& fr = sim.frames[t];
            int n = static_cast<int>(fr.size());
            for (int i = 0; i < n; ++i) {
                bool hit = false;
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    double d = std::hypot(fr[i].x - fr[j].x, fr[i].y - fr[j].y);
                    if (d <= fr[i].r + fr[j].r + dc.contact_eps) hit = true;
                }
                CHECK(sim.collisions[t][i] == (hit ? 1 : 0));
                flagged += sim.collisions[t][i];
            }
        }
    }
    CHECK(flagged > 0);  // the runs actually exercised contacts
    // symmetric placement margin keeps the first frame clean
    SimResult sim = simulate(6, 1, 31, dc);
    for (uint8_t f : sim.collisions[0]) CHECK(f == 0);
}

TEST_CASE("rendered disc mass approximates the true area") {
    std::vector<BallState> b = {{32.0, 32.0, 0.0, 0.0, 6.0}};
    Tensor img = render_frame(b, 64);
    double mass = 0.0, area = std::numbers::pi * 36.0;
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) {
            CHECK(img(i, j) >= 0.0);
            CHECK(img(i, j) <= 1.0);
            mass += img(i, j);
        }
    }
    CHECK(std::abs(mass - area) / area <= 0.05);
}

TEST_CASE("rendering is independent of ball order") {
    std::vector<BallState> b = {{20.0, 20.0, 0, 0, 6.0},
                                {26.0, 24.0, 0, 0, 6.0},
                                {44.0, 40.0, 0, 0, 6.0},
                                {30.0, 21.0, 0, 0, 6.0}};
    Tensor a = render_frame(b, 64);
    std::vector<BallState> rev(b.rbegin(), b.rend());
    std::rotate(rev.begin(), rev.begin() + 1, rev.end());
    Tensor c = render_frame(rev, 64);
    for (int i = 0; i < 64; ++i) {
        for (int j = 0; j < 64; ++j) CHECK(a(i, j) == c(i, j));
    }
}

TEST_CASE("central crop takes rows and columns 7 through 56") {
    Tensor frame(Shape::mat(64, 64), 0.0);
    frame(7, 7) = 1.0;
    frame(56, 56) = 2.0;
    frame(31, 31) = 3.0;
    frame(6, 6) = 9.0;   // outside the window
    frame(57, 57) = 9.0;
    Tensor c = crop_center(frame, 50);
    CHECK(c.shape().d[0] == 50);
    CHECK(c(0, 0) == 1.0);
    CHECK(c(49, 49) == 2.0);
    CHECK(c(24, 24) == 3.0);
    double total = 0.0;
    for (int i = 0; i < 50; ++i) {
        for (int j = 0; j < 50; ++j) total += c(i, j);
    }
    CHECK(total == 6.0);
    CHECK_THROWS_AS(crop_center(frame, 51), ShapeError);  // odd margin
}

TEST_CASE("container round-trips sequences bit-exactly") {
    DataConfig dc = tiny_data();
    std::string dir = fresh_dir("roundtrip");
    std::string path = dir + "/ds.rsqb";
    std::vector<FrameSequence> orig;
    for (int s = 0; s < 3; ++s) {
        orig.push_back(make_sequence(simulate(2 + s % 2, dc.t_frames, 100 + s, dc), dc, 50));
    }
    DatasetHeader h;
    h.seq_count = 3;
    h.t_frames = dc.t_frames;
    h.height = 50;
    h.width = 50;
    h.max_balls = 3;
    DatasetWriter w(path, h);
    for (const auto& s : orig) w.add(s);
    uint32_t crc = w.finish();
    CHECK(crc != 0);

    DatasetReader r(path);
    CHECK(r.size() == 3);
    CHECK(r.header().max_balls == 3);
    for (int s = 0; s < 3; ++s) {
        FrameSequence got = r.sequence(s);
        CHECK(got.ball_count == orig[s].ball_count);
        for (int t = 0; t < dc.t_frames; ++t) {
            for (int i = 0; i < 50; ++i) {
                for (int j = 0; j < 50; ++j) {
                    double q = std::lround(255.0 * orig[s].frames(t, i, j)) / 255.0;
                    CHECK(got.frames(t, i, j) == q);
                }
            }
            CHECK(got.collisions[t] == orig[s].collisions[t]);
            for (int b = 0; b < got.ball_count; ++b) {
                for (int c = 0; c < 4; ++c) CHECK(got.traj[t][b][c] == orig[s].traj[t][b][c]);
            }
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("writer enforces the declared sequence count") {
    DataConfig dc = tiny_data();
    std::string dir = fresh_dir("count");
    DatasetHeader h;
    h.seq_count = 2;
    h.t_frames = dc.t_frames;
    h.height = 50;
    h.width = 50;
    h.max_balls = 2;
    FrameSequence seq = make_sequence(simulate(2, dc.t_frames, 7, dc), dc, 50);
    {
        DatasetWriter w(dir + "/a.rsqb", h);
        w.add(seq);
        CHECK_THROWS_AS(w.finish(), IoError);  // one short
    }
    {
        DatasetWriter w(dir + "/b.rsqb", h);
        w.add(seq);
        w.add(seq);
        CHECK_THROWS_AS(w.add(seq), IoError);  // one over
        w.finish();
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset generation is byte-identical across reruns") {
    RunConfig rc;
    rc.data = tiny_data();
    rc.seed = 99;
    std::string d1 = fresh_dir("gen1"), d2 = fresh_dir("gen2");
    generate_dataset(rc, d1, false);
    generate_dataset(rc, d2, false);
    for (const char* f :
         {"train.rsqb", "val.rsqb", "test.rsqb", "gen_test.rsqb", "manifest.json"}) {
        CHECK(slurp(d1 + "/" + f) == slurp(d2 + "/" + f));
    }

    // refuses to clobber, then overwrites when forced
    CHECK_THROWS_AS(generate_dataset(rc, d1, false), IoError);
    generate_dataset(rc, d1, true);
    CHECK(slurp(d1 + "/train.rsqb") == slurp(d2 + "/train.rsqb"));

    // manifest checksums match the bytes on disk
    nlohmann::json man;
    std::ifstream(d1 + "/manifest.json") >> man;
    for (const char* split : {"train", "val", "test", "gen_test"}) {
        std::string file = man["splits"][split]["file"].get<std::string>();
        auto bytes = slurp(d1 + "/" + file);
        uLong crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
        CHECK(man["splits"][split]["crc32"].get<uint32_t>() == static_cast<uint32_t>(crc));
        CHECK(man["splits"][split]["sequences"].get<int>() ==
              static_cast<int>(DatasetReader(d1 + "/" + file).header().seq_count));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("generalization split draws six to eight balls") {
    RunConfig rc;
    rc.data = tiny_data();
    rc.data.gen_seqs = 6;
    rc.seed = 5;
    std::string dir = fresh_dir("genballs");
    generate_dataset(rc, dir, false);
    DatasetReader train(dir + "/train.rsqb");
    for (int i = 0; i < train.size(); ++i) CHECK(train.sequence(i).ball_count == 2);
    DatasetReader gen(dir + "/gen_test.rsqb");
    for (int i = 0; i < gen.size(); ++i) {
        int bc = gen.sequence(i).ball_count;
        CHECK(bc >= rc.data.gen_balls_min);
        CHECK(bc <= rc.data.gen_balls_max);
    }
    fs::remove_all(dir);
}

TEST_CASE("sequence seeds are stable and split-distinct") {
    CHECK(sequence_seed(1, "train", 0) == sequence_seed(1, "train", 0));
    CHECK(sequence_seed(1, "train", 0) != sequence_seed(1, "train", 1));
    CHECK(sequence_seed(1, "train", 0) != sequence_seed(1, "val", 0));
    CHECK(sequence_seed(1, "train", 0) != sequence_seed(2, "train", 0));
}

TEST_CASE("infeasible placement fails with a config error") {
    DataConfig dc;
    dc.raw_size = 20;  // room for one ball of radius 6, not nine
    CHECK_THROWS_AS(simulate(9, 2, 3, dc), ConfigError);
}
