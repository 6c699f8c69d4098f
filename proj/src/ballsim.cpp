#include "rsqair/ballsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numbers>

#include <json.hpp>
#include <zlib.h>

#include "rsqair/bytes.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/rng.hpp"

namespace rsqair {

namespace {

constexpr int kPlaceTries = 10000;  // per ball before giving up
constexpr int kEventCap = 100000;   // events per frame step before giving up
constexpr double kTimeEps = 1e-9;   // tolerance for already-touching events

double dist2(double ax, double ay, double bx, double by) {
    double dx = ax - bx, dy = ay - by;
    return dx * dx + dy * dy;
}

struct Event {
    double t = 0.0;
    int kind = 0;  // 0 none, 1 wall x, 2 wall y, 3 pair
    int i = -1, j = -1;
};

// earliest event within [0, horizon); ties keep the first one found
Event next_event(const std::vector<BallState>& b, double size, double horizon) {
    Event e;
    e.t = horizon;
    int n = static_cast<int>(b.size());
    for (int i = 0; i < n; ++i) {
        if (b[i].vx < 0.0) {
            double t = (b[i].x - b[i].r) / -b[i].vx;
            if (t >= -kTimeEps && t < e.t) e = {std::max(t, 0.0), 1, i, -1};
        } else if (b[i].vx > 0.0) {
            double t = (size - b[i].r - b[i].x) / b[i].vx;
            if (t >= -kTimeEps && t < e.t) e = {std::max(t, 0.0), 1, i, -1};
        }
        if (b[i].vy < 0.0) {
            double t = (b[i].y - b[i].r) / -b[i].vy;
            if (t >= -kTimeEps && t < e.t) e = {std::max(t, 0.0), 2, i, -1};
        } else if (b[i].vy > 0.0) {
            double t = (size - b[i].r - b[i].y) / b[i].vy;
            if (t >= -kTimeEps && t < e.t) e = {std::max(t, 0.0), 2, i, -1};
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double dx = b[i].x - b[j].x, dy = b[i].y - b[j].y;
            double dvx = b[i].vx - b[j].vx, dvy = b[i].vy - b[j].vy;
            double bb = dx * dvx + dy * dvy;
            if (bb >= 0.0) continue;  // not approaching
            double aa = dvx * dvx + dvy * dvy;
            double rr = b[i].r + b[j].r;
            double cc = dx * dx + dy * dy - rr * rr;
            double disc = bb * bb - aa * cc;
            if (disc <= 0.0) continue;
            double t = (-bb - std::sqrt(disc)) / aa;  // first contact
            if (t >= -kTimeEps && t < e.t) e = {std::max(t, 0.0), 3, i, j};
        }
    }
    return e;
}

void drift(std::vector<BallState>& b, double dt) {
    for (auto& s : b) {
        s.x += s.vx * dt;
        s.y += s.vy * dt;
    }
}

// equal masses: the velocity components along the contact normal swap, the
// tangential components are untouched
void resolve_pair(BallState& a, BallState& b) {
    double nx = a.x - b.x, ny = a.y - b.y;
    double len = std::sqrt(nx * nx + ny * ny);
    if (len <= 0.0) return;  // coincident centers, no defined normal
    nx /= len;
    ny /= len;
    double rel = (a.vx - b.vx) * nx + (a.vy - b.vy) * ny;
    a.vx -= rel * nx;
    a.vy -= rel * ny;
    b.vx += rel * nx;
    b.vy += rel * ny;
}

void advance(std::vector<BallState>& b, double size, double dt) {
    int guard = 0;
    while (dt > 0.0) {
        Event e = next_event(b, size, dt);
        drift(b, e.t);
        dt -= e.t;
        if (e.kind == 0) break;
        if (e.kind == 1) {
            b[e.i].vx = -b[e.i].vx;
        } else if (e.kind == 2) {
            b[e.i].vy = -b[e.i].vy;
        } else {
            resolve_pair(b[e.i], b[e.j]);
        }
        if (++guard > kEventCap) {
            throw NumericError("collision cascade exceeded " +
                               std::to_string(kEventCap) + " events in one frame step");
        }
    }
}

std::vector<uint8_t> annotate(const std::vector<BallState>& b, double eps) {
    int n = static_cast<int>(b.size());
    std::vector<uint8_t> flags(n, 0);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double rr = b[i].r + b[j].r + eps;
            if (dist2(b[i].x, b[i].y, b[j].x, b[j].y) <= rr * rr) {
                flags[i] = 1;
                flags[j] = 1;
            }
        }
    }
    return flags;
}

}  // namespace

void advance_balls(std::vector<BallState>& balls, double canvas, double dt) {
    advance(balls, canvas, dt);
}

SimResult simulate(int n_balls, int n_frames, uint64_t seed, const DataConfig& dc) {
    if (n_balls < 1) throw ConfigError("ball count must be positive");
    if (n_frames < 1) throw ConfigError("frame count must be positive");
    double size = static_cast<double>(dc.raw_size);
    double r = dc.radius;
    if (2.0 * r >= size) throw ConfigError("ball diameter exceeds canvas");

    // placement keeps balls separated by at least the contact margin so the
    // first frame carries no collision flags
    Rng init = Rng::derive(seed, "sim/init");
    std::vector<BallState> balls(n_balls);
    double min_gap = 2.0 * r + dc.contact_eps;
    for (int i = 0; i < n_balls; ++i) {
        bool placed = false;
        for (int tries = 0; tries < kPlaceTries && !placed; ++tries) {
            double x = init.uniform(r, size - r);
            double y = init.uniform(r, size - r);
            bool clear = true;
            for (int j = 0; j < i; ++j) {
                if (dist2(x, y, balls[j].x, balls[j].y) <= min_gap * min_gap) {
                    clear = false;
                    break;
                }
            }
            if (clear) {
                balls[i] = {x, y, 0.0, 0.0, r};
                placed = true;
            }
        }
        if (!placed) {
            throw ConfigError("could not place ball " + std::to_string(i) +
                              " after " + std::to_string(kPlaceTries) + " attempts");
        }
    }
    Rng vel = Rng::derive(seed, "sim/vel");
    for (auto& b : balls) {
        double speed = vel.uniform(dc.speed_min, dc.speed_max);
        double ang = vel.uniform(0.0, 2.0 * std::numbers::pi);
        b.vx = speed * std::cos(ang);
        b.vy = speed * std::sin(ang);
    }

    SimResult out;
    out.frames.reserve(n_frames);
    out.collisions.reserve(n_frames);
    out.frames.push_back(balls);
    out.collisions.push_back(annotate(balls, dc.contact_eps));
    for (int t = 1; t < n_frames; ++t) {
        advance(balls, size, 1.0);
        out.frames.push_back(balls);
        out.collisions.push_back(annotate(balls, dc.contact_eps));
    }
    return out;
}

Tensor render_frame(const std::vector<BallState>& balls, int size) {
    Tensor img(Shape::mat(size, size), 0.0);
    std::vector<double> cov;
    cov.reserve(balls.size());
    for (int i = 0; i < size; ++i) {
        double py = i + 0.5;
        for (int j = 0; j < size; ++j) {
            double px = j + 0.5;
            cov.clear();
            for (const auto& b : balls) {
                double d = std::sqrt(dist2(px, py, b.x, b.y));
                double c = b.r + 0.5 - d;
                if (c > 0.0) cov.push_back(std::min(c, 1.0));
            }
            if (cov.empty()) continue;
            // sorted accumulation keeps the sum independent of ball order
            std::sort(cov.begin(), cov.end());
            double v = 0.0;
            for (double c : cov) v += c;
            img(i, j) = std::min(v, 1.0);
        }
    }
    return img;
}

Tensor crop_center(const Tensor& frame, int out) {
    if (frame.shape().rank != 2 || frame.shape().d[0] != frame.shape().d[1]) {
        throw ShapeError("crop_center expects a square rank-2 frame");
    }
    int in = frame.shape().d[0];
    if (out < 1 || out > in || (in - out) % 2 != 0) {
        throw ShapeError("crop " + std::to_string(in) + " -> " +
                         std::to_string(out) + " has no centered window");
    }
    int off = (in - out) / 2;
    Tensor c(Shape::mat(out, out));
    for (int i = 0; i < out; ++i) {
        for (int j = 0; j < out; ++j) c(i, j) = frame(i + off, j + off);
    }
    return c;
}

FrameSequence make_sequence(const SimResult& sim, const DataConfig& dc, int crop) {
    int t_len = static_cast<int>(sim.frames.size());
    if (t_len == 0) throw ShapeError("empty simulation");
    int n_balls = static_cast<int>(sim.frames[0].size());
    FrameSequence seq;
    seq.frames = Tensor(Shape::chw(t_len, crop, crop));
    seq.collisions = sim.collisions;
    seq.ball_count = n_balls;
    seq.raw_size = dc.raw_size;
    seq.traj.resize(t_len);
    for (int t = 0; t < t_len; ++t) {
        Tensor full = render_frame(sim.frames[t], dc.raw_size);
        Tensor c = crop_center(full, crop);
        for (int i = 0; i < crop; ++i) {
            for (int j = 0; j < crop; ++j) seq.frames(t, i, j) = c(i, j);
        }
        seq.traj[t].resize(n_balls);
        for (int b = 0; b < n_balls; ++b) {
            const BallState& s = sim.frames[t][b];
            seq.traj[t][b] = {static_cast<float>(s.x), static_cast<float>(s.y),
                              static_cast<float>(s.vx), static_cast<float>(s.vy)};
        }
    }
    return seq;
}

namespace {

size_t sequence_bytes(const DatasetHeader& h) {
    size_t t = h.t_frames;
    return 1 + t * h.height * h.width + t * h.max_balls + t * h.max_balls * 4 * 4;
}

using bytes::pull_f32;
using bytes::pull_u32;
using bytes::push_f32;
using bytes::push_u32;

}  // namespace

DatasetWriter::DatasetWriter(const std::string& path, const DatasetHeader& h)
    : f_(path, std::ios::binary | std::ios::trunc), path_(path), h_(h) {
    if (!f_) throw IoError("cannot open " + path + " for writing");
    crc_ = static_cast<uint32_t>(crc32(0L, Z_NULL, 0));
    std::vector<uint8_t> head;
    head.insert(head.end(), {'R', 'S', 'Q', 'B'});
    push_u32(head, h_.version);
    push_u32(head, h_.seq_count);
    push_u32(head, h_.t_frames);
    push_u32(head, h_.height);
    push_u32(head, h_.width);
    push_u32(head, h_.max_balls);
    put(head.data(), head.size());
}

void DatasetWriter::put(const void* p, size_t n) {
    f_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!f_) throw IoError("write failed on " + path_);
    crc_ = static_cast<uint32_t>(
        crc32(crc_, static_cast<const Bytef*>(p), static_cast<uInt>(n)));
}

void DatasetWriter::add(const FrameSequence& seq) {
    if (done_) throw IoError("dataset " + path_ + " already finished");
    if (written_ >= h_.seq_count) {
        throw IoError("dataset " + path_ + " already holds the declared " +
                      std::to_string(h_.seq_count) + " sequences");
    }
    if (seq.t_len() != static_cast<int>(h_.t_frames) ||
        seq.height() != static_cast<int>(h_.height) ||
        seq.width() != static_cast<int>(h_.width)) {
        throw ShapeError("sequence does not match dataset header");
    }
    if (seq.ball_count < 1 || seq.ball_count > static_cast<int>(h_.max_balls)) {
        throw ShapeError("ball count " + std::to_string(seq.ball_count) +
                         " outside dataset capacity");
    }
    std::vector<uint8_t> buf;
    buf.reserve(sequence_bytes(h_));
    buf.push_back(static_cast<uint8_t>(seq.ball_count));
    int t_len = seq.t_len(), hh = seq.height(), ww = seq.width();
    for (int t = 0; t < t_len; ++t) {
        for (int i = 0; i < hh; ++i) {
            for (int j = 0; j < ww; ++j) {
                double v = std::clamp(seq.frames(t, i, j), 0.0, 1.0);
                buf.push_back(static_cast<uint8_t>(std::lround(255.0 * v)));
            }
        }
    }
    for (int t = 0; t < t_len; ++t) {
        for (int b = 0; b < static_cast<int>(h_.max_balls); ++b) {
            buf.push_back(b < seq.ball_count ? seq.collisions[t][b] : uint8_t{0});
        }
    }
    for (int t = 0; t < t_len; ++t) {
        for (int b = 0; b < static_cast<int>(h_.max_balls); ++b) {
            for (int c = 0; c < 4; ++c) {
                push_f32(buf, b < seq.ball_count ? seq.traj[t][b][c] : 0.0f);
            }
        }
    }
    put(buf.data(), buf.size());
    ++written_;
}

uint32_t DatasetWriter::finish() {
    if (done_) return crc_;
    if (written_ != h_.seq_count) {
        throw IoError("dataset " + path_ + " holds " + std::to_string(written_) +
                      " of " + std::to_string(h_.seq_count) + " declared sequences");
    }
    f_.close();
    if (!f_) throw IoError("close failed on " + path_);
    done_ = true;
    return crc_;
}

DatasetReader::DatasetReader(const std::string& path)
    : f_(path, std::ios::binary), path_(path) {
    if (!f_) throw IoError("cannot open " + path);
    uint8_t head[28];
    f_.read(reinterpret_cast<char*>(head), sizeof(head));
    if (!f_ || std::memcmp(head, "RSQB", 4) != 0) {
        throw IoError("" + path + " is not a dataset container");
    }
    h_.version = pull_u32(head + 4);
    if (h_.version != 1) {
        throw IoError("unsupported container version " + std::to_string(h_.version));
    }
    h_.seq_count = pull_u32(head + 8);
    h_.t_frames = pull_u32(head + 12);
    h_.height = pull_u32(head + 16);
    h_.width = pull_u32(head + 20);
    h_.max_balls = pull_u32(head + 24);
    data_start_ = static_cast<std::streamoff>(sizeof(head));
    seq_bytes_ = sequence_bytes(h_);
    f_.seekg(0, std::ios::end);
    auto end = static_cast<size_t>(f_.tellg());
    size_t want = static_cast<size_t>(data_start_) + seq_bytes_ * h_.seq_count;
    if (end != want) {
        throw IoError("" + path + " is " + std::to_string(end) + " bytes, expected " +
                      std::to_string(want));
    }
}

FrameSequence DatasetReader::sequence(int idx) {
    if (idx < 0 || idx >= size()) {
        throw IoError("sequence index " + std::to_string(idx) + " out of range");
    }
    std::vector<uint8_t> buf(seq_bytes_);
    f_.seekg(data_start_ + static_cast<std::streamoff>(seq_bytes_ * idx));
    f_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f_) throw IoError("short read in " + path_);

    const uint8_t* p = buf.data();
    int bc = *p++;
    if (bc < 1 || bc > static_cast<int>(h_.max_balls)) {
        throw IoError("corrupt ball count in " + path_);
    }
    int t_len = static_cast<int>(h_.t_frames);
    int hh = static_cast<int>(h_.height), ww = static_cast<int>(h_.width);
    FrameSequence seq;
    seq.frames = Tensor(Shape::chw(t_len, hh, ww));
    seq.ball_count = bc;
    for (int t = 0; t < t_len; ++t) {
        for (int i = 0; i < hh; ++i) {
            for (int j = 0; j < ww; ++j) seq.frames(t, i, j) = *p++ / 255.0;
        }
    }
    seq.collisions.assign(t_len, std::vector<uint8_t>(bc));
    for (int t = 0; t < t_len; ++t) {
        for (int b = 0; b < static_cast<int>(h_.max_balls); ++b) {
            uint8_t flag = *p++;
            if (b < bc) seq.collisions[t][b] = flag;
        }
    }
    seq.traj.assign(t_len, std::vector<std::array<float, 4>>(bc));
    for (int t = 0; t < t_len; ++t) {
        for (int b = 0; b < static_cast<int>(h_.max_balls); ++b) {
            for (int c = 0; c < 4; ++c) {
                float v = pull_f32(p);
                p += 4;
                if (b < bc) seq.traj[t][b][c] = v;
            }
        }
    }
    return seq;
}

uint64_t sequence_seed(uint64_t master, const std::string& split, int index) {
    return Rng::derive(master, "data/" + split, static_cast<uint64_t>(index)).key();
}

void generate_dataset(const RunConfig& rc, const std::string& out_dir, bool force) {
    namespace fs = std::filesystem;
    const DataConfig& dc = rc.data;
    struct Split {
        std::string name, file;
        int count, max_balls;
        bool generalization;
    };
    std::vector<Split> splits = {
        {"train", "train.rsqb", dc.train_seqs, dc.train_balls, false},
        {"val", "val.rsqb", dc.val_seqs, dc.train_balls, false},
        {"test", "test.rsqb", dc.test_seqs, dc.train_balls, false},
        {"gen_test", "gen_test.rsqb", dc.gen_seqs, dc.gen_balls_max, true},
    };
    fs::create_directories(out_dir);
    std::vector<fs::path> targets;
    for (const auto& s : splits) targets.push_back(fs::path(out_dir) / s.file);
    targets.push_back(fs::path(out_dir) / "manifest.json");
    if (!force) {
        for (const auto& t : targets) {
            if (fs::exists(t)) {
                throw IoError("" + t.string() + " exists; pass force to overwrite");
            }
        }
    }

    int crop = rc.model.crop;
    nlohmann::json manifest;
    manifest["format"] = "rsqb";
    manifest["format_version"] = 1;
    manifest["master_seed"] = rc.seed;
    manifest["seed_rule"] = "derive(master, \"data/\" + split, index)";
    manifest["config"] = rc.to_json();
    for (const auto& s : splits) {
        DatasetHeader h;
        h.seq_count = static_cast<uint32_t>(s.count);
        h.t_frames = static_cast<uint32_t>(dc.t_frames);
        h.height = static_cast<uint32_t>(crop);
        h.width = static_cast<uint32_t>(crop);
        h.max_balls = static_cast<uint32_t>(s.max_balls);
        std::string path = (fs::path(out_dir) / s.file).string();
        DatasetWriter w(path, h);
        for (int i = 0; i < s.count; ++i) {
            uint64_t seed = sequence_seed(rc.seed, s.name, i);
            int balls = dc.train_balls;
            if (s.generalization) {
                int span = dc.gen_balls_max - dc.gen_balls_min + 1;
                balls = dc.gen_balls_min + Rng::derive(seed, "balls").uniform_int(span);
            }
            w.add(make_sequence(simulate(balls, dc.t_frames, seed, dc), dc, crop));
        }
        uint32_t crc = w.finish();
        manifest["splits"][s.name] = {
            {"file", s.file},       {"sequences", s.count}, {"t_frames", dc.t_frames},
            {"height", crop},       {"width", crop},        {"max_balls", s.max_balls},
            {"crc32", crc},
        };
    }
    std::string mpath = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream mf(mpath, std::ios::trunc);
    if (!mf) throw IoError("cannot open " + mpath + " for writing");
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("write failed on " + mpath);
}

}  // namespace rsqair
