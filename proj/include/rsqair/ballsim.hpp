#ifndef RSQAIR_BALLSIM_HPP
#define RSQAIR_BALLSIM_HPP

// Bouncing-balls data: event-driven elastic physics on a square canvas,
// anti-aliased rasterization, central cropping, and a seekable bit-exact
// dataset container with per-frame collision ground truth.
//
// Container layout (little-endian): magic "RSQB", version u32, sequence
// count u32, T u32, H u32, W u32, max ball count u32; per sequence: ball
// count u8, frames T*H*W u8 (round(255*pixel)), collision flags
// T*max_ball_count u8, trajectories T*max_ball_count*4 f32 (x, y, vx, vy in
// raw-canvas coordinates, absent rows zero).

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rsqair/config.hpp"
#include "rsqair/scene.hpp"
#include "rsqair/tensor.hpp"

namespace rsqair {

struct BallState {
    double x = 0.0, y = 0.0;    // center, pixels, raw-canvas frame
    double vx = 0.0, vy = 0.0;  // pixels per frame
    double r = 0.0;
};

struct SimResult {
    std::vector<std::vector<BallState>> frames;    // T x B states at frame instants
    std::vector<std::vector<uint8_t>> collisions;  // T x B contact flags
};

// constant-speed linear motion, elastic equal-mass ball-ball collisions
// (normal velocity components exchanged), specular wall reflection; a ball
// is flagged colliding when within contact_eps of another ball's surface
SimResult simulate(int n_balls, int n_frames, uint64_t seed, const DataConfig& dc);

// one integration step of the same event-ordered dynamics simulate uses;
// exposed so crafted configurations can be driven directly
void advance_balls(std::vector<BallState>& balls, double canvas, double dt);

// anti-aliased white discs on black, coverage ramp clamp(r + 0.5 - d, 0, 1)
// per ball, per-pixel contributions summed in sorted order (ball-order
// independent) and clamped at 1
Tensor render_frame(const std::vector<BallState>& balls, int size);

// central out x out window; for 64 -> 50 this is rows/cols 7..56 inclusive
Tensor crop_center(const Tensor& frame, int out);

// rendered + cropped frames with annotations and trajectories attached
FrameSequence make_sequence(const SimResult& sim, const DataConfig& dc, int crop);

struct DatasetHeader {
    uint32_t version = 1;
    uint32_t seq_count = 0, t_frames = 0, height = 0, width = 0, max_balls = 0;
};

class DatasetWriter {
public:
    DatasetWriter(const std::string& path, const DatasetHeader& h);
    void add(const FrameSequence& seq);
    // verifies the declared count was written; returns the whole-file crc32
    uint32_t finish();

private:
    void put(const void* p, size_t n);
    std::ofstream f_;
    std::string path_;
    DatasetHeader h_;
    uint32_t written_ = 0;
    uint32_t crc_ = 0;
    bool done_ = false;
};

class DatasetReader {
public:
    explicit DatasetReader(const std::string& path);
    const DatasetHeader& header() const { return h_; }
    int size() const { return static_cast<int>(h_.seq_count); }
    FrameSequence sequence(int idx);

private:
    std::ifstream f_;
    std::string path_;
    DatasetHeader h_;
    std::streamoff data_start_ = 0;
    size_t seq_bytes_ = 0;
};

// writes train/val/test/gen_test containers plus a JSON manifest
// (config, seeds, per-split checksums); refuses to overwrite unless forced
void generate_dataset(const RunConfig& rc, const std::string& out_dir, bool force);

// derivation rule for a sequence's simulation seed within a named split
uint64_t sequence_seed(uint64_t master, const std::string& split, int index);

}  // namespace rsqair

#endif
