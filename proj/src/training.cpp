#include "rsqair/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <zlib.h>

#include "rsqair/ballsim.hpp"
#include "rsqair/bytes.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/rng.hpp"

namespace rsqair {

namespace fs = std::filesystem;

double log_mean_exp(const std::vector<double>& w) {
    if (w.empty()) throw NumericError("log_mean_exp over an empty set");
    double m = *std::max_element(w.begin(), w.end());
    if (!std::isfinite(m)) return m;  // all -inf, or a poisoned input
    // sorted accumulation makes the result exactly input-order independent
    std::vector<double> e;
    e.reserve(w.size());
    for (double x : w) e.push_back(std::exp(x - m));
    std::sort(e.begin(), e.end());
    double s = 0.0;
    for (double x : e) s += x;
    return m + std::log(s / static_cast<double>(w.size()));
}

namespace {

std::string weight_breakdown(const std::vector<FilterResult>& particles, size_t bad) {
    std::ostringstream os;
    os << "non-finite sequence log-weight in particle " << bad << " of " << particles.size();
    const FilterResult& r = particles[bad];
    for (size_t f = 0; f < r.frames.size(); ++f) {
        os << "; frame " << f << ": log_px=" << r.frames[f].log_px.val()
           << " log_p=" << r.frames[f].log_p.val() << " log_q=" << r.frames[f].log_q.val();
    }
    return os.str();
}

}  // namespace

ad::Var iwae_bound_var(ad::Tape& t, const std::vector<FilterResult>& particles) {
    (void)t;  // results already live on the callers' tape
    if (particles.empty()) throw NumericError("bound over zero particles");
    std::vector<ad::Var> ws;
    ws.reserve(particles.size());
    for (size_t p = 0; p < particles.size(); ++p) {
        ad::Var wp = particles[p].total;
        if (!std::isfinite(wp.val())) throw NumericError(weight_breakdown(particles, p));
        ws.push_back(wp);
    }
    double shift = -std::log(static_cast<double>(particles.size()));
    return ad::add_const(ad::logsumexp(ad::stack_scalars(ws)), shift);
}

double iwae_bound(RsqairModel& model, const std::vector<FrameSequence>& batch,
                  int particles, const RunOptions& opt) {
    if (batch.empty()) throw ConfigError("empty batch");
    if (particles < 1) throw ConfigError("particle count must be positive");
    double acc = 0.0;
    for (size_t s = 0; s < batch.size(); ++s) {
        ad::Tape t(&model.params(), false);
        RunOptions o = opt;
        o.noise_key = Rng::derive(opt.noise_key, "iwae/seq", s).key();
        acc += iwae_bound_var(t, model.filter_particles(t, batch[s], o, particles)).val();
    }
    return acc / static_cast<double>(batch.size());
}

uint64_t config_compat_hash(const RunConfig& rc) {
    RunConfig c = rc;
    c.train.max_iterations = -1;  // a stop knob, not part of the run's identity
    c.out_dir.clear();            // paths steer where artifacts land, not what
    c.data_dir.clear();           // the model computes
    return c.hash();
}

int curriculum_length(int64_t iteration, const TrainConfig& tc) {
    if (iteration < 0) throw ConfigError("negative iteration");
    if (tc.curriculum_every < 1) throw ConfigError("curriculum period must be positive");
    int64_t len = tc.curriculum_start + iteration / tc.curriculum_every;
    return static_cast<int>(std::min<int64_t>(len, tc.curriculum_max));
}

double relaxation_temperature(int64_t iteration, const TrainConfig& tc) {
    if (tc.temp_anneal_iters <= 0) return tc.temp_end;
    double a = std::min(1.0, static_cast<double>(iteration) /
                                 static_cast<double>(tc.temp_anneal_iters));
    return tc.temp_start + (tc.temp_end - tc.temp_start) * a;
}

namespace {

constexpr uint32_t kCkptVersion = 1;

void push_tensor(std::vector<uint8_t>& buf, const Tensor& t) {
    for (int i = 0; i < t.size(); ++i) bytes::push_f64(buf, t[i]);
}

struct BlobCursor {
    const uint8_t* p;
    const uint8_t* end;
    std::string path;

    void need(size_t n) const {
        if (static_cast<size_t>(end - p) < n) {
            throw IoError("checkpoint " + path + " is truncated");
        }
    }
    uint32_t u32() {
        need(4);
        uint32_t v = bytes::pull_u32(p);
        p += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = bytes::pull_u64(p);
        p += 8;
        return v;
    }
    double f64() {
        need(8);
        double v = bytes::pull_f64(p);
        p += 8;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& stem, const ad::ParamStore& ps, const nn::Adam* opt,
                     const nlohmann::json& manifest) {
    std::vector<uint8_t> blob;
    blob.insert(blob.end(), {'R', 'S', 'Q', 'C'});
    bytes::push_u32(blob, kCkptVersion);
    bytes::push_u32(blob, opt ? 1u : 0u);
    bytes::push_u32(blob, static_cast<uint32_t>(ps.count()));
    for (int r = 0; r < ps.count(); ++r) {
        const auto& e = ps.at(r);
        bytes::push_u32(blob, static_cast<uint32_t>(e.name.size()));
        blob.insert(blob.end(), e.name.begin(), e.name.end());
        bytes::push_u32(blob, static_cast<uint32_t>(e.value.shape().rank));
        for (int d = 0; d < e.value.shape().rank; ++d) {
            bytes::push_u32(blob, static_cast<uint32_t>(e.value.shape().d[d]));
        }
        push_tensor(blob, e.value);
    }
    if (opt) {
        bytes::push_u64(blob, static_cast<uint64_t>(opt->steps()));
        for (int r = 0; r < ps.count(); ++r) {
            push_tensor(blob, opt->slots()[r].m);
            push_tensor(blob, opt->slots()[r].v);
        }
    }
    uint32_t crc = static_cast<uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), blob.data(), static_cast<uInt>(blob.size())));
    bytes::push_u32(blob, crc);

    std::string wpath = stem + ".rsqc";
    std::ofstream wf(wpath, std::ios::binary | std::ios::trunc);
    if (!wf) throw IoError("cannot open " + wpath + " for writing");
    wf.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size()));
    wf.close();
    if (!wf) throw IoError("write failed on " + wpath);

    std::string mpath = stem + ".json";
    std::ofstream mf(mpath, std::ios::trunc);
    if (!mf) throw IoError("cannot open " + mpath + " for writing");
    mf << manifest.dump(2) << '\n';
    mf.close();
    if (!mf) throw IoError("write failed on " + mpath);
}

nlohmann::json load_checkpoint(const std::string& stem, ad::ParamStore& ps, nn::Adam* opt) {
    std::string wpath = stem + ".rsqc";
    std::ifstream wf(wpath, std::ios::binary);
    if (!wf) throw IoError("cannot open " + wpath);
    std::vector<uint8_t> blob((std::istreambuf_iterator<char>(wf)),
                              std::istreambuf_iterator<char>());
    if (blob.size() < 20 || std::memcmp(blob.data(), "RSQC", 4) != 0) {
        throw IoError("" + wpath + " is not a checkpoint blob");
    }
    uint32_t stored = bytes::pull_u32(blob.data() + blob.size() - 4);
    uint32_t crc = static_cast<uint32_t>(crc32(crc32(0L, Z_NULL, 0), blob.data(),
                                               static_cast<uInt>(blob.size() - 4)));
    if (stored != crc) throw IoError("checksum mismatch in " + wpath);

    BlobCursor c{blob.data() + 4, blob.data() + blob.size() - 4, wpath};
    uint32_t version = c.u32();
    if (version != kCkptVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t flags = c.u32();
    uint32_t count = c.u32();
    if (static_cast<int>(count) != ps.count()) {
        throw ConfigError("checkpoint holds " + std::to_string(count) +
                          " parameters, model has " + std::to_string(ps.count()));
    }
    for (int r = 0; r < ps.count(); ++r) {
        auto& e = ps.at(r);
        std::string name = c.str(c.u32());
        if (name != e.name) {
            throw ConfigError("checkpoint parameter '" + name +
                              "' does not match model parameter '" + e.name + "'");
        }
        uint32_t rank = c.u32();
        Shape s = e.value.shape();
        bool match = static_cast<int>(rank) == s.rank;
        for (uint32_t d = 0; match && d < rank; ++d) {
            match = static_cast<int>(c.u32()) == s.d[d];
        }
        if (!match) throw ConfigError("shape mismatch for parameter '" + name + "'");
        for (int i = 0; i < e.value.size(); ++i) e.value[i] = c.f64();
    }
    if (opt) {
        if (!(flags & 1u)) {
            throw IoError("" + wpath + " carries no optimizer state to resume from");
        }
        opt->set_steps(static_cast<int64_t>(c.u64()));
        for (int r = 0; r < ps.count(); ++r) {
            auto& slot = opt->slots()[r];
            for (int i = 0; i < slot.m.size(); ++i) slot.m[i] = c.f64();
            for (int i = 0; i < slot.v.size(); ++i) slot.v[i] = c.f64();
        }
    }

    std::string mpath = stem + ".json";
    std::ifstream mf(mpath);
    if (!mf) throw IoError("cannot open " + mpath);
    nlohmann::json manifest;
    mf >> manifest;
    return manifest;
}

uint32_t checkpoint_crc(const std::string& stem) {
    std::ifstream wf(stem + ".rsqc", std::ios::binary);
    if (!wf) throw IoError("cannot open " + stem + ".rsqc");
    std::vector<uint8_t> blob((std::istreambuf_iterator<char>(wf)),
                              std::istreambuf_iterator<char>());
    return static_cast<uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), blob.data(), static_cast<uInt>(blob.size())));
}

namespace {

// validation bound: hard presence sampling, full sequence length, noise keys
// fixed across epochs so score movement reflects weight movement only
double validation_bound(RsqairModel& model, DatasetReader& ds, const RunConfig& rc) {
    int n = std::min(ds.size(), rc.train.val_max_seqs);
    if (n < 1) throw ConfigError("empty validation split");
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        FrameSequence seq = ds.sequence(i);
        ad::Tape t(&model.params(), false);
        RunOptions o;
        o.mode = SampleMode::hard;
        o.noise_key = Rng::derive(rc.seed, "val/noise", static_cast<uint64_t>(i)).key();
        auto parts = model.filter_particles(t, seq, o, rc.train.val_particles);
        std::vector<double> w;
        w.reserve(parts.size());
        for (const auto& r : parts) w.push_back(r.total.val());
        acc += log_mean_exp(w);
    }
    return acc / static_cast<double>(n);
}

nlohmann::json ckpt_manifest(const RunConfig& rc, int64_t it, int64_t steps_per_epoch,
                             const EarlyStopping& stop, bool boundary_validated) {
    nlohmann::json m;
    m["version"] = kCkptVersion;
    m["config_hash"] = config_compat_hash(rc);
    m["config"] = rc.to_json();
    m["iteration"] = it;
    m["epoch"] = it / steps_per_epoch;
    m["curriculum_length"] = curriculum_length(it, rc.train);
    m["temperature"] = relaxation_temperature(it, rc.train);
    if (std::isfinite(stop.best)) {
        m["best_val"] = stop.best;
    } else {
        m["best_val"] = nullptr;
    }
    m["epochs_since_improvement"] = stop.since_improvement;
    m["master_seed"] = rc.seed;
    m["relational"] = rc.model.relational;
    m["epoch_boundary_validated"] = boundary_validated;
    return m;
}

}  // namespace

TrainResult train(const RunConfig& rc, const std::string& data_dir,
                  const std::string& out_dir, const std::string& resume_stem) {
    const TrainConfig& tc = rc.train;
    if (tc.batch_size < 1) throw ConfigError("batch size must be positive");
    if (tc.particles < 1) throw ConfigError("particle count must be positive");
    if (tc.patience < 1) throw ConfigError("patience must be positive");

    DatasetReader train_ds(data_dir + "/train.rsqb");
    DatasetReader val_ds(data_dir + "/val.rsqb");
    if (train_ds.size() < 1) throw ConfigError("empty training split");
    if (static_cast<int>(train_ds.header().height) != rc.model.crop ||
        static_cast<int>(train_ds.header().width) != rc.model.crop) {
        throw ShapeError("dataset frames are " + std::to_string(train_ds.header().height) +
                         "x" + std::to_string(train_ds.header().width) + ", model expects " +
                         std::to_string(rc.model.crop) + "x" + std::to_string(rc.model.crop));
    }
    fs::create_directories(out_dir);

    ad::ParamStore ps;
    RsqairModel model(ps, rc.model, rc.seed);
    nn::Adam adam(ps, tc.lr);

    int64_t steps_per_epoch =
        (train_ds.size() + tc.batch_size - 1) / static_cast<int64_t>(tc.batch_size);
    int64_t it = 0;
    EarlyStopping stop;
    stop.patience = tc.patience;
    bool need_boundary_val = false;

    if (!resume_stem.empty()) {
        nlohmann::json man = load_checkpoint(resume_stem, ps, &adam);
        if (man.at("config_hash").get<uint64_t>() != config_compat_hash(rc)) {
            throw ConfigError("checkpoint was produced by a different configuration");
        }
        it = man.at("iteration").get<int64_t>();
        if (!man.at("best_val").is_null()) stop.best = man.at("best_val").get<double>();
        stop.since_improvement = man.at("epochs_since_improvement").get<int>();
        need_boundary_val = it > 0 && it % steps_per_epoch == 0 &&
                            !man.value("epoch_boundary_validated", false);
    }

    std::string metrics_path = out_dir + "/metrics.jsonl";
    std::ofstream metrics(metrics_path, resume_stem.empty() ? std::ios::trunc : std::ios::app);
    if (!metrics) throw IoError("cannot open " + metrics_path + " for writing");

    TrainResult res;
    std::string latest = out_dir + "/ckpt_latest";
    bool done = tc.max_iterations >= 0 && it >= tc.max_iterations;
    // true while the weights at the current iteration have been scored by the
    // validation pass for the epoch ending here; cleared by every step
    bool boundary_validated = false;

    auto run_validation = [&](double train_mean, int64_t batches) {
        int64_t ep = it / steps_per_epoch - 1;  // the pass that just finished
        double val = validation_bound(model, val_ds, rc);
        bool improved = val > stop.best;
        bool halt = stop.update(val);
        boundary_validated = true;
        nlohmann::json rec;
        rec["epoch"] = ep;
        rec["iteration"] = it;
        rec["curriculum_length"] = curriculum_length(it, tc);
        rec["temperature"] = relaxation_temperature(it, tc);
        if (batches > 0) {
            rec["train_bound"] = train_mean;
        } else {
            rec["train_bound"] = nullptr;
        }
        rec["val_bound"] = val;
        rec["best_val"] = stop.best;
        rec["epochs_since_improvement"] = stop.since_improvement;
        metrics << rec.dump() << '\n';
        metrics.flush();
        if (improved) {
            save_checkpoint(out_dir + "/ckpt_best", ps, &adam,
                            ckpt_manifest(rc, it, steps_per_epoch, stop, true));
        }
        save_checkpoint(latest, ps, &adam, ckpt_manifest(rc, it, steps_per_epoch, stop, true));
        return halt;
    };

    if (need_boundary_val && !done) {
        // the interrupted run stopped exactly on an epoch boundary before
        // scoring it; weights are unchanged since then, so score it now
        done = run_validation(0.0, 0);
        res.early_stopped = done;
    }

    while (!done) {
        int64_t epoch = it / steps_per_epoch;
        std::vector<int> perm(train_ds.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng shuffle = Rng::derive(rc.seed, "train/shuffle", static_cast<uint64_t>(epoch));
        for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i) {
            std::swap(perm[i], perm[shuffle.uniform_int(i + 1)]);
        }

        double epoch_sum = 0.0;
        int64_t epoch_batches = 0;
        for (int64_t pos = it % steps_per_epoch; pos < steps_per_epoch && !done; ++pos) {
            int lo = static_cast<int>(pos) * tc.batch_size;
            int hi = std::min(lo + tc.batch_size, train_ds.size());
            int len = curriculum_length(it, tc);
            std::vector<FrameSequence> batch;
            batch.reserve(hi - lo);
            for (int i = lo; i < hi; ++i) {
                FrameSequence seq = train_ds.sequence(perm[i]);
                batch.push_back(seq.truncated(std::min(len, seq.t_len())));
            }

            ps.zero_grads();
            double batch_bound = 0.0;
            for (size_t b = 0; b < batch.size(); ++b) {
                ad::Tape t(&ps);
                RunOptions o;
                o.mode = SampleMode::relaxed;
                o.temperature = relaxation_temperature(it, tc);
                o.noise_key = Rng::derive(rc.seed, "train/noise", static_cast<uint64_t>(it),
                                          static_cast<uint64_t>(b))
                                  .key();
                try {
                    auto parts = model.filter_particles(t, batch[b], o, tc.particles);
                    ad::Var bound = iwae_bound_var(t, parts);
                    batch_bound += bound.val();
                    t.backward(ad::mul_const(bound, -1.0 / static_cast<double>(batch.size())));
                    t.fold_param_grads();
                } catch (const InvalidWindowError& e) {
                    // a collapsed window mid-run means the weights degenerated
                    throw NumericError("attention window collapsed at iteration " +
                                       std::to_string(it) + ": " + e.what());
                }
            }
            batch_bound /= static_cast<double>(batch.size());
            double gnorm = ps.grad_norm();
            if (!std::isfinite(gnorm)) {
                throw NumericError("non-finite gradient norm at iteration " +
                                   std::to_string(it) + " (batch bound " +
                                   std::to_string(batch_bound) + ")");
            }
            nn::clip_grad_norm(ps, tc.clip_norm);
            adam.step();
            ++it;
            boundary_validated = false;
            epoch_sum += batch_bound;
            ++epoch_batches;

            if (tc.checkpoint_every > 0 && it % tc.checkpoint_every == 0) {
                save_checkpoint(latest, ps, &adam,
                                ckpt_manifest(rc, it, steps_per_epoch, stop, boundary_validated));
            }
            if (tc.max_iterations >= 0 && it >= tc.max_iterations) done = true;
        }

        if (!done && it % steps_per_epoch == 0) {
            done = run_validation(epoch_sum / static_cast<double>(epoch_batches), epoch_batches);
            res.early_stopped = done;
        }
    }

    res.iterations = it;
    res.epochs = static_cast<int>(it / steps_per_epoch);
    res.best_val = stop.best;
    res.final_checkpoint = out_dir + "/ckpt_final";
    save_checkpoint(res.final_checkpoint, ps, &adam,
                    ckpt_manifest(rc, it, steps_per_epoch, stop, boundary_validated));
    return res;
}

}  // namespace rsqair
