// Operator surface: data generation, training, evaluation, rollout export
// and chart emission over one layered configuration model.
//
// Config precedence: built-in defaults < --config JSON file < command-line
// flags. RSQAIR_DATA_DIR supplies the dataset root when neither file nor
// flag names one. The merged config is persisted into every artifact
// directory so a run can be reproduced from its outputs alone.
//
// Exit codes: 0 success, 1 invalid or missing configuration (bad flags,
// unknown config keys, absent checkpoints), 2 I/O failure, 3 numeric
// failure during training or evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsqair/ballsim.hpp"
#include "rsqair/config.hpp"
#include "rsqair/errors.hpp"
#include "rsqair/metrics.hpp"
#include "rsqair/model.hpp"
#include "rsqair/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rsqair;

namespace {

struct Layered {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::string data_dir;
};

// defaults < config file < flags; env var fills the dataset root last
RunConfig build_config(const Layered& a) {
    RunConfig rc;
    if (!a.config_path.empty()) {
        std::ifstream f(a.config_path);
        if (!f) throw IoError("cannot read config file " + a.config_path);
        json j;
        try {
            f >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config file " + a.config_path + ": " + e.what());
        }
        rc = RunConfig::from_json(j);
    }
    if (a.seed_set) rc.seed = a.seed;
    if (!a.out.empty()) rc.out_dir = a.out;
    if (!a.data_dir.empty()) rc.data_dir = a.data_dir;
    if (rc.data_dir.empty()) {
        const char* env = std::getenv("RSQAIR_DATA_DIR");
        if (env && *env) rc.data_dir = env;
    }
    return rc;
}

void persist_config(const RunConfig& rc, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream f(fs::path(dir) / "config.json");
    if (!f) throw IoError("cannot write " + dir + "/config.json");
    f << rc.to_json().dump(2) << '\n';
}

// split name ("test", "gen-test", ...) or direct path to a container file
std::string resolve_dataset(const std::string& spec, const std::string& data_dir) {
    std::string s = spec.empty() ? "test" : spec;
    if (s.find('/') != std::string::npos ||
        (s.size() > 5 && s.substr(s.size() - 5) == ".rsqb")) {
        if (!fs::exists(s)) throw ConfigError("missing dataset " + s);
        return s;
    }
    std::string name = s == "gen-test" ? "gen_test" : s;
    if (data_dir.empty())
        throw ConfigError("no dataset root: pass --data, set data_dir in the config, "
                          "or export RSQAIR_DATA_DIR");
    std::string path = (fs::path(data_dir) / (name + ".rsqb")).string();
    if (!fs::exists(path)) throw ConfigError("missing dataset " + path);
    return path;
}

void require_checkpoints(const std::vector<std::string>& stems) {
    if (stems.empty()) throw ConfigError("no checkpoints given");
    for (const std::string& s : stems)
        if (!fs::exists(s + ".rsqc") || !fs::exists(s + ".json"))
            throw ConfigError("missing checkpoint " + s + " (.rsqc/.json pair)");
}

// fresh model built from a checkpoint manifest's embedded config
struct LoadedModel {
    RunConfig rc;
    std::unique_ptr<ad::ParamStore> ps;
    std::unique_ptr<RsqairModel> model;
};

LoadedModel load_model(const std::string& stem) {
    json manifest;
    std::ifstream mf(stem + ".json");
    if (!mf) throw IoError("cannot read checkpoint manifest " + stem + ".json");
    mf >> manifest;
    LoadedModel lm;
    lm.rc = RunConfig::from_json(manifest.at("config"));
    if (config_compat_hash(lm.rc) != manifest.at("config_hash").get<uint64_t>())
        throw ConfigError("checkpoint/config mismatch for " + stem);
    lm.ps = std::make_unique<ad::ParamStore>();
    lm.model = std::make_unique<RsqairModel>(*lm.ps, lm.rc.model, lm.rc.seed);
    load_checkpoint(stem, *lm.ps, nullptr);
    return lm;
}

void emit_charts(const std::vector<json>& reports, const std::vector<std::string>& labels,
                 const std::string& out_dir, const std::string& suffix) {
    std::vector<double> dmean, dstd, rmean, rstd;
    std::vector<std::string> rlabels;
    for (size_t i = 0; i < reports.size(); ++i) {
        const json& r = reports[i];
        dmean.push_back(r.at("data_ll").at("mean").get<double>());
        dstd.push_back(r.at("data_ll").at("std").get<double>());
        const json& rel = r.at("relational_ll");
        if (!rel.at("no_collisions").get<bool>()) {
            rlabels.push_back(labels[i]);
            rmean.push_back(rel.at("mean").get<double>());
            rstd.push_back(rel.at("std").get<double>());
        }
    }
    fs::create_directories(out_dir);
    std::string data_svg = (fs::path(out_dir) / ("data_ll" + suffix + ".svg")).string();
    write_bar_chart(data_svg, labels, dmean, dstd, "final-frame data log-likelihood", "nats");
    std::cout << "wrote " << data_svg << "\n";
    if (!rlabels.empty()) {
        std::string rel_svg = (fs::path(out_dir) / ("relational_ll" + suffix + ".svg")).string();
        write_bar_chart(rel_svg, rlabels, rmean, rstd,
                        "final-frame relational log-likelihood", "nats");
        std::cout << "wrote " << rel_svg << "\n";
    } else {
        std::cout << "no relational chart: no sequence had a final-frame collision\n";
    }
}

int cmd_generate_data(const Layered& args, bool force, const std::vector<int>& balls_test) {
    RunConfig rc = build_config(args);
    if (!balls_test.empty()) {
        rc.data.gen_balls_min = balls_test[0];
        rc.data.gen_balls_max = balls_test[1];
    }
    rc.validate();
    std::string out = !rc.data_dir.empty() ? rc.data_dir : "data";
    rc.data_dir = out;
    generate_dataset(rc, out, force);
    std::cout << "wrote train/val/test/gen_test containers and manifest under " << out << "\n";
    return 0;
}

int cmd_train(const Layered& args, const std::string& relational, int64_t max_iterations,
              const std::string& resume) {
    RunConfig rc = build_config(args);
    if (!relational.empty()) rc.model.relational = relational;
    if (max_iterations >= 0) rc.train.max_iterations = max_iterations;
    if (rc.out_dir.empty()) rc.out_dir = "runs/" + rc.model.relational;
    if (rc.data_dir.empty())
        throw ConfigError("no dataset root: pass --data, set data_dir in the config, "
                          "or export RSQAIR_DATA_DIR");
    rc.validate();
    persist_config(rc, rc.out_dir);
    TrainResult r = train(rc, rc.data_dir, rc.out_dir, resume);
    std::cout << "trained " << r.iterations << " iterations over " << r.epochs << " epochs\n";
    std::cout << "best validation bound " << r.best_val << (r.early_stopped ? " (early stop)" : "")
              << "\n";
    std::cout << "final checkpoint " << r.final_checkpoint << "\n";
    return 0;
}

int cmd_eval(const Layered& args, const std::vector<std::string>& stems,
             const std::string& dataset, int samples, int max_seqs, bool posterior, bool plot) {
    RunConfig rc = build_config(args);
    require_checkpoints(stems);
    std::string path = resolve_dataset(dataset, rc.data_dir);
    EvalOptions eo;
    eo.samples = samples;
    eo.seed = rc.seed;
    eo.posterior_means = posterior;
    eo.max_seqs = max_seqs;
    MetricsReport rep = evaluate_protocol(stems, path, eo);

    std::string out = rc.out_dir.empty() ? "eval" : rc.out_dir;
    fs::create_directories(out);
    std::string rpath = (fs::path(out) / "metrics.json").string();
    std::ofstream rf(rpath);
    if (!rf) throw IoError("cannot write " + rpath);
    rf << rep.to_json().dump(2) << '\n';

    std::cout << "data log-likelihood " << rep.data_mean << " +- " << rep.data_std << "\n";
    if (rep.rel_no_collisions)
        std::cout << "relational log-likelihood undefined: no final-frame collisions\n";
    else
        std::cout << "relational log-likelihood " << rep.rel_mean << " +- " << rep.rel_std
                  << " over " << rep.rel_included << " sequences\n";
    std::cout << "wrote " << rpath << "\n";
    if (plot) emit_charts({rep.to_json()}, {rep.relational_tags[0]}, out, "");
    return 0;
}

int cmd_rollout(const Layered& args, const std::string& stem, const std::string& dataset,
                int seq_index, int context, int horizon) {
    RunConfig rc = build_config(args);
    require_checkpoints({stem});
    std::string path = resolve_dataset(dataset, rc.data_dir);
    LoadedModel lm = load_model(stem);
    DatasetReader ds(path);
    if (seq_index < 0 || seq_index >= ds.size())
        throw ConfigError("sequence index out of range for " + path);
    FrameSequence seq = ds.sequence(seq_index);
    int t_len = seq.t_len();
    if (context <= 0) context = (t_len + 1) / 2;
    if (horizon < 0) horizon = t_len - context;
    uint64_t noise = Rng::derive(rc.seed, "rollout", seq_index).key();
    Tensor strip = rollout_strip(*lm.model, seq, context, horizon, noise);

    std::string out = rc.out_dir.empty() ? "rollouts" : rc.out_dir;
    fs::create_directories(out);
    std::string ppath =
        (fs::path(out) / ("rollout_" + std::to_string(seq_index) + ".ppm")).string();
    write_ppm(ppath, strip);
    std::cout << "wrote " << ppath << " (" << context << " observed + " << horizon
              << " predicted panels)\n";
    return 0;
}

int cmd_plot(const Layered& args, const std::vector<std::string>& report_paths) {
    RunConfig rc = build_config(args);
    if (report_paths.empty()) throw ConfigError("no reports given");
    std::vector<json> reports;
    std::vector<std::string> labels;
    for (const std::string& p : report_paths) {
        std::ifstream f(p);
        if (!f) throw IoError("cannot read report " + p);
        json r;
        try {
            f >> r;
        } catch (const json::exception& e) {
            throw ConfigError("report " + p + ": " + e.what());
        }
        if (!r.contains("data_ll") || !r.contains("relational_ll"))
            throw ConfigError("report " + p + " is not a metrics report");
        reports.push_back(r);
        const json& tags = r.at("models").at("relational");
        labels.push_back(tags.empty() ? fs::path(p).stem().string()
                                      : tags[0].get<std::string>());
    }
    emit_charts(reports, labels, rc.out_dir.empty() ? "." : rc.out_dir, "");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"object-centric generative video model over bouncing balls"};
    app.require_subcommand(1);

    Layered args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "JSON config file");
        sub->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
            args.seed_set = true;
        });
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--data", args.data_dir, "dataset root directory");
    };

    CLI::App* gen = app.add_subcommand("generate-data", "simulate and write dataset splits");
    add_common(gen);
    bool force = false;
    gen->add_flag("--force", force, "overwrite existing dataset files");
    std::vector<int> balls_test;
    gen->add_option("--balls-test", balls_test, "min and max ball count of the gen-test split")
        ->expected(2);

    CLI::App* tr = app.add_subcommand("train", "fit a model on a generated dataset");
    add_common(tr);
    std::string relational;
    tr->add_option("--relational", relational, "relational module variant")
        ->check(CLI::IsMember({"none", "identity", "in", "rmc"}));
    int64_t max_iterations = -1;
    tr->add_option("--max-iterations", max_iterations, "stop after this many optimizer steps");
    std::string resume;
    tr->add_option("--resume", resume, "checkpoint stem to continue from");

    CLI::App* ev = app.add_subcommand("eval", "score checkpoints on a dataset split");
    add_common(ev);
    std::vector<std::string> stems;
    ev->add_option("checkpoints", stems, "checkpoint stems (paths without extension)");
    std::string dataset;
    ev->add_option("--dataset", dataset, "split name (test, gen-test, val, train) or .rsqb path");
    int samples = 5;
    ev->add_option("--samples", samples, "prior samples per sequence");
    int max_seqs = 0;
    ev->add_option("--max-seqs", max_seqs, "cap on scored sequences (0 = all)");
    bool posterior = false;
    ev->add_flag("--posterior", posterior, "score filtered reconstructions instead of prior samples");
    bool plot = false;
    ev->add_flag("--plot", plot, "emit bar charts next to the report");

    CLI::App* ro = app.add_subcommand("rollout", "export an observed-plus-predicted image strip");
    add_common(ro);
    std::string ro_stem;
    ro->add_option("--checkpoint", ro_stem, "checkpoint stem")->required();
    std::string ro_dataset;
    ro->add_option("--dataset", ro_dataset, "split name or .rsqb path");
    int seq_index = 0;
    ro->add_option("--seq", seq_index, "sequence index within the split");
    int context = 0;
    ro->add_option("--context", context, "observed frames (default: half the sequence)");
    int horizon = -1;
    ro->add_option("--horizon", horizon, "predicted frames (default: the remainder)");

    CLI::App* pl = app.add_subcommand("plot", "bar charts from persisted metrics reports");
    add_common(pl);
    std::vector<std::string> report_paths;
    pl->add_option("reports", report_paths, "metrics.json files, one per model variant");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate_data(args, force, balls_test);
        if (tr->parsed()) return cmd_train(args, relational, max_iterations, resume);
        if (ev->parsed()) return cmd_eval(args, stems, dataset, samples, max_seqs, posterior, plot);
        if (ro->parsed()) return cmd_rollout(args, ro_stem, ro_dataset, seq_index, context, horizon);
        if (pl->parsed()) return cmd_plot(args, report_paths);
        return 1;
    } catch (const CLI::Error& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << "\n";  // messages carry their category prefix
        return 1;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
}
