// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver: data generation, two-stage training, sampling,
// reconstruction, evaluation and static plot emission. One declarative JSON
// config describes a run; flags override leaf keys; every artifact embeds the
// digest of the effective config.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ftdiff/eval.hpp"
#include "ftdiff/io.hpp"
#include "ftdiff/mpdps.hpp"
#include "ftdiff/render.hpp"

namespace fs = std::filesystem;
using namespace ftdiff;

namespace {

Json default_config() {
    return Json{
        {"data",
         {{"kind", "traveling_pulse"},
          {"num_modes", 2},
          {"grid", 64},
          {"frames", 16},
          {"records", 200},
          {"keep", 0.10},
          {"noise_std", 0.0},
          {"noise_model", "gaussian"},
          {"drop_odd_frames", false},
          {"seed", 1}}},
        {"ftm",
         {{"ranks", Json::array({4, 4})},
          {"hidden_layers", 2},
          {"width", 64},
          {"first_omega", 15.0},
          {"beta", 1e-5},
          {"ridge", 1e-8},
          {"epochs", 20},
          {"latent_steps", 25},
          {"frames_per_batch", 8},
          {"lr", 1e-3},
          {"holdout_fraction", 0.05},
          {"divergence_factor", 50.0},
          {"seed", 1}}},
        {"gpsd",
         {{"hidden", 128},
          {"sigma_data", 1.0},
          {"gamma", 50.0},
          {"noise", "gp"},
          {"steps", 3000},
          {"batch", 16},
          {"crop_len", 8},
          {"lr", 1e-3},
          {"pmean", -1.2},
          {"pstd", 1.2},
          {"holdout_fraction", 0.1},
          {"val_every", 100},
          {"divergence_factor", 20.0},
          {"seed", 1}}},
        {"sample",
         {{"count", 4}, {"steps", 40}, {"noise", "gp"}, {"gamma", 50.0}, {"seed", 7}}},
        {"guidance",
         {{"mode", "mpdps"},
          {"zeta", 0.0},
          {"epsilon", 0.05},
          {"gamma", 50.0},
          {"jitter", 1e-8},
          {"messages", true},
          {"exact_jacobian", true},
          {"record", 0},
          {"chains", 1},
          {"eval_grid", 0},
          {"seed", 7}}},
    };
}

void merge_checked(Json& base, const Json& overlay, const std::string& prefix) {
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) {
            throw IoError("unknown config key: " + key);
        }
        Json& slot = base[it.key()];
        if (slot.is_object() && it->is_object()) {
            merge_checked(slot, *it, key);
        } else if (slot.is_object() != it->is_object()) {
            throw IoError("config key has the wrong shape: " + key);
        } else {
            slot = *it;
        }
    }
}

/// Applies one `section.key=value` override; the value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(Json& cfg, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) {
        throw IoError("override must look like section.key=value: " + spec);
    }
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    Json* slot = &cfg;
    std::size_t start = 0;
    std::string walked;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        walked = walked.empty() ? key : walked + "." + key;
        if (!slot->contains(key)) throw IoError("unknown config key: " + walked);
        slot = &(*slot)[key];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    if (slot->is_object()) throw IoError("cannot override a config section: " + path);
    const Json parsed = Json::parse(raw, nullptr, false);
    *slot = parsed.is_discarded() ? Json(raw) : parsed;
}

Json load_effective_config(const std::string& config_path,
                           const std::vector<std::string>& overrides) {
    Json cfg = default_config();
    if (!config_path.empty()) merge_checked(cfg, read_json_file(config_path), "");
    for (const auto& o : overrides) apply_override(cfg, o);
    return cfg;
}

DatasetConfig dataset_config_of(const Json& cfg) {
    const Json& d = cfg.at("data");
    DatasetConfig c;
    const std::string kind = d.at("kind").get<std::string>();
    if (kind == "traveling_pulse") {
        c.kind = FieldKind::traveling_pulse;
    } else if (kind == "separable_lowrank") {
        c.kind = FieldKind::separable_lowrank;
    } else if (kind == "advecting_mixture") {
        c.kind = FieldKind::advecting_mixture;
    } else {
        throw IoError("unknown data.kind: " + kind);
    }
    c.num_modes = d.at("num_modes").get<int>();
    c.grid = d.at("grid").get<int>();
    c.frames = d.at("frames").get<int>();
    c.records = d.at("records").get<int>();
    c.keep = d.at("keep").get<double>();
    c.noise_std = d.at("noise_std").get<double>();
    const std::string nm = d.at("noise_model").get<std::string>();
    if (nm == "gaussian") {
        c.noise_model = NoiseModel::gaussian;
    } else if (nm == "laplace") {
        c.noise_model = NoiseModel::laplace;
    } else if (nm == "poisson") {
        c.noise_model = NoiseModel::poisson;
    } else {
        throw IoError("unknown data.noise_model: " + nm);
    }
    c.drop_odd_frames = d.at("drop_odd_frames").get<bool>();
    c.seed = d.at("seed").get<std::uint64_t>();
    return c;
}

FTMConfig ftm_config_of(const Json& cfg) {
    const Json& f = cfg.at("ftm");
    FTMConfig c;
    c.ranks = f.at("ranks").get<std::vector<int>>();
    c.arch.hidden_layers = f.at("hidden_layers").get<int>();
    c.arch.width = f.at("width").get<int>();
    c.arch.first_omega = f.at("first_omega").get<double>();
    c.beta = f.at("beta").get<double>();
    c.ridge = f.at("ridge").get<double>();
    c.epochs = f.at("epochs").get<int>();
    c.latent_steps = f.at("latent_steps").get<int>();
    c.frames_per_batch = f.at("frames_per_batch").get<int>();
    c.lr = f.at("lr").get<double>();
    c.holdout_fraction = f.at("holdout_fraction").get<double>();
    c.divergence_factor = f.at("divergence_factor").get<double>();
    c.seed = f.at("seed").get<std::uint64_t>();
    return c;
}

NoiseKind noise_kind_of(const Json& j, const std::string& where) {
    const std::string s = j.get<std::string>();
    if (s == "gp") return NoiseKind::gp;
    if (s == "iid") return NoiseKind::iid;
    throw IoError("unknown " + where + ": " + s);
}

GPSDConfig gpsd_config_of(const Json& cfg) {
    const Json& g = cfg.at("gpsd");
    GPSDConfig c;
    c.hidden = g.at("hidden").get<int>();
    c.sigma_data = g.at("sigma_data").get<double>();
    c.gamma = g.at("gamma").get<double>();
    c.noise = noise_kind_of(g.at("noise"), "gpsd.noise");
    c.steps = g.at("steps").get<int>();
    c.batch = g.at("batch").get<int>();
    c.crop_len = g.at("crop_len").get<int>();
    c.lr = g.at("lr").get<double>();
    c.pmean = g.at("pmean").get<double>();
    c.pstd = g.at("pstd").get<double>();
    c.holdout_fraction = g.at("holdout_fraction").get<double>();
    c.val_every = g.at("val_every").get<int>();
    c.divergence_factor = g.at("divergence_factor").get<double>();
    c.seed = g.at("seed").get<std::uint64_t>();
    return c;
}

SampleConfig sample_config_of(const Json& cfg) {
    const Json& s = cfg.at("sample");
    SampleConfig c;
    c.schedule.steps = s.at("steps").get<int>();
    c.noise = noise_kind_of(s.at("noise"), "sample.noise");
    c.gamma = s.at("gamma").get<double>();
    c.seed = s.at("seed").get<std::uint64_t>();
    return c;
}

GuidanceMode guidance_mode_of(const std::string& s) {
    if (s == "none") return GuidanceMode::none;
    if (s == "dps") return GuidanceMode::dps;
    if (s == "mpdps") return GuidanceMode::mpdps;
    throw IoError("unknown guidance.mode: " + s);
}

GuidanceConfig guidance_config_of(const Json& cfg) {
    const Json& g = cfg.at("guidance");
    GuidanceConfig c;
    c.zeta = g.at("zeta").get<double>();
    c.epsilon = g.at("epsilon").get<double>();
    c.gamma = g.at("gamma").get<double>();
    c.jitter = g.at("jitter").get<double>();
    c.messages = g.at("messages").get<bool>();
    c.exact_jacobian = g.at("exact_jacobian").get<bool>();
    return c;
}

fs::path output_root() {
    if (const char* env = std::getenv("FTDIFF_OUT")) return fs::path(env);
    return fs::path("out");
}

/// Resolves the output path, applying the default name under the output root
/// and the --force overwrite contract.
std::string prepare_output(const std::string& requested, const std::string& default_name,
                           bool force) {
    fs::path path = requested.empty() ? output_root() / default_name : fs::path(requested);
    if (fs::exists(path) && !force) {
        throw IoError("output exists (use --force to overwrite): " + path.string());
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    return path.string();
}

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config document for the run");
    cmd->add_option("--set", args.overrides,
                    "Override a config leaf, e.g. --set data.records=8 (repeatable)");
    cmd->add_option("--out", args.out, "Output path (default under $FTDIFF_OUT or ./out)");
    cmd->add_flag("--force", args.force, "Overwrite an existing output file");
}

void warn_digest_mismatch(const std::string& artifact, const std::string& found,
                          const std::string& expected) {
    if (!found.empty() && !expected.empty() && found != expected) {
        std::cerr << "warning: " << artifact << " was produced by config digest " << found
                  << ", current digest is " << expected << "\n";
    }
}

int cmd_gen_data(const CommonArgs& args) {
    const Json cfg = load_effective_config(args.config_path, args.overrides);
    const std::string digest = config_digest(cfg);
    const std::string path = prepare_output(args.out, "dataset.bin", args.force);

    const Dataset ds = generate_dataset(dataset_config_of(cfg));
    save_dataset(path, ds, digest);
    std::size_t obs_total = 0;
    for (const auto& rec : ds.records) obs_total += rec.obs.total_count();
    std::cout << "wrote " << path << ": " << ds.records.size() << " records, "
              << ds.times.size() << " frames, " << obs_total << " observations, digest "
              << digest << "\n";
    return 0;
}

int cmd_train_ftm(const CommonArgs& args, const std::string& data_path) {
    const Json cfg = load_effective_config(args.config_path, args.overrides);
    const std::string digest = config_digest(cfg);
    const std::string data_file =
        data_path.empty() ? (output_root() / "dataset.bin").string() : data_path;
    const std::string path = prepare_output(args.out, "ftm.bin", args.force);

    const Dataset ds = load_dataset(data_file);
    warn_digest_mismatch(data_file, artifact_digest(read_artifact(data_file, "dataset").meta),
                         digest);
    std::vector<ObservationSet> records;
    records.reserve(ds.records.size());
    for (const auto& rec : ds.records) records.push_back(rec.obs);

    const TrainedFTM model = train_ftm(records, ftm_config_of(cfg));
    save_ftm(path, model, digest);
    write_json_file(path + ".trace.json",
                    Json{{"digest", digest},
                         {"train_loss", model.train_loss},
                         {"holdout_loss", model.holdout_loss}});
    std::cout << "wrote " << path << ": train loss " << model.train_loss.front() << " -> "
              << model.train_loss.back() << ", holdout " << model.holdout_loss.back()
              << ", digest " << digest << "\n";
    return 0;
}

int cmd_train_gpsd(const CommonArgs& args, const std::string& ftm_path) {
    const Json cfg = load_effective_config(args.config_path, args.overrides);
    const std::string digest = config_digest(cfg);
    const std::string ftm_file =
        ftm_path.empty() ? (output_root() / "ftm.bin").string() : ftm_path;
    const std::string path = prepare_output(args.out, "gpsd.bin", args.force);

    const TrainedFTM ftm = load_ftm(ftm_file);
    warn_digest_mismatch(ftm_file, artifact_digest(read_artifact(ftm_file, "ftm").meta), digest);
    std::vector<CoreSequence> standardized;
    standardized.reserve(ftm.cores.size());
    for (const auto& seq : ftm.cores) standardized.push_back(ftm.standardize.encode(seq));

    const TrainedGPSD model = train_gpsd(standardized, gpsd_config_of(cfg));
    save_gpsd(path, model, digest);
    write_json_file(path + ".trace.json",
                    Json{{"digest", digest},
                         {"train_loss", model.train_loss},
                         {"val_loss", model.val_loss}});
    std::cout << "wrote " << path << ": " << model.train_loss.size() << " steps, val loss "
              << (model.val_loss.empty() ? -1.0 : model.val_loss.back()) << ", digest " << digest
              << "\n";
    return 0;
}

int cmd_sample(const CommonArgs& args, const std::string& ftm_path,
               const std::string& gpsd_path) {
    const Json cfg = load_effective_config(args.config_path, args.overrides);
    const std::string digest = config_digest(cfg);
    const std::string ftm_file =
        ftm_path.empty() ? (output_root() / "ftm.bin").string() : ftm_path;
    const std::string gpsd_file =
        gpsd_path.empty() ? (output_root() / "gpsd.bin").string() : gpsd_path;
    const std::string path = prepare_output(args.out, "samples.bin", args.force);

    const TrainedFTM ftm = load_ftm(ftm_file);
    const TrainedGPSD gpsd = load_gpsd(gpsd_file);
    require(!ftm.cores.empty(), "sample: the encoder checkpoint holds no core sequences");

    const std::vector<double> times = ftm.cores.front().times;
    const std::vector<int> ranks = ftm.config.ranks;
    SampleConfig scfg = sample_config_of(cfg);
    const int count = cfg.at("sample").at("count").get<int>();
    require(count >= 1, "sample.count must be positive");

    SampleSet out;
    out.ranks = ranks;
    out.meta = Json{{"digest", digest}, {"mode", "none"}, {"source_gpsd", gpsd_file}};
    for (int i = 0; i < count; ++i) {
        SampleConfig one = scfg;
        one.seed = scfg.seed + static_cast<std::uint64_t>(i);
        const CoreSequence z = unconditional_sample(gpsd.denoiser, times, ranks, one);
        out.sequences.push_back(ftm.standardize.decode(z));
    }
    save_samples(path, out);
    std::cout << "wrote " << path << ": " << count << " unconditional core sequences, digest "
              << digest << "\n";
    return 0;
}

struct ReconArgs {
    CommonArgs common;
    std::string data_path;
    std::string ftm_path;
    std::string gpsd_path;
    std::string mode;
    int record = -1;
    std::string report_path;
};

int cmd_reconstruct(const ReconArgs& ra) {
    const auto t_start = std::chrono::steady_clock::now();
    Json cfg = load_effective_config(ra.common.config_path, ra.common.overrides);
    if (!ra.mode.empty()) cfg["guidance"]["mode"] = ra.mode;
    if (ra.record >= 0) cfg["guidance"]["record"] = ra.record;
    const std::string digest = config_digest(cfg);

    const std::string data_file =
        ra.data_path.empty() ? (output_root() / "dataset.bin").string() : ra.data_path;
    const std::string ftm_file =
        ra.ftm_path.empty() ? (output_root() / "ftm.bin").string() : ra.ftm_path;
    const std::string gpsd_file =
        ra.gpsd_path.empty() ? (output_root() / "gpsd.bin").string() : ra.gpsd_path;
    const std::string path = prepare_output(ra.common.out, "recon.bin", ra.common.force);

    const Dataset ds = load_dataset(data_file);
    const TrainedFTM ftm = load_ftm(ftm_file);
    const TrainedGPSD gpsd = load_gpsd(gpsd_file);

    const Json& g = cfg.at("guidance");
    const int record = g.at("record").get<int>();
    require(record >= 0 && record < static_cast<int>(ds.records.size()),
            "guidance.record is out of range");
    const int chains = g.at("chains").get<int>();
    require(chains >= 1, "guidance.chains must be positive");
    int eval_grid = g.at("eval_grid").get<int>();
    if (eval_grid <= 0) eval_grid = ds.config.grid;
    const GuidanceMode mode = guidance_mode_of(g.at("mode").get<std::string>());
    GuidanceConfig gcfg = guidance_config_of(cfg);
    const std::uint64_t seed = g.at("seed").get<std::uint64_t>();

    SampleConfig scfg = sample_config_of(cfg);
    const FieldRecord& rec = ds.records[static_cast<std::size_t>(record)];

    if (mode != GuidanceMode::none && gcfg.zeta <= 0.0) {
        const GuidanceOperands probe = build_guidance_operands(
            ftm.latents, ftm.standardize, rec.obs, ds.times, ftm.config.ranks, gcfg);
        gcfg.zeta = stable_guidance_scale(probe, mode);
        require(gcfg.zeta > 0.0, "cannot auto-scale guidance: the record has no observations");
        std::cout << "guidance.zeta <= 0, using stable scale " << gcfg.zeta << "\n";
    }

    SampleSet out;
    out.ranks = ftm.config.ranks;
    out.meta = Json{{"digest", digest},
                    {"mode", g.at("mode").get<std::string>()},
                    {"record", record},
                    {"grid", eval_grid},
                    {"source_data", data_file}};
    std::vector<double> chain_vrmse;
    Json per_frame = Json::array();
    for (int c = 0; c < chains; ++c) {
        SampleConfig one = scfg;
        one.seed = seed + static_cast<std::uint64_t>(c);
        const CoreSequence raw =
            reconstruct_cores(ftm, gpsd.denoiser, rec.obs, ds.times, mode, gcfg, one);
        const ReconstructionEval ev =
            evaluate_reconstruction(rec.field, ftm.latents, raw, eval_grid);
        chain_vrmse.push_back(ev.vrmse);
        if (c == 0) per_frame = ev.frame_vrmse;
        out.sequences.push_back(raw);
    }
    double mean = 0.0;
    for (double v : chain_vrmse) mean += v;
    mean /= static_cast<double>(chains);
    double var = 0.0;
    for (double v : chain_vrmse) var += (v - mean) * (v - mean);
    const double std_dev = chains > 1 ? std::sqrt(var / (chains - 1)) : 0.0;

    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    const Json report{{"digest", digest},
                      {"mode", g.at("mode").get<std::string>()},
                      {"record", record},
                      {"zeta", gcfg.zeta},
                      {"eval_grid", eval_grid},
                      {"chains", chains},
                      {"vrmse_mean", mean},
                      {"vrmse_std", std_dev},
                      {"vrmse_per_chain", chain_vrmse},
                      {"frame_vrmse", per_frame},
                      {"runtime_seconds", runtime}};
    out.meta["report"] = report;
    save_samples(path, out);
    const std::string report_file = ra.report_path.empty() ? path + ".report.json" : ra.report_path;
    write_json_file(report_file, report);
    std::cout << "wrote " << path << " and " << report_file << ": mode "
              << g.at("mode").get<std::string>() << ", vrmse " << mean << " +/- " << std_dev
              << ", digest " << digest << "\n";
    return 0;
}

int cmd_evaluate(const CommonArgs& args, const std::string& recon_path,
                 const std::string& data_path, const std::string& ftm_path) {
    const Json cfg = load_effective_config(args.config_path, args.overrides);
    const std::string digest = config_digest(cfg);
    const std::string recon_file =
        recon_path.empty() ? (output_root() / "recon.bin").string() : recon_path;
    const std::string data_file =
        data_path.empty() ? (output_root() / "dataset.bin").string() : data_path;
    const std::string ftm_file =
        ftm_path.empty() ? (output_root() / "ftm.bin").string() : ftm_path;
    const std::string path = prepare_output(args.out, "eval.json", args.force);

    const auto t_start = std::chrono::steady_clock::now();
    const SampleSet samples = load_samples(recon_file);
    const Dataset ds = load_dataset(data_file);
    const TrainedFTM ftm = load_ftm(ftm_file);
    require(!samples.sequences.empty(), "evaluate: no sequences in " + recon_file);
    const int record = samples.meta.value("record", 0);
    require(record >= 0 && record < static_cast<int>(ds.records.size()),
            "evaluate: sample record id is out of range for this dataset");
    int eval_grid = samples.meta.value("grid", 0);
    if (eval_grid <= 0) eval_grid = ds.config.grid;

    const FieldRecord& rec = ds.records[static_cast<std::size_t>(record)];
    std::vector<double> vrmses;
    Json per_frame = Json::array();
    for (std::size_t i = 0; i < samples.sequences.size(); ++i) {
        const ReconstructionEval ev =
            evaluate_reconstruction(rec.field, ftm.latents, samples.sequences[i], eval_grid);
        vrmses.push_back(ev.vrmse);
        if (i == 0) per_frame = ev.frame_vrmse;
    }
    double mean = 0.0;
    for (double v : vrmses) mean += v;
    mean /= static_cast<double>(vrmses.size());
    double var = 0.0;
    for (double v : vrmses) var += (v - mean) * (v - mean);
    const double std_dev =
        vrmses.size() > 1 ? std::sqrt(var / static_cast<double>(vrmses.size() - 1)) : 0.0;
    const double runtime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    const Json report{{"digest", digest},
                      {"source", recon_file},
                      {"source_digest", artifact_digest(samples.meta)},
                      {"record", record},
                      {"eval_grid", eval_grid},
                      {"vrmse_mean", mean},
                      {"vrmse_std", std_dev},
                      {"vrmse_per_chain", vrmses},
                      {"frame_vrmse", per_frame},
                      {"runtime_seconds", runtime}};
    write_json_file(path, report);
    warn_digest_mismatch(recon_file, artifact_digest(samples.meta), digest);
    std::cout << "wrote " << path << ": vrmse " << mean << " +/- " << std_dev << " over "
              << vrmses.size() << " sequences\n";
    return 0;
}

struct PlotArgs {
    CommonArgs common;
    std::vector<std::string> inputs;
    std::string data_path;
    std::string ftm_path;
    int max_frames = 8;
    int scale = 3;
};

int cmd_plot(PlotArgs pa) {
    const Json cfg = load_effective_config(pa.common.config_path, pa.common.overrides);
    const std::string digest = config_digest(cfg);
    if (pa.inputs.empty()) pa.inputs.push_back((output_root() / "recon.bin").string());
    const std::string data_file =
        pa.data_path.empty() ? (output_root() / "dataset.bin").string() : pa.data_path;
    const std::string ftm_file =
        pa.ftm_path.empty() ? (output_root() / "ftm.bin").string() : pa.ftm_path;

    fs::path out_dir = pa.common.out.empty() ? output_root() / "plots" : fs::path(pa.common.out);
    const fs::path manifest_path = out_dir / "manifest.json";
    if (fs::exists(manifest_path) && !pa.common.force) {
        throw IoError("output exists (use --force to overwrite): " + manifest_path.string());
    }
    fs::create_directories(out_dir);

    const Dataset ds = load_dataset(data_file);
    const TrainedFTM ftm = load_ftm(ftm_file);
    const int grid = ds.config.grid;
    require(ds.config.num_modes == 2, "plot: only two spatial modes render as images");

    std::vector<SampleSet> sets;
    int record = 0;
    for (const auto& input : pa.inputs) {
        SampleSet s = load_samples(input);
        const int s_grid = s.meta.value("grid", grid);
        require(s_grid == grid, "plot: input grids disagree: " + input);
        if (s.meta.contains("record")) record = s.meta.at("record").get<int>();
        sets.push_back(std::move(s));
    }
    require(record >= 0 && record < static_cast<int>(ds.records.size()),
            "plot: record id is out of range for this dataset");
    const FieldRecord& rec = ds.records[static_cast<std::size_t>(record)];

    const auto frames_total = ds.times.size();
    const auto stride = std::max<std::size_t>(
        1, frames_total / static_cast<std::size_t>(std::max(pa.max_frames, 1)));
    std::vector<std::size_t> frame_ids;
    for (std::size_t m = 0; m < frames_total; m += stride) frame_ids.push_back(m);

    const auto axis = lattice_coords(grid);
    std::vector<MatrixXd> features;
    for (int k = 0; k < ftm.latents.num_modes(); ++k) {
        VectorXd axis_vec = Eigen::Map<const VectorXd>(axis.data(), grid);
        features.push_back(ftm.latents.mode(k).forward(axis_vec));
    }

    std::vector<std::vector<VectorXd>> rows;
    std::vector<VectorXd> truth_row;
    double lo = 0.0, hi = 0.0;
    for (std::size_t m : frame_ids) {
        VectorXd truth = field_on_lattice(rec.field, grid, ds.times[m]);
        lo = std::min(lo, truth.minCoeff());
        hi = std::max(hi, truth.maxCoeff());
        truth_row.push_back(std::move(truth));
    }
    rows.push_back(truth_row);

    std::vector<VectorXd> obs_row;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t m : frame_ids) {
        VectorXd frame = VectorXd::Constant(static_cast<Eigen::Index>(grid) * grid, nan);
        for (const auto& ob : rec.obs.rows[m]) {
            Eigen::Index flat = 0;
            for (int k = 0; k < 2; ++k) {
                const auto idx = static_cast<Eigen::Index>(
                    std::lround(ob.coords[static_cast<std::size_t>(k)] * grid - 0.5));
                flat = flat * grid + std::clamp<Eigen::Index>(idx, 0, grid - 1);
            }
            frame(flat) = ob.value;
        }
        obs_row.push_back(std::move(frame));
    }
    rows.push_back(obs_row);

    for (const auto& s : sets) {
        std::vector<VectorXd> row;
        const CoreSequence& seq = s.sequences.front();
        for (std::size_t m : frame_ids) {
            if (m < seq.cores.size()) {
                row.push_back(decode_on_grid(seq.cores[m], features));
            } else {
                row.push_back(VectorXd());
            }
        }
        rows.push_back(std::move(row));
    }

    const ImageRGB img = tile_frames(rows, grid, pa.scale, lo, hi);
    const std::string image_name = "strip_record" + std::to_string(record) + ".ppm";
    write_ppm((out_dir / image_name).string(), img);

    Json inputs_meta = Json::array();
    for (std::size_t i = 0; i < sets.size(); ++i) {
        inputs_meta.push_back(Json{{"path", pa.inputs[i]},
                                   {"digest", artifact_digest(sets[i].meta)},
                                   {"mode", sets[i].meta.value("mode", "")}});
    }
    Json frame_list = Json::array();
    for (std::size_t m : frame_ids) frame_list.push_back(m);
    Json row_names = Json::array({"truth", "observations"});
    for (const auto& s : sets) row_names.push_back(s.meta.value("mode", "samples"));
    write_json_file(manifest_path.string(),
                    Json{{"digest", digest},
                         {"image", image_name},
                         {"record", record},
                         {"frames", frame_list},
                         {"rows", row_names},
                         {"value_range", Json::array({lo, hi})},
                         {"inputs", inputs_meta}});
    std::cout << "wrote " << (out_dir / image_name).string() << " and "
              << manifest_path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional tensor diffusion pipeline"};
    app.require_subcommand(1);

    CommonArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic observation corpus");
    add_common(gen, gen_args);

    CommonArgs ftm_args;
    std::string ftm_data;
    CLI::App* tftm = app.add_subcommand("train-ftm", "Fit the functional encoder on a corpus");
    add_common(tftm, ftm_args);
    tftm->add_option("--data", ftm_data, "Dataset artifact (default <root>/dataset.bin)");

    CommonArgs gpsd_args;
    std::string gpsd_ftm;
    CLI::App* tgpsd = app.add_subcommand("train-gpsd", "Train the sequence denoiser");
    add_common(tgpsd, gpsd_args);
    tgpsd->add_option("--ftm", gpsd_ftm, "Encoder checkpoint (default <root>/ftm.bin)");

    CommonArgs sample_args;
    std::string sample_ftm, sample_gpsd;
    CLI::App* sample = app.add_subcommand("sample", "Draw unconditional core sequences");
    add_common(sample, sample_args);
    sample->add_option("--ftm", sample_ftm, "Encoder checkpoint (default <root>/ftm.bin)");
    sample->add_option("--gpsd", sample_gpsd, "Denoiser checkpoint (default <root>/gpsd.bin)");

    ReconArgs recon;
    CLI::App* rec = app.add_subcommand("reconstruct", "Posterior sampling from observations");
    add_common(rec, recon.common);
    rec->add_option("--data", recon.data_path, "Dataset artifact (default <root>/dataset.bin)");
    rec->add_option("--ftm", recon.ftm_path, "Encoder checkpoint (default <root>/ftm.bin)");
    rec->add_option("--gpsd", recon.gpsd_path, "Denoiser checkpoint (default <root>/gpsd.bin)");
    rec->add_option("--mode", recon.mode, "Guidance mode: none, dps or mpdps");
    rec->add_option("--record", recon.record, "Dataset record to condition on");
    rec->add_option("--report", recon.report_path, "Report path (default <out>.report.json)");

    CommonArgs eval_args;
    std::string eval_recon, eval_data, eval_ftm;
    CLI::App* ev = app.add_subcommand("evaluate", "Score a reconstruction against ground truth");
    add_common(ev, eval_args);
    ev->add_option("--recon", eval_recon,
                   "Reconstruction or sample artifact (default <root>/recon.bin)");
    ev->add_option("--data", eval_data, "Dataset artifact (default <root>/dataset.bin)");
    ev->add_option("--ftm", eval_ftm, "Encoder checkpoint (default <root>/ftm.bin)");

    PlotArgs plot;
    CLI::App* pl = app.add_subcommand("plot", "Render frame strips for reconstructions");
    add_common(pl, plot.common);
    pl->add_option("--input", plot.inputs,
                   "Sample or reconstruction artifacts (repeatable, default <root>/recon.bin)");
    pl->add_option("--data", plot.data_path, "Dataset artifact (default <root>/dataset.bin)");
    pl->add_option("--ftm", plot.ftm_path, "Encoder checkpoint (default <root>/ftm.bin)");
    pl->add_option("--max-frames", plot.max_frames, "Frames per strip (default 8)");
    pl->add_option("--scale", plot.scale, "Pixel magnification per cell (default 3)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (tftm->parsed()) return cmd_train_ftm(ftm_args, ftm_data);
        if (tgpsd->parsed()) return cmd_train_gpsd(gpsd_args, gpsd_ftm);
        if (sample->parsed()) return cmd_sample(sample_args, sample_ftm, sample_gpsd);
        if (rec->parsed()) return cmd_reconstruct(recon);
        if (ev->parsed()) return cmd_evaluate(eval_args, eval_recon, eval_data, eval_ftm);
        if (pl->parsed()) return cmd_plot(plot);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
