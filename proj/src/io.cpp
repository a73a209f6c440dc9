// Copyright (c) 2026 The ftdiff Authors
// SPDX-License-Identifier: Apache-2.0
#include "ftdiff/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ftdiff {
namespace {

constexpr char kMagic[8] = {'F', 'T', 'D', 'F', 'A', 'R', 'T', '1'};
constexpr std::uint32_t kFormatVersion = 1;

void check_endianness() {
    if (std::endian::native != std::endian::little) {
        throw IoError("artifact files require a little-endian host");
    }
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("truncated artifact file: " + path);
    return v;
}

/// Sequential reader over a float64 payload.
class Cursor {
public:
    explicit Cursor(const std::vector<double>& payload) : payload_(payload) {}

    double scalar() {
        require_left(1);
        return payload_[pos_++];
    }
    VectorXd vector(std::size_t n) {
        require_left(n);
        VectorXd v = Eigen::Map<const VectorXd>(payload_.data() + pos_,
                                                static_cast<Eigen::Index>(n));
        pos_ += n;
        return v;
    }
    std::vector<double> raw(std::size_t n) {
        require_left(n);
        std::vector<double> v(payload_.begin() + static_cast<std::ptrdiff_t>(pos_),
                              payload_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return v;
    }
    void skip(std::size_t n) {
        require_left(n);
        pos_ += n;
    }
    void done() const {
        if (pos_ != payload_.size()) throw IoError("artifact payload has trailing data");
    }

private:
    void require_left(std::size_t n) {
        if (pos_ + n > payload_.size()) throw IoError("artifact payload is too short");
    }
    const std::vector<double>& payload_;
    std::size_t pos_ = 0;
};

std::string field_kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::traveling_pulse: return "traveling_pulse";
        case FieldKind::separable_lowrank: return "separable_lowrank";
        case FieldKind::advecting_mixture: return "advecting_mixture";
    }
    throw IoError("unknown field kind");
}

FieldKind field_kind_from(const std::string& s) {
    if (s == "traveling_pulse") return FieldKind::traveling_pulse;
    if (s == "separable_lowrank") return FieldKind::separable_lowrank;
    if (s == "advecting_mixture") return FieldKind::advecting_mixture;
    throw IoError("unknown field kind: " + s);
}

std::string noise_model_name(NoiseModel m) {
    switch (m) {
        case NoiseModel::gaussian: return "gaussian";
        case NoiseModel::laplace: return "laplace";
        case NoiseModel::poisson: return "poisson";
    }
    throw IoError("unknown noise model");
}

NoiseModel noise_model_from(const std::string& s) {
    if (s == "gaussian") return NoiseModel::gaussian;
    if (s == "laplace") return NoiseModel::laplace;
    if (s == "poisson") return NoiseModel::poisson;
    throw IoError("unknown noise model: " + s);
}

std::string noise_kind_name(NoiseKind k) {
    return k == NoiseKind::gp ? "gp" : "iid";
}

NoiseKind noise_kind_from(const std::string& s) {
    if (s == "gp") return NoiseKind::gp;
    if (s == "iid") return NoiseKind::iid;
    throw IoError("unknown noise kind: " + s);
}

Json arch_to_json(const ModeFunctionArch& a) {
    return Json{{"hidden_layers", a.hidden_layers},
                {"width", a.width},
                {"output_dim", a.output_dim},
                {"first_omega", a.first_omega}};
}

ModeFunctionArch arch_from_json(const Json& j) {
    ModeFunctionArch a;
    a.hidden_layers = j.at("hidden_layers").get<int>();
    a.width = j.at("width").get<int>();
    a.output_dim = j.at("output_dim").get<int>();
    a.first_omega = j.at("first_omega").get<double>();
    return a;
}

Json dataset_config_to_json(const DatasetConfig& c) {
    return Json{{"kind", field_kind_name(c.kind)},
                {"num_modes", c.num_modes},
                {"grid", c.grid},
                {"frames", c.frames},
                {"records", c.records},
                {"keep", c.keep},
                {"noise_std", c.noise_std},
                {"noise_model", noise_model_name(c.noise_model)},
                {"drop_odd_frames", c.drop_odd_frames},
                {"seed", c.seed}};
}

DatasetConfig dataset_config_from_json(const Json& j) {
    DatasetConfig c;
    c.kind = field_kind_from(j.at("kind").get<std::string>());
    c.num_modes = j.at("num_modes").get<int>();
    c.grid = j.at("grid").get<int>();
    c.frames = j.at("frames").get<int>();
    c.records = j.at("records").get<int>();
    c.keep = j.at("keep").get<double>();
    c.noise_std = j.at("noise_std").get<double>();
    c.noise_model = noise_model_from(j.at("noise_model").get<std::string>());
    c.drop_odd_frames = j.at("drop_odd_frames").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Json ftm_config_to_json(const FTMConfig& c) {
    return Json{{"ranks", c.ranks},
                {"arch", arch_to_json(c.arch)},
                {"beta", c.beta},
                {"ridge", c.ridge},
                {"epochs", c.epochs},
                {"latent_steps", c.latent_steps},
                {"frames_per_batch", c.frames_per_batch},
                {"lr", c.lr},
                {"holdout_fraction", c.holdout_fraction},
                {"divergence_factor", c.divergence_factor},
                {"seed", c.seed}};
}

FTMConfig ftm_config_from_json(const Json& j) {
    FTMConfig c;
    c.ranks = j.at("ranks").get<std::vector<int>>();
    c.arch = arch_from_json(j.at("arch"));
    c.beta = j.at("beta").get<double>();
    c.ridge = j.at("ridge").get<double>();
    c.epochs = j.at("epochs").get<int>();
    c.latent_steps = j.at("latent_steps").get<int>();
    c.frames_per_batch = j.at("frames_per_batch").get<int>();
    c.lr = j.at("lr").get<double>();
    c.holdout_fraction = j.at("holdout_fraction").get<double>();
    c.divergence_factor = j.at("divergence_factor").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

Json gpsd_config_to_json(const GPSDConfig& c) {
    return Json{{"hidden", c.hidden},
                {"sigma_data", c.sigma_data},
                {"gamma", c.gamma},
                {"noise", noise_kind_name(c.noise)},
                {"steps", c.steps},
                {"batch", c.batch},
                {"crop_len", c.crop_len},
                {"lr", c.lr},
                {"pmean", c.pmean},
                {"pstd", c.pstd},
                {"holdout_fraction", c.holdout_fraction},
                {"val_every", c.val_every},
                {"divergence_factor", c.divergence_factor},
                {"seed", c.seed}};
}

GPSDConfig gpsd_config_from_json(const Json& j) {
    GPSDConfig c;
    c.hidden = j.at("hidden").get<int>();
    c.sigma_data = j.at("sigma_data").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.noise = noise_kind_from(j.at("noise").get<std::string>());
    c.steps = j.at("steps").get<int>();
    c.batch = j.at("batch").get<int>();
    c.crop_len = j.at("crop_len").get<int>();
    c.lr = j.at("lr").get<double>();
    c.pmean = j.at("pmean").get<double>();
    c.pstd = j.at("pstd").get<double>();
    c.holdout_fraction = j.at("holdout_fraction").get<double>();
    c.val_every = j.at("val_every").get<int>();
    c.divergence_factor = j.at("divergence_factor").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void append(std::vector<double>& payload, const VectorXd& v) {
    payload.insert(payload.end(), v.data(), v.data() + v.size());
}

}  // namespace

void write_artifact(const std::string& path, const Artifact& art) {
    check_endianness();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, kFormatVersion);
    const std::string meta = art.meta.dump();
    write_raw(out, static_cast<std::uint64_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    write_raw(out, static_cast<std::uint64_t>(art.payload.size()));
    out.write(reinterpret_cast<const char*>(art.payload.data()),
              static_cast<std::streamsize>(art.payload.size() * sizeof(double)));
    if (!out) throw IoError("failed writing artifact: " + path);
}

Artifact read_artifact(const std::string& path, const std::string& expected_kind) {
    check_endianness();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open artifact: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("not an artifact file: " + path);
    }
    const auto version = read_raw<std::uint32_t>(in, path);
    if (version != kFormatVersion) {
        throw IoError("unsupported artifact version in " + path);
    }
    const auto meta_len = read_raw<std::uint64_t>(in, path);
    std::string meta_text(meta_len, '\0');
    in.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw IoError("truncated artifact file: " + path);

    Artifact art;
    try {
        art.meta = Json::parse(meta_text);
    } catch (const Json::parse_error& e) {
        throw IoError("corrupt artifact metadata in " + path + ": " + e.what());
    }
    const auto count = read_raw<std::uint64_t>(in, path);
    art.payload.resize(count);
    in.read(reinterpret_cast<char*>(art.payload.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw IoError("truncated artifact payload: " + path);

    if (!expected_kind.empty()) {
        const std::string kind = art.meta.value("kind", "");
        if (kind != expected_kind) {
            throw IoError("artifact kind mismatch in " + path + ": expected " + expected_kind +
                          ", found " + (kind.empty() ? "<none>" : kind));
        }
    }
    return art;
}

std::string config_digest(const Json& config) { return to_hex(fnv1a64(config.dump())); }

void write_json_file(const std::string& path, const Json& doc) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("failed writing: " + path);
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw IoError("invalid JSON in " + path + ": " + e.what());
    }
}

std::string artifact_digest(const Json& meta) { return meta.value("digest", ""); }

void save_dataset(const std::string& path, const Dataset& ds, const std::string& digest) {
    Artifact art;
    std::int64_t cells = 1;
    for (int k = 0; k < ds.config.num_modes; ++k) cells *= ds.config.grid;

    Json records = Json::array();
    for (const auto& rec : ds.records) {
        Json obs_counts = Json::array();
        for (const auto& row : rec.obs.rows) obs_counts.push_back(row.size());
        records.push_back(Json{{"param_count", rec.field.params.size()},
                               {"field_kind", field_kind_name(rec.field.kind)},
                               {"obs_counts", obs_counts}});
    }
    art.meta = Json{{"kind", "dataset"},
                    {"format_version", kFormatVersion},
                    {"digest", digest},
                    {"config", dataset_config_to_json(ds.config)},
                    {"cells_per_frame", cells},
                    {"records", records}};

    auto& p = art.payload;
    p.insert(p.end(), ds.times.begin(), ds.times.end());
    for (const auto& rec : ds.records) {
        p.insert(p.end(), rec.field.params.begin(), rec.field.params.end());
        p.push_back(rec.field_std);
        for (std::size_t m = 0; m < rec.obs.rows.size(); ++m) {
            for (const auto& ob : rec.obs.rows[m]) {
                p.push_back(ob.time);
                p.insert(p.end(), ob.coords.begin(), ob.coords.end());
                p.push_back(ob.value);
            }
        }
        for (double t : ds.times) append(p, field_on_lattice(rec.field, ds.config.grid, t));
    }
    write_artifact(path, art);
}

Dataset load_dataset(const std::string& path) {
    const Artifact art = read_artifact(path, "dataset");
    Dataset ds;
    ds.config = dataset_config_from_json(art.meta.at("config"));
    const auto frames = static_cast<std::size_t>(ds.config.frames);
    const auto cells = art.meta.at("cells_per_frame").get<std::size_t>();
    const int K = ds.config.num_modes;

    Cursor cur(art.payload);
    ds.times = cur.raw(frames);
    for (const auto& rec_meta : art.meta.at("records")) {
        FieldRecord rec;
        rec.field.kind = field_kind_from(rec_meta.at("field_kind").get<std::string>());
        rec.field.num_modes = K;
        rec.field.params = cur.raw(rec_meta.at("param_count").get<std::size_t>());
        rec.field_std = cur.scalar();
        rec.obs.times = ds.times;
        const auto obs_counts = rec_meta.at("obs_counts").get<std::vector<std::size_t>>();
        if (obs_counts.size() != frames) throw IoError("dataset record frame count mismatch");
        rec.obs.rows.resize(frames);
        for (std::size_t m = 0; m < frames; ++m) {
            rec.obs.rows[m].reserve(obs_counts[m]);
            for (std::size_t i = 0; i < obs_counts[m]; ++i) {
                Observation ob;
                ob.time = cur.scalar();
                const VectorXd coords = cur.vector(static_cast<std::size_t>(K));
                ob.coords.assign(coords.data(), coords.data() + coords.size());
                ob.value = cur.scalar();
                rec.obs.rows[m].push_back(std::move(ob));
            }
        }
        cur.skip(frames * cells);
        rec.obs.validate(K);
        ds.records.push_back(std::move(rec));
    }
    cur.done();
    return ds;
}

void save_ftm(const std::string& path, const TrainedFTM& model, const std::string& digest) {
    Artifact art;
    Json mode_params = Json::array();
    std::vector<Json> archs;
    for (int k = 0; k < model.latents.num_modes(); ++k) {
        mode_params.push_back(model.latents.mode(k).num_params());
        archs.push_back(arch_to_json(model.latents.mode(k).arch()));
    }
    Json record_frames = Json::array();
    for (const auto& seq : model.cores) record_frames.push_back(seq.times.size());

    art.meta = Json{{"kind", "ftm"},
                    {"format_version", kFormatVersion},
                    {"digest", digest},
                    {"config", ftm_config_to_json(model.config)},
                    {"archs", archs},
                    {"mode_params", mode_params},
                    {"record_frames", record_frames},
                    {"train_loss_len", model.train_loss.size()},
                    {"holdout_loss_len", model.holdout_loss.size()}};

    auto& p = art.payload;
    append(p, model.latents.gather_params());
    p.push_back(model.standardize.mean);
    p.push_back(model.standardize.std);
    p.insert(p.end(), model.train_loss.begin(), model.train_loss.end());
    p.insert(p.end(), model.holdout_loss.begin(), model.holdout_loss.end());
    for (const auto& seq : model.cores) {
        p.insert(p.end(), seq.times.begin(), seq.times.end());
        const MatrixXd stacked = seq.stacked();
        for (Eigen::Index m = 0; m < stacked.rows(); ++m) {
            const VectorXd row = stacked.row(m);
            append(p, row);
        }
    }
    write_artifact(path, art);
}

TrainedFTM load_ftm(const std::string& path) {
    const Artifact art = read_artifact(path, "ftm");
    const FTMConfig cfg = ftm_config_from_json(art.meta.at("config"));

    std::vector<ModeFunctionArch> archs;
    for (const auto& j : art.meta.at("archs")) archs.push_back(arch_from_json(j));
    Rng rng(cfg.seed);
    TrainedFTM model{LatentFunctionSet(archs, rng), {}, {}, {}, {}, cfg};

    Cursor cur(art.payload);
    std::size_t total_params = 0;
    for (const auto& n : art.meta.at("mode_params")) total_params += n.get<std::size_t>();
    model.latents.scatter_params(cur.vector(total_params));
    model.standardize.mean = cur.scalar();
    model.standardize.std = cur.scalar();
    model.train_loss = cur.raw(art.meta.at("train_loss_len").get<std::size_t>());
    model.holdout_loss = cur.raw(art.meta.at("holdout_loss_len").get<std::size_t>());

    std::size_t per_frame = 1;
    for (int r : cfg.ranks) per_frame *= static_cast<std::size_t>(r);
    for (const auto& frames_json : art.meta.at("record_frames")) {
        const auto frames = frames_json.get<std::size_t>();
        const std::vector<double> times = cur.raw(frames);
        MatrixXd stacked(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(per_frame));
        for (std::size_t m = 0; m < frames; ++m) {
            stacked.row(static_cast<Eigen::Index>(m)) = cur.vector(per_frame).transpose();
        }
        model.cores.push_back(CoreSequence::from_stacked(times, cfg.ranks, stacked));
    }
    cur.done();
    return model;
}

void save_gpsd(const std::string& path, const TrainedGPSD& model, const std::string& digest) {
    Artifact art;
    art.meta = Json{{"kind", "gpsd"},
                    {"format_version", kFormatVersion},
                    {"digest", digest},
                    {"config", gpsd_config_to_json(model.config)},
                    {"core_dim", model.denoiser.arch().core_dim},
                    {"hidden", model.denoiser.arch().hidden},
                    {"sigma_data", model.denoiser.sigma_data()},
                    {"param_count", model.denoiser.params().size()},
                    {"train_loss_len", model.train_loss.size()},
                    {"val_loss_len", model.val_loss.size()}};
    auto& p = art.payload;
    append(p, model.denoiser.params());
    p.insert(p.end(), model.train_loss.begin(), model.train_loss.end());
    p.insert(p.end(), model.val_loss.begin(), model.val_loss.end());
    write_artifact(path, art);
}

TrainedGPSD load_gpsd(const std::string& path) {
    const Artifact art = read_artifact(path, "gpsd");
    const GPSDConfig cfg = gpsd_config_from_json(art.meta.at("config"));
    DenoiserArch arch;
    arch.core_dim = art.meta.at("core_dim").get<int>();
    arch.hidden = art.meta.at("hidden").get<int>();
    Rng rng(cfg.seed);
    TrainedGPSD model{Denoiser(arch, art.meta.at("sigma_data").get<double>(), rng), cfg, {}, {}};

    Cursor cur(art.payload);
    const auto param_count = art.meta.at("param_count").get<std::size_t>();
    if (static_cast<std::size_t>(model.denoiser.params().size()) != param_count) {
        throw IoError("denoiser parameter count mismatch in " + path);
    }
    model.denoiser.params() = cur.vector(param_count);
    model.train_loss = cur.raw(art.meta.at("train_loss_len").get<std::size_t>());
    model.val_loss = cur.raw(art.meta.at("val_loss_len").get<std::size_t>());
    cur.done();
    return model;
}

void save_samples(const std::string& path, const SampleSet& s) {
    Artifact art;
    Json seq_frames = Json::array();
    for (const auto& seq : s.sequences) seq_frames.push_back(seq.times.size());
    art.meta = s.meta;
    art.meta["kind"] = "samples";
    art.meta["format_version"] = kFormatVersion;
    art.meta["ranks"] = s.ranks;
    art.meta["sequence_frames"] = seq_frames;

    auto& p = art.payload;
    for (const auto& seq : s.sequences) {
        p.insert(p.end(), seq.times.begin(), seq.times.end());
        const MatrixXd stacked = seq.stacked();
        for (Eigen::Index m = 0; m < stacked.rows(); ++m) {
            const VectorXd row = stacked.row(m);
            append(p, row);
        }
    }
    write_artifact(path, art);
}

SampleSet load_samples(const std::string& path) {
    const Artifact art = read_artifact(path, "samples");
    SampleSet s;
    s.meta = art.meta;
    s.ranks = art.meta.at("ranks").get<std::vector<int>>();
    std::size_t per_frame = 1;
    for (int r : s.ranks) per_frame *= static_cast<std::size_t>(r);

    Cursor cur(art.payload);
    for (const auto& frames_json : art.meta.at("sequence_frames")) {
        const auto frames = frames_json.get<std::size_t>();
        const std::vector<double> times = cur.raw(frames);
        MatrixXd stacked(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(per_frame));
        for (std::size_t m = 0; m < frames; ++m) {
            stacked.row(static_cast<Eigen::Index>(m)) = cur.vector(per_frame).transpose();
        }
        s.sequences.push_back(CoreSequence::from_stacked(times, s.ranks, stacked));
    }
    cur.done();
    return s;
}

}  // namespace ftdiff
