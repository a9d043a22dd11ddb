#include "dbigan/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "dbigan/checkpoint.hpp"
#include "dbigan/error.hpp"
#include "dbigan/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dbigan {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> names(known.begin(), known.end());
    for (const auto& [k, v] : j.items()) {
        if (!names.count(k)) throw ConfigError(where + "." + k + ": unknown field");
    }
}

template <class T>
void get_to(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

json shape_json(const ImageShape& s) { return json::array({s.height, s.width, s.channels}); }

ImageShape shape_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [height, width, channels]");
    ImageShape s;
    try {
        s.height = j[0].get<std::size_t>();
        s.width = j[1].get<std::size_t>();
        s.channels = j[2].get<std::size_t>();
        s.validate();
    } catch (const json::exception&) {
        throw ConfigError(where + ": entries must be positive integers");
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return s;
}

json synthetic_json(const SyntheticSpec& s) {
    return json{{"height", s.shape.height},
                {"width", s.shape.width},
                {"min_extent", s.min_extent},
                {"max_extent", s.max_extent},
                {"stroke", s.stroke},
                {"intensity_jitter", s.intensity_jitter},
                {"pixel_noise", s.pixel_noise},
                {"train_normal", s.train_normal},
                {"train_abnormal", s.train_abnormal},
                {"test_normal", s.test_normal},
                {"test_abnormal", s.test_abnormal},
                {"seed", s.seed}};
}

SyntheticSpec synthetic_from_json(const json& j) {
    const std::string w = "dataset.synthetic";
    check_keys(j,
               {"height", "width", "min_extent", "max_extent", "stroke", "intensity_jitter", "pixel_noise",
                "train_normal", "train_abnormal", "test_normal", "test_abnormal", "seed"},
               w);
    SyntheticSpec s;
    get_to(j, "height", s.shape.height, w);
    get_to(j, "width", s.shape.width, w);
    get_to(j, "min_extent", s.min_extent, w);
    get_to(j, "max_extent", s.max_extent, w);
    get_to(j, "stroke", s.stroke, w);
    get_to(j, "intensity_jitter", s.intensity_jitter, w);
    get_to(j, "pixel_noise", s.pixel_noise, w);
    get_to(j, "train_normal", s.train_normal, w);
    get_to(j, "train_abnormal", s.train_abnormal, w);
    get_to(j, "test_normal", s.test_normal, w);
    get_to(j, "test_abnormal", s.test_abnormal, w);
    get_to(j, "seed", s.seed, w);
    return s;
}

std::string rename_prefix(std::string msg) {
    // Model-block fields are validated by the trainer under its own names.
    for (auto [from, to] : {std::pair<std::string, std::string>{"train.architecture.", "model."},
                            {"train.d_z", "model.d_z"},
                            {"train.d_c", "model.d_c"}}) {
        if (msg.rfind(from, 0) == 0) return to + msg.substr(from.size());
    }
    return msg;
}

} // namespace

json to_json(const ExperimentConfig& c) {
    json train = to_json(c.train);
    const json arch = train["architecture"];
    train.erase("architecture");
    train.erase("d_z");
    train.erase("d_c");
    json model{{"d_z", c.train.d_z}, {"d_c", c.train.d_c}, {"image", c.image ? shape_json(*c.image) : json()}};
    for (const auto& [k, v] : arch.items()) model[k] = v;
    json dataset{{"name", c.dataset.name},
                 {"root", c.dataset.root},
                 {"anomaly_class", c.dataset.anomaly_class ? json(*c.dataset.anomaly_class) : json()},
                 {"synthetic", synthetic_json(c.dataset.synthetic)}};
    return json{{"format_version", c.format_version},
                {"dataset", dataset},
                {"model", model},
                {"train", train},
                {"score", to_json(c.score)},
                {"diagnostics",
                 {{"grid_samples", c.diagnostics.grid_samples},
                  {"projection_samples", c.diagnostics.projection_samples},
                  {"projection_seed", c.diagnostics.projection_seed}}},
                {"output_dir", c.output_dir}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
    check_keys(j, {"format_version", "dataset", "model", "train", "score", "diagnostics", "output_dir"}, "config");
    ExperimentConfig c;
    get_to(j, "format_version", c.format_version, "config");
    if (c.format_version != kExperimentFormatVersion) {
        throw ConfigError("config.format_version: unsupported version " + std::to_string(c.format_version));
    }
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        check_keys(d, {"name", "root", "anomaly_class", "synthetic"}, "dataset");
        get_to(d, "name", c.dataset.name, "dataset");
        get_to(d, "root", c.dataset.root, "dataset");
        if (d.contains("anomaly_class") && !d["anomaly_class"].is_null()) {
            int a = 0;
            get_to(d, "anomaly_class", a, "dataset");
            c.dataset.anomaly_class = a;
        }
        if (d.contains("synthetic")) c.dataset.synthetic = synthetic_from_json(d["synthetic"]);
    }
    static const std::set<std::string> names{"synthetic", "mnist", "cifar10", "folder"};
    if (!names.count(c.dataset.name)) {
        throw ConfigError("dataset.name: expected synthetic, mnist, cifar10 or folder, got '" + c.dataset.name + "'");
    }

    json train = j.value("train", json::object());
    if (!train.is_object()) throw ConfigError("train: expected an object");
    for (const char* k : {"d_z", "d_c", "architecture"}) {
        if (train.contains(k)) throw ConfigError(std::string("train.") + k + ": belongs in the model block");
    }
    if (j.contains("model")) {
        const json& m = j["model"];
        check_keys(m, {"d_z", "d_c", "image", "base_channels", "dense_units", "latent_units", "encoder_g_conditioned"},
                   "model");
        if (m.contains("d_z")) train["d_z"] = m["d_z"];
        if (m.contains("d_c")) train["d_c"] = m["d_c"];
        json arch = json::object();
        for (const char* k : {"base_channels", "dense_units", "latent_units", "encoder_g_conditioned"}) {
            if (m.contains(k)) arch[k] = m[k];
        }
        train["architecture"] = arch;
        if (m.contains("image") && !m["image"].is_null()) c.image = shape_from_json(m["image"], "model.image");
    }
    try {
        c.train = train_config_from_json(train);
    } catch (const ConfigError& e) {
        throw ConfigError(rename_prefix(e.what()));
    }
    if (j.contains("score")) c.score = score_config_from_json(j["score"]);
    if (j.contains("diagnostics")) {
        const json& g = j["diagnostics"];
        check_keys(g, {"grid_samples", "projection_samples", "projection_seed"}, "diagnostics");
        get_to(g, "grid_samples", c.diagnostics.grid_samples, "diagnostics");
        get_to(g, "projection_samples", c.diagnostics.projection_samples, "diagnostics");
        get_to(g, "projection_seed", c.diagnostics.projection_seed, "diagnostics");
        if (c.diagnostics.grid_samples == 0) throw ConfigError("diagnostics.grid_samples: must be >= 1");
        if (c.diagnostics.projection_samples < 10) throw ConfigError("diagnostics.projection_samples: must be >= 10");
    }
    get_to(j, "output_dir", c.output_dir, "config");
    if (c.dataset.name == "synthetic") {
        try {
            validate_synthetic_spec(c.dataset.synthetic);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("dataset.synthetic: ") + e.what());
        }
        if (c.image && !(*c.image == c.dataset.synthetic.shape)) {
            throw ConfigError("model.image: synthetic images are " +
                              std::to_string(c.dataset.synthetic.shape.height) + "x" +
                              std::to_string(c.dataset.synthetic.shape.width) + "x1");
        }
    }
    return c;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::stringstream ss(key);
    std::vector<std::string> parts;
    for (std::string p; std::getline(ss, p, '.');) {
        if (p.empty()) throw ConfigError("override '" + assignment + "': empty path component");
        parts.push_back(p);
    }
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override '" + key + "': " + parts[i] + " is not an object");
        node = &(*node)[parts[i]];
        if (node->is_null()) *node = json::object();
    }
    if (!node->is_object()) throw ConfigError("override '" + key + "': parent is not an object");
    (*node)[parts.back()] = value;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return j;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
    json j = path.empty() ? json::object() : read_json_file(path);
    for (const auto& o : overrides) apply_override(j, o);
    return experiment_config_from_json(j);
}

fs::path dataset_root(const DatasetSpec& spec) {
    if (const char* env = std::getenv(kDataRootEnv); env && *env) return fs::path(env);
    return fs::path(spec.root);
}

int anomaly_class_of(const DatasetSpec& spec) {
    if (spec.anomaly_class) return *spec.anomaly_class;
    return spec.name == "synthetic" ? 1 : 0;
}

DatasetHandle load_dataset(const ExperimentConfig& config) {
    const DatasetSpec& spec = config.dataset;
    DatasetHandle h;
    if (spec.name == "synthetic") {
        h = make_synthetic(spec.synthetic);
    } else {
        const fs::path root = dataset_root(spec);
        if (root.empty() || !fs::is_directory(root)) {
            throw ConfigError("dataset.root: directory '" + root.string() + "' does not exist (set it in the config or " +
                              kDataRootEnv + ")");
        }
        if (spec.name == "folder") {
            h = load_folder(root, config.image.value_or(ImageShape{32, 32, 1}));
        } else {
            h = load_benchmark(spec.name, root);
        }
    }
    if (config.image && !(*config.image == h.train.shape)) {
        throw ConfigError("model.image: does not match the dataset's image shape");
    }
    return h;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string canonical_config_text(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kConfigName = "config.json";

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

json file_inventory(const fs::path& run_dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(run_dir)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), run_dir);
        if (rel == kManifestName || rel.extension() == ".tmp") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
    json out = json::array();
    for (const auto& rel : files) {
        out.push_back({{"path", rel.generic_string()},
                       {"bytes", fs::file_size(run_dir / rel)},
                       {"sha256", sha256_file(run_dir / rel)}});
    }
    return out;
}

} // namespace

json update_run_manifest(const fs::path& run_dir, const ExperimentConfig& config, const std::string& command,
                         const std::string& started_at, const json& details) {
    const fs::path path = run_dir / kManifestName;
    json m = fs::exists(path) ? read_json_file(path) : json::object();
    const std::string text = canonical_config_text(config);
    m["format_version"] = kExperimentFormatVersion;
    m["config"] = to_json(config);
    m["config_hash"] = git_blob_id(text);
    m["seed"] = config.train.seed;
    m["scheme"] = to_string(config.train.scheme);
    if (!m.contains("started_at")) m["started_at"] = started_at;
    const std::string finished = utc_timestamp();
    m["finished_at"] = finished;
    if (!m.contains("history")) m["history"] = json::array();
    m["history"].push_back({{"command", command}, {"started_at", started_at}, {"finished_at", finished},
                            {"details", details}});
    m["files"] = file_inventory(run_dir);
    write_text(path, m.dump(2) + "\n");
    return m;
}

std::vector<ManifestIssue> verify_run_manifest(const fs::path& run_dir) {
    std::vector<ManifestIssue> issues;
    const fs::path path = run_dir / kManifestName;
    if (!fs::exists(path)) return {{kManifestName, "missing"}};
    const json m = read_json_file(path);
    std::set<std::string> listed;
    for (const auto& f : m.value("files", json::array())) {
        const std::string rel = f.at("path").get<std::string>();
        listed.insert(rel);
        if (!fs::exists(run_dir / rel)) {
            issues.push_back({rel, "listed but missing"});
        } else if (sha256_file(run_dir / rel) != f.at("sha256").get<std::string>()) {
            issues.push_back({rel, "checksum mismatch"});
        }
    }
    for (const auto& f : file_inventory(run_dir)) {
        const std::string rel = f.at("path").get<std::string>();
        if (!listed.count(rel)) issues.push_back({rel, "not listed in manifest"});
    }
    if (fs::exists(run_dir / kConfigName)) {
        if (git_blob_id(read_text(run_dir / kConfigName)) != m.value("config_hash", "")) {
            issues.push_back({kConfigName, "config hash mismatch"});
        }
        if (read_json_file(run_dir / kConfigName) != m.value("config", json())) {
            issues.push_back({kConfigName, "config echo differs from config file"});
        }
    } else {
        issues.push_back({kConfigName, "missing"});
    }
    return issues;
}

fs::path latest_checkpoint(const fs::path& run_dir) {
    fs::path best;
    if (fs::is_directory(run_dir)) {
        for (const auto& e : fs::directory_iterator(run_dir)) {
            const std::string name = e.path().filename().string();
            if (e.is_regular_file() && name.rfind("ckpt_", 0) == 0 && e.path().extension().empty()) {
                if (best.empty() || name > best.filename().string()) best = e.path();
            }
        }
    }
    if (best.empty()) throw ConfigError("no checkpoint found in " + run_dir.string());
    return best;
}

ExperimentConfig load_run_config(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw ConfigError("run directory " + run_dir.string() + " does not exist");
    return experiment_config_from_json(read_json_file(run_dir / kConfigName));
}

void prepare_run_dir(const fs::path& run_dir, bool force) {
    if (fs::exists(run_dir)) {
        if (!fs::is_directory(run_dir)) throw ConfigError(run_dir.string() + " exists and is not a directory");
        if (!fs::is_empty(run_dir)) {
            if (!force) throw ConfigError("run directory " + run_dir.string() + " already exists (use --force)");
            fs::remove_all(run_dir);
        }
    }
    fs::create_directories(run_dir);
}

TrainRun cmd_train(const ExperimentConfig& config, const fs::path& run_dir, bool force, std::ostream* log) {
    const std::string started = utc_timestamp();
    const DatasetHandle data = load_dataset(config);
    const ProtocolSplits protocol = build_protocol(data, anomaly_class_of(config.dataset));
    for (const auto& nc : network_configs_for(config.train, protocol.train.shape)) Network{nc};
    prepare_run_dir(run_dir, force);
    write_text(run_dir / kConfigName, canonical_config_text(config));
    json dm = dataset_manifest(data);
    dm["protocol"] = {{"anomaly_class", protocol.spec.anomaly_class},
                      {"normal_classes", protocol.spec.normal_classes},
                      {"train_samples", protocol.train.size()},
                      {"test_samples", protocol.test.size()}};
    write_json_file(run_dir / "dataset.json", dm);

    TrainOptions opts;
    opts.out_dir = run_dir;
    const std::size_t spe = steps_per_epoch(protocol.train.size(), config.train.batch_size);
    if (log) {
        opts.on_step = [&](const MetricsRow& row) {
            if (row.step % spe == 0) {
                *log << "epoch " << row.step / spe << "/" << config.train.epochs << "  step " << row.step
                     << "  adv_d " << row.losses.adv_d << "  adv_g " << row.losses.adv_g << "  cyc "
                     << row.losses.cyc << "  pil " << row.losses.pil << '\n';
            }
        };
    }
    TrainResult result = train(protocol.train, config.train, opts);
    fs::path final_ckpt;
    if (result.checkpoints.empty()) {
        final_ckpt = run_dir / checkpoint_filename(result.state.step);
        save_checkpoint(final_ckpt, result.state, json{{"train_config", to_json(config.train)}});
    } else {
        final_ckpt = result.checkpoints.back();
    }
    TrainRun run{run_dir, final_ckpt, result.metrics.size(), result.state.parameter_count()};
    json per_net = json::object();
    for (NetId id : kAllNets) {
        if (result.state.has(id)) per_net[to_string(id)] = result.state.net(id).parameter_count();
    }
    update_run_manifest(run_dir, config, "train", started,
                        {{"steps", run.steps},
                         {"final_checkpoint", final_ckpt.filename().string()},
                         {"parameter_count", run.parameter_count},
                         {"parameter_counts", per_net}});
    return run;
}

namespace {

struct LoadedRun {
    ExperimentConfig config;
    fs::path checkpoint;
    ModelState state;
    ProtocolSplits protocol;
};

LoadedRun load_run(const fs::path& run_dir) {
    LoadedRun r;
    r.config = load_run_config(run_dir);
    r.checkpoint = latest_checkpoint(run_dir);
    r.state = load_checkpoint(r.checkpoint).state;
    r.protocol = build_protocol(load_dataset(r.config), anomaly_class_of(r.config.dataset));
    return r;
}

} // namespace

EvalRun cmd_eval(const fs::path& run_dir, const std::string& split) {
    const std::string started = utc_timestamp();
    if (split != "test" && split != "train") throw ConfigError("split must be 'test' or 'train'");
    LoadedRun run = load_run(run_dir);
    const Dataset& data = split == "test" ? run.protocol.test : run.protocol.train;
    const std::vector<Label> labels =
        split == "test" ? run.protocol.test_labels : std::vector<Label>(data.size(), Label::Normal);
    const auto records = score_images(run.state, data.images, data.ids, labels, run.config.score);

    EvalRun out;
    out.scores_csv = run_dir / ("scores_" + split + ".csv");
    write_scores_csv(out.scores_csv, records);
    const json echo{{"checkpoint", run.checkpoint.filename().string()},
                    {"step", run.state.step},
                    {"split", split},
                    {"dataset", run.config.dataset.name},
                    {"anomaly_class", run.protocol.spec.anomaly_class},
                    {"scheme", to_string(run.config.train.scheme)},
                    {"score", to_json(run.config.score)}};
    out.report = evaluate_scores(records, echo);
    out.report_json = run_dir / ("eval_" + split + ".json");
    write_json_file(out.report_json, to_json(out.report));
    update_run_manifest(run_dir, run.config, "eval", started, {{"split", split}, {"auroc", to_json(out.report)["auroc"]}});
    return out;
}

fs::path cmd_score(const fs::path& run_dir, const fs::path& images) {
    const std::string started = utc_timestamp();
    if (images.empty()) {
        LoadedRun run = load_run(run_dir);
        const auto records = score_images(run.state, run.protocol.test.images, run.protocol.test.ids,
                                          run.protocol.test_labels, run.config.score);
        const fs::path out = run_dir / "scores_test.csv";
        write_scores_csv(out, records);
        update_run_manifest(run_dir, run.config, "score", started, {{"input", "test split"}});
        return out;
    }
    const ExperimentConfig config = load_run_config(run_dir);
    const fs::path ckpt = latest_checkpoint(run_dir);
    const ModelState state = load_checkpoint(ckpt).state;
    const Dataset d = load_image_files(images, state.image());
    const auto records =
        score_images(state, d.images, d.ids, std::vector<Label>(d.size(), Label::Unknown), config.score);
    const fs::path out = run_dir / "scores_images.csv";
    write_scores_csv(out, records);
    update_run_manifest(run_dir, config, "score", started, {{"input", fs::absolute(images).string()}});
    return out;
}

DiagnosticsRun cmd_diagnostics(const fs::path& run_dir) {
    const std::string started = utc_timestamp();
    LoadedRun run = load_run(run_dir);
    const Dataset& test = run.protocol.test;
    const auto& labels = run.protocol.test_labels;

    // Grid: an even split of normal and abnormal samples, in split order.
    const std::size_t k = std::min(run.config.diagnostics.grid_samples, test.size());
    std::vector<std::size_t> normal_rows, abnormal_rows;
    for (std::size_t i = 0; i < test.size(); ++i) (labels[i] == Label::Abnormal ? abnormal_rows : normal_rows).push_back(i);
    std::vector<std::size_t> grid_rows;
    const std::size_t want_abnormal = abnormal_rows.empty() ? 0 : std::min(abnormal_rows.size(), std::max<std::size_t>(1, k / 2));
    const std::size_t want_normal = std::min(normal_rows.size(), k - want_abnormal);
    grid_rows.insert(grid_rows.end(), normal_rows.begin(), normal_rows.begin() + static_cast<std::ptrdiff_t>(want_normal));
    grid_rows.insert(grid_rows.end(), abnormal_rows.begin(),
                     abnormal_rows.begin() + static_cast<std::ptrdiff_t>(want_abnormal));
    auto pick = [&](const std::vector<std::size_t>& rows, Tensor& x, std::vector<std::string>& ids,
                    std::vector<Label>& lab) {
        x = test.images.gather_batch(rows);
        ids.clear();
        lab.clear();
        for (std::size_t r : rows) {
            ids.push_back(test.ids[r]);
            lab.push_back(labels[r]);
        }
    };
    DiagnosticsRun out;
    Tensor x;
    std::vector<std::string> ids;
    std::vector<Label> lab;
    pick(grid_rows, x, ids, lab);
    const fs::path grid = run_dir / "reconstruction_grid.png";
    reconstruction_grid(run.state, x, ids, lab, grid);
    out.files.push_back(grid);
    out.files.push_back(fs::path(grid).replace_extension(".json"));

    // Projection: a seeded subset of the test split.
    const std::size_t m = std::min(run.config.diagnostics.projection_samples, test.size());
    auto order = shuffled_order(test.size(), run.config.diagnostics.projection_seed, 0);
    order.resize(m);
    std::sort(order.begin(), order.end());
    pick(order, x, ids, lab);
    ProjectionOptions po;
    po.seed = run.config.diagnostics.projection_seed;
    std::vector<EncoderChoice> encoders{EncoderChoice::Er};
    if (run.state.has(NetId::Eg)) encoders.push_back(EncoderChoice::Eg);
    json methods = json::object();
    for (EncoderChoice e : encoders) {
        const fs::path csv = run_dir / ("projection_" + to_string(e) + ".csv");
        const fs::path png = run_dir / ("projection_" + to_string(e) + ".png");
        methods[to_string(e)] = latent_projection(run.state, x, ids, lab, e, po, csv, png).method;
        out.files.push_back(csv);
        out.files.push_back(png);
    }
    update_run_manifest(run_dir, run.config, "diagnostics", started,
                        {{"grid_samples", grid_rows.size()}, {"projection_samples", m}, {"projection_method", methods}});
    return out;
}

SweepAxis parse_sweep(const std::string& text, const ExperimentConfig& base) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
        throw ConfigError("sweep '" + text + "': expected key=v1,v2,...");
    }
    SweepAxis axis;
    axis.path = text.substr(0, eq);
    if (axis.path == "dz" || axis.path == "d_z") axis.path = "model.d_z";
    if (axis.path == "anomaly_class") axis.path = "dataset.anomaly_class";
    const std::string values = text.substr(eq + 1);
    if (values == "all") {
        if (axis.path != "dataset.anomaly_class") throw ConfigError("sweep: 'all' is only valid for anomaly_class");
        const std::size_t n = base.dataset.name == "synthetic" ? 2
                              : base.dataset.name == "folder"  ? load_dataset(base).class_names.size()
                                                               : 10;
        for (std::size_t c = 0; c < n; ++c) axis.values.push_back(static_cast<int>(c));
        return axis;
    }
    std::stringstream ss(values);
    for (std::string v; std::getline(ss, v, ',');) {
        if (v.empty()) throw ConfigError("sweep '" + text + "': empty value");
        json parsed = json::parse(v, nullptr, false);
        axis.values.push_back(parsed.is_discarded() ? json(v) : parsed);
    }
    return axis;
}

SweepResult cmd_sweep(const ExperimentConfig& base, const SweepAxis& axis, const fs::path& out_dir, bool force,
                      std::ostream* log) {
    if (axis.values.empty()) throw ConfigError("sweep has no values");
    const std::string started = utc_timestamp();
    // Resolve every config before touching the disk so a bad value fails early.
    std::vector<ExperimentConfig> configs;
    const std::string leaf = axis.path.substr(axis.path.rfind('.') + 1);
    std::vector<std::string> names;
    for (const auto& v : axis.values) {
        json doc = to_json(base);
        apply_override(doc, axis.path + "=" + v.dump());
        configs.push_back(experiment_config_from_json(doc));
        names.push_back(leaf + "_" + (v.is_string() ? v.get<std::string>() : v.dump()));
    }
    prepare_run_dir(out_dir, force);
    SweepResult result;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (log) *log << "sweep run " << names[i] << '\n';
        SweepEntry e;
        e.name = names[i];
        e.value = axis.values[i];
        e.run_dir = out_dir / names[i];
        configs[i].output_dir = out_dir.string();
        const TrainRun tr = cmd_train(configs[i], e.run_dir, false, log);
        e.parameter_count = tr.parameter_count;
        e.report = cmd_eval(e.run_dir).report;
        result.entries.push_back(std::move(e));
    }
    const std::vector<std::string> cols{"a_x", "d_x_anomaly", "l_g", "l_d"};
    for (const auto& c : cols) {
        double s = 0.0;
        for (const auto& e : result.entries) s += e.report.auroc.at(c);
        result.average_auroc[c] = s / static_cast<double>(result.entries.size());
    }
    std::ostringstream csv;
    csv.precision(10);
    csv << "run," << leaf << ",auroc_a_x,auroc_d_x_anomaly,auroc_l_g,auroc_l_d,parameter_count\n";
    json rows = json::array();
    for (const auto& e : result.entries) {
        csv << e.name << ',' << (e.value.is_string() ? e.value.get<std::string>() : e.value.dump());
        for (const auto& c : cols) csv << ',' << e.report.auroc.at(c);
        csv << ',' << e.parameter_count << '\n';
        rows.push_back({{"run", e.name}, {"value", e.value}, {"auroc", e.report.auroc},
                        {"parameter_count", e.parameter_count}});
    }
    csv << "average,";
    for (const auto& c : cols) csv << ',' << result.average_auroc.at(c);
    csv << ",\n";
    result.summary_csv = out_dir / "sweep_summary.csv";
    write_text(result.summary_csv, csv.str());
    write_json_file(out_dir / "sweep_summary.json",
                    json{{"axis", axis.path},
                         {"values", axis.values},
                         {"runs", rows},
                         {"average", result.average_auroc},
                         {"started_at", started},
                         {"finished_at", utc_timestamp()}});
    return result;
}

} // namespace dbigan
