// SPDX-License-Identifier: Apache-2.0
#include "prospector/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "prospector/corpus.hpp"
#include "prospector/detect.hpp"
#include "prospector/digest.hpp"
#include "prospector/fingerprint.hpp"
#include "prospector/frontends.hpp"
#include "prospector/metrics.hpp"
#include "prospector/optscan.hpp"

namespace prospector {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int k_inventory_version = 1;
constexpr int k_models_version = 1;
constexpr std::string_view k_analysis_version = "analysis/1";

/// Frontend preference when one entry validates for several frameworks.
constexpr std::string_view k_frontend_priority[] = {"tflite", "onnx", "caffe", "ncnn", "native"};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Io, fmt::format("{}: {}", path.string(), e.what()));
    }
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::int64_t jobs, Fn fn) {
    const auto workers = static_cast<std::size_t>(std::clamp<std::int64_t>(jobs, 1, static_cast<std::int64_t>(std::max<std::size_t>(n, 1))));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    auto loop = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    if (workers <= 1) {
        loop();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(loop);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

std::string lower_ext(const std::string& name) {
    auto dot = name.rfind('.');
    auto slash = name.rfind('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return {};
    std::string ext = name.substr(dot);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

std::string strip_ext(const std::string& name) {
    auto dot = name.rfind('.');
    auto slash = name.rfind('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return name;
    return name.substr(0, dot);
}

// ---------------------------------------------------------------------------
// Record serialization

json to_json(const ApiHit& h) {
    return {{"vendor", to_string(h.vendor)},
            {"pattern", h.matched_string},
            {"source", to_string(h.source)},
            {"entry", h.entry}};
}

ApiHit api_hit_from_json(const json& j, const std::string& package_id) {
    ApiHit h;
    h.package_id = package_id;
    auto vendor = api_vendor_from_string(j.at("vendor").get<std::string>());
    if (!vendor) throw Error(ErrorCode::Io, "inventory: unknown vendor " + j.at("vendor").get<std::string>());
    h.vendor = *vendor;
    h.matched_string = j.at("pattern").get<std::string>();
    h.source = j.at("source").get<std::string>() == "native_lib" ? HitSource::NativeLib : HitSource::DexStrings;
    h.entry = j.at("entry").get<std::string>();
    return h;
}

json to_json(const MarkedLayers& m) { return {{"present", m.present}, {"layers", m.layers}}; }

json to_json(const OptimizationReport& o) {
    return {{"clustering", to_json(o.clustering)},
            {"pruning", to_json(o.pruning)},
            {"quantization",
             {{"dequantize_layers", o.quantization.dequantize_layers},
              {"int8_weight_fraction", o.quantization.int8_weight_fraction},
              {"int8_activation", o.quantization.int8_activation}}},
            {"sparsity", o.sparsity ? json(*o.sparsity) : json(nullptr)}};
}

OptimizationReport optimization_from_json(const json& j, const std::string& model_id) {
    OptimizationReport o;
    o.model_id = model_id;
    o.clustering = {j.at("clustering").at("present").get<bool>(), j["clustering"].at("layers").get<std::vector<std::string>>()};
    o.pruning = {j.at("pruning").at("present").get<bool>(), j["pruning"].at("layers").get<std::vector<std::string>>()};
    const auto& q = j.at("quantization");
    o.quantization.dequantize_layers = q.at("dequantize_layers").get<std::int64_t>();
    o.quantization.int8_weight_fraction = q.at("int8_weight_fraction").get<double>();
    o.quantization.int8_activation = q.at("int8_activation").get<bool>();
    if (!j.at("sparsity").is_null()) o.sparsity = j["sparsity"].get<double>();
    return o;
}

json to_json(const ModelStats& s) {
    json layers = json::array();
    for (const auto& l : s.per_layer) {
        layers.push_back({{"node", l.node},
                          {"name", l.name},
                          {"op", l.op.str()},
                          {"macs", l.macs},
                          {"flops", l.flops},
                          {"params", l.params},
                          {"out_shape", l.out_shape ? json(*l.out_shape) : json(nullptr)}});
    }
    return {{"total_macs", s.total_macs},
            {"total_flops", s.total_flops},
            {"total_params", s.total_params},
            {"incomplete", s.incomplete},
            {"unknown_nodes", s.unknown_nodes},
            {"layer_histogram", s.layer_histogram},
            {"per_layer", layers}};
}

json to_json(const FingerprintRecord& f) {
    json layers = json::array();
    for (const auto& l : f.layers) layers.push_back({{"node", l.node}, {"params", l.params}, {"digest", l.digest}});
    return {{"model_id", f.model_id}, {"whole_digest", f.whole_digest}, {"layers", layers}};
}

FingerprintRecord fingerprint_from_json(const json& j) {
    FingerprintRecord f;
    f.model_id = j.at("model_id").get<std::string>();
    f.whole_digest = j.at("whole_digest").get<std::string>();
    for (const auto& l : j.at("layers")) {
        f.layers.push_back({l.at("node").get<NodeId>(), l.at("params").get<std::int64_t>(), l.at("digest").get<std::string>()});
    }
    return f;
}

// ---------------------------------------------------------------------------
// Model units

struct ModelUnit {
    std::string package_id;
    std::string package_file;
    std::string entry;
    std::optional<std::string> weights_entry;
    FrameworkId framework;
};

/// Groups a package's valid candidates into model units, pairing caffe
/// structure files with their caffemodel and ncnn .param files with their .bin.
std::vector<ModelUnit> model_units(const json& pkg) {
    const auto package_id = pkg.at("id").get<std::string>();
    const auto package_file = pkg.at("file").get<std::string>();
    std::map<std::string, std::set<std::string>> valid;  // entry -> frameworks
    std::set<std::string> all_entries;
    for (const auto& c : pkg.at("candidates")) {
        all_entries.insert(c.at("entry").get<std::string>());
        if (c.at("verdict").get<std::string>() == "valid") {
            valid[c.at("entry").get<std::string>()].insert(c.at("framework").get<std::string>());
        }
    }
    for (const auto& e : pkg.at("entry_names")) all_entries.insert(e.get<std::string>());

    auto pick = [](const std::set<std::string>& fws) {
        for (auto fw : k_frontend_priority) {
            if (fws.count(std::string(fw))) return std::string(fw);
        }
        return *fws.begin();
    };
    std::map<std::string, FrameworkId> chosen;
    for (const auto& [entry, fws] : valid) chosen[entry] = pick(fws);

    std::vector<std::string> caffe_structs;
    std::vector<std::string> caffe_weights;
    for (const auto& [entry, fw] : chosen) {
        if (fw != "caffe") continue;
        (lower_ext(entry) == ".caffemodel" ? caffe_weights : caffe_structs).push_back(entry);
    }

    std::set<std::string> consumed;
    std::vector<ModelUnit> units;
    for (const auto& [entry, fw] : chosen) {
        if (consumed.count(entry)) continue;
        ModelUnit u{package_id, package_file, entry, std::nullopt, fw};
        if (fw == "caffe" && lower_ext(entry) != ".caffemodel") {
            const auto twin = strip_ext(entry) + ".caffemodel";
            if (std::find(caffe_weights.begin(), caffe_weights.end(), twin) != caffe_weights.end()) {
                u.weights_entry = twin;
            } else if (caffe_structs.size() == 1 && caffe_weights.size() == 1) {
                u.weights_entry = caffe_weights.front();
            }
            if (u.weights_entry) consumed.insert(*u.weights_entry);
        } else if (fw == "ncnn") {
            const auto twin = strip_ext(entry) + ".bin";
            if (all_entries.count(twin)) u.weights_entry = twin;
        }
        units.push_back(std::move(u));
    }
    std::erase_if(units, [&](const ModelUnit& u) { return consumed.count(u.entry) != 0 && !u.weights_entry; });
    return units;
}

struct Analysis {
    std::string model_id;
    FrameworkId framework;
    bool parsed = false;
    std::string error;
    std::string digest;
    std::optional<ModelStats> stats;
    std::string stats_error;
    std::optional<FingerprintRecord> fingerprint;
    std::optional<OptimizationReport> optimization;
};

json to_json(const Analysis& a, const std::string& cache_key) {
    json j{{"cache_key", cache_key},
           {"model_id", a.model_id},
           {"framework", a.framework},
           {"parsed", a.parsed},
           {"error", a.error},
           {"digest", a.digest},
           {"stats", a.stats ? to_json(*a.stats) : json(nullptr)},
           {"stats_error", a.stats_error},
           {"fingerprint", a.fingerprint ? to_json(*a.fingerprint) : json(nullptr)},
           {"optimization", a.optimization ? to_json(*a.optimization) : json(nullptr)}};
    return j;
}

std::string cache_key(const RunConfig& config, const std::string& model_id, const FrameworkId& framework) {
    return fmt::format("{}|{}|{}|{}", k_analysis_version, config.tables_tag, framework, model_id);
}

Analysis analyze_unit(const ModelFiles& files, const std::string& model_id, const FrameworkId& framework,
                      const RunConfig& config) {
    Analysis a;
    a.model_id = model_id;
    a.framework = framework;
    a.digest = model_id;
    ModelGraph g;
    try {
        g = parse_model(files, framework, config.ops);
    } catch (const Error& e) {
        a.error = e.what();
        return a;
    }
    g.model_id = model_id;
    a.parsed = true;
    auto fp = fingerprint(g);
    fp.model_id = model_id;
    a.digest = fp.whole_digest;
    a.fingerprint = std::move(fp);
    try {
        a.stats = model_stats(g);
        a.stats->model_id = model_id;
    } catch (const Error& e) {
        a.stats_error = e.what();
    }
    a.optimization = scan_optimizations(g);
    a.optimization->model_id = model_id;
    return a;
}

/// The fields of a cached analysis that the later stages consume.
json instance_record(const ModelUnit& u, const std::string& model_id, const json& analysis) {
    json j{{"package_id", u.package_id},
           {"entry", u.entry},
           {"weights_entry", u.weights_entry ? json(*u.weights_entry) : json(nullptr)},
           {"framework", u.framework},
           {"model_id", model_id}};
    for (const char* key : {"parsed", "error", "digest", "stats", "stats_error", "optimization"}) j[key] = analysis.at(key);
    return j;
}

ModelFiles load_files(const fs::path& corpus, const ModelUnit& u, std::map<std::string, AppPackage>& open) {
    auto it = open.find(u.package_file);
    if (it == open.end()) it = open.emplace(u.package_file, ingest_package(corpus / u.package_file)).first;
    ModelFiles files;
    files.primary = extract_entry(it->second, u.entry);
    if (u.weights_entry) files.weights = extract_entry(it->second, *u.weights_entry);
    return files;
}

std::string content_id(const ModelFiles& files) {
    Sha256 h;
    h.update(files.primary);
    if (files.weights) h.update(*files.weights);
    return h.hex_digest();
}

json read_stage(const RunManifest& m, const char* name, const char* producer) {
    const auto path = m.out / name;
    if (!fs::exists(path)) {
        throw Error(ErrorCode::Io, fmt::format("{} is missing; run `prospector {}` first", path.string(), producer));
    }
    return read_json(path);
}

// ---------------------------------------------------------------------------
// Config

std::chrono::milliseconds ms(const json& j, const char* key, std::chrono::milliseconds fallback) {
    if (!j.contains(key)) return fallback;
    return std::chrono::milliseconds(j[key].get<std::int64_t>());
}

BenchConfig bench_config_from_json(const json& j, BenchConfig c) {
    c.warmup_runs = j.value("warmup_runs", c.warmup_runs);
    c.measured_runs = j.value("measured_runs", c.measured_runs);
    c.inter_run_sleep_ms = j.value("inter_run_sleep_ms", c.inter_run_sleep_ms);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.threads = j.value("threads", c.threads);
    if (j.contains("affinity") && !j["affinity"].is_null()) c.affinity = j["affinity"].get<std::int64_t>();
    validate(c);
    return c;
}

DeviceProfile device_from_json(const json& j) {
    DeviceProfile d;
    d.device_id = j.at("id").get<std::string>();
    if (d.device_id.empty() || d.device_id.find_first_of(" \t\n/") != std::string::npos) {
        throw Error(ErrorCode::Config, fmt::format("device id '{}' must be a non-empty token", d.device_id));
    }
    d.kind = j.value("kind", std::string("simulator"));
    d.signal_deadline = ms(j, "signal_deadline_ms", d.signal_deadline);
    d.battery_voltage_v = j.value("battery_voltage_v", d.battery_voltage_v);
    if (d.kind == "simulator") {
        auto& p = d.simulator;
        p.device_id = d.device_id;
        p.latency_a_ms_per_flop = j.value("latency_a_ms_per_flop", p.latency_a_ms_per_flop);
        p.latency_b_ms = j.value("latency_b_ms", p.latency_b_ms);
        p.power_w = j.value("power_w", p.power_w);
        p.baseline_w = j.value("baseline_w", p.baseline_w);
        p.jitter = j.value("jitter", p.jitter);
        p.seed = j.value("seed", p.seed);
        p.sample_rate_hz = j.value("sample_rate_hz", p.sample_rate_hz);
        p.never_signal = j.value("never_signal", p.never_signal);
        p.refuse = j.value("refuse", p.refuse);
        if (j.contains("stall_in")) {
            auto s = job_state_from_string(j["stall_in"].get<std::string>());
            if (!s) throw Error(ErrorCode::Config, "unknown stall_in state " + j["stall_in"].get<std::string>());
            p.stall_in = *s;
        }
        p.power_off_wait = ms(j, "power_off_wait_ms", p.power_off_wait);
    } else if (d.kind == "shell") {
        d.transport = j.at("transport").get<std::string>();
    } else {
        throw Error(ErrorCode::Config, fmt::format("device {}: unknown kind '{}'", d.device_id, d.kind));
    }
    return d;
}

std::unique_ptr<DeviceAdapter> make_adapter(const DeviceProfile& d) {
    if (d.kind == "shell") return std::make_unique<ShellDevice>(d.device_id, d.transport);
    return std::make_unique<SimulatedDevice>(d.simulator);
}

struct Annotation {
    std::string task;
    std::optional<std::string> modality;
};

struct Annotations {
    std::map<std::string, Annotation> by_model;
    std::map<std::pair<std::string, std::string>, Annotation> by_entry;

    const Annotation* find(const std::string& model_id, const std::string& package, const std::string& entry) const {
        if (auto it = by_entry.find({package, entry}); it != by_entry.end()) return &it->second;
        if (auto it = by_model.find(model_id); it != by_model.end()) return &it->second;
        return nullptr;
    }
};

Annotations load_annotations(const fs::path& path) {
    Annotations out;
    const auto doc = read_json(path);
    try {
        for (const auto& a : doc.at("models")) {
            Annotation ann{a.at("task").get<std::string>(), std::nullopt};
            if (a.contains("modality") && !a["modality"].is_null()) {
                ann.modality = a["modality"].get<std::string>();
                if (std::find(std::begin(k_modalities), std::end(k_modalities), *ann.modality) == std::end(k_modalities)) {
                    throw Error(ErrorCode::Config, fmt::format("{}: unknown modality '{}'", path.string(), *ann.modality));
                }
            }
            if (a.contains("model_id")) {
                out.by_model[a["model_id"].get<std::string>()] = ann;
            } else {
                out.by_entry[{a.at("package").get<std::string>(), a.at("entry").get<std::string>()}] = ann;
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, fmt::format("{}: {}", path.string(), e.what()));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void configure_logging_from_env() {
    const char* raw = std::getenv(k_log_level_env);
    if (raw == nullptr || *raw == '\0') {
        spdlog::set_level(spdlog::level::info);
        return;
    }
    const std::string name(raw);
    static const std::map<std::string, spdlog::level::level_enum> levels{
        {"trace", spdlog::level::trace}, {"debug", spdlog::level::debug}, {"info", spdlog::level::info},
        {"warn", spdlog::level::warn},   {"warning", spdlog::level::warn}, {"error", spdlog::level::err},
        {"critical", spdlog::level::critical}, {"off", spdlog::level::off}};
    auto it = levels.find(name);
    if (it == levels.end()) throw Error(ErrorCode::Config, fmt::format("{}='{}' is not a log level", k_log_level_env, name));
    spdlog::set_level(it->second);
}

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::Scan: return "scan";
        case Stage::Analyze: return "analyze";
        case Stage::Bench: return "bench";
        case Stage::Report: return "report";
    }
    return "?";
}

std::optional<Stage> stage_from_string(std::string_view text) noexcept {
    for (auto s : {Stage::Scan, Stage::Analyze, Stage::Bench, Stage::Report}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

void validate(const RunManifest& m) {
    if (m.jobs < 1) throw Error(ErrorCode::InvalidArgument, fmt::format("--jobs {} must be at least 1", m.jobs));
    std::error_code ec;
    fs::create_directories(m.out, ec);
    if (ec || !fs::is_directory(m.out)) {
        throw Error(ErrorCode::Io, fmt::format("cannot create output directory {}: {}", m.out.string(), ec.message()));
    }
}

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
    RunConfig c;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Config, fmt::format("config is not JSON: {}", e.what()));
    }
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
    try {
        if (doc.contains("tables")) {
            const auto& t = doc["tables"];
            Sha256 tag;
            if (t.contains("formats")) c.formats = FormatTable::load(resolve(t["formats"].get<std::string>()));
            if (t.contains("ops")) {
                const auto path = resolve(t["ops"].get<std::string>());
                c.ops = OpTable::load(path);
                tag.update(read_text_file(path));
                c.tables_tag = "ops:" + tag.hex_digest().substr(0, 16);
            }
            if (t.contains("api_patterns")) c.api_patterns = ApiPatternTable::load(resolve(t["api_patterns"].get<std::string>()));
            if (t.contains("native_libs")) c.native_libs = NativeLibTable::load(resolve(t["native_libs"].get<std::string>()));
        }
        c.scan_native_libs_for_apis = doc.value("scan_native_libs_for_apis", c.scan_native_libs_for_apis);
        if (doc.contains("annotations")) c.annotations = resolve(doc["annotations"].get<std::string>());
        if (doc.contains("snapshot_label")) c.snapshot_label = doc["snapshot_label"].get<std::string>();
        if (doc.contains("baseline_snapshot")) c.baseline_snapshot = resolve(doc["baseline_snapshot"].get<std::string>());
        if (doc.contains("report")) {
            const auto& r = doc["report"];
            c.audio_window_s = r.value("audio_window_s", c.audio_window_s);
            c.battery_voltage_v = r.value("battery_voltage_v", c.battery_voltage_v);
            if (!(c.audio_window_s > 0.0) || !(c.battery_voltage_v > 0.0)) {
                throw Error(ErrorCode::Config, "report.audio_window_s and report.battery_voltage_v must be positive");
            }
        }
        if (doc.contains("bench")) {
            const auto& b = doc["bench"];
            c.bench = bench_config_from_json(b.value("job", json::object()), c.bench);
            c.remote_dir = b.value("remote_dir", c.remote_dir);
            std::set<std::string> ids;
            for (const auto& d : b.value("devices", json::array())) {
                auto profile = device_from_json(d);
                if (!ids.insert(profile.device_id).second) {
                    throw Error(ErrorCode::Config, fmt::format("device '{}' declared twice", profile.device_id));
                }
                c.devices.push_back(std::move(profile));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Config, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        throw Error(ErrorCode::Config, e.what());
    }
    if (c.devices.empty()) {
        DeviceProfile d;
        d.device_id = d.simulator.device_id;
        c.devices.push_back(d);
    }
    return c;
}

RunConfig load_config(const std::optional<fs::path>& path) {
    if (!path) return parse_config("{}", fs::current_path());
    if (!fs::is_regular_file(*path)) throw Error(ErrorCode::Config, fmt::format("config {} does not exist", path->string()));
    return parse_config(read_text_file(*path), path->parent_path());
}

// ---------------------------------------------------------------------------
// scan

ScanSummary cmd_scan(const RunManifest& m, const RunConfig& config) {
    validate(m);
    const auto paths = list_corpus(m.corpus);
    std::vector<json> records(paths.size());
    parallel_for(paths.size(), m.jobs, [&](std::size_t i) {
        const auto& path = paths[i];
        json rec{{"id", path.stem().string()},
                 {"file", path.filename().string()},
                 {"error", nullptr},
                 {"metadata", json::object()},
                 {"category", ""},
                 {"entry_names", json::array()},
                 {"candidates", json::array()},
                 {"native_libs", json::array()},
                 {"api_hits", json::array()}};
        try {
            const auto pkg = ingest_package(path);
            rec["metadata"] = pkg.metadata;
            if (auto it = pkg.metadata.find("category"); it != pkg.metadata.end()) rec["category"] = it->second;
            std::map<std::string, std::optional<Bytes>> payloads;
            for (const auto& c : enumerate_candidates(pkg, config.formats)) {
                rec["entry_names"].push_back(c.entry_name);
                auto& bytes = payloads[c.entry_name];
                json cj{{"entry", c.entry_name}, {"framework", c.framework}, {"extension", c.extension}, {"rule", nullptr}};
                try {
                    if (!bytes) bytes = extract_entry(pkg, c.entry_name);
                    const auto v = validate_candidate(c, *bytes, config.formats);
                    cj["verdict"] = to_string(v.verdict);
                    if (v.rule_fired) cj["rule"] = *v.rule_fired;
                } catch (const Error& e) {
                    spdlog::warn("{}: cannot read {}: {}", pkg.id, c.entry_name, e.what());
                    cj["verdict"] = to_string(Verdict::Invalid);
                    cj["error"] = e.what();
                }
                rec["candidates"].push_back(std::move(cj));
            }
            // Pairing partners (ncnn .bin) need not be candidates themselves.
            for (const auto& e : pkg.entries) {
                if (e.kind == EntryKind::Regular && lower_ext(e.name) == ".bin") rec["entry_names"].push_back(e.name);
            }
            for (const auto& h : scan_native_libs(pkg, config.native_libs)) {
                rec["native_libs"].push_back({{"framework", h.framework}, {"entry", h.entry}});
            }
            for (const auto& h : scan_cloud_apis(pkg, config.api_patterns, config.scan_native_libs_for_apis)) {
                rec["api_hits"].push_back(to_json(h));
            }
        } catch (const Error& e) {
            spdlog::warn("{}: skipping package: {}", path.filename().string(), e.what());
            rec["error"] = e.what();
        }
        auto& names = rec["entry_names"];
        std::set<std::string> uniq;
        for (const auto& n : names) uniq.insert(n.get<std::string>());
        names = uniq;
        records[i] = std::move(rec);
    });

    // Package ids are file stems; disambiguate an .apk/.obb pair by file name.
    std::set<std::string> ids;
    for (auto& r : records) {
        if (!ids.insert(r["id"].get<std::string>()).second) {
            r["id"] = r["file"];
            ids.insert(r["file"].get<std::string>());
        }
    }

    ScanSummary summary;
    json packages = json::array();
    for (auto& r : records) {
        ++summary.packages;
        if (!r["error"].is_null()) ++summary.failed_packages;
        for (const auto& c : r["candidates"]) {
            ++summary.candidates;
            if (c["verdict"] == "valid") ++summary.valid;
        }
        packages.push_back(std::move(r));
    }
    const json doc{{"schema_version", k_inventory_version}, {"packages", packages}};
    write_file(m.out / out_files::inventory, std::string_view(dump(doc)));
    spdlog::info("scan: {} packages, {} candidates, {} valid", summary.packages, summary.candidates, summary.valid);
    return summary;
}

// ---------------------------------------------------------------------------
// analyze

AnalyzeSummary cmd_analyze(const RunManifest& m, const RunConfig& config) {
    validate(m);
    const auto inventory = read_stage(m, out_files::inventory, "scan");

    std::vector<ModelUnit> units;
    for (const auto& pkg : inventory.at("packages")) {
        if (!pkg.at("error").is_null()) continue;
        auto mine = model_units(pkg);
        units.insert(units.end(), mine.begin(), mine.end());
    }

    // Content ids, one package open per worker.
    std::vector<std::string> ids(units.size());
    std::vector<std::string> unit_errors(units.size());
    {
        std::map<std::string, std::vector<std::size_t>> by_package;
        for (std::size_t i = 0; i < units.size(); ++i) by_package[units[i].package_file].push_back(i);
        std::vector<std::vector<std::size_t>> groups;
        for (auto& [file, idx] : by_package) groups.push_back(std::move(idx));
        parallel_for(groups.size(), m.jobs, [&](std::size_t g) {
            std::map<std::string, AppPackage> open;
            for (auto i : groups[g]) {
                try {
                    ids[i] = content_id(load_files(m.corpus, units[i], open));
                } catch (const Error& e) {
                    spdlog::warn("{}: cannot read {}: {}", units[i].package_id, units[i].entry, e.what());
                    unit_errors[i] = e.what();
                }
            }
        });
    }

    std::map<std::string, std::size_t> representative;  // model id -> first unit
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!unit_errors[i].empty()) continue;
        representative.emplace(ids[i], i);
    }
    std::vector<std::pair<std::string, std::size_t>> work(representative.begin(), representative.end());

    const auto cache_dir = m.out / out_files::cache_dir;
    fs::create_directories(cache_dir);
    std::vector<json> analyses(work.size());
    std::atomic<std::int64_t> hits{0};
    std::atomic<std::int64_t> fresh{0};
    parallel_for(work.size(), m.jobs, [&](std::size_t w) {
        const auto& [model_id, idx] = work[w];
        const auto& unit = units[idx];
        const auto key = cache_key(config, model_id, unit.framework);
        const auto cache_file = cache_dir / (model_id + ".json");
        if (fs::exists(cache_file)) {
            try {
                auto cached = read_json(cache_file);
                if (cached.value("cache_key", std::string()) == key) {
                    analyses[w] = std::move(cached);
                    ++hits;
                    return;
                }
            } catch (const Error& e) {
                spdlog::warn("ignoring cache entry {}: {}", cache_file.filename().string(), e.what());
            }
        }
        std::map<std::string, AppPackage> open;
        const auto files = load_files(m.corpus, unit, open);
        const auto a = analyze_unit(files, model_id, unit.framework, config);
        if (!a.parsed) spdlog::warn("{}: skipping {} ({}): {}", unit.package_id, unit.entry, unit.framework, a.error);
        analyses[w] = to_json(a, key);
        write_file(cache_file, std::string_view(dump(analyses[w])));
        ++fresh;
    });

    std::map<std::string, const json*> by_id;
    for (std::size_t w = 0; w < work.size(); ++w) by_id[work[w].first] = &analyses[w];

    AnalyzeSummary summary;
    summary.cache_hits = hits;
    summary.analyzed = fresh;
    json instances = json::array();
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (!unit_errors[i].empty()) continue;
        const auto& a = *by_id.at(ids[i]);
        instances.push_back(instance_record(units[i], ids[i], a));
        ++summary.models;
        if (a.at("parsed").get<bool>()) ++summary.parsed;
    }
    std::sort(instances.begin(), instances.end(), [](const json& a, const json& b) {
        return std::tie(a["package_id"].get_ref<const std::string&>(), a["entry"].get_ref<const std::string&>()) <
               std::tie(b["package_id"].get_ref<const std::string&>(), b["entry"].get_ref<const std::string&>());
    });
    json fingerprints = json::array();
    for (const auto& [id, a] : by_id) {
        if (!a->at("parsed").get<bool>()) {
            ++summary.failures;
            continue;
        }
        fingerprints.push_back(a->at("fingerprint"));
    }
    write_file(m.out / out_files::models,
               std::string_view(dump({{"schema_version", k_models_version}, {"models", instances}})));
    write_file(m.out / out_files::fingerprints,
               std::string_view(dump({{"schema_version", k_models_version}, {"fingerprints", fingerprints}})));
    spdlog::info("analyze: {} models ({} parsed); {} analyzed, {} from cache, {} failed", summary.models,
                 summary.parsed, summary.analyzed, summary.cache_hits, summary.failures);
    return summary;
}

// ---------------------------------------------------------------------------
// bench

BenchSummary cmd_bench(const RunManifest& m, const RunConfig& config) {
    validate(m);
    const auto models = read_stage(m, out_files::models, "analyze");

    std::map<std::string, const json*> unique;
    for (const auto& rec : models.at("models")) {
        if (!rec.at("parsed").get<bool>()) continue;
        unique.emplace(rec.at("model_id").get<std::string>(), &rec);
    }

    std::vector<BenchJob> jobs;
    {
        std::map<std::string, AppPackage> open;
        for (const auto& [id, rec] : unique) {
            ModelUnit u{rec->at("package_id").get<std::string>(), "", rec->at("entry").get<std::string>(), std::nullopt,
                        rec->at("framework").get<std::string>()};
            u.package_file = u.package_id;
            // Package files are named by id plus a package extension.
            for (const auto& path : list_corpus(m.corpus)) {
                if (path.stem().string() == u.package_id || path.filename().string() == u.package_id) {
                    u.package_file = path.filename().string();
                    break;
                }
            }
            Bytes payload;
            try {
                payload = load_files(m.corpus, u, open).primary;
            } catch (const Error& e) {
                spdlog::warn("bench: cannot read {} from {}: {}", u.entry, u.package_id, e.what());
                continue;
            }
            double flops = 0.0;
            if (!rec->at("stats").is_null()) flops = rec->at("stats").at("total_flops").get<double>();
            for (const auto& d : config.devices) {
                BenchJob job;
                job.job_id = fmt::format("{}-{}", d.device_id, id.substr(0, 16));
                job.model_id = id;
                job.device_id = d.device_id;
                job.config = config.bench;
                job.flops_per_sample = flops;
                job.payload = payload;
                const auto ext = lower_ext(u.entry);
                job.payload_name = "model" + (ext.empty() ? std::string(".bin") : ext);
                jobs.push_back(std::move(job));
            }
        }
    }

    std::vector<std::unique_ptr<DeviceAdapter>> owned;
    std::map<std::string, DeviceAdapter*> adapters;
    BenchOptions options;
    options.remote_dir = config.remote_dir;
    for (const auto& d : config.devices) {
        owned.push_back(make_adapter(d));
        adapters[d.device_id] = owned.back().get();
        options.device_deadlines[d.device_id] = d.signal_deadline;
    }

    const auto results = run_jobs(jobs, adapters, options);
    write_results_log(m.out / out_files::bench_results, results);
    BenchSummary summary;
    for (const auto& r : results) {
        ++summary.jobs;
        if (!r.ok) ++summary.failed;
    }
    spdlog::info("bench: {} jobs, {} failed", summary.jobs, summary.failed);
    return summary;
}

// ---------------------------------------------------------------------------
// report

ReportSummary cmd_report(const RunManifest& m, const RunConfig& config) {
    validate(m);
    const auto inventory = read_stage(m, out_files::inventory, "scan");

    ReportInputs in;
    in.snapshot_label = config.snapshot_label.value_or(fs::absolute(m.corpus).lexically_normal().filename().string());
    if (in.snapshot_label.empty()) in.snapshot_label = fs::absolute(m.corpus).lexically_normal().parent_path().filename().string();
    in.parameters.audio_window_s = config.audio_window_s;
    in.parameters.battery_voltage_v = config.battery_voltage_v;
    for (const auto& d : config.devices) {
        if (d.battery_voltage_v != config.battery_voltage_v) in.parameters.device_voltage_v[d.device_id] = d.battery_voltage_v;
    }

    for (const auto& pkg : inventory.at("packages")) {
        PackageSummary p;
        p.package_id = pkg.at("id").get<std::string>();
        p.category = pkg.at("category").get<std::string>();
        for (const auto& n : pkg.at("native_libs")) p.native_frameworks.push_back(n.at("framework").get<std::string>());
        for (const auto& h : pkg.at("api_hits")) p.api_hits.push_back(api_hit_from_json(h, p.package_id));
        in.packages.push_back(std::move(p));
    }

    Annotations annotations;
    if (config.annotations) annotations = load_annotations(*config.annotations);

    const auto models_path = m.out / out_files::models;
    if (fs::exists(models_path)) {
        const auto doc = read_json(models_path);
        for (const auto& rec : doc.at("models")) {
            ModelSummary s;
            s.package_id = rec.at("package_id").get<std::string>();
            s.entry = rec.at("entry").get<std::string>();
            s.framework = rec.at("framework").get<std::string>();
            s.model_id = rec.at("model_id").get<std::string>();
            s.digest = rec.at("digest").get<std::string>();
            s.parsed = rec.at("parsed").get<bool>();
            if (!rec.at("stats").is_null()) {
                const auto& st = rec["stats"];
                s.macs = st.at("total_macs").get<std::int64_t>();
                s.flops = st.at("total_flops").get<std::int64_t>();
                s.params = st.at("total_params").get<std::int64_t>();
                s.layer_histogram = st.at("layer_histogram").get<std::map<std::string, std::int64_t>>();
            }
            if (!rec.at("optimization").is_null()) s.optimization = optimization_from_json(rec["optimization"], s.model_id);
            if (const auto* a = annotations.find(s.model_id, s.package_id, s.entry)) {
                s.task = a->task;
                s.modality = a->modality;
            }
            in.models.push_back(std::move(s));
        }
    } else {
        spdlog::warn("report: {} missing; model sections are empty", models_path.string());
    }

    const auto fp_path = m.out / out_files::fingerprints;
    if (fs::exists(fp_path)) {
        const auto doc = read_json(fp_path);
        for (const auto& f : doc.at("fingerprints")) in.fingerprints.push_back(fingerprint_from_json(f));
    } else {
        spdlog::warn("report: {} missing; sharing counts are zero", fp_path.string());
    }

    const auto bench_path = m.out / out_files::bench_results;
    if (fs::exists(bench_path)) {
        in.bench = read_results_log(bench_path);
    } else {
        spdlog::warn("report: {} missing; bench sections omitted", bench_path.string());
    }

    if (config.baseline_snapshot) {
        auto path = *config.baseline_snapshot;
        if (fs::is_directory(path)) path = path / out_files::report_dir / "report.json";
        if (fs::exists(path)) {
            in.baseline = import_report(read_text_file(path));
        } else {
            spdlog::warn("report: baseline {} missing; snapshot diff omitted", path.string());
        }
    }

    const auto report = build_report(in);
    const auto dir = m.out / out_files::report_dir;
    fs::create_directories(dir);
    for (const auto& de : fs::directory_iterator(dir)) {
        const auto ext = de.path().extension();
        if (de.is_regular_file() && (ext == ".csv" || ext == ".json")) fs::remove(de.path());
    }

    ReportSummary summary;
    auto files = export_csv(report);
    files.merge(export_report(report, ExportFormat::Json));
    for (const auto& [name, body] : files) {
        write_file(dir / name, std::string_view(body));
        summary.files.push_back(name);
    }
    summary.sections = report_sections(files.at("report.json"));
    spdlog::info("report: {} sections, {} files in {}", summary.sections.size(), summary.files.size(), dir.string());
    return summary;
}

void run_pipeline(const RunManifest& m, const RunConfig& config) {
    std::set<Stage> stages(m.stages.begin(), m.stages.end());
    if (stages.count(Stage::Scan)) cmd_scan(m, config);
    if (stages.count(Stage::Analyze)) cmd_analyze(m, config);
    if (stages.count(Stage::Bench)) cmd_bench(m, config);
    if (stages.count(Stage::Report)) cmd_report(m, config);
}

}  // namespace prospector
