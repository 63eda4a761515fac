// SPDX-License-Identifier: Apache-2.0
#include "prospector/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "prospector/metrics.hpp"

namespace prospector {

namespace {

using nlohmann::json;

json opt_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> median_or_empty(std::vector<double> values) {
    if (values.empty()) return std::nullopt;
    return median(std::move(values));
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_number(double v) { return fmt::format("{}", v); }

template <typename... Fields>
std::string csv_row(const Fields&... fields) {
    std::vector<std::string> cells{fields...};
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    out += '\n';
    return out;
}

std::string category_of(const PackageSummary& p) {
    return p.category.empty() ? std::string(k_uncategorized) : p.category;
}

bool known_modality(std::string_view m) {
    return std::find(std::begin(k_modalities), std::end(k_modalities), m) != std::end(k_modalities);
}

}  // namespace

// ---------------------------------------------------------------------------

Ecdf ecdf(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "ecdf of an empty sample");
    for (double v : values) {
        if (std::isnan(v)) throw Error(ErrorCode::InvalidArgument, "ecdf sample holds NaN");
    }
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    Ecdf out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
        out.points.emplace_back(values[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "median of an empty sample");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

// ---------------------------------------------------------------------------

CorpusReport build_report(const ReportInputs& in) {
    CorpusReport r;
    r.snapshot_label = in.snapshot_label;
    r.parameters = in.parameters;

    std::map<std::string, const PackageSummary*> packages;
    for (const auto& p : in.packages) {
        if (!packages.emplace(p.package_id, &p).second) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("package '{}' listed twice", p.package_id));
        }
    }
    std::map<std::string, std::vector<const ModelSummary*>> models_of;
    for (const auto& m : in.models) {
        if (packages.count(m.package_id) == 0) {
            throw Error(ErrorCode::InvalidArgument,
                        fmt::format("model {} belongs to unknown package '{}'", m.entry, m.package_id));
        }
        if (m.modality && !known_modality(*m.modality)) {
            throw Error(ErrorCode::InvalidArgument, fmt::format("unknown modality '{}'", *m.modality));
        }
        models_of[m.package_id].push_back(&m);
    }

    // Totals, frameworks, categories.
    std::map<std::string, std::set<std::string>> framework_apps;
    std::set<std::string> digests;
    for (const auto& [id, pkg] : packages) {
        const auto& mine = models_of[id];
        std::set<std::string> frameworks(pkg->native_frameworks.begin(), pkg->native_frameworks.end());
        for (const auto* m : mine) frameworks.insert(m->framework);
        for (const auto& fw : frameworks) framework_apps[fw].insert(id);

        ++r.totals.apps;
        if (!frameworks.empty()) ++r.totals.apps_with_frameworks;
        if (!mine.empty()) ++r.totals.apps_with_models;

        auto& cat = r.per_category[category_of(*pkg)];
        ++cat.apps;
        if (!mine.empty()) ++cat.apps_with_models;
        for (const auto* m : mine) {
            ++cat.models;
            cat.model_digests.insert(m->digest);
        }
    }
    for (const auto& m : in.models) {
        ++r.totals.total_models;
        digests.insert(m.digest);
        ++r.per_framework[m.framework].models;
    }
    for (const auto& [fw, apps] : framework_apps) r.per_framework[fw].apps = static_cast<std::int64_t>(apps.size());
    r.totals.unique_models = static_cast<std::int64_t>(digests.size());

    std::map<std::string, const FingerprintRecord*> fingerprints;
    for (const auto& f : in.fingerprints) fingerprints.emplace(f.model_id, &f);
    std::vector<FingerprintRecord> unique_fps;
    for (const auto& [id, f] : fingerprints) unique_fps.push_back(*f);
    if (!unique_fps.empty()) {
        const auto uq = corpus_uniqueness(unique_fps);
        r.totals.parsed_unique_models = uq.unique_count;
        r.totals.shared_20_models = uq.shared_20_count;
        r.totals.fine_tuned_models = uq.fine_tuned_count;
    }

    // Per unique parsed model: layers, tasks, optimizations.
    std::map<std::string, const ModelSummary*> unique_parsed;
    for (const auto& m : in.models) {
        if (!m.parsed) continue;
        auto [it, fresh] = unique_parsed.emplace(m.model_id, &m);
        // Keep the annotated copy when a model appears in several packages.
        if (!fresh && !it->second->task && m.task) it->second = &m;
    }
    std::set<std::pair<std::string, std::string>> counted_modality;
    for (const auto& m : in.models) {
        if (!m.parsed || !m.modality) continue;
        if (!counted_modality.emplace(m.model_id, *m.modality).second) continue;
        auto& counts = r.layer_counts[*m.modality];
        for (const auto& [category, n] : m.layer_histogram) counts[category] += n;
    }

    std::map<std::string, std::set<std::string>> task_apps;
    std::map<std::string, std::set<ModelPoint>> task_points;
    for (const auto& m : in.models) {
        if (!m.task) continue;
        auto& row = r.tasks[*m.task];
        ++row.models;
        task_apps[*m.task].insert(m.package_id);
        if (m.parsed) task_points[*m.task].insert(ModelPoint{m.model_id, m.flops, m.params});
    }
    for (auto& [task, row] : r.tasks) {
        row.apps = static_cast<std::int64_t>(task_apps[task].size());
        const auto& pts = task_points[task];
        row.points.assign(pts.begin(), pts.end());
    }

    for (const auto& [id, m] : unique_parsed) {
        if (!m->optimization) continue;
        const auto& o = *m->optimization;
        auto& s = r.optimizations;
        ++s.models;
        if (o.clustering.present) ++s.clustering;
        if (o.pruning.present) ++s.pruning;
        if (o.quantization.dequantize_layers > 0) ++s.dequantize;
        if (o.quantization.int8_weight_fraction > 0.0) ++s.int8_weights;
        if (o.quantization.int8_activation) ++s.int8_activation;
        if (o.sparsity) s.sparsity.push_back(*o.sparsity);
    }
    std::sort(r.optimizations.sparsity.begin(), r.optimizations.sparsity.end());

    // Cloud APIs.
    for (const auto& [id, pkg] : packages) {
        if (pkg->api_hits.empty()) continue;
        ++r.cloud.apps_with_cloud_api;
        if (!models_of[id].empty()) ++r.cloud.apps_with_cloud_and_models;
        std::map<std::string, std::set<std::string>> patterns;
        for (const auto& hit : pkg->api_hits) patterns[std::string(to_string(hit.vendor))].insert(hit.matched_string);
        for (const auto& [vendor, pats] : patterns) {
            auto& row = r.cloud.vendors[vendor];
            ++row.apps;
            for (const auto& p : pats) ++row.pattern_apps[p];
        }
    }

    if (in.bench) {
        std::map<std::string, DeviceBench> bench;
        for (const auto& res : *in.bench) {
            auto& dev = bench[res.device_id];
            ++dev.jobs;
            if (!res.ok) {
                ++dev.failed;
                continue;
            }
            BenchRow row;
            row.device_id = res.device_id;
            row.job_id = res.job_id;
            row.model_id = res.model_id;
            row.mean_latency_ms =
                res.latencies_ms.empty() ? 0.0 : res.total_latency_ms() / static_cast<double>(res.latencies_ms.size());
            row.per_inference_energy_j = res.per_inference_energy_j;
            row.mean_power_w = res.mean_power_w;
            row.efficiency_flops_per_j = res.efficiency_flops_per_j;
            row.total_flops = res.total_flops;
            dev.rows.push_back(std::move(row));
        }
        for (auto& [id, dev] : bench) {
            std::sort(dev.rows.begin(), dev.rows.end(),
                      [](const BenchRow& a, const BenchRow& b) { return a.job_id < b.job_id; });
        }
        r.bench = std::move(bench);
    }

    if (in.baseline) r.snapshot_diff = SnapshotDiff{in.baseline->snapshot_label, diff_snapshots(*in.baseline, r)};
    return r;
}

std::vector<DiffRow> diff_snapshots(const CorpusReport& a, const CorpusReport& b) {
    std::set<std::string> categories;
    for (const auto& [c, row] : a.per_category) categories.insert(c);
    for (const auto& [c, row] : b.per_category) categories.insert(c);
    static const std::set<std::string> none;
    auto digests = [](const CorpusReport& r, const std::string& c) -> const std::set<std::string>& {
        auto it = r.per_category.find(c);
        return it == r.per_category.end() ? none : it->second.model_digests;
    };
    std::vector<DiffRow> rows;
    for (const auto& c : categories) {
        const auto& da = digests(a, c);
        const auto& db = digests(b, c);
        DiffRow row{c, 0, 0};
        for (const auto& d : db) row.additions += da.count(d) == 0 ? 1 : 0;
        for (const auto& d : da) row.removals += db.count(d) == 0 ? 1 : 0;
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const DiffRow& x, const DiffRow& y) {
        const auto nx = x.additions - x.removals;
        const auto ny = y.additions - y.removals;
        if (nx != ny) return nx > ny;
        return x.category < y.category;
    });
    return rows;
}

std::vector<ScenarioRow> scenario_table(const CorpusReport& report) {
    std::vector<ScenarioRow> out;
    if (!report.bench) return out;
    for (const auto& spec : builtin_scenarios(report.parameters.audio_window_s)) {
        for (const auto& [device, dev] : *report.bench) {
            if (dev.rows.empty()) continue;
            std::vector<double> energies;
            for (const auto& row : dev.rows) energies.push_back(row.per_inference_energy_j);
            const double e = median(energies);
            auto v = report.parameters.device_voltage_v.find(device);
            const double volts = v == report.parameters.device_voltage_v.end() ? report.parameters.battery_voltage_v : v->second;
            out.push_back({spec.name, device, spec.inference_count, e, scenario_discharge(spec, e, volts)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export

ExportFormat export_format_from_string(std::string_view name) {
    if (name == "json") return ExportFormat::Json;
    if (name == "csv") return ExportFormat::Csv;
    throw Error(ErrorCode::UnsupportedFormat, fmt::format("unknown export format '{}'", name));
}

namespace {

json totals_section(const CorpusReport& r) {
    const auto& t = r.totals;
    json j{{"apps", t.apps},
           {"apps_with_frameworks", t.apps_with_frameworks},
           {"apps_with_models", t.apps_with_models},
           {"total_models", t.total_models},
           {"unique_models", t.unique_models},
           {"parsed_unique_models", t.parsed_unique_models},
           {"shared_20_models", t.shared_20_models},
           {"fine_tuned_models", t.fine_tuned_models}};
    j["unique_fraction"] = t.total_models > 0 ? json(static_cast<double>(t.unique_models) / static_cast<double>(t.total_models))
                                              : json(nullptr);
    const auto base = static_cast<double>(t.parsed_unique_models);
    j["shared_20_fraction"] = t.parsed_unique_models > 0 ? json(static_cast<double>(t.shared_20_models) / base) : json(nullptr);
    j["fine_tuned_fraction"] = t.parsed_unique_models > 0 ? json(static_cast<double>(t.fine_tuned_models) / base) : json(nullptr);
    json fw = json::object();
    for (const auto& [name, row] : r.per_framework) fw[name] = {{"apps", row.apps}, {"models", row.models}};
    j["per_framework"] = fw;
    json cat = json::object();
    for (const auto& [name, row] : r.per_category) {
        cat[name] = {{"apps", row.apps},
                     {"apps_with_models", row.apps_with_models},
                     {"models", row.models},
                     {"model_digests", row.model_digests}};
    }
    j["per_category"] = cat;
    return j;
}

json layers_section(const CorpusReport& r) {
    json j = json::object();
    for (const auto& [modality, counts] : r.layer_counts) {
        std::int64_t total = 0;
        for (const auto& [c, n] : counts) total += n;
        json fractions = json::object();
        for (const auto& [c, n] : counts) {
            fractions[c] = total > 0 ? static_cast<double>(n) / static_cast<double>(total) : 0.0;
        }
        j[modality] = {{"nodes", total}, {"counts", counts}, {"fractions", fractions}};
    }
    return j;
}

json flops_by_task_section(const CorpusReport& r) {
    json j = json::object();
    for (const auto& [task, row] : r.tasks) {
        json pts = json::array();
        std::vector<double> flops;
        std::vector<double> params;
        for (const auto& p : row.points) {
            pts.push_back({{"model_id", p.model_id}, {"flops", p.flops}, {"params", p.params}});
            flops.push_back(static_cast<double>(p.flops));
            params.push_back(static_cast<double>(p.params));
        }
        j[task] = {{"models", pts},
                   {"median_flops", opt_number(median_or_empty(flops))},
                   {"median_params", opt_number(median_or_empty(params))}};
    }
    return j;
}

json tasks_section(const CorpusReport& r) {
    json j = json::object();
    for (const auto& [task, row] : r.tasks) j[task] = {{"models", row.models}, {"apps", row.apps}};
    return j;
}

json cloud_section(const CorpusReport& r) {
    json vendors = json::object();
    for (const auto& [v, row] : r.cloud.vendors) vendors[v] = {{"apps", row.apps}, {"patterns", row.pattern_apps}};
    return {{"apps_with_cloud_api", r.cloud.apps_with_cloud_api},
            {"apps_with_cloud_and_models", r.cloud.apps_with_cloud_and_models},
            {"vendors", vendors}};
}

json optimizations_section(const CorpusReport& r) {
    const auto& s = r.optimizations;
    return {{"models", s.models},
            {"clustering", s.clustering},
            {"pruning", s.pruning},
            {"dequantize", s.dequantize},
            {"int8_weights", s.int8_weights},
            {"int8_activation", s.int8_activation},
            {"sparsity", s.sparsity},
            {"median_sparsity", opt_number(median_or_empty(s.sparsity))}};
}

json latency_section(const std::map<std::string, DeviceBench>& bench) {
    json j = json::object();
    for (const auto& [device, dev] : bench) {
        if (dev.rows.empty()) continue;
        std::vector<double> lat;
        for (const auto& row : dev.rows) lat.push_back(row.mean_latency_ms);
        json pts = json::array();
        for (const auto& [v, f] : ecdf(lat).points) pts.push_back({v, f});
        j[device] = pts;
    }
    return j;
}

json energy_section(const std::map<std::string, DeviceBench>& bench) {
    json j = json::object();
    for (const auto& [device, dev] : bench) {
        json rows = json::array();
        std::vector<double> energy;
        std::vector<double> power;
        std::vector<double> eff;
        for (const auto& row : dev.rows) {
            std::optional<double> mflops;
            if (row.efficiency_flops_per_j) {
                mflops = to_mflop_per_sw(*row.efficiency_flops_per_j);
                eff.push_back(*mflops);
            }
            energy.push_back(row.per_inference_energy_j);
            power.push_back(row.mean_power_w);
            rows.push_back({{"job_id", row.job_id},
                            {"model_id", row.model_id},
                            {"mean_latency_ms", row.mean_latency_ms},
                            {"per_inference_energy_j", row.per_inference_energy_j},
                            {"mean_power_w", row.mean_power_w},
                            {"efficiency_flops_per_j", opt_number(row.efficiency_flops_per_j)},
                            {"efficiency_mflop_per_sw", opt_number(mflops)},
                            {"total_flops", row.total_flops}});
        }
        j[device] = {{"jobs", dev.jobs},
                     {"failed", dev.failed},
                     {"rows", rows},
                     {"median_energy_j", opt_number(median_or_empty(energy))},
                     {"median_power_w", opt_number(median_or_empty(power))},
                     {"median_efficiency_mflop_per_sw", opt_number(median_or_empty(eff))}};
    }
    return j;
}

json scenarios_section(const CorpusReport& r) {
    json j = json::array();
    for (const auto& row : scenario_table(r)) {
        j.push_back({{"scenario", row.scenario},
                     {"device_id", row.device_id},
                     {"inference_count", row.inference_count},
                     {"median_energy_j", row.median_energy_j},
                     {"discharge_mah", row.discharge_mah}});
    }
    return j;
}

json diff_section(const SnapshotDiff& d) {
    json rows = json::array();
    for (const auto& row : d.rows) {
        rows.push_back({{"category", row.category}, {"additions", row.additions}, {"removals", row.removals}});
    }
    return {{"baseline_label", d.baseline_label}, {"rows", rows}};
}

json to_document(const CorpusReport& r) {
    json sections = json::object();
    sections[std::string(k_section_totals)] = totals_section(r);
    sections[std::string(k_section_layers)] = layers_section(r);
    sections[std::string(k_section_flops_by_task)] = flops_by_task_section(r);
    sections[std::string(k_section_tasks)] = tasks_section(r);
    sections[std::string(k_section_cloud)] = cloud_section(r);
    sections[std::string(k_section_optimizations)] = optimizations_section(r);
    if (r.bench) {
        sections[std::string(k_section_latency)] = latency_section(*r.bench);
        sections[std::string(k_section_energy)] = energy_section(*r.bench);
        sections[std::string(k_section_scenarios)] = scenarios_section(r);
    }
    if (r.snapshot_diff) sections[std::string(k_section_diff)] = diff_section(*r.snapshot_diff);
    return {{"schema_version", k_report_schema_version},
            {"snapshot_label", r.snapshot_label},
            {"parameters",
             {{"battery_voltage_v", r.parameters.battery_voltage_v},
              {"audio_window_s", r.parameters.audio_window_s},
              {"device_voltage_v", r.parameters.device_voltage_v},
              {"digest_algorithm", "sha256"},
              {"flops_per_mac", 2},
              {"efficiency_unit", "MFLOP/sW"}}},
            {"sections", sections}};
}

std::optional<double> read_opt(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

}  // namespace

std::string export_json(const CorpusReport& report) { return to_document(report).dump(2) + "\n"; }

std::map<std::string, std::string> export_csv(const CorpusReport& r) {
    std::map<std::string, std::string> files;
    const auto& t = r.totals;
    {
        std::string s = csv_row(std::string("metric"), std::string("value"));
        for (const auto& [k, v] : std::vector<std::pair<std::string, std::int64_t>>{
                 {"apps", t.apps},
                 {"apps_with_frameworks", t.apps_with_frameworks},
                 {"apps_with_models", t.apps_with_models},
                 {"total_models", t.total_models},
                 {"unique_models", t.unique_models},
                 {"parsed_unique_models", t.parsed_unique_models},
                 {"shared_20_models", t.shared_20_models},
                 {"fine_tuned_models", t.fine_tuned_models}}) {
            s += csv_row(k, std::to_string(v));
        }
        files["table2_totals.csv"] = s;
    }
    {
        std::string s = "framework,model_count\n";
        for (const auto& [fw, row] : r.per_framework) s += csv_row(csv_field(fw), std::to_string(row.models));
        files["per_framework.csv"] = s;
    }
    {
        std::string s = "category,app_count,apps_with_models,model_count\n";
        for (const auto& [c, row] : r.per_category) {
            s += csv_row(csv_field(c), std::to_string(row.apps), std::to_string(row.apps_with_models),
                         std::to_string(row.models));
        }
        files["per_category.csv"] = s;
    }
    {
        std::string s = "modality,category,node_count,fraction\n";
        for (const auto& [modality, counts] : r.layer_counts) {
            std::int64_t total = 0;
            for (const auto& [c, n] : counts) total += n;
            for (const auto& [c, n] : counts) {
                const double f = total > 0 ? static_cast<double>(n) / static_cast<double>(total) : 0.0;
                s += csv_row(csv_field(modality), csv_field(c), std::to_string(n), csv_number(f));
            }
        }
        files["fig4_layer_histograms.csv"] = s;
    }
    {
        std::string s = "task,model_id,flops,params\n";
        for (const auto& [task, row] : r.tasks) {
            for (const auto& p : row.points) {
                s += csv_row(csv_field(task), csv_field(p.model_id), std::to_string(p.flops), std::to_string(p.params));
            }
        }
        files["fig9_flops_params_by_task.csv"] = s;
    }
    {
        std::string s = "task,model_count,app_count\n";
        for (const auto& [task, row] : r.tasks) s += csv_row(csv_field(task), std::to_string(row.models), std::to_string(row.apps));
        files["table4_task_table.csv"] = s;
    }
    {
        std::string s = "vendor,pattern,app_count\n";
        for (const auto& [v, row] : r.cloud.vendors) {
            s += csv_row(csv_field(v), std::string("*"), std::to_string(row.apps));
            for (const auto& [p, n] : row.pattern_apps) s += csv_row(csv_field(v), csv_field(p), std::to_string(n));
        }
        files["fig10_cloud_apis.csv"] = s;
    }
    {
        const auto& o = r.optimizations;
        std::string s = "marker,model_count\n";
        s += csv_row(std::string("models"), std::to_string(o.models));
        s += csv_row(std::string("clustering"), std::to_string(o.clustering));
        s += csv_row(std::string("pruning"), std::to_string(o.pruning));
        s += csv_row(std::string("dequantize"), std::to_string(o.dequantize));
        s += csv_row(std::string("int8_weights"), std::to_string(o.int8_weights));
        s += csv_row(std::string("int8_activation"), std::to_string(o.int8_activation));
        files["optimization_summary.csv"] = s;
    }
    if (r.bench) {
        std::string lat = "device,latency_ms,cumulative_fraction\n";
        std::string energy = "device,job_id,model_id,mean_latency_ms,per_inference_energy_j,mean_power_w,efficiency_mflop_per_sw\n";
        for (const auto& [device, dev] : *r.bench) {
            std::vector<double> values;
            for (const auto& row : dev.rows) {
                values.push_back(row.mean_latency_ms);
                energy += csv_row(csv_field(device), csv_field(row.job_id), csv_field(row.model_id),
                                  csv_number(row.mean_latency_ms), csv_number(row.per_inference_energy_j),
                                  csv_number(row.mean_power_w),
                                  row.efficiency_flops_per_j ? csv_number(to_mflop_per_sw(*row.efficiency_flops_per_j))
                                                             : std::string());
            }
            if (values.empty()) continue;
            for (const auto& [v, f] : ecdf(values).points) lat += csv_row(csv_field(device), csv_number(v), csv_number(f));
        }
        files["fig5_latency_ecdf.csv"] = lat;
        files["fig8_energy_power_efficiency.csv"] = energy;
        std::string sc = "scenario,device,inference_count,median_energy_j,discharge_mah\n";
        for (const auto& row : scenario_table(r)) {
            sc += csv_row(row.scenario, csv_field(row.device_id), std::to_string(row.inference_count),
                          csv_number(row.median_energy_j), csv_number(row.discharge_mah));
        }
        files["table5_scenarios.csv"] = sc;
    }
    if (r.snapshot_diff) {
        std::string s = "category,additions,removals\n";
        for (const auto& row : r.snapshot_diff->rows) {
            s += csv_row(csv_field(row.category), std::to_string(row.additions), std::to_string(row.removals));
        }
        files["fig7_snapshot_diff.csv"] = s;
    }
    return files;
}

std::map<std::string, std::string> export_report(const CorpusReport& report, ExportFormat format) {
    switch (format) {
        case ExportFormat::Json: return {{"report.json", export_json(report)}};
        case ExportFormat::Csv: return export_csv(report);
    }
    throw Error(ErrorCode::UnsupportedFormat, "unknown export format");
}

CorpusReport import_report(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Io, fmt::format("report is not JSON: {}", e.what()));
    }
    try {
        const auto version = doc.at("schema_version").get<int>();
        if (version != k_report_schema_version) {
            throw Error(ErrorCode::UnsupportedFormat,
                        fmt::format("report schema_version {} (expected {})", version, k_report_schema_version));
        }
        CorpusReport r;
        r.snapshot_label = doc.at("snapshot_label").get<std::string>();
        const auto& params = doc.at("parameters");
        r.parameters.battery_voltage_v = params.at("battery_voltage_v").get<double>();
        r.parameters.audio_window_s = params.at("audio_window_s").get<double>();
        r.parameters.device_voltage_v = params.at("device_voltage_v").get<std::map<std::string, double>>();
        const auto& sec = doc.at("sections");

        const auto& tot = sec.at(std::string(k_section_totals));
        r.totals.apps = tot.at("apps").get<std::int64_t>();
        r.totals.apps_with_frameworks = tot.at("apps_with_frameworks").get<std::int64_t>();
        r.totals.apps_with_models = tot.at("apps_with_models").get<std::int64_t>();
        r.totals.total_models = tot.at("total_models").get<std::int64_t>();
        r.totals.unique_models = tot.at("unique_models").get<std::int64_t>();
        r.totals.parsed_unique_models = tot.at("parsed_unique_models").get<std::int64_t>();
        r.totals.shared_20_models = tot.at("shared_20_models").get<std::int64_t>();
        r.totals.fine_tuned_models = tot.at("fine_tuned_models").get<std::int64_t>();
        for (const auto& [fw, row] : tot.at("per_framework").items()) {
            r.per_framework[fw] = {row.at("apps").get<std::int64_t>(), row.at("models").get<std::int64_t>()};
        }
        for (const auto& [c, row] : tot.at("per_category").items()) {
            r.per_category[c] = {row.at("apps").get<std::int64_t>(), row.at("apps_with_models").get<std::int64_t>(),
                                 row.at("models").get<std::int64_t>(),
                                 row.at("model_digests").get<std::set<std::string>>()};
        }

        for (const auto& [modality, row] : sec.at(std::string(k_section_layers)).items()) {
            r.layer_counts[modality] = row.at("counts").get<std::map<std::string, std::int64_t>>();
        }
        for (const auto& [task, row] : sec.at(std::string(k_section_tasks)).items()) {
            auto& t = r.tasks[task];
            t.models = row.at("models").get<std::int64_t>();
            t.apps = row.at("apps").get<std::int64_t>();
        }
        for (const auto& [task, row] : sec.at(std::string(k_section_flops_by_task)).items()) {
            auto& t = r.tasks[task];
            for (const auto& p : row.at("models")) {
                t.points.push_back({p.at("model_id").get<std::string>(), p.at("flops").get<std::int64_t>(),
                                    p.at("params").get<std::int64_t>()});
            }
        }

        const auto& cloud = sec.at(std::string(k_section_cloud));
        r.cloud.apps_with_cloud_api = cloud.at("apps_with_cloud_api").get<std::int64_t>();
        r.cloud.apps_with_cloud_and_models = cloud.at("apps_with_cloud_and_models").get<std::int64_t>();
        for (const auto& [v, row] : cloud.at("vendors").items()) {
            r.cloud.vendors[v] = {row.at("apps").get<std::int64_t>(),
                                  row.at("patterns").get<std::map<std::string, std::int64_t>>()};
        }

        const auto& opt = sec.at(std::string(k_section_optimizations));
        r.optimizations.models = opt.at("models").get<std::int64_t>();
        r.optimizations.clustering = opt.at("clustering").get<std::int64_t>();
        r.optimizations.pruning = opt.at("pruning").get<std::int64_t>();
        r.optimizations.dequantize = opt.at("dequantize").get<std::int64_t>();
        r.optimizations.int8_weights = opt.at("int8_weights").get<std::int64_t>();
        r.optimizations.int8_activation = opt.at("int8_activation").get<std::int64_t>();
        r.optimizations.sparsity = opt.at("sparsity").get<std::vector<double>>();

        const auto energy_key = std::string(k_section_energy);
        if (sec.contains(energy_key)) {
            std::map<std::string, DeviceBench> bench;
            for (const auto& [device, d] : sec[energy_key].items()) {
                auto& dev = bench[device];
                dev.jobs = d.at("jobs").get<std::int64_t>();
                dev.failed = d.at("failed").get<std::int64_t>();
                for (const auto& row : d.at("rows")) {
                    BenchRow b;
                    b.device_id = device;
                    b.job_id = row.at("job_id").get<std::string>();
                    b.model_id = row.at("model_id").get<std::string>();
                    b.mean_latency_ms = row.at("mean_latency_ms").get<double>();
                    b.per_inference_energy_j = row.at("per_inference_energy_j").get<double>();
                    b.mean_power_w = row.at("mean_power_w").get<double>();
                    b.efficiency_flops_per_j = read_opt(row, "efficiency_flops_per_j");
                    b.total_flops = row.at("total_flops").get<double>();
                    dev.rows.push_back(std::move(b));
                }
            }
            r.bench = std::move(bench);
        }
        const auto diff_key = std::string(k_section_diff);
        if (sec.contains(diff_key)) {
            SnapshotDiff d;
            d.baseline_label = sec[diff_key].at("baseline_label").get<std::string>();
            for (const auto& row : sec[diff_key].at("rows")) {
                d.rows.push_back({row.at("category").get<std::string>(), row.at("additions").get<std::int64_t>(),
                                  row.at("removals").get<std::int64_t>()});
            }
            r.snapshot_diff = std::move(d);
        }
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, fmt::format("malformed report: {}", e.what()));
    }
}

std::vector<std::string> report_sections(std::string_view text) {
    try {
        const auto doc = json::parse(text);
        std::vector<std::string> out;
        for (const auto& [name, body] : doc.at("sections").items()) out.push_back(name);
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, fmt::format("malformed report: {}", e.what()));
    }
}

}  // namespace prospector
