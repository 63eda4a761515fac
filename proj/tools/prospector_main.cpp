// SPDX-License-Identifier: Apache-2.0
// prospector: scan, analyze, benchmark and report on a corpus of app packages.
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prospector/pipeline.hpp"

namespace {

struct Options {
    std::string corpus;
    std::string out;
    std::string config;
    std::int64_t jobs = 1;
};

void add_common(CLI::App* cmd, Options& opts) {
    cmd->add_option("--corpus", opts.corpus, "Directory of .apk/.obb/.zip packages")->required();
    cmd->add_option("--out", opts.out, "Output directory for stage files")->required();
    cmd->add_option("--config", opts.config, "JSON run configuration");
    cmd->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::Range(std::int64_t{1}, std::int64_t{1024}));
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("prospector"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Locate, parse and profile on-device DNN models in app packages"};
    app.require_subcommand(1);
    Options opts;
    const std::map<std::string, std::vector<prospector::Stage>> commands{
        {"scan", {prospector::Stage::Scan}},
        {"analyze", {prospector::Stage::Analyze}},
        {"bench", {prospector::Stage::Bench}},
        {"report", {prospector::Stage::Report}},
        {"run",
         {prospector::Stage::Scan, prospector::Stage::Analyze, prospector::Stage::Bench, prospector::Stage::Report}},
    };
    const std::map<std::string, std::string> help{
        {"scan", "Enumerate and validate model candidates"},
        {"analyze", "Parse models; compute stats, fingerprints and optimization markers"},
        {"bench", "Benchmark parsed models on the configured devices"},
        {"report", "Aggregate stage outputs into report.json and CSV tables"},
        {"run", "Run all four stages in order"},
    };
    for (const auto& [name, stages] : commands) add_common(app.add_subcommand(name, help.at(name)), opts);

    CLI11_PARSE(app, argc, argv);

    try {
        prospector::configure_logging_from_env();
        prospector::RunManifest manifest;
        manifest.corpus = opts.corpus;
        manifest.out = opts.out;
        manifest.jobs = opts.jobs;
        if (!opts.config.empty()) manifest.config_path = opts.config;
        manifest.stages = commands.at(app.get_subcommands().front()->get_name());
        const auto config = prospector::load_config(manifest.config_path);
        prospector::run_pipeline(manifest, config);
    } catch (const prospector::Error& e) {
        spdlog::error("{}", e.what());
        return EXIT_FAILURE;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return EXIT_FAILURE;
    }
    return EXIT_SUCCESS;
}
