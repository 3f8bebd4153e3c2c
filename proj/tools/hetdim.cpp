#include "hetdim/runner.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

// HETDIM_LOG picks the level; logs go to stderr so stdout stays machine-readable.
bool configure_logging() {
    auto logger = spdlog::stderr_color_mt("hetdim");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    const char* env = std::getenv("HETDIM_LOG");
    if (env == nullptr || *env == '\0') return true;
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else {
        std::cerr << "input error: HETDIM_LOG must be one of error, info, debug (got \"" << level << "\")\n";
        return false;
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterodimensional-cycle experiments for a saddle with a homoclinic tangency"};
    app.require_subcommand(1);

    std::string config;
    std::string out_dir;
    int jobs = 0;
    auto* run = app.add_subcommand("run", "run the experiments of a config file");
    run->add_option("--config", config, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    run->add_option("--jobs", jobs, "worker threads (overrides the config)")->check(CLI::PositiveNumber);

    std::string certificate;
    auto* replay = app.add_subcommand("replay", "re-evaluate a certificate");
    replay->add_option("certificate", certificate, "certificate JSON")->required();

    std::string model_config;
    auto* check = app.add_subcommand("check-model", "report the standing conditions of a config's model");
    check->add_option("--config", model_config, "experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? hetdim::kExitOk : hetdim::kExitInput;
    }
    if (!configure_logging()) return hetdim::kExitInput;

    try {
        if (*run) {
            hetdim::RunOverrides overrides;
            if (!out_dir.empty()) overrides.output_dir = out_dir;
            if (jobs > 0) overrides.jobs = jobs;
            return hetdim::run_experiment(config, overrides, std::cout, std::cerr);
        }
        if (*replay) return hetdim::replay_certificate_file(certificate, std::cout, std::cerr);
        return hetdim::check_model_file(model_config, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return hetdim::kExitNumeric;
    }
}
