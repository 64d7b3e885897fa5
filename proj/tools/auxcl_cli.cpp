#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "auxcl/auxcl.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code(auxcl_status s) {
    switch (s) {
        case AUXCL_OK: return kExitOk;
        case AUXCL_ERR_ARGUMENT:
        case AUXCL_ERR_CONFIG: return kExitConfig;
        default: return kExitRuntime;
    }
}

int fail(auxcl_status s) {
    std::fprintf(stderr, "error: %s\n", auxcl_last_error());
    return exit_code(s);
}

void print_progress(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

int cmd_run(const std::string& config, bool dry_run, std::size_t workers) {
    auxcl_experiment* exp = nullptr;
    if (auto s = auxcl_experiment_load(config.c_str(), &exp); s != AUXCL_OK) return fail(s);
    std::size_t rows = 0;
    auxcl_status s = auxcl_experiment_validate(exp, &rows);
    if (s == AUXCL_OK && dry_run) {
        std::printf("config ok: %zu result rows would be written to %s\n", rows,
                    auxcl_experiment_output_dir(exp));
    } else if (s == AUXCL_OK) {
        s = auxcl_experiment_run(exp, workers, print_progress, nullptr);
        if (s == AUXCL_OK)
            std::printf("wrote %zu rows to %s\n", rows, auxcl_experiment_output_dir(exp));
    }
    const int code = s == AUXCL_OK ? kExitOk : fail(s);
    auxcl_experiment_free(exp);
    return code;
}

int cmd_report(const std::string& dir, const std::string& format) {
    char* text = nullptr;
    const auto f = format == "csv" ? AUXCL_REPORT_CSV : AUXCL_REPORT_TEXT;
    if (auto s = auxcl_report(dir.c_str(), f, &text); s != AUXCL_OK) return fail(s);
    std::fputs(text, stdout);
    auxcl_string_free(text);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual-learning experiments with auxiliary placeholder classes"};
    app.set_version_flag("--version", std::string(auxcl_version()));
    app.require_subcommand(1);

    std::string config;
    bool dry_run = false;
    std::size_t workers = 0;
    auto* run = app.add_subcommand("run", "Run every cell of an experiment grid");
    run->add_option("--config", config, "YAML experiment config")->required()->check(CLI::ExistingFile);
    run->add_flag("--dry-run", dry_run, "Validate config and data, print row count, do not train");
    run->add_option("--workers", workers, "Parallel cells (default: config value)")
        ->check(CLI::PositiveNumber);

    std::string dir, format = "text";
    auto* report = app.add_subcommand("report", "Aggregate metrics.csv files over seeds");
    report->add_option("dir", dir, "Results directory")->required();
    report->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"text", "csv"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }
    if (*run) return cmd_run(config, dry_run, workers);
    return cmd_report(dir, format);
}
