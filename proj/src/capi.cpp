#include "auxcl/auxcl.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "auxcl/errors.hpp"
#include "auxcl/experiment.hpp"

struct auxcl_experiment {
    auxcl::ExperimentConfig config;
    std::string output_dir;
};

namespace {

thread_local std::string last_error;

template <typename F>
auxcl_status guarded(F&& body) {
    last_error.clear();
    try {
        body();
        return AUXCL_OK;
    } catch (const auxcl::ConfigError& e) {
        last_error = e.what();
        return AUXCL_ERR_CONFIG;
    } catch (const auxcl::UsageError& e) {
        last_error = e.what();
        return AUXCL_ERR_ARGUMENT;
    } catch (const std::exception& e) {
        last_error = e.what();
        return AUXCL_ERR_RUNTIME;
    } catch (...) {
        last_error = "unknown error";
        return AUXCL_ERR_RUNTIME;
    }
}

auxcl_status bad_argument(const char* what) {
    last_error = what;
    return AUXCL_ERR_ARGUMENT;
}

}  // namespace

extern "C" {

const char* auxcl_version(void) { return "1.0.0"; }

const char* auxcl_last_error(void) { return last_error.c_str(); }

auxcl_status auxcl_experiment_load(const char* config_path, auxcl_experiment** out) {
    if (!config_path || !out) return bad_argument("null argument");
    *out = nullptr;
    return guarded([&] {
        auto exp = std::make_unique<auxcl_experiment>();
        exp->config = auxcl::load_config(config_path);
        exp->output_dir = auxcl::resolve_output_dir(exp->config).string();
        *out = exp.release();
    });
}

void auxcl_experiment_free(auxcl_experiment* exp) { delete exp; }

auxcl_status auxcl_experiment_validate(auxcl_experiment* exp, size_t* rows_out) {
    if (!exp) return bad_argument("null experiment");
    return guarded([&] {
        const auto data = auxcl::load_data(exp->config);
        const std::size_t rows = auxcl::validate_experiment(exp->config, data);
        if (rows_out) *rows_out = rows;
    });
}

auxcl_status auxcl_experiment_run(auxcl_experiment* exp, size_t workers,
                                  auxcl_progress_fn progress, void* user) {
    if (!exp) return bad_argument("null experiment");
    return guarded([&] {
        auxcl::ProgressFn fn;
        if (progress) fn = [progress, user](const std::string& line) { progress(line.c_str(), user); };
        auxcl::run_experiment(exp->config, workers ? workers : exp->config.workers, fn);
    });
}

const char* auxcl_experiment_output_dir(const auxcl_experiment* exp) {
    return exp ? exp->output_dir.c_str() : "";
}

size_t auxcl_experiment_workers(const auxcl_experiment* exp) { return exp ? exp->config.workers : 0; }

auxcl_status auxcl_report(const char* results_dir, auxcl_report_format format, char** out) {
    if (!results_dir || !out) return bad_argument("null argument");
    if (format != AUXCL_REPORT_TEXT && format != AUXCL_REPORT_CSV)
        return bad_argument("unknown report format");
    *out = nullptr;
    return guarded([&] {
        const auto cells = auxcl::aggregate_results(results_dir);
        const std::string text = auxcl::render_report(
            cells, format == AUXCL_REPORT_CSV ? auxcl::ReportFormat::Csv : auxcl::ReportFormat::Text);
        char* buf = static_cast<char*>(std::malloc(text.size() + 1));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out = buf;
    });
}

void auxcl_string_free(char* s) { std::free(s); }

}  // extern "C"
