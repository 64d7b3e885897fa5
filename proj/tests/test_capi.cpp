#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "auxcl/auxcl.h"

namespace fs = std::filesystem;

namespace {

fs::path write_config(const std::string& name, const std::string& body) {
    const auto dir = fs::temp_directory_path() / "auxcl_capi";
    fs::create_directories(dir);
    const auto path = dir / name;
    std::ofstream(path) << body;
    return path;
}

std::string config_text(const fs::path& out, int aux_classes = 4) {
    std::string aux = "[";
    for (int i = 0; i < aux_classes; ++i) aux += (i ? ", " : "") + std::to_string(4 + i);
    aux += "]";
    return "version: 1\nname: capi\noutput_dir: " + out.string() +
           "\ndata: {kind: synthetic, num_classes: 12, classes: [0, 1, 2, 3], train_per_class: 10,"
           " test_per_class: 4, shape: [5]}\n"
           "aux: {kind: synthetic, num_classes: 12, classes: " + aux +
           ", train_per_class: 10, test_per_class: 4, shape: [5]}\n"
           "sequence: {classes_per_task: 2, num_tasks: 2}\n"
           "model: {hidden: [8]}\n"
           "training: {epochs_per_task: 1, task_batch: 4, peak_window: 2}\n"
           "grid: {methods: [derpp], buffers: [8], arms: [aux+mah]}\nseeds: [3]\n";
}

void count_lines(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST(CApi, LoadValidateRunReport) {
    const auto out = fs::temp_directory_path() / "auxcl_capi_out";
    fs::remove_all(out);
    auxcl_experiment* exp = nullptr;
    ASSERT_EQ(auxcl_experiment_load(write_config("ok.yaml", config_text(out)).c_str(), &exp), AUXCL_OK)
        << auxcl_last_error();
    EXPECT_EQ(std::string(auxcl_experiment_output_dir(exp)), out.string());
    size_t rows = 0;
    EXPECT_EQ(auxcl_experiment_validate(exp, &rows), AUXCL_OK);
    EXPECT_EQ(rows, 1u);
    EXPECT_FALSE(fs::exists(out));  // validation writes nothing
    int lines = 0;
    EXPECT_EQ(auxcl_experiment_run(exp, 0, count_lines, &lines), AUXCL_OK) << auxcl_last_error();
    EXPECT_EQ(lines, 1);
    EXPECT_TRUE(fs::exists(out / "metrics.csv"));
    auxcl_experiment_free(exp);

    char* text = nullptr;
    ASSERT_EQ(auxcl_report(out.c_str(), AUXCL_REPORT_CSV, &text), AUXCL_OK);
    EXPECT_NE(std::string(text).find("derpp,8,aux+mah,1,"), std::string::npos) << text;
    auxcl_string_free(text);
    fs::remove_all(out);
}

TEST(CApi, ErrorCodes) {
    auxcl_experiment* exp = nullptr;
    EXPECT_EQ(auxcl_experiment_load(nullptr, &exp), AUXCL_ERR_ARGUMENT);
    EXPECT_EQ(auxcl_experiment_load("/nonexistent/config.yaml", &exp), AUXCL_ERR_CONFIG);
    EXPECT_EQ(exp, nullptr);
    EXPECT_NE(std::string(auxcl_last_error()), "");

    const auto path = write_config("short.yaml", config_text("/tmp/unused", 1));
    ASSERT_EQ(auxcl_experiment_load(path.c_str(), &exp), AUXCL_OK);
    EXPECT_EQ(auxcl_experiment_validate(exp, nullptr), AUXCL_ERR_CONFIG);
    EXPECT_NE(std::string(auxcl_last_error()).find("need 2 aux classes, have 1"), std::string::npos)
        << auxcl_last_error();
    auxcl_experiment_free(exp);

    char* text = nullptr;
    EXPECT_EQ(auxcl_report("/nonexistent/results", AUXCL_REPORT_TEXT, &text), AUXCL_ERR_ARGUMENT);
    EXPECT_EQ(text, nullptr);
    EXPECT_STRNE(auxcl_version(), "");
}
