#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "nlv/error.hpp"
#include "nlv/pipeline.hpp"
#include "nlv/report.hpp"
#include "nlv/simulate.hpp"

using namespace nlv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const fs::path kSpec = fs::path(NLV_SOURCE_DIR) / "data" / "california.spec";

class Pipeline : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("nlv_pipeline_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        auto c = california_analog();
        c.observations = 900;
        c.respondents = 300;
        json j;
        to_json(j, c);
        write_json_file(dir_ / "syn.json", j);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path config(json j, const std::string& name = "run.json") const {
        if (!j.contains("spec")) j["spec"] = kSpec.string();
        if (!j.contains("output")) j["output"] = "out";
        write_json_file(dir_ / name, j);
        return dir_ / name;
    }

    // Data-mode inputs written from a generated dataset.
    void write_data_inputs() const {
        auto c = california_analog();
        c.observations = 900;
        c.respondents = 300;
        write_synthetic(generate_synthetic(c), dir_ / "in");
    }

    fs::path dir_;
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + NLV_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(Pipeline, SyntheticRunSucceeds) {
    const auto o = run_pipeline(config({{"synthetic", "syn.json"}, {"simulation", {{"sweep_delta", 1.0}}}}));
    ASSERT_EQ(o.exit_code, kExitOk) << o.message;
    for (const char* f : {"results.json", "report.txt", "manifest.json", "cfa_scores.csv", "shares.csv", "sweep.csv",
                          "estimation_log.txt", "data/choices.csv", "data/truth.json"}) {
        EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
    }
    const auto m = read_json_file(dir_ / "out" / "manifest.json");
    EXPECT_EQ(m.at("status"), "success");
    EXPECT_EQ(m.at("stages_completed").size(), 4u);
    EXPECT_EQ(m.at("inputs").size(), 3u);  // config, spec, synthetic
    const auto results = read_json_file(dir_ / "out" / "results.json");
    EXPECT_EQ(results.at("schema_version"), kResultSchemaVersion);
    EXPECT_TRUE(results.contains("cfa"));
    EXPECT_TRUE(results.contains("simulation"));
    const auto report = slurp(dir_ / "out" / "report.txt");
    EXPECT_NE(report.find("Inclusive value parameter"), std::string::npos);
    EXPECT_NE(report.find("confirmatory factor analysis"), std::string::npos);
}

TEST_F(Pipeline, SimulationCanBeSkipped) {
    const auto o = run_pipeline(config({{"synthetic", "syn.json"}, {"simulation", {{"enabled", false}}}}));
    ASSERT_EQ(o.exit_code, kExitOk) << o.message;
    EXPECT_FALSE(fs::exists(dir_ / "out" / "shares.csv"));
    EXPECT_FALSE(read_json_file(dir_ / "out" / "results.json").contains("simulation"));
    EXPECT_EQ(slurp(dir_ / "out" / "report.txt").find("Sample enumeration"), std::string::npos);
}

TEST_F(Pipeline, MissingFileExitsTwoNamingPath) {
    const auto o = run_pipeline(config({{"data", "nope/choices.csv"}, {"indicators", "ind.csv"}}));
    EXPECT_EQ(o.exit_code, kExitValidation);
    EXPECT_NE(o.message.find("nope/choices.csv"), std::string::npos) << o.message;
    EXPECT_EQ(o.failed_stage.value_or(""), "ingest");
    const auto m = read_json_file(dir_ / "out" / "manifest.json");
    EXPECT_EQ(m.at("failed_stage"), "ingest");
    EXPECT_EQ(m.at("exit_code"), 2);
}

TEST_F(Pipeline, MissingConfigExitsTwo) {
    const auto o = run_pipeline(dir_ / "absent.json", {.output = dir_ / "out"});
    EXPECT_EQ(o.exit_code, kExitValidation);
    EXPECT_NE(o.message.find("absent.json"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "manifest.json"));
}

TEST_F(Pipeline, MalformedConfigExitsTwo) {
    const auto o = run_pipeline(config({{"synthetic", "syn.json"}, {"data", "x.csv"}}));
    EXPECT_EQ(o.exit_code, kExitValidation);
    write_text_file(dir_ / "bad.json", "{ not json");
    EXPECT_EQ(run_pipeline(dir_ / "bad.json").exit_code, kExitValidation);
}

TEST_F(Pipeline, ForcedIterationCapExitsFour) {
    const auto o = run_pipeline(config({{"synthetic", "syn.json"}}), {.max_iterations = 1});
    EXPECT_EQ(o.exit_code, kExitEstimation);
    EXPECT_EQ(o.failed_stage.value_or(""), "estimate");
    const auto log = slurp(dir_ / "out" / "estimation_log.txt");
    EXPECT_NE(log.find("no start converged"), std::string::npos);
    EXPECT_NE(log.find("iter"), std::string::npos);
    const auto m = read_json_file(dir_ / "out" / "manifest.json");
    EXPECT_EQ(m.at("stages_completed"), json({"ingest", "cfa"}));
}

TEST_F(Pipeline, CfaFailureExitsThree) {
    write_data_inputs();
    // A constant indicator column cannot be fitted.
    const auto ind = csv::Table::read(dir_ / "in" / "indicators.csv");
    csv::Table broken(ind.header());
    for (std::size_t r = 0; r < ind.rows(); ++r) {
        auto row = ind.row(r);
        row[1] = "1";
        broken.add_row(row);
    }
    broken.write(dir_ / "in" / "indicators.csv");
    const auto o = run_pipeline(config(
        {{"data", "in/choices.csv"}, {"schema", "in/schema.json"}, {"indicators", "in/indicators.csv"}}));
    EXPECT_EQ(o.exit_code, kExitCfa) << o.message;
    EXPECT_EQ(o.failed_stage.value_or(""), "cfa");
}

TEST_F(Pipeline, LatentWithoutIndicatorsExitsTwo) {
    write_data_inputs();
    const auto o = run_pipeline(config({{"data", "in/choices.csv"}, {"schema", "in/schema.json"}}));
    EXPECT_EQ(o.exit_code, kExitValidation);
}

TEST_F(Pipeline, DataModeAndManifestHash) {
    write_data_inputs();
    const auto cfg = config({{"data", "in/choices.csv"},
                             {"schema", "in/schema.json"},
                             {"indicators", "in/indicators.csv"},
                             {"simulation", {{"enabled", false}}},
                             {"estimation", {{"starts", 1}}}});
    const auto a = run_pipeline(cfg, {.output = dir_ / "a"});
    ASSERT_EQ(a.exit_code, kExitOk) << a.message;
    auto text = slurp(dir_ / "in" / "choices.csv");
    text.insert(text.size() - 1, "\r");  // one extra byte, same parsed data
    write_text_file(dir_ / "in" / "choices.csv", text);
    const auto b = run_pipeline(cfg, {.output = dir_ / "b"});
    const auto ma = read_json_file(dir_ / "a" / "manifest.json");
    const auto mb = read_json_file(dir_ / "b" / "manifest.json");
    EXPECT_NE(ma.at("inputs_digest"), mb.at("inputs_digest"));
    ASSERT_EQ(b.exit_code, kExitOk) << b.message;
    auto hash = [](const json& m, const std::string& role) {
        for (const auto& in : m.at("inputs")) {
            if (in.at("role") == role) return in.at("sha256").get<std::string>();
        }
        return std::string();
    };
    EXPECT_NE(hash(ma, "choices"), hash(mb, "choices"));
    EXPECT_EQ(hash(ma, "config"), hash(mb, "config"));
    EXPECT_EQ(hash(ma, "indicators"), hash(mb, "indicators"));
    EXPECT_EQ(slurp(dir_ / "a" / "results.json"), slurp(dir_ / "b" / "results.json"));
}

TEST_F(Pipeline, OneManifestPerOutputAndDeterministic) {
    const auto cfg = config({{"synthetic", "syn.json"}, {"simulation", {{"sweep_delta", 0.5}}}});
    ASSERT_EQ(run_pipeline(cfg, {.output = dir_ / "a"}).exit_code, kExitOk);
    ASSERT_EQ(run_pipeline(cfg, {.output = dir_ / "a"}).exit_code, kExitOk);
    ASSERT_EQ(run_pipeline(cfg, {.output = dir_ / "b"}).exit_code, kExitOk);
    std::size_t manifests = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir_ / "a")) {
        if (e.path().filename() == "manifest.json") ++manifests;
    }
    EXPECT_EQ(manifests, 1u);
    for (const char* f : {"results.json", "report.txt", "cfa_scores.csv", "shares.csv", "sweep.csv",
                          "estimation_log.txt", "data/choices.csv", "data/indicators.csv", "data/truth.json"}) {
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    }
}

TEST_F(Pipeline, SeedOverrideChangesData) {
    const auto cfg = config({{"synthetic", "syn.json"}, {"simulation", {{"enabled", false}}}});
    ASSERT_EQ(run_pipeline(cfg, {.seed = 7, .output = dir_ / "a"}).exit_code, kExitOk);
    ASSERT_EQ(run_pipeline(cfg, {.seed = 8, .output = dir_ / "b"}).exit_code, kExitOk);
    EXPECT_NE(slurp(dir_ / "a" / "data" / "choices.csv"), slurp(dir_ / "b" / "data" / "choices.csv"));
    EXPECT_EQ(read_json_file(dir_ / "a" / "manifest.json").at("seed"), 7);
}

TEST_F(Pipeline, ScoresCsv) {
    write_data_inputs();
    const auto data = load_choice_csv(dir_ / "in" / "choices.csv", schema_from_json(read_json_file(dir_ / "in" / "schema.json")));
    csv::Table t({"resp_id", "score"});
    for (std::size_t n = 0; n < data.respondents.size(); ++n) {
        if (n != 5) t.add_row({data.respondents[n], std::to_string(0.01 * n)});
    }
    t.write(dir_ / "scores.csv");
    try {
        read_scores_csv(dir_ / "scores.csv", data);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("'" + data.respondents[5] + "'"), std::string::npos);
    }
}

TEST_F(Pipeline, CliExitCodes) {
    EXPECT_EQ(run_cli("--version"), 0);
    EXPECT_EQ(run_cli(""), kExitUsage);
    EXPECT_EQ(run_cli("frobnicate"), kExitUsage);
    EXPECT_EQ(run_cli("run \"" + (dir_ / "absent.json").string() + "\" --out \"" + (dir_ / "o1").string() + "\""),
              kExitValidation);
    EXPECT_EQ(run_cli("estimate --data \"" + (dir_ / "absent.csv").string() + "\" --spec \"" + kSpec.string() + "\""),
              kExitValidation);
    const auto cfg = config({{"synthetic", "syn.json"}});
    EXPECT_EQ(run_cli("run \"" + cfg.string() + "\" --max-iterations 1 --out \"" + (dir_ / "o2").string() + "\""),
              kExitEstimation);
}

TEST_F(Pipeline, CliStages) {
    const auto gen = dir_ / "gen";
    ASSERT_EQ(run_cli("simulate generate --config \"" + (dir_ / "syn.json").string() + "\" --out \"" + gen.string() + "\""), 0);
    const std::string data_args = "--data \"" + (gen / "choices.csv").string() + "\" --schema \"" +
                                  (gen / "schema.json").string() + "\" --spec \"" + kSpec.string() + "\"";
    const auto est = dir_ / "est";
    ASSERT_EQ(run_cli("estimate " + data_args + " --indicators \"" + (gen / "indicators.csv").string() +
                      "\" --starts 1 --out \"" + est.string() + "\""),
              0);
    EXPECT_TRUE(fs::exists(est / "results.json"));
    EXPECT_TRUE(fs::exists(est / "cfa_scores.csv"));
    const auto sim = dir_ / "sim";
    EXPECT_EQ(run_cli("simulate shares " + data_args + " --scores \"" + (est / "cfa_scores.csv").string() +
                      "\" --results \"" + (est / "results.json").string() + "\" --out \"" + sim.string() + "\""),
              0);
    EXPECT_TRUE(fs::exists(sim / "shares.csv"));
    EXPECT_EQ(run_cli("simulate sweep " + data_args + " --scores \"" + (est / "cfa_scores.csv").string() +
                      "\" --results \"" + (est / "results.json").string() + "\" --delta 1 --out \"" + sim.string() + "\""),
              0);
    EXPECT_TRUE(fs::exists(sim / "sweep.csv"));
    EXPECT_EQ(run_cli("cfa fit --indicators \"" + (gen / "indicators.csv").string() + "\" --out \"" +
                      (dir_ / "cfa").string() + "\""),
              0);
    EXPECT_TRUE(fs::exists(dir_ / "cfa" / "cfa_scores.csv"));
    EXPECT_EQ(run_cli("report \"" + (est / "results.json").string() + "\" --out \"" + (dir_ / "r.txt").string() + "\""), 0);
    EXPECT_EQ(slurp(dir_ / "r.txt"), slurp(est / "report.txt"));

    auto j = read_json_file(est / "results.json");
    j["schema_version"] = 99;
    write_json_file(dir_ / "v99.json", j);
    EXPECT_EQ(run_cli("report \"" + (dir_ / "v99.json").string() + "\""), kExitValidation);
}
