#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dsc/cli.hpp"

using namespace dsc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dsc_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const { return (path / sub).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

io::Dataset make_dataset(size_t n, uint64_t seed) {
    Rng rng(seed);
    io::Dataset ds;
    ds.channels = 1;
    for (size_t i = 0; i < n; ++i) {
        io::DatasetRecord r;
        r.id = i;
        r.line = uint32_t(1 + rng.next_below(46));
        r.x_pct = rng.uniform(0, 100);
        r.tau = rng.uniform(0.06, 0.4);
        r.k = rng.uniform(0.75, 1.5);
        r.tis = uint8_t(rng.next_below(2));
        r.r_metric = rng.uniform(0, 0.5);
        r.rhat = r.k * r.tau;
        r.lambda_max = rng.uniform(0, 700);
        r.dr_label = int8_t(rng.next_below(2));
        ds.records.push_back(r);
        std::vector<float> p(ds.payload_size());
        for (auto& v : p) v = float(rng.next_double());
        ds.payloads.push_back(std::move(p));
    }
    return ds;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

int run_cli(std::initializer_list<std::string> args) {
    return cli::dispatch(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("dataset binary round trip") {
    TempDir tmp;
    io::Dataset ds = make_dataset(50, 42);
    std::string path = tmp.str("ds.dsc");
    io::write_dataset(ds, path);

    io::Dataset back = io::read_dataset(path);
    REQUIRE(back.records.size() == 50);
    CHECK(back.channels == 1);
    for (size_t i = 0; i < 50; ++i) {
        CHECK(back.payloads[i] == ds.payloads[i]);  // bit-identical f32 payload
        CHECK(back.records[i].id == ds.records[i].id);
        CHECK(back.records[i].line == ds.records[i].line);
        CHECK(back.records[i].tau == ds.records[i].tau);
        CHECK(back.records[i].rhat == ds.records[i].rhat);
        CHECK(back.records[i].dr_label == ds.records[i].dr_label);
    }
    CHECK(fs::exists(io::sidecar_path(path)));
    // sidecar row count matches header count
    std::string csv = slurp(io::sidecar_path(path));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
}

TEST_CASE("dataset format guards") {
    TempDir tmp;
    io::Dataset ds = make_dataset(3, 1);
    std::string path = tmp.str("ds.dsc");
    io::write_dataset(ds, path);

    SUBCASE("corrupted magic names the file") {
        std::string data = slurp(path);
        data[0] = 'X';
        io::detail::write_file_atomic(path, data);
        try {
            io::read_dataset(path);
            FAIL("expected an exception");
        } catch (const ValidationError& ex) {
            CHECK(std::string(ex.what()).find("ds.dsc") != std::string::npos);
            CHECK(std::string(ex.what()).find("magic") != std::string::npos);
        }
    }
    SUBCASE("header count inconsistent with the payload") {
        std::string data = slurp(path);
        data[8] = 9;  // n_records low byte
        io::detail::write_file_atomic(path, data);
        CHECK_THROWS_AS(io::read_dataset(path), ValidationError);
    }
    SUBCASE("truncated file") {
        std::string data = slurp(path);
        data.resize(data.size() / 2);
        io::detail::write_file_atomic(path, data);
        CHECK_THROWS_AS(io::read_dataset(path), ValidationError);
    }
}

TEST_CASE("checkpoint round trips") {
    TempDir tmp;

    SUBCASE("classifier with stats") {
        nn::CnnAttConfig cfg;
        cfg.rows = 270;
        cfg.cols = 250;
        nn::CnnAttModel<float> m(cfg);
        m.init(7);
        enc::RowStats st;
        Rng rng(3);
        for (int r = 0; r < enc::kRows; ++r) {
            double a = rng.uniform(-5, 5);
            st.min.push_back(a);
            st.max.push_back(a + rng.uniform(0.1, 3.0));
        }
        std::string path = tmp.str("model.dscm");
        io::save_cnn_att(m, st, path);
        auto back = io::load_cnn_att(path);
        CHECK(back.model.params() == m.params());
        CHECK(back.stats.min == st.min);
        CHECK(back.stats.max == st.max);
        CHECK(back.model.config().heads == cfg.heads);
    }
    SUBCASE("regressor") {
        nn::RegressorConfig rc;
        rc.input_dim = 6;
        nn::RegressorModel<double> m(rc);
        m.init(11);
        std::string path = tmp.str("reg.dscm");
        io::save_regressor(m, path);
        auto back = io::load_regressor(path);
        CHECK(back.params() == m.params());
        CHECK_THROWS_AS(io::load_cnn_att(path), ValidationError);
    }
    SUBCASE("bad magic") {
        std::string path = tmp.str("junk.dscm");
        io::detail::write_file_atomic(path, "garbage");
        CHECK_THROWS_AS(io::load_cnn_att(path), ValidationError);
    }
}

TEST_CASE("png writer emits valid deterministic files") {
    TempDir tmp;
    enc::IntensityMap m;
    m.data.resize(size_t(enc::kRows) * enc::kCols);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = double(i % 256) / 255.0;
    std::string p1 = tmp.str("a.png"), p2 = tmp.str("b.png");
    png::write_intensity_map(p1, m);
    png::write_intensity_map(p2, m);
    std::string a = slurp(p1);
    CHECK(a.substr(1, 3) == "PNG");
    CHECK(a == slurp(p2));
}

TEST_CASE("cli dispatch") {
    TempDir tmp;

    SUBCASE("gen writes a dataset and exits cleanly") {
        CHECK(run_cli({"gen", "--n", "3", "--seed", "7", "--out", tmp.str()}) == 0);
        CHECK(fs::exists(tmp.str("dataset.dsc")));
        io::Dataset ds = io::read_dataset(tmp.str("dataset.dsc"));
        CHECK(ds.records.size() == 3);
        for (const auto& r : ds.records) CHECK(r.dr_label >= 0);
    }
    SUBCASE("gen validates the count") {
        CHECK(run_cli({"gen", "--n", "0", "--seed", "7", "--out", tmp.str()}) == 1);
    }
    SUBCASE("gen requires a seed") {
        CHECK(run_cli({"gen", "--n", "2", "--out", tmp.str()}) == 1);
    }
    SUBCASE("unknown subcommand exits 64") {
        CHECK(run_cli({"frobnicate"}) == 64);
        CHECK(run_cli({}) == 64);
    }
    SUBCASE("risk table is deterministic and supports MC columns") {
        std::string out = tmp.str("risk.csv");
        CHECK(run_cli({"risk", "--asr", "0.48", "--mc", "20000", "--seed", "3", "--out", out}) == 0);
        std::string a = slurp(out);
        CHECK(run_cli({"risk", "--asr", "0.48", "--mc", "20000", "--seed", "3", "--out", out}) == 0);
        CHECK(a == slurp(out));
        CHECK(a.find("closed_form") != std::string::npos);
    }
    SUBCASE("risk rejects a non-positive asr") {
        CHECK(run_cli({"risk", "--asr", "-1"}) == 1);
    }
    SUBCASE("config file requires a seed and resolvable paths") {
        std::string cfgp = tmp.str("run.cfg");
        io::detail::write_file_atomic(cfgp, "scenario_count=2\n");
        CHECK(run_cli({"--config", cfgp, "gen", "--out", tmp.str()}) == 1);
        io::detail::write_file_atomic(cfgp, "seed=5\nsystem_spec=/no/such/dir\n");
        CHECK(run_cli({"--config", cfgp, "gen", "--out", tmp.str()}) == 1);
        io::detail::write_file_atomic(cfgp, "seed=5\nscenario_count=2\n");
        CHECK(run_cli({"--config", cfgp, "gen", "--out", tmp.str()}) == 0);
        io::Dataset ds = io::read_dataset(tmp.str("dataset.dsc"));
        CHECK(ds.records.size() == 2);
    }
}

TEST_CASE("summary line is machine-readable json with the contract fields") {
    std::string cmd = std::string(DSC_CLI_BIN) + " risk --asr 0.48 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p);
    std::string out;
    char buf[4096];
    while (size_t n = fread(buf, 1, sizeof(buf), p)) out.append(buf, n);
    REQUIRE(pclose(p) == 0);
    auto nl = out.find_last_of('\n', out.size() - 2);
    auto j = nlohmann::json::parse(out.substr(nl == std::string::npos ? 0 : nl + 1));
    CHECK(j["command"] == "risk");
    CHECK(j.contains("seed"));
    CHECK(j.contains("elapsed"));
    CHECK(j.contains("outputs"));
    CHECK(std::fabs(j["sfi"].get<double>() - 0.8751) < 5e-4);
    // the closed-form table itself is printed before the summary
    CHECK(out.find("closed_form") != std::string::npos);
}

TEST_CASE("pipeline stages chain end to end at small scale") {
    TempDir tmp;
    REQUIRE(run_cli({"gen", "--n", "40", "--seed", "99", "--out", tmp.str()}) == 0);
    std::string ds_path = tmp.str("dataset.dsc");

    SUBCASE("encode produces the 5-channel volume file plus stats and PNGs") {
        std::string enc_path = tmp.str("encoded.dsc");
        REQUIRE(run_cli({"encode", "--in", ds_path, "--out", enc_path, "--stats",
                         tmp.str("stats.csv"), "--png", tmp.str("png"), "--png-limit", "2"}) == 0);
        io::Dataset enc_ds = io::read_dataset(enc_path);
        CHECK(enc_ds.channels == 5);
        CHECK(enc_ds.records.size() == io::read_dataset(ds_path).records.size());
        CHECK(fs::exists(tmp.str("stats.csv")));
        size_t pngs = 0;
        for (auto& e : fs::directory_iterator(tmp.str("png"))) pngs += e.path().extension() == ".png";
        CHECK(pngs == 2);
        // volumes live in [0, 1]
        for (float v : enc_ds.payloads[0]) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
    }

    SUBCASE("train, eval and report run on the small dataset") {
        std::string model = tmp.str("model.dscm");
        int rc = run_cli({"train", "--in", ds_path, "--out", model, "--seed", "5", "--folds", "2",
                          "--epochs", "1", "--batch", "4", "--lr", "1e-3", "--metrics",
                          tmp.str("folds.csv")});
        REQUIRE(rc == 0);
        CHECK(fs::exists(model));
        CHECK(fs::exists(tmp.str("folds.csv")));
        CHECK(run_cli({"eval", "--in", ds_path, "--model", model}) == 0);
        CHECK(run_cli({"eval", "--in", ds_path, "--model", model, "--wmv", "--seed", "3"}) == 0);
        CHECK(run_cli({"finetune", "--in", ds_path, "--model", model, "--out",
                       tmp.str("tuned.dscm"), "--seed", "6", "--epochs", "1", "--batch", "4"}) ==
              0);
        CHECK(fs::exists(tmp.str("tuned.dscm")));

        REQUIRE(run_cli({"report", "--ds", ds_path, "--model", model, "--out", tmp.str("rep"),
                         "--png-limit", "2"}) == 0);
        for (const char* f : {"sfi_curve.csv", "model_metrics.csv", "kernel_anw.csv",
                              "attention_indices.csv", "summary.txt"})
            CHECK(fs::exists(tmp.str("rep/") + f));

        // report reruns byte-identically
        std::string before = slurp(tmp.str("rep/sfi_curve.csv")) +
                             slurp(tmp.str("rep/model_metrics.csv")) +
                             slurp(tmp.str("rep/kernel_anw.csv"));
        REQUIRE(run_cli({"report", "--ds", ds_path, "--model", model, "--out", tmp.str("rep"),
                         "--png-limit", "2"}) == 0);
        CHECK(before == slurp(tmp.str("rep/sfi_curve.csv")) +
                            slurp(tmp.str("rep/model_metrics.csv")) +
                            slurp(tmp.str("rep/kernel_anw.csv")));
    }

    SUBCASE("report without a model still renders the risk section") {
        REQUIRE(run_cli({"report", "--ds", ds_path, "--out", tmp.str("rep2")}) == 0);
        CHECK(fs::exists(tmp.str("rep2/sfi_curve.csv")));
        CHECK(!fs::exists(tmp.str("rep2/model_metrics.csv")));
        std::string s = slurp(tmp.str("rep2/summary.txt"));
        CHECK(s.find("warning") != std::string::npos);
    }

    SUBCASE("dr regressor trains and checkpoints") {
        std::string reg = tmp.str("reg.dscm");
        REQUIRE(run_cli({"train", "--in", ds_path, "--out", reg, "--task", "dr-regress", "--seed",
                         "5", "--epochs", "200"}) == 0);
        auto model = io::load_regressor(reg);
        nn::RegressorWorkspace<double> ws;
        std::vector<double> f{1.0, 0.2, 0.5, 0.2, 0.18, 0.0};
        double y = model.forward(f.data(), ws);
        CHECK(y >= 0.0);
        CHECK(y <= 1.0);
    }
}
