#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const char* kCli = AGCN_CLI_PATH;

int run(const std::string& args) {
    const int rc = std::system((std::string(kCli) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(rc);
}

int run_capture(const std::string& args, const fs::path& out_file) {
    const int rc = std::system(
        (std::string(kCli) + " " + args + " >" + out_file.string() + " 2>&1").c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / "agcn_cli_ws";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workspace() { fs::remove_all(dir); }
    fs::path file(const std::string& name, const std::string& content) const {
        fs::path p = dir / name;
        std::ofstream(p) << content;
        return p;
    }
};

const char* kSmallSynth = R"({
  "n_labels": 8, "n_clusters": 2, "samples": 96, "feature_dim": 12,
  "noise_sigma": 0.2, "seed": 3, "sample_seed": 4
})";

const char* kSmallConfig =
    "[model]\n"
    "d_f = 12\n"
    "[train]\n"
    "epochs = 2\n"
    "max_lr = 0.01\n"
    "batch_size = 32\n"
    "seed = 5\n"
    "patience = 0\n";

}  // namespace

TEST_CASE("gradcheck subcommand: one line per primitive, exit 0") {
    Workspace ws;
    const fs::path log = ws.dir / "gradcheck.log";
    CHECK(run_capture("gradcheck --trials 5 --seed 7", log) == 0);
    const std::string text = slurp(log);
    for (const char* prim : {"matmul", "sigmoid", "row_softmax", "cosine_row_pairs",
                             "self_importance", "grad_scale"})
        CHECK(text.find(prim) != std::string::npos);
    CHECK(text.find("PASS") != std::string::npos);
    CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("unknown flags and missing arguments exit 1 with usage text") {
    Workspace ws;
    CHECK(run("gradcheck --no-such-flag") == 1);
    CHECK(run("train") == 1);            // missing required options
    CHECK(run("no-such-subcommand") == 1);
    CHECK(run("") == 1);                 // a subcommand is required
    const fs::path log = ws.dir / "help.log";
    CHECK(run_capture("--help", log) == 0);
    CHECK(slurp(log).find("gen-synth") != std::string::npos);
}

TEST_CASE("full pipeline: gen-synth, train, eval") {
    Workspace ws;
    const fs::path spec = ws.file("synth.json", kSmallSynth);
    const fs::path cfg = ws.file("config.toml", kSmallConfig);

    CHECK(run("gen-synth --spec " + spec.string() + " --out " + (ws.dir / "train_ds").string()) ==
          0);
    std::string val_spec = kSmallSynth;
    val_spec.replace(val_spec.find("\"sample_seed\": 4"), 16, "\"sample_seed\": 9");
    const fs::path vspec = ws.file("synth_val.json", val_spec);
    CHECK(run("gen-synth --spec " + vspec.string() + " --out " + (ws.dir / "val_ds").string()) ==
          0);

    CHECK(run("train --config " + cfg.string() + " --train " + (ws.dir / "train_ds").string() +
              " --val " + (ws.dir / "val_ds").string() + " --out " + (ws.dir / "run").string()) ==
          0);
    CHECK(fs::exists(ws.dir / "run" / "metrics.csv"));
    CHECK(fs::exists(ws.dir / "run" / "report.json"));
    CHECK(fs::exists(ws.dir / "run" / "config_echo.toml"));
    CHECK(fs::exists(ws.dir / "run" / "cooccurrence.csv"));
    CHECK(fs::exists(ws.dir / "run" / "model" / "manifest.json"));
    CHECK(fs::exists(ws.dir / "run" / "model" / "params.txt"));

    CHECK(run("eval --model " + (ws.dir / "run" / "model").string() + " --data " +
              (ws.dir / "val_ds").string() + " --out " + (ws.dir / "report.json").string()) == 0);
    const std::string report = slurp(ws.dir / "report.json");
    for (const char* key :
         {"\"map\"", "\"cp\"", "\"cr\"", "\"cf1\"", "\"op\"", "\"or\"", "\"of1\""})
        CHECK(report.find(key) != std::string::npos);
    CHECK(slurp(ws.dir / "report.csv").rfind("map,cp,cr,cf1,op,or,of1\n", 0) == 0);
    CHECK(fs::exists(ws.dir / "run" / "report.csv"));

    // determinism: re-running training gives byte-identical metrics
    CHECK(run("train --config " + cfg.string() + " --train " + (ws.dir / "train_ds").string() +
              " --val " + (ws.dir / "val_ds").string() + " --out " + (ws.dir / "run2").string()) ==
          0);
    CHECK(slurp(ws.dir / "run" / "metrics.csv") == slurp(ws.dir / "run2" / "metrics.csv"));
}

TEST_CASE("config validation failures exit 1 naming the key") {
    Workspace ws;
    const fs::path spec = ws.file("synth.json", kSmallSynth);
    run("gen-synth --spec " + spec.string() + " --out " + (ws.dir / "ds").string());

    const fs::path bad = ws.file("bad.toml", "[train]\nepochz = 2\n");
    const fs::path log = ws.dir / "err.log";
    CHECK(run_capture("train --config " + bad.string() + " --train " + (ws.dir / "ds").string() +
                          " --val " + (ws.dir / "ds").string() + " --out " +
                          (ws.dir / "r").string(),
                      log) == 1);
    CHECK(slurp(log).find("train.epochz") != std::string::npos);

    const fs::path bad2 = ws.file("bad2.toml", "[graph]\ntau = 1.5\n");
    CHECK(run("train --config " + bad2.string() + " --train " + (ws.dir / "ds").string() +
              " --val " + (ws.dir / "ds").string() + " --out " + (ws.dir / "r").string()) == 1);

    CHECK(run("train --config /nonexistent.toml --train " + (ws.dir / "ds").string() + " --val " +
              (ws.dir / "ds").string() + " --out " + (ws.dir / "r").string()) == 1);
}

TEST_CASE("train-da and ablate subcommands") {
    Workspace ws;
    const fs::path spec = ws.file("synth.json", kSmallSynth);
    run("gen-synth --spec " + spec.string() + " --out " + (ws.dir / "src").string());

    std::string val_spec = kSmallSynth;
    val_spec.replace(val_spec.find("\"sample_seed\": 4"), 16, "\"sample_seed\": 8");
    ws.file("val.json", val_spec);
    run("gen-synth --spec " + (ws.dir / "val.json").string() + " --out " +
        (ws.dir / "val").string());

    // shifted target: unlabeled; shifted target-val: labels kept
    std::string tgt_spec = R"({
      "n_labels": 8, "n_clusters": 2, "samples": 80, "feature_dim": 12,
      "noise_sigma": 0.2, "seed": 3, "sample_seed": 21,
      "shift": {"kind": "affine", "scale": 1.2, "seed": 6, "bias": 0.1}
    })";
    ws.file("tgt.json", tgt_spec);
    run("gen-synth --spec " + (ws.dir / "tgt.json").string() + " --out " +
        (ws.dir / "tgt").string());

    std::string tval_spec = tgt_spec;
    tval_spec.replace(tval_spec.find("\"sample_seed\": 21"), 17, "\"sample_seed\": 22");
    tval_spec.insert(tval_spec.rfind('}') - 1, ", \"keep_labels\": true\n");
    ws.file("tval.json", tval_spec);
    CHECK(run("gen-synth --spec " + (ws.dir / "tval.json").string() + " --out " +
              (ws.dir / "tval").string()) == 0);

    const fs::path cfg = ws.file("da.toml",
                                 "[model]\n"
                                 "d_f = 12\n"
                                 "generator = \"mlp\"\n"
                                 "[train]\n"
                                 "epochs = 2\n"
                                 "max_lr = 0.01\n"
                                 "seed = 5\n"
                                 "patience = 0\n"
                                 "[loss]\n"
                                 "lambda_d = 0.5\n");
    CHECK(run("train-da --config " + cfg.string() + " --source " + (ws.dir / "src").string() +
              " --target " + (ws.dir / "tgt").string() + " --target-val " +
              (ws.dir / "tval").string() + " --out " + (ws.dir / "da_run").string()) == 0);
    CHECK(fs::exists(ws.dir / "da_run" / "metrics.csv"));
    CHECK(fs::exists(ws.dir / "da_run" / "domain_accuracy.csv"));

    CHECK(run("ablate --config " + cfg.string() + " --train " + (ws.dir / "src").string() +
              " --val " + (ws.dir / "val").string() + " --out " +
              (ws.dir / "table.csv").string()) == 0);
    const std::string table = slurp(ws.dir / "table.csv");
    CHECK(table.rfind("variant,map,delta_map\n", 0) == 0);
    CHECK(table.find("\nA,") != std::string::npos);
    CHECK(table.find("\nAB,") != std::string::npos);
    CHECK(table.find("\nABC,") != std::string::npos);
}
