#include <cmath>
#include <filesystem>
#include <fstream>

#include "agcn/config.hpp"
#include "agcn/dataset.hpp"
#include "agcn/optim.hpp"
#include "agcn/train.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace agcn;

namespace {

MultiLabelDataset correlated(std::size_t samples, std::uint64_t sample_seed) {
    SynthSpec s;
    s.n_labels = 12;
    s.n_clusters = 3;
    s.samples = samples;
    s.feature_dim = 16;
    s.noise_sigma = 0.25;
    s.seed = 5;
    s.sample_seed = sample_seed;
    return generate_synthetic(s);
}

TrainConfig smoke_config() {
    TrainConfig cfg;
    cfg.d_f = 16;
    cfg.generator = "identity";
    cfg.layers = 1;
    cfg.ablation = "ABC";
    cfg.epochs = 5;
    cfg.max_lr = 0.02;
    cfg.batch_size = 32;
    cfg.seed = 11;
    cfg.patience = 0;  // no early stop in the short smoke runs
    return cfg;
}

bool params_bitwise_equal(const ModelBundle& a, const ModelBundle& b) {
    bool equal = true;
    for_each_param(a, [&](const std::string& name, const Matrix& pa) {
        for_each_param(b, [&](const std::string& n2, const Matrix& pb) {
            if (n2 == name && !test::bitwise_equal(pa, pb)) equal = false;
        });
    });
    return equal;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters and moments untouched") {
    Matrix p(2, 2, 1.5);
    Matrix p0 = p;
    AdamState st;
    adam_step(p, Matrix(2, 2, 0.0), st, 0.1);
    CHECK(test::bitwise_equal(p, p0));
    for (double v : st.m.data()) CHECK(v == 0.0);
    for (double v : st.v.data()) CHECK(v == 0.0);
    CHECK(st.t == 1);
}

TEST_CASE("adam first step moves by about lr in the gradient's sign direction") {
    Matrix p(1, 3);
    p(0, 0) = 1.0;
    p(0, 1) = -2.0;
    p(0, 2) = 0.5;
    Matrix g(1, 3);
    g(0, 0) = 0.3;
    g(0, 1) = -4.0;
    g(0, 2) = 1e-3;
    Matrix p0 = p;
    AdamState st;
    const double lr = 0.01;
    adam_step(p, g, st, lr);
    for (std::size_t i = 0; i < 3; ++i) {
        const double delta = p(0, i) - p0(0, i);
        const double expected = -lr * (g(0, i) > 0 ? 1.0 : -1.0);
        CHECK(std::fabs(delta - expected) <= lr * 1e-4);
    }
}

TEST_CASE("adam matches a hand-unrolled recursion over three steps") {
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double x = 2.0;      // scalar quadratic f(x) = x^2 / 2, grad = x
    double m = 0.0, v = 0.0;
    Matrix p(1, 1, 2.0);
    AdamState st;
    for (int t = 1; t <= 3; ++t) {
        const double g = x;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mhat = m / (1 - std::pow(b1, t));
        const double vhat = v / (1 - std::pow(b2, t));
        x -= lr * mhat / (std::sqrt(vhat) + eps);

        adam_step(p, Matrix(1, 1, p(0, 0)), st, lr);
        CHECK(std::fabs(p(0, 0) - x) <= 1e-12);
    }
}

TEST_CASE("cosine decay endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 1e-4) == 1e-4);
    CHECK(cosine_lr(100, 100, 1e-4) == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(cosine_lr(50, 100, 1e-4) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(101, 100, 1e-4), ContractError);
    CHECK_THROWS_AS(cosine_lr(0, 0, 1e-4), ContractError);
}

TEST_CASE("config: defaults, parsing, unknown keys, echo fixpoint, digest") {
    TrainConfig defaults;
    defaults.validate();
    CHECK(defaults.epochs == 40);
    CHECK(defaults.max_lr == 1e-4);
    CHECK(defaults.loss.gamma_neg == 4.0);

    TrainConfig cfg = parse_config_text(
        "[model]\n"
        "d_f = 8\n"
        "generator = \"mlp\"\n"
        "gen_hidden_widths = \"12\"\n"
        "[train]\n"
        "epochs = 3  # comment\n"
        "seed = 99\n"
        "[loss]\n"
        "margin = 0.1\n");
    CHECK(cfg.d_f == 8);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.seed == 99);
    CHECK(cfg.loss.margin == 0.1);
    CHECK(cfg.batch_size == 32);  // untouched default

    try {
        parse_config_text("[train]\nepochz = 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epochz") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text("[nope]\nx = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("d_f = 8\n"), ConfigError);     // outside a section
    CHECK_THROWS_AS(parse_config_text("[train]\nepochs: 3\n"), ConfigError);

    const std::string echo = cfg.echo();
    TrainConfig reparsed = parse_config_text(echo);
    CHECK(reparsed.echo() == echo);
    CHECK(reparsed.digest() == cfg.digest());

    TrainConfig other = cfg;
    other.seed = 100;
    CHECK(other.digest() != cfg.digest());
}

TEST_CASE("build_model shapes and validation") {
    MultiLabelDataset train = correlated(100, 1);
    TrainConfig cfg = smoke_config();

    ModelBundle one = build_model(cfg, train, false);
    CHECK(one.layers.size() == 1);
    CHECK(one.layers[0].weight.rows() == 16);  // prototype width = d_in
    CHECK(one.layers[0].weight.cols() == 16);

    cfg.layers = 2;
    cfg.d_f = 5;
    cfg.generator = "mlp";
    ModelBundle two = build_model(cfg, train, true);
    CHECK(two.layers.size() == 2);
    CHECK(two.layers[0].weight.cols() == 3);  // ceil(5 / 2)
    CHECK(two.layers[1].weight.cols() == 5);
    CHECK(two.domain_clf.has_value());
    CHECK(two.domain_clf->hidden_width == 20);  // 4 * d_f

    TrainConfig bad = smoke_config();
    bad.d_f = 8;  // identity generator but d_in = 16
    CHECK_THROWS_AS(build_model(bad, train, false), ConfigError);
}

TEST_CASE("prototype node features") {
    Matrix features = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
    Matrix labels = Matrix::from_rows({{1, 0}, {1, 0}, {0, 0}});
    Matrix protos = prototype_node_features(features, labels);
    CHECK(protos(0, 0) == 2.0);
    CHECK(protos(0, 1) == 3.0);
    CHECK(protos(1, 0) == 0.0);  // absent label: zero vector
    CHECK(protos(1, 1) == 0.0);
}

TEST_CASE("epochs = 0 leaves only the untrained evaluation") {
    MultiLabelDataset train = correlated(80, 2);
    MultiLabelDataset val = correlated(40, 3);
    TrainConfig cfg = smoke_config();
    cfg.epochs = 0;
    RunArtifacts artifacts = train_single(cfg, train, val);
    CHECK(artifacts.epochs.size() == 1);
    CHECK(artifacts.epochs[0].epoch == 0);
    CHECK(artifacts.epochs[0].lr == 0.0);
    CHECK(artifacts.final_report.map == artifacts.epochs[0].metrics.map);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
    MultiLabelDataset train = correlated(120, 4);
    MultiLabelDataset val = correlated(60, 5);
    TrainConfig cfg = smoke_config();
    cfg.epochs = 2;
    RunArtifacts a = train_single(cfg, train, val);
    RunArtifacts b = train_single(cfg, train, val);
    CHECK(a.metrics_csv() == b.metrics_csv());
    CHECK(params_bitwise_equal(a.model, b.model));

    cfg.seed = 12;
    RunArtifacts c = train_single(cfg, train, val);
    CHECK(a.metrics_csv() != c.metrics_csv());
}

TEST_CASE("metrics csv layout") {
    MultiLabelDataset train = correlated(60, 6);
    MultiLabelDataset val = correlated(30, 7);
    TrainConfig cfg = smoke_config();
    cfg.epochs = 1;
    RunArtifacts artifacts = train_single(cfg, train, val);
    const std::string csv = artifacts.metrics_csv();
    CHECK(csv.rfind("epoch,split,map,cp,cr,cf1,op,or,of1,loss,lr\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + epochs 0 and 1
}

TEST_CASE("five smoke epochs beat the untrained model's validation mAP") {
    MultiLabelDataset train = correlated(400, 8);
    MultiLabelDataset val = correlated(200, 9);
    TrainConfig cfg = smoke_config();
    RunArtifacts artifacts = train_single(cfg, train, val);
    REQUIRE(artifacts.epochs.size() == 6);
    CHECK(artifacts.epochs.back().metrics.map > artifacts.epochs.front().metrics.map);
}

TEST_CASE("lambda = 0 adversarial run reproduces the single-domain run bitwise") {
    MultiLabelDataset source = correlated(120, 10);
    MultiLabelDataset val = correlated(60, 11);

    ShiftSpec shift;
    shift.kind = ShiftSpec::Kind::affine;
    shift.scale = 1.3;
    shift.seed = 21;
    MultiLabelDataset target = apply_shift(correlated(100, 12), shift);

    TrainConfig cfg = smoke_config();
    cfg.generator = "mlp";
    cfg.gen_hidden_widths = "";
    cfg.epochs = 3;
    cfg.loss.lambda_d = 0.0;

    RunArtifacts single = train_single(cfg, source, val);
    RunArtifacts da = train_da(cfg, source, target, val);

    REQUIRE(single.epochs.size() == da.epochs.size());
    for (std::size_t e = 0; e < single.epochs.size(); ++e) {
        CHECK(single.epochs[e].metrics.map == da.epochs[e].metrics.map);
        CHECK(single.epochs[e].loss == da.epochs[e].loss);
    }
    // compare every shared parameter bitwise (the DA model additionally owns
    // the untouched domain classifier)
    bool equal = true;
    for_each_param(single.model, [&](const std::string& name, const Matrix& p) {
        for_each_param(da.model, [&](const std::string& n2, const Matrix& q) {
            if (n2 == name && !test::bitwise_equal(p, q)) equal = false;
        });
    });
    CHECK(equal);
}

TEST_CASE("train_da rejects targets with visible labels") {
    MultiLabelDataset source = correlated(60, 13);
    MultiLabelDataset val = correlated(30, 14);
    MultiLabelDataset target = correlated(50, 15);  // labels visible!
    TrainConfig cfg = smoke_config();
    cfg.generator = "mlp";
    CHECK_THROWS_AS(train_da(cfg, source, target, val), ContractError);
}

TEST_CASE("train_da tracks domain accuracy per epoch") {
    MultiLabelDataset source = correlated(80, 16);
    MultiLabelDataset val = correlated(40, 17);
    ShiftSpec shift;
    shift.kind = ShiftSpec::Kind::noise;
    shift.sigma = 0.3;
    shift.seed = 31;
    MultiLabelDataset target = apply_shift(correlated(80, 18), shift);

    TrainConfig cfg = smoke_config();
    cfg.generator = "mlp";
    cfg.epochs = 2;
    RunArtifacts artifacts = train_da(cfg, source, target, val);
    CHECK(artifacts.domain_accuracy.size() == artifacts.epochs.size());
    CHECK(artifacts.domain_loss_paper.size() == artifacts.epochs.size());
    for (double acc : artifacts.domain_accuracy) {
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
    }
    for (double v : artifacts.domain_loss_paper) CHECK(std::isfinite(v));
}

TEST_CASE("ablation harness is deterministic and anchored at variant A") {
    MultiLabelDataset train = correlated(120, 19);
    MultiLabelDataset val = correlated(60, 20);
    TrainConfig cfg = smoke_config();
    cfg.epochs = 2;

    auto rows = ablate(cfg, train, val);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].variant == "A");
    CHECK(rows[1].variant == "AB");
    CHECK(rows[2].variant == "ABC");
    CHECK(rows[0].delta_vs_a == 0.0);
    CHECK(rows[1].delta_vs_a == doctest::Approx(rows[1].map - rows[0].map).epsilon(1e-15));

    auto rows2 = ablate(cfg, train, val);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rows[i].map == rows2[i].map);

    const std::string table = ablation_table_csv(rows);
    CHECK(table.rfind("variant,map,delta_map\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
}

TEST_CASE("diverging runs abort with a diagnostic instead of logging garbage") {
    MultiLabelDataset train = correlated(80, 21);
    MultiLabelDataset val = correlated(40, 22);
    TrainConfig cfg = smoke_config();
    cfg.max_lr = 1e7;  // guaranteed blow-up
    cfg.epochs = 10;
    CHECK_THROWS_AS(train_single(cfg, train, val), Error);
}

TEST_CASE("indistinguishable domains leave the discriminator near chance") {
    // same distribution on both sides (shift = none): after training, the
    // domain classifier should sit in the 0.5 +- 0.1 band
    MultiLabelDataset source = correlated(400, 50);
    MultiLabelDataset val = correlated(200, 51);
    MultiLabelDataset target = apply_shift(correlated(400, 52), ShiftSpec{});

    TrainConfig cfg = smoke_config();
    cfg.generator = "mlp";
    cfg.epochs = 8;
    cfg.max_lr = 0.005;
    RunArtifacts artifacts = train_da(cfg, source, target, val);
    const double final_acc = artifacts.domain_accuracy.back();
    CHECK(final_acc >= 0.4);
    CHECK(final_acc <= 0.6);
}

TEST_CASE("effective lambda: constant and dann ramp schedules") {
    TrainConfig cfg;
    cfg.loss.lambda_d = 0.8;
    CHECK(cfg.effective_lambda(0.0) == 0.8);
    CHECK(cfg.effective_lambda(1.0) == 0.8);

    cfg.lambda_schedule = "dann_ramp";
    CHECK(cfg.effective_lambda(0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cfg.effective_lambda(1.0) ==
          doctest::Approx(0.8 * (2.0 / (1.0 + std::exp(-10.0)) - 1.0)).epsilon(1e-12));
    CHECK(cfg.effective_lambda(0.5) > cfg.effective_lambda(0.1));
}

TEST_CASE("grl_lambda_location = grl keeps the discriminator training at lambda 0") {
    MultiLabelDataset source = correlated(80, 30);
    MultiLabelDataset val = correlated(40, 31);
    ShiftSpec shift;
    shift.kind = ShiftSpec::Kind::noise;
    shift.sigma = 0.3;
    shift.seed = 41;
    MultiLabelDataset target = apply_shift(correlated(80, 32), shift);

    TrainConfig cfg = smoke_config();
    cfg.generator = "mlp";
    cfg.epochs = 2;
    cfg.loss.lambda_d = 0.0;

    // objective location: the whole domain branch is inert, theta_d frozen
    cfg.grl_lambda_location = "objective";
    RunArtifacts frozen = train_da(cfg, source, target, val);
    ModelBundle init = build_model(cfg, source, true);
    CHECK(test::bitwise_equal(frozen.model.domain_clf->w1, init.domain_clf->w1));

    // grl location: only the reversed gradient is scaled away; the
    // discriminator still descends its own loss
    cfg.grl_lambda_location = "grl";
    RunArtifacts live = train_da(cfg, source, target, val);
    CHECK(!test::bitwise_equal(live.model.domain_clf->w1, init.domain_clf->w1));
    // and the generator trajectory still matches the single-domain run
    RunArtifacts single = train_single(cfg, source, val);
    bool equal = true;
    for_each_param(single.model, [&](const std::string& name, const Matrix& p) {
        for_each_param(live.model, [&](const std::string& n2, const Matrix& q) {
            if (n2 == name && !test::bitwise_equal(p, q)) equal = false;
        });
    });
    CHECK(equal);
}

TEST_CASE("learned node features are trainable parameters") {
    MultiLabelDataset train = correlated(80, 33);
    MultiLabelDataset val = correlated(40, 34);
    TrainConfig cfg = smoke_config();
    cfg.node_features = "learned";
    cfg.d0 = 10;
    cfg.epochs = 1;

    ModelBundle before = build_model(cfg, train, false);
    CHECK(before.learn_node_features);
    CHECK(before.graph.node_features.cols() == 10);

    RunArtifacts artifacts = train_single(cfg, train, val);
    CHECK(!test::bitwise_equal(artifacts.model.graph.node_features, before.graph.node_features));
}

TEST_CASE("node features from a CSV file") {
    MultiLabelDataset train = correlated(60, 35);
    MultiLabelDataset val = correlated(30, 36);

    const auto path = std::filesystem::temp_directory_path() / "agcn_nodefeat.csv";
    {
        std::ofstream out(path);
        for (std::size_t i = 0; i < 12; ++i)
            out << "0.1,0.2,0.3,0.4\n";
    }
    TrainConfig cfg = smoke_config();
    cfg.node_features = "file";
    cfg.node_features_file = path.string();
    cfg.epochs = 0;
    RunArtifacts artifacts = train_single(cfg, train, val);
    CHECK(artifacts.model.graph.node_features.rows() == 12);
    CHECK(artifacts.model.graph.node_features.cols() == 4);
    CHECK(artifacts.model.graph.node_features(3, 1) == 0.2);
    std::filesystem::remove(path);

    cfg.node_features_file = "/nonexistent/features.csv";
    CHECK_THROWS_AS(train_single(cfg, train, val), IoError);
}

TEST_CASE("patience stops a plateaued run early") {
    MultiLabelDataset train = correlated(80, 37);
    MultiLabelDataset val = correlated(40, 38);
    TrainConfig cfg = smoke_config();
    cfg.max_lr = 1e-12;  // learning frozen: validation mAP never improves
    cfg.epochs = 10;
    cfg.patience = 2;
    RunArtifacts artifacts = train_single(cfg, train, val);
    CHECK(artifacts.epochs.size() == 3);  // epoch 0 plus two stagnant epochs

    cfg.patience = 0;  // disabled: runs to the full epoch budget
    RunArtifacts full = train_single(cfg, train, val);
    CHECK(full.epochs.size() == 11);
}

TEST_CASE("mismatched datasets are rejected before training") {
    MultiLabelDataset train = correlated(60, 23);
    SynthSpec other;
    other.n_labels = 5;
    other.n_clusters = 2;
    other.samples = 30;
    other.feature_dim = 16;
    other.seed = 77;
    MultiLabelDataset val = generate_synthetic(other);
    TrainConfig cfg = smoke_config();
    CHECK_THROWS_AS(train_single(cfg, train, val), ContractError);
}
