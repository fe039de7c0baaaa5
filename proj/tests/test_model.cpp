#include <cmath>
#include <filesystem>

#include "agcn/gradcheck.hpp"
#include "agcn/losses.hpp"
#include "agcn/model.hpp"
#include "agcn/optim.hpp"
#include "agcn/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace agcn;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

// Small hand-assembled bundle: identity generator, one GCN layer.
ModelBundle tiny_bundle(std::size_t n_labels, std::size_t d_f, Rng& rng, bool with_domain,
                        Ablation abl = Ablation::ABC) {
    ModelBundle b;
    b.d_f = d_f;
    b.ablation = abl;
    b.generator = make_identity_generator(d_f, 0.2);
    b.graph.n_labels = n_labels;
    b.graph.node_features = random_matrix(rng, n_labels, d_f, 0.1, 1.0);
    b.graph.cooccurrence = random_matrix(rng, n_labels, n_labels, 0.0, 1.0);
    b.graph.fixed_adj = random_matrix(rng, n_labels, n_labels, 0.0, 1.0);
    b.layers.push_back(make_layer_params(d_f, d_f, 0.2, rng, n_labels));
    if (with_domain) b.domain_clf = make_domain_classifier(d_f, 3, 0.2, rng);
    b.validate();
    return b;
}

}  // namespace

TEST_CASE("generate_features: identity passthrough and width check") {
    Rng rng(3);
    ModelBundle b = tiny_bundle(3, 4, rng, false);
    Tape t;
    TapeBundle tv = register_model(t, b, false, false);
    Matrix batch = random_matrix(rng, 5, 4);
    Var out = generate_features(t, b, tv, t.constant(batch));
    CHECK(test::bitwise_equal(t.value(out), batch));

    CHECK_THROWS_AS(generate_features(t, b, tv, t.constant(Matrix(5, 3, 1.0))), ShapeError);
}

TEST_CASE("mlp generator: zero parameters give zero features, oracle match") {
    Rng rng(5);
    ModelBundle b = tiny_bundle(3, 2, rng, false);
    b.generator = make_mlp_generator(4, {3}, 2, 0.2, rng);
    for (Matrix& w : b.generator.weights)
        for (double& v : w.data()) v = 0.0;
    {
        Tape t;
        TapeBundle tv = register_model(t, b, false, false);
        Var out = generate_features(t, b, tv, t.constant(random_matrix(rng, 6, 4)));
        for (double v : t.value(out).data()) CHECK(v == 0.0);
    }

    b.generator = make_mlp_generator(4, {3}, 2, 0.2, rng);
    {
        Matrix batch = random_matrix(rng, 6, 4);
        Tape t;
        TapeBundle tv = register_model(t, b, false, false);
        Var out = generate_features(t, b, tv, t.constant(batch));
        Matrix oracle =
            test::naive_mlp(batch, b.generator.weights, b.generator.biases, 0.2);
        CHECK(max_abs_diff(t.value(out), oracle) <= 1e-12);
    }
}

TEST_CASE("predict: zero classifiers give probability one half") {
    Rng rng(7);
    ModelBundle b = tiny_bundle(3, 4, rng, false, Ablation::A);
    for (double& v : b.layers[0].weight.data()) v = 0.0;  // F^L = 0
    Tape t;
    TapeBundle tv = register_model(t, b, false, false);
    Var probs = predict(t, b, tv, t.constant(random_matrix(rng, 5, 4)));
    for (double v : t.value(probs).data()) CHECK(v == 0.5);
}

TEST_CASE("predict: scalar case sigmoid(2 * 3)") {
    ModelBundle b;
    b.d_f = 1;
    b.ablation = Ablation::A;
    b.generator = make_identity_generator(1, 0.2);
    b.graph.n_labels = 1;
    b.graph.node_features = Matrix(1, 1, 3.0);
    b.graph.cooccurrence = Matrix(1, 1, 1.0);
    b.graph.fixed_adj = Matrix(1, 1, 1.0);
    AdaptiveLayerParams lp;
    lp.weight = Matrix(1, 1, 1.0);
    lp.attn_vec = Matrix(2, 1, 0.0);
    lp.leaky_slope = 0.2;
    b.layers.push_back(lp);
    b.validate();

    Tape t;
    TapeBundle tv = register_model(t, b, false, false);
    Var probs = predict(t, b, tv, t.constant(Matrix(1, 1, 2.0)));
    CHECK(t.value(probs)(0, 0) == doctest::Approx(0.997527).epsilon(1e-6));
}

TEST_CASE("doubling a classifier row sharpens its probabilities away from one half") {
    Rng rng(11);
    ModelBundle b = tiny_bundle(3, 4, rng, false, Ablation::A);
    Matrix batch = random_matrix(rng, 6, 4);

    Tape t;
    TapeBundle tv = register_model(t, b, false, false);
    Matrix base = t.value(predict(t, b, tv, t.constant(batch)));

    ModelBundle doubled = b;
    for (double& v : doubled.layers[0].weight.data()) v *= 2.0;  // doubles every F^L row
    Tape t2;
    TapeBundle tv2 = register_model(t2, doubled, false, false);
    Matrix sharp = t2.value(predict(t2, doubled, tv2, t2.constant(batch)));

    for (std::size_t i = 0; i < base.size(); ++i) {
        if (std::fabs(base.data()[i] - 0.5) < 1e-12) continue;
        CHECK(std::fabs(sharp.data()[i] - 0.5) >= std::fabs(base.data()[i] - 0.5));
    }
}

TEST_CASE("grl: identity forward, reversed and scaled backward") {
    Tape t;
    Matrix x(2, 2, 1.5);
    Var xv = t.leaf("x", x);
    Var y = grl(t, xv, 1.0);
    CHECK(test::bitwise_equal(t.value(y), x));
    GradMap g = t.backward(t.total_sum(y));
    for (double v : g.at("x").data()) CHECK(v == -1.0);

    Tape t2;
    Var x2 = t2.leaf("x", Matrix(1, 1, 0.0));
    GradMap g2 = t2.backward(t2.total_sum(t2.scale(grl(t2, x2, 0.5), 2.0)));
    CHECK(g2.at("x")(0, 0) == -1.0);  // upstream 2, lambda 0.5

    CHECK_THROWS_AS(grl(t2, x2, -1.0), ContractError);
}

TEST_CASE("classify_domain: zero weights, lambda 0 annihilation, loop oracle") {
    Rng rng(13);
    ModelBundle b = tiny_bundle(3, 4, rng, true);
    Matrix batch = random_matrix(rng, 5, 4);

    {
        ModelBundle zeroed = b;
        for (double& v : zeroed.domain_clf->w1.data()) v = 0.0;
        for (double& v : zeroed.domain_clf->w2.data()) v = 0.0;
        Tape t;
        TapeBundle tv = register_model(t, zeroed, false, true);
        Var d_hat = classify_domain(t, zeroed, tv, t.constant(batch), 1.0);
        for (double v : t.value(d_hat).data()) CHECK(v == 0.5);
    }

    {
        // lambda = 0: the domain branch sends exactly zero gradient upstream
        ModelBundle gen_model = tiny_bundle(3, 4, rng, true);
        gen_model.generator = make_mlp_generator(4, {}, 4, 0.2, rng);
        Tape t;
        TapeBundle tv = register_model(t, gen_model, true, true);
        Var feats = generate_features(t, gen_model, tv, t.constant(batch));
        Var d_hat = classify_domain(t, gen_model, tv, feats, 0.0);
        GradMap g = t.backward(t.mean_all(d_hat));
        for (double v : g.at("gen.w0").data()) CHECK(v == 0.0);
        for (double v : g.at("gen.b0").data()) CHECK(v == 0.0);
        // the discriminator itself still learns
        double dom_norm = 0.0;
        for (double v : g.at("dom.w1").data()) dom_norm += std::fabs(v);
        CHECK(dom_norm > 0.0);
    }

    {
        Tape t;
        TapeBundle tv = register_model(t, b, false, true);
        Var d_hat = classify_domain(t, b, tv, t.constant(batch), 1.0);
        Matrix h = test::naive_mlp(batch, {b.domain_clf->w1}, {b.domain_clf->b1}, 0.2);
        for (double& v : h.data()) v = test::naive_leaky(v, 0.2);
        Matrix logits = test::naive_matmul(h, b.domain_clf->w2);
        Matrix oracle(logits.rows(), 1);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            oracle(i, 0) = 1.0 / (1.0 + std::exp(-(logits(i, 0) + b.domain_clf->b2(0, 0))));
        CHECK(max_abs_diff(t.value(d_hat), oracle) <= 1e-12);
    }
}

TEST_CASE("predict is equivariant to batch row order") {
    Rng rng(17);
    ModelBundle b = tiny_bundle(4, 3, rng, false);
    Matrix batch = random_matrix(rng, 6, 3);
    Matrix scores = predict_scores(b, batch);

    std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
    Matrix shuffled(6, 3);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 3; ++j) shuffled(i, j) = batch(perm[i], j);
    Matrix scores2 = predict_scores(b, shuffled);

    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) CHECK(scores2(i, j) == scores(perm[i], j));
}

TEST_CASE("end-to-end prediction gradients match finite differences") {
    Rng rng(19);
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n_labels = 2 + rng.index(4), d_f = 1 + rng.index(4),
                          n = 1 + rng.index(4), d_in = 2 + rng.index(3);
        ModelBundle b = tiny_bundle(n_labels, d_f, rng, false);
        b.generator = make_mlp_generator(d_in, {3}, d_f, 0.2, rng);
        Matrix batch = random_matrix(rng, n, d_in, 0.1, 1.0);

        auto eval = [&](const ModelBundle& bundle) {
            Tape t;
            TapeBundle tv = register_model(t, bundle, false, false);
            return t.value(t.mean_all(predict(t, bundle, tv, t.constant(batch))))(0, 0);
        };

        Tape t;
        TapeBundle tv = register_model(t, b, true, false);
        GradMap grads = t.backward(t.mean_all(predict(t, b, tv, t.constant(batch))));

        for_each_param(b, [&](const std::string& name, const Matrix& param) {
            Matrix fd = finite_diff_grad(
                [&](const Matrix& probe) {
                    ModelBundle copy = b;
                    for_each_param(copy, [&](const std::string& n2, Matrix& p2) {
                        if (n2 == name) p2 = probe;
                    });
                    return eval(copy);
                },
                param, 1e-6);
            INFO("param ", name);
            CHECK(grads_match(grads.at(name), fd, 1e-5, 1e-8));
        });
    }
}

// One optimizer step through the GRL equals the hand-written simultaneous
// descent/ascent update.
TEST_CASE("grl step equals hand-written two-pass adversarial update") {
    Rng rng(23);
    ModelBundle b = tiny_bundle(3, 4, rng, true);
    b.generator = make_mlp_generator(4, {}, 4, 0.2, rng);
    Matrix batch_s = random_matrix(rng, 4, 4);
    Matrix batch_t = random_matrix(rng, 4, 4);
    Matrix targets(4, 3);
    for (double& v : targets.data()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const double lambda = 0.6, lr = 1e-2;
    LossConfig loss_cfg;

    auto build_losses = [&](Tape& t, const ModelBundle& bundle, bool with_grl, bool domain_only,
                            bool cls_only) {
        TapeBundle tv = register_model(t, bundle, true, true);
        Var xs = generate_features(t, bundle, tv, t.constant(batch_s));
        Var xt = generate_features(t, bundle, tv, t.constant(batch_t));
        Var lc{}, ld{};
        if (!domain_only) {
            Var fl = subnet_classifiers(t, bundle, tv, bundle.ablation);
            Var probs = t.sigmoid(t.matmul(xs, t.transpose(fl)));
            lc = asl_loss(t, probs, targets, loss_cfg);
        }
        if (!cls_only) {
            Var xall = t.concat_rows(xs, xt);
            Var z = with_grl ? grl(t, xall, 1.0) : xall;
            const DomainClassifier& clf = *bundle.domain_clf;
            Var h = t.leaky_relu(t.broadcast_row_add(t.matmul(z, tv.dom_w1), tv.dom_b1),
                                 clf.leaky_slope);
            Var d_hat = t.sigmoid(t.broadcast_row_add(t.matmul(h, tv.dom_w2), tv.dom_b2));
            ld = domain_loss(t, d_hat, {0, 0, 0, 0, 1, 1, 1, 1});
        }
        return std::pair{lc, ld};
    };

    // (a) GRL path: one step on l_c + lambda * l_d
    ModelBundle grl_model = b;
    {
        Tape t;
        auto [lc, ld] = build_losses(t, grl_model, true, false, false);
        LossConfig obj = loss_cfg;
        obj.lambda_d = lambda;
        GradMap grads = t.backward(total_objective(t, lc, ld, obj));
        std::map<std::string, AdamState> states;
        for_each_param(grl_model, [&](const std::string& name, Matrix& param) {
            adam_step(param, grads.at(name), states[name], lr);
        });
    }

    // (b) hand-written: descent on l_c for theta_g/theta_c, ascent on
    // lambda*l_d for theta_g, descent on lambda*l_d for theta_d
    ModelBundle hand_model = b;
    {
        Tape t_cls;
        auto [lc, ld_unused] = build_losses(t_cls, hand_model, false, false, true);
        (void)ld_unused;
        GradMap g_cls = t_cls.backward(lc);

        Tape t_dom;
        auto [lc_unused, ld] = build_losses(t_dom, hand_model, false, true, false);
        (void)lc_unused;
        GradMap g_dom = t_dom.backward(ld);

        std::map<std::string, AdamState> states;
        for_each_param(hand_model, [&](const std::string& name, Matrix& param) {
            Matrix g = g_cls.at(name);
            const Matrix& gd = g_dom.at(name);
            const bool is_domain_param = name.rfind("dom.", 0) == 0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (is_domain_param)
                    g.data()[i] = lambda * gd.data()[i];  // discriminator descends
                else
                    g.data()[i] -= lambda * gd.data()[i];  // generator ascends the domain loss
            }
            adam_step(param, g, states[name], lr);
        });
    }

    for_each_param(grl_model, [&](const std::string& name, const Matrix& param) {
        Matrix hand;
        for_each_param(hand_model, [&](const std::string& n2, const Matrix& p2) {
            if (n2 == name) hand = p2;
        });
        INFO("param ", name);
        CHECK(max_abs_diff(param, hand) <= 1e-10);
    });
}

TEST_CASE("model persistence round-trips exactly") {
    Rng rng(29);
    ModelBundle b = tiny_bundle(4, 3, rng, true);
    b.generator = make_mlp_generator(5, {4}, 3, 0.2, rng);
    b.ablation = Ablation::AB;
    b.detach_c = true;
    b.graph.threshold = 0.25;

    const auto dir = std::filesystem::temp_directory_path() / "agcn_model_test";
    std::filesystem::remove_all(dir);
    save_model(b, dir, "deadbeef00000000");
    ModelBundle loaded = load_model(dir);

    CHECK(loaded.d_f == b.d_f);
    CHECK(loaded.ablation == b.ablation);
    CHECK(loaded.detach_c == b.detach_c);
    CHECK(loaded.graph.threshold == b.graph.threshold);
    CHECK(loaded.generator.kind == b.generator.kind);
    CHECK(loaded.generator.layer_widths == b.generator.layer_widths);
    CHECK(test::bitwise_equal(loaded.graph.node_features, b.graph.node_features));
    CHECK(test::bitwise_equal(loaded.graph.cooccurrence, b.graph.cooccurrence));
    CHECK(test::bitwise_equal(loaded.graph.fixed_adj, b.graph.fixed_adj));
    for (std::size_t i = 0; i < b.generator.weights.size(); ++i) {
        CHECK(test::bitwise_equal(loaded.generator.weights[i], b.generator.weights[i]));
        CHECK(test::bitwise_equal(loaded.generator.biases[i], b.generator.biases[i]));
    }
    REQUIRE(loaded.layers.size() == b.layers.size());
    for (std::size_t i = 0; i < b.layers.size(); ++i) {
        CHECK(test::bitwise_equal(loaded.layers[i].weight, b.layers[i].weight));
        CHECK(test::bitwise_equal(loaded.layers[i].attn_vec, b.layers[i].attn_vec));
    }
    REQUIRE(loaded.domain_clf.has_value());
    CHECK(test::bitwise_equal(loaded.domain_clf->w1, b.domain_clf->w1));
    CHECK(test::bitwise_equal(loaded.domain_clf->w2, b.domain_clf->w2));

    // identical predictions after the round trip
    Matrix batch = random_matrix(rng, 6, 5);
    CHECK(test::bitwise_equal(predict_scores(loaded, batch), predict_scores(b, batch)));

    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_model(dir), IoError);
}
