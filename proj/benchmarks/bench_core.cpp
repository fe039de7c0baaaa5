#include <benchmark/benchmark.h>

#include "agcn/dataset.hpp"
#include "agcn/labelgraph.hpp"
#include "agcn/losses.hpp"
#include "agcn/metrics.hpp"
#include "agcn/model.hpp"
#include "agcn/rng.hpp"
#include "agcn/tape.hpp"

namespace {

using namespace agcn;

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(lo, hi);
    return m;
}

void BM_matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    Matrix a = random_matrix(rng, n, n);
    Matrix b = random_matrix(rng, n, n);
    for (auto _ : state) {
        Matrix c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_agcn_layer_forward(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = 16;
    Rng rng(2);
    LabelGraph g;
    g.n_labels = n;
    g.fixed_adj = random_matrix(rng, n, n, 0.0, 1.0);
    g.node_features = random_matrix(rng, n, d);
    Matrix f = random_matrix(rng, n, d);
    Matrix w = random_matrix(rng, d, d, -0.1, 0.1);
    Matrix a = random_matrix(rng, 2 * d, 1, -0.1, 0.1);
    for (auto _ : state) {
        Tape t;
        LayerVars lv{t.constant(w), t.constant(a)};
        Var out = agcn_layer(t, t.constant(f), g, lv, 0.2, true, true);
        benchmark::DoNotOptimize(t.value(out).data().data());
    }
}
BENCHMARK(BM_agcn_layer_forward)->Arg(12)->Arg(40)->Arg(80);

void BM_training_step(benchmark::State& state) {
    const std::size_t n_labels = 12, d = 16, batch = 32;
    Rng rng(3);
    ModelBundle b;
    b.d_f = d;
    b.ablation = Ablation::ABC;
    b.generator = make_identity_generator(d, 0.2);
    b.graph.n_labels = n_labels;
    b.graph.node_features = random_matrix(rng, n_labels, d, 0.0, 0.5);
    b.graph.cooccurrence = random_matrix(rng, n_labels, n_labels, 0.0, 1.0);
    b.graph.fixed_adj = random_matrix(rng, n_labels, n_labels, 0.0, 0.2);
    b.layers.push_back(make_layer_params(d, d, 0.2, rng, n_labels));
    Matrix features = random_matrix(rng, batch, d);
    Matrix targets(batch, n_labels);
    for (double& v : targets.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    LossConfig cfg;

    for (auto _ : state) {
        Tape t;
        TapeBundle tv = register_model(t, b, true, false);
        Var probs = predict(t, b, tv, t.constant(features));
        Var loss = asl_loss(t, probs, targets, cfg);
        GradMap grads = t.backward(loss);
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_training_step);

void BM_mean_average_precision(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), n_labels = 12;
    Rng rng(4);
    EvalFrame f;
    f.scores = random_matrix(rng, n, n_labels, 0.0, 1.0);
    f.targets = Matrix(n, n_labels);
    for (double& v : f.targets.data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    f.targets(0, 0) = 1.0;
    for (auto _ : state) {
        MetricsReport r = evaluate_frame(f);
        benchmark::DoNotOptimize(r.map);
    }
}
BENCHMARK(BM_mean_average_precision)->Arg(500)->Arg(5000);

void BM_co_occurrence(benchmark::State& state) {
    SynthSpec spec;
    spec.n_labels = 12;
    spec.n_clusters = 3;
    spec.samples = static_cast<std::size_t>(state.range(0));
    spec.feature_dim = 16;
    spec.seed = 5;
    MultiLabelDataset ds = generate_synthetic(spec);
    for (auto _ : state) {
        Matrix p = co_occurrence_matrix(*ds.labels);
        benchmark::DoNotOptimize(p.data().data());
    }
}
BENCHMARK(BM_co_occurrence)->Arg(2000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
