#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace condest;
using namespace testing_support;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.hidden_dim = 6;
    c.gcn_layers = 2;
    c.head_widths = {8, 5};
    return c;
}

const Dataset& small_dataset() {
    static const Dataset ds = sample_dataset(default_specs({16, 49}), {24, 8, 4}, 123);
    return ds;
}

nn::TrainConfig quick_train(int epochs) {
    nn::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 8;
    t.seed = 5;
    return t;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "condest_model_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(ModelConfig, DefaultParameterCount) {
    const auto mp = init_model(ModelConfig{}, 1);
    // node 64x2, 3 x (64x64), global 64x29 + 64, head 192->256->128->1
    const std::size_t expected =
        64 * 2 + 3 * 64 * 64 + 64 * 29 + 64 + (192 * 256 + 256) + (256 * 128 + 128) + (128 + 1);
    EXPECT_EQ(expected, 96769u);
    EXPECT_EQ(mp.store.count(), expected);
}

TEST(ModelConfig, Validation) {
    ModelConfig c;
    c.hidden_dim = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.head_widths.clear();
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.norm = 3;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_EQ(scheme_from_name("kappa"), Scheme::PredictKappa);
    EXPECT_EQ(scheme_from_name("inverse_norm"), Scheme::PredictInverseNorm);
    EXPECT_THROW(scheme_from_name("bogus"), ConfigError);
}

TEST(Forward, ZeroParametersGiveOutputBias) {
    CounterRng rng(1);
    auto mp = init_model(ModelConfig{}, 3);
    zero_parameters(mp);
    const auto g = build_graph(random_csr(20, 0.2, rng, 1.0));
    EXPECT_EQ(forward(g, mp), 0.0);
    mp.store.get(ModelParams::head_b(2)).value[0] = 2.75;
    EXPECT_EQ(forward(g, mp), 2.75);
}

TEST(Forward, SingletonGraphPoolsToEqualMeanAndMax) {
    // Head reads sum_j |z_mean_j - z_max_j| over four channels; each ReLU
    // unit sees a single difference so equal pools give exactly zero.
    auto mp = init_model(small_config(), 4);
    const std::size_t h = mp.config.hidden_dim;
    auto& w0 = mp.store.get(ModelParams::head_w(0)).value;
    w0.fill(0.0);
    for (std::size_t j = 0; j < 4; ++j) {
        w0.at(j, j) = 1.0;
        w0.at(j, h + j) = -1.0;
        w0.at(4 + j, j) = -1.0;
        w0.at(4 + j, h + j) = 1.0;
    }
    mp.store.get(ModelParams::head_b(0)).value.fill(0.0);
    auto& w1 = mp.store.get(ModelParams::head_w(1)).value;
    w1.fill(0.0);
    for (std::size_t j = 0; j < 8; ++j) w1.at(0, j) = 1.0;
    mp.store.get(ModelParams::head_b(1)).value.fill(0.0);
    auto& w2 = mp.store.get(ModelParams::head_w(2)).value;
    w2.fill(0.0);
    w2.at(0, 0) = 1.0;
    mp.store.get(ModelParams::head_b(2)).value.fill(0.0);

    const auto single = csr_from_triplets(1, std::vector<Triplet>{{0, 0, 3.0}});
    EXPECT_EQ(forward(build_graph(single), mp), 0.0);
    // Sanity: a graph with distinct nodes gives a positive gap.
    const auto two = csr_from_triplets(2, std::vector<Triplet>{{0, 0, 1e-3}, {1, 1, 50.0}, {1, 0, 1.0}});
    EXPECT_GT(forward(build_graph(two), mp), 0.0);
}

TEST(Forward, PermutationInvariant) {
    CounterRng rng(9);
    auto mp = init_model(ModelConfig{}, 7);
    for (int t = 0; t < 4; ++t) {
        const auto a = random_csr(40, 0.08, rng, t % 2 ? 2.0 : 1.0);
        const auto perm = random_permutation(a.n(), rng);
        const double y0 = forward(build_graph(a), mp);
        const double y1 = forward(build_graph(permuted(a, perm)), mp);
        EXPECT_NEAR(y0, y1, 1e-10);
    }
}

TEST(Forward, IsolatedNodeIsGuarded) {
    auto mp = init_model(small_config(), 2);
    const auto a = csr_from_triplets(3, std::vector<Triplet>{{0, 0, 2.0}, {0, 2, 1.0}, {2, 2, 1.0}});
    const auto g = build_graph(a);
    const auto p = prepare_graph(g, mp.scaling);
    for (double c : p.coef) EXPECT_TRUE(std::isfinite(c));
    EXPECT_TRUE(std::isfinite(forward(g, mp)));
}

TEST(Forward, NormalizationCoefficients) {
    // Path 0-1-2 with self loops: degrees 2, 3, 2.
    const auto a = tridiag(3, -1.0, 2.0, -1.0);
    const auto p = prepare_graph(build_graph(a), InputScaling{});
    ASSERT_EQ(p.coef.size(), 7u);
    EXPECT_DOUBLE_EQ(p.coef[0], 1.0 / 2.0);             // (0,0)
    EXPECT_DOUBLE_EQ(p.coef[1], 1.0 / std::sqrt(6.0));  // (0,1)
    EXPECT_DOUBLE_EQ(p.coef[3], 1.0 / 3.0);             // (1,1)
}

TEST(Forward, BatchMatchesSingleGraphs) {
    CounterRng rng(10);
    auto mp = init_model(ModelConfig{}, 11);
    std::vector<PreparedGraph> prepared;
    std::vector<double> singles;
    for (Index n : {5, 17, 30}) {
        const auto g = build_graph(random_csr(n, 0.2, rng, 1.0));
        prepared.push_back(prepare_graph(g, mp.scaling));
        singles.push_back(forward(g, mp));
    }
    const auto batch = predict_batch({&prepared[0], &prepared[1], &prepared[2]}, mp);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(batch[i], singles[i], 1e-12);
}

TEST(Forward, FullModelGradientCheck) {
    CounterRng rng(12);
    auto mp = init_model(small_config(), 13);
    for (auto& p : mp.store.all()) {
        for (auto& x : p.value.data()) x += rng.uniform(-0.2, 0.2);  // nonzero biases too
    }
    const auto g0 = build_graph(random_csr(10, 0.3, rng, 1.5));
    const auto g1 = build_graph(random_csr(7, 0.3, rng, 0.0));
    const auto p0 = prepare_graph(g0, mp.scaling);
    const auto p1 = prepare_graph(g1, mp.scaling);
    const GraphBatch batch = make_batch({&p0, &p1});
    const std::vector<double> targets{0.7, -1.2};
    auto loss_value = [&] {
        nn::Tape tape;
        std::vector<nn::Var> vars;
        return nn::mse(forward_batch(tape, batch, mp, {}, vars, false), targets).value()[0];
    };
    mp.store.zero_grad();
    {
        nn::Tape tape;
        std::vector<nn::Var> vars;
        tape.backward(nn::mse(forward_batch(tape, batch, mp, {}, vars, true), targets));
    }
    const double h = 1e-5;
    double max_diff = 0, max_fd = 0;
    for (auto& p : mp.store.all()) {
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double x0 = p.value[k];
            p.value[k] = x0 + h;
            const double up = loss_value();
            p.value[k] = x0 - h;
            const double down = loss_value();
            p.value[k] = x0;
            const double fd = (up - down) / (2 * h);
            max_diff = std::max(max_diff, std::abs(fd - p.grad[k]));
            max_fd = std::max(max_fd, std::abs(fd));
        }
    }
    EXPECT_LT(max_diff / max_fd, 1e-4);
}

TEST(Forward, DropoutOnlyInTrainMode) {
    CounterRng rng(14);
    auto mp = init_model(ModelConfig{}, 15);
    const auto g = build_graph(random_csr(30, 0.1, rng, 1.0));
    const double eval = forward(g, mp);
    EXPECT_EQ(forward(g, mp, false, 0.5, &rng), eval);
    CounterRng d(1);
    EXPECT_NE(forward(g, mp, true, 0.5, &d), eval);
    EXPECT_THROW(forward(g, mp, true, 0.5, nullptr), InvalidArgument);
}

TEST(Targets, Examples) {
    EXPECT_DOUBLE_EQ(target_for(Scheme::PredictInverseNorm, 1, 1e6, 1e2), 4.0);
    EXPECT_DOUBLE_EQ(target_for(Scheme::PredictKappa, 1, 1e6, 1e2), 6.0);
    LabeledMatrix lm;
    lm.matrix = identity(4);
    attach_labels(lm);
    EXPECT_EQ(target_for(Scheme::PredictInverseNorm, 1, lm), 0.0);
    EXPECT_EQ(target_for(Scheme::PredictKappa, 2, lm), 0.0);
    EXPECT_THROW(target_for(Scheme::PredictKappa, 1, 0.5, 1.0), LabelError);
    EXPECT_THROW(target_for(Scheme::PredictKappa, 1, 10.0, 0.0), LabelError);
    EXPECT_THROW(target_for(Scheme::PredictKappa, 3, 10.0, 1.0), LabelError);
}

TEST(Predict, ZeroModelSchemesAreConsistent) {
    CounterRng rng(16);
    const auto a = random_csr(25, 0.2, rng, 1.0);
    for (int norm : {1, 2}) {
        ModelConfig c1;
        c1.norm = norm;
        ModelConfig c2 = c1;
        c2.scheme = Scheme::PredictKappa;
        auto m1 = init_model(c1, 1);
        auto m2 = init_model(c2, 1);
        zero_parameters(m1);
        zero_parameters(m2);
        const auto p1 = predict_cond(a, m1);
        const auto p2 = predict_cond(a, m2);
        EXPECT_EQ(p2.kappa_hat, 1.0);
        const double nrm = norm == 1 ? norm_1(a) : power_norm_2(a);
        EXPECT_EQ(p1.kappa_hat, nrm);
        EXPECT_EQ(p1.kappa_hat, p1.matrix_norm * p2.kappa_hat);
        EXPECT_GE(p1.t_feature, 0.0);
        EXPECT_GE(p1.t_inference, 0.0);
        EXPECT_EQ(p2.t_norm, 0.0);
    }
}

TEST(Predict, OutputIsClampedBeforeExponentiation) {
    ModelConfig c;
    c.scheme = Scheme::PredictKappa;
    auto mp = init_model(c, 1);
    zero_parameters(mp);
    mp.store.get(ModelParams::head_b(2)).value[0] = 400.0;
    const auto p = predict_cond(identity(3), mp);
    EXPECT_EQ(p.log10_output, 400.0);
    EXPECT_EQ(p.kappa_hat, 1e30);
}

TEST(ModelIo, SaveLoadIsBitExact) {
    CounterRng rng(17);
    const auto ds_train = std::vector<MatrixGraph>{build_graph(random_csr(12, 0.3, rng, 1.0)),
                                                   build_graph(random_csr(20, 0.2, rng, 0.0))};
    ModelConfig c;
    c.scheme = Scheme::PredictKappa;
    c.norm = 2;
    auto mp = init_model(c, 18);
    mp.scaling = fit_scaling(ds_train);
    for (auto& p : mp.store.all()) {
        for (auto& x : p.value.data()) x *= 1.0 + 1e-3 * rng.uniform();
    }
    const auto path = temp_file("roundtrip.json").string();
    save_model(mp, path);
    auto back = load_model(path);
    EXPECT_EQ(back.config.scheme, c.scheme);
    EXPECT_EQ(back.config.norm, 2);
    EXPECT_EQ(back.config.head_widths, c.head_widths);
    EXPECT_EQ(back.scaling, mp.scaling);
    ASSERT_EQ(back.store.all().size(), mp.store.all().size());
    for (std::size_t i = 0; i < mp.store.all().size(); ++i) {
        EXPECT_EQ(back.store.all()[i].name, mp.store.all()[i].name);
        EXPECT_EQ(back.store.all()[i].value, mp.store.all()[i].value);
        EXPECT_EQ(back.store.all()[i].is_weight, mp.store.all()[i].is_weight);
    }
    const auto a = random_csr(30, 0.1, rng, 1.0);
    EXPECT_EQ(predict_cond(a, back).log10_output, predict_cond(a, mp).log10_output);
}

TEST(ModelIo, TamperedFilesAreRejected) {
    const auto mp = init_model(small_config(), 1);
    const auto j = model_to_json(mp);
    auto bad_schema = j;
    bad_schema["feature_schema_version"] = kFeatureSchemaVersion + 1;
    EXPECT_THROW(model_from_json(bad_schema), ConfigError);
    auto bad_format = j;
    bad_format["format_version"] = 99;
    EXPECT_THROW(model_from_json(bad_format), ConfigError);
    auto bad_shape = j;
    bad_shape["config"]["hidden_dim"] = 7;
    EXPECT_THROW(model_from_json(bad_shape), ConfigError);
    EXPECT_NO_THROW(model_from_json(j));

    const auto path = temp_file("garbage.json").string();
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_model(path), ConfigError);
    EXPECT_THROW(load_model(temp_file("missing.json").string()), ConfigError);
}

TEST(Training, MemorizesASingleMatrix) {
    const auto& ds = small_dataset();
    const std::vector<LabeledMatrix> one{ds.train.front()};
    nn::TrainConfig t;
    t.epochs = 200;
    t.early_stop_patience = 200;
    t.dropout_rate = 0.0;
    t.seed = 3;
    const auto r = train(one, one, small_config(), t);
    EXPECT_EQ(r.history.epochs(), 200u);
    EXPECT_LT(r.history.train_loss.back(), 1e-4);
    EXPECT_LT(r.history.best_val_loss, 1e-4);
}

TEST(Training, DeterministicForFixedSeed) {
    const auto& ds = small_dataset();
    auto a = train(ds, small_config(), quick_train(6));
    auto b = train(ds, small_config(), quick_train(6));
    EXPECT_EQ(a.history.train_loss, b.history.train_loss);
    EXPECT_EQ(a.history.val_loss, b.history.val_loss);
    EXPECT_EQ(a.history.lr, b.history.lr);
    EXPECT_EQ(a.params.store.snapshot(), b.params.store.snapshot());
    auto other = quick_train(6);
    other.seed = 6;
    EXPECT_NE(train(ds, small_config(), other).history.train_loss, a.history.train_loss);
}

TEST(Training, HistoryInvariantsAndEarlyStopping) {
    const auto& ds = small_dataset();
    auto cfg = quick_train(40);
    cfg.early_stop_patience = 5;
    cfg.plateau_patience = 2;
    cfg.lr = 3e-3;
    int calls = 0;
    TrainHooks hooks;
    hooks.on_epoch = [&](int, double, double, double) { ++calls; };
    auto r = train(ds, small_config(), cfg, hooks);
    const auto& h = r.history;
    EXPECT_EQ(static_cast<std::size_t>(calls), h.epochs());
    EXPECT_EQ(h.val_loss.size(), h.epochs());
    EXPECT_EQ(h.lr.size(), h.epochs());
    EXPECT_EQ(h.wall_time.size(), h.epochs());
    for (std::size_t e = 1; e < h.epochs(); ++e) {
        EXPECT_LE(h.lr[e], h.lr[e - 1]);
        EXPECT_GE(h.wall_time[e], h.wall_time[e - 1]);
    }
    const double min_val = *std::min_element(h.val_loss.begin(), h.val_loss.end());
    EXPECT_EQ(h.best_val_loss, min_val);
    EXPECT_EQ(h.val_loss[static_cast<std::size_t>(h.best_epoch - 1)], min_val);
    EXPECT_LE(min_val, h.val_loss.front());
    if (h.epochs() < 40u) {
        EXPECT_EQ(h.epochs(), static_cast<std::size_t>(h.best_epoch + cfg.early_stop_patience));
    }

    // The restored parameters are the best-validation ones.
    std::vector<MatrixGraph> val_graphs;
    for (const auto& lm : ds.val) val_graphs.push_back(build_graph(lm.matrix));
    const auto val_set = prepare_set(ds.val, val_graphs, r.params);
    EXPECT_EQ(evaluate_mse(val_set, r.params), min_val);
}

TEST(Training, HistoryCsv) {
    TrainHistory h;
    h.train_loss = {1.5, 0.25};
    h.val_loss = {2.0, 0.5};
    h.lr = {1e-3, 5e-4};
    h.wall_time = {0.1, 0.2};
    std::ostringstream out;
    write_history_csv(out, h);
    EXPECT_EQ(out.str(), "epoch,train_loss,val_loss,lr,wall_time\n1,1.5,2,0.001,0.100000\n2,0.25,0.5,0.0005,0.200000\n");
}

TEST(Training, DivergenceReportsMatrixIds) {
    const auto& ds = small_dataset();
    std::vector<LabeledMatrix> items(ds.train.begin(), ds.train.begin() + 4);
    auto cfg = quick_train(3);
    cfg.batch_size = 1;
    cfg.lr = 1e300;
    cfg.clip_threshold = 1e300;
    try {
        train(items, items, small_config(), cfg);
        FAIL() << "expected a numerical failure";
    } catch (const NumericalError& e) {
        const std::string msg = e.what();
        const bool names_a_matrix = std::any_of(items.begin(), items.end(),
                                                [&](const LabeledMatrix& lm) { return msg.find(lm.id) != std::string::npos; });
        EXPECT_TRUE(names_a_matrix || msg.find("parameter") != std::string::npos) << msg;
    }
}

TEST(Training, RejectsEmptySplitsAndBadConfig) {
    const auto& ds = small_dataset();
    EXPECT_THROW(train({}, ds.val, small_config(), quick_train(1)), ConfigError);
    auto bad = quick_train(1);
    bad.batch_size = 0;
    EXPECT_THROW(train(ds, small_config(), bad), ConfigError);
}

TEST(Scaling, FitsMeanAndStd) {
    const auto g1 = build_graph(diag_matrix({1, 100}));
    const auto g2 = build_graph(diag_matrix({10, 10}));
    const auto s = fit_scaling({g1, g2});
    // node log|a_ii| column: 0, 2, 1, 1 (up to eps)
    EXPECT_NEAR(s.node_mean[0], 1.0, 1e-9);
    EXPECT_NEAR(s.node_scale[0], std::sqrt(0.5), 1e-9);
    // node degree column is constant -> scale stays 1
    EXPECT_EQ(s.node_scale[1], 1.0);
    // a spread at rounding level counts as constant
    auto g3 = g1;
    g3.global.values[0] += 1e-13;
    EXPECT_EQ(fit_scaling({g1, g3}).global_scale[0], 1.0);
}
