#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <sstream>

#include "tastesim/rng.hpp"
#include "tastesim/simnet.hpp"

using namespace tastesim;
using namespace tastesim::simnet;

namespace {

ingest::FeatureTensor tensor_of(std::vector<double> values, std::size_t channels,
                                std::size_t length, const std::string& key = "") {
    ingest::FeatureTensor t;
    t.song_key = key;
    t.channels = channels;
    t.length = length;
    t.values = std::move(values);
    return t;
}

ingest::FeatureTensor random_tensor(SplitMix64& rng, int channels, int length,
                                    const std::string& key = "") {
    ingest::FeatureTensor t;
    t.song_key = key;
    t.channels = static_cast<std::size_t>(channels);
    t.length = static_cast<std::size_t>(length);
    t.values.resize(t.channels * t.length);
    for (auto& v : t.values) v = rng.next_gaussian();
    return t;
}

// 1 channel x 4 input, one conv layer (pool 2, kernel [1,-1], bias 0.5),
// FC 1 -> 2 with W = [[2, 1]], b = [0.5, -0.5], identity output.
NetworkParams tiny_fixture_params() {
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 4;
    arch.conv_layers = {{1, 1, 2, 2}};
    arch.fc_hidden = {};
    arch.output_units = 2;
    NetworkParams params = init_params(arch, 0);
    params.conv[0].kernel = {1.0, -1.0};
    params.conv[0].bias = {0.5};
    params.fc[0].weight = {2.0, 1.0};
    params.fc[0].bias = {0.5, -0.5};
    return params;
}

NetworkArchitecture small_arch(bool pool_first) {
    NetworkArchitecture arch;
    arch.input_channels = 2;
    arch.input_length = 12;
    arch.conv_layers = {{2, 3, 3, 2}, {3, 2, 2, 1}};
    arch.fc_hidden = {6};
    arch.output_units = 4;
    arch.pool_before_conv = pool_first;
    return arch;
}

}  // namespace

TEST_CASE("width-1 identity kernel passes the pooled signal through") {
    ConvLayerSpec spec{1, 1, 1, 2};
    ConvParams params;
    params.kernel = {1.0};
    params.bias = {0.0};
    auto out = conv_forward(tensor_of({1, 2, 3, 4}, 1, 4), spec, params);
    CHECK(out.values == std::vector<double>{2, 4});
    CHECK(out.channels == 1);
    CHECK(out.length == 2);
}

TEST_CASE("hand convolution: pool 1, kernel [1,1], relu") {
    ConvLayerSpec spec{1, 1, 2, 1};
    ConvParams params;
    params.kernel = {1.0, 1.0};
    params.bias = {0.0};
    ConvLayerTrace trace;
    auto out = conv_forward(tensor_of({1, -2, 3}, 1, 3), spec, params, true, &trace);
    CHECK(trace.pre == std::vector<double>{-1, 1});
    CHECK(out.values == std::vector<double>{0, 1});
}

TEST_CASE("all-zero input with zero bias stays zero") {
    ConvLayerSpec spec{2, 3, 2, 2};
    ConvParams params;
    params.kernel.assign(3 * 2 * 2, 0.7);
    params.bias.assign(3, 0.0);
    auto out = conv_forward(tensor_of(std::vector<double>(16, 0.0), 2, 8), spec, params);
    for (double v : out.values) CHECK(v == 0.0);
}

TEST_CASE("conv_forward rejects mismatched channel counts and short inputs") {
    ConvLayerSpec spec{2, 1, 3, 2};
    ConvParams params;
    params.kernel.assign(6, 0.1);
    params.bias = {0.0};
    CHECK_THROWS_AS(conv_forward(tensor_of({1, 2, 3}, 1, 3), spec, params), DataError);
    CHECK_THROWS_AS(conv_forward(tensor_of(std::vector<double>(8, 1.0), 2, 4), spec, params),
                    ConfigError);
}

TEST_CASE("fc identity weights with relu gate") {
    FcParams params;
    params.in = 2;
    params.out = 2;
    params.weight = {1, 0, 0, 1};
    params.bias = {0, 0};
    auto out = fc_forward(std::vector<double>{1, -1}, params, true);
    CHECK(out == std::vector<double>{1, 0});
}

TEST_CASE("fc applies the transposed-weight convention") {
    FcParams params;
    params.in = 2;
    params.out = 2;
    params.weight = {1, 2, 3, 4};  // W = [[1,2],[3,4]] stored input-major
    params.bias = {0, 0};
    auto out = fc_forward(std::vector<double>{1, 1}, params, false);
    CHECK(out == std::vector<double>{4, 6});
}

TEST_CASE("fc bias alone feeds the activation") {
    FcParams params;
    params.in = 2;
    params.out = 2;
    params.weight = {1, 1, 1, 1};
    params.bias = {0.5, -0.5};
    auto out = fc_forward(std::vector<double>{0, 0}, params, true);
    CHECK(out == std::vector<double>{0.5, 0.0});
    CHECK_THROWS_AS(fc_forward(std::vector<double>{0, 0, 0}, params, true), DataError);
}

TEST_CASE("identical inputs give similarity 1 exactly") {
    SplitMix64 rng(8);
    auto params = init_params(small_arch(true), 5);
    auto x = random_tensor(rng, 2, 12);
    double sim = forward_pair(x, x, params);
    CHECK(std::abs(sim - 1.0) <= 1e-12);
}

TEST_CASE("forward_pair is bitwise symmetric under argument swap") {
    SplitMix64 rng(9);
    auto params = init_params(small_arch(true), 6);
    for (int round = 0; round < 20; ++round) {
        auto x = random_tensor(rng, 2, 12);
        auto y = random_tensor(rng, 2, 12);
        CHECK(forward_pair(x, y, params) == forward_pair(y, x, params));
    }
}

TEST_CASE("tiny fixed network matches the hand evaluation") {
    auto params = tiny_fixture_params();
    auto x = tensor_of({1, 3, 2, 0}, 1, 4);
    auto y = tensor_of({0, 2, 4, 4}, 1, 4);
    ForwardTrace trace;
    double sim = forward_pair(x, y, params, &trace);
    CHECK(trace.x.output == std::vector<double>{3.5, 1.0});
    CHECK(trace.y.output == std::vector<double>{0.5, -0.5});
    CHECK(sim == doctest::Approx(0.48564293117863205).epsilon(1e-12));
    CHECK(predict(params, x, y) == sim);
    CHECK(predict(params, x, y) == predict(params, y, x));
}

TEST_CASE("batch loss is the mean squared similarity error") {
    auto params = tiny_fixture_params();
    auto x = tensor_of({1, 3, 2, 0}, 1, 4);
    SUBCASE("prediction equal to label gives zero loss") {
        double sim = predict(params, x, x);
        std::vector<PairItem> batch{{&x, &x, sim}};
        CHECK(batch_loss(batch, params) == 0.0);
    }
    SUBCASE("single pair error squares") {
        // label chosen so that sim - label = -0.4
        double sim = predict(params, x, x);  // 1.0
        std::vector<PairItem> batch{{&x, &x, sim + 0.4}};
        CHECK(batch_loss(batch, params) == doctest::Approx(0.16));
    }
    SUBCASE("two-pair batch averages the squared errors") {
        double sim = predict(params, x, x);
        std::vector<PairItem> batch{{&x, &x, sim + 0.1}, {&x, &x, sim + 0.3}};
        CHECK(batch_loss(batch, params) == doctest::Approx(0.05));
    }
}

TEST_CASE("zero-loss batches give all-zero gradients") {
    auto params = tiny_fixture_params();
    auto x = tensor_of({1, 3, 2, 0}, 1, 4);
    double sim = predict(params, x, x);
    std::vector<PairItem> batch{{&x, &x, sim}};
    std::vector<ForwardTrace> traces(1);
    forward_pair(x, x, params, &traces[0]);
    double loss = -1;
    auto grads = backward(batch, traces, params, &loss);
    CHECK(loss == 0.0);
    for (const double* g : grads.flat()) CHECK(*g == 0.0);
}

TEST_CASE("analytic gradients agree with central differences") {
    for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
        for (bool pool_first : {true, false}) {
            auto arch = small_arch(pool_first);
            auto params = init_params(arch, seed);
            CHECK(params.parameter_count() <= 500);
            SplitMix64 rng(seed * 7 + 1);
            std::vector<ingest::FeatureTensor> tensors;
            for (int i = 0; i < 6; ++i) tensors.push_back(random_tensor(rng, 2, 12));
            std::vector<PairItem> batch{
                {&tensors[0], &tensors[1], 0.8},
                {&tensors[2], &tensors[3], 0.2},
                {&tensors[4], &tensors[5], 0.5},
            };
            auto result = gradient_check(params, batch, 1e-5);
            CAPTURE(seed);
            CAPTURE(pool_first);
            CHECK(result.max_rel_error <= 1e-4);
        }
    }
}

TEST_CASE("dead relu units receive zero gradient on incoming weights") {
    // Large negative bias kills the conv unit for every input.
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 6;
    arch.conv_layers = {{1, 1, 2, 1}};
    arch.fc_hidden = {};
    arch.output_units = 2;
    auto params = init_params(arch, 3);
    params.conv[0].bias = {-100.0};
    SplitMix64 rng(4);
    auto x = random_tensor(rng, 1, 6);
    auto y = random_tensor(rng, 1, 6);
    std::vector<PairItem> batch{{&x, &y, 0.3}};
    std::vector<ForwardTrace> traces(1);
    forward_pair(x, y, params, &traces[0]);
    CHECK(traces[0].zero_norm_flagged);  // dead conv -> zero fc input -> bias-only output
    auto grads = backward(batch, traces, params);
    for (double g : grads.conv[0].kernel) CHECK(g == 0.0);
    CHECK(grads.conv[0].bias[0] == 0.0);
}

TEST_CASE("backward rejects stale traces after parameter updates") {
    auto params = tiny_fixture_params();
    auto x = tensor_of({1, 3, 2, 0}, 1, 4);
    auto y = tensor_of({0, 2, 4, 4}, 1, 4);
    std::vector<PairItem> batch{{&x, &y, 0.5}};
    std::vector<ForwardTrace> traces(1);
    forward_pair(x, y, params, &traces[0]);
    params.fc[0].bias[0] += 0.25;  // parameters moved on
    CHECK_THROWS_AS(backward(batch, traces, params), DataError);
}

TEST_CASE("output shapes follow floor(L/pool) - kernel + 1 over random configs") {
    SplitMix64 rng(55);
    int accepted = 0;
    while (accepted < 40) {
        NetworkArchitecture arch;
        arch.input_channels = 1 + static_cast<int>(rng.next_below(3));
        arch.input_length = 4 + static_cast<int>(rng.next_below(60));
        int in = arch.input_channels;
        int layers = 1 + static_cast<int>(rng.next_below(3));
        for (int l = 0; l < layers; ++l) {
            int out = 1 + static_cast<int>(rng.next_below(4));
            arch.conv_layers.push_back({in, out, 1 + static_cast<int>(rng.next_below(5)),
                                        1 + static_cast<int>(rng.next_below(3))});
            in = out;
        }
        arch.fc_hidden = {4};
        arch.output_units = 3;
        std::vector<int> lengths;
        try {
            lengths = arch.conv_output_lengths();
        } catch (const ConfigError&) {
            continue;  // config invalid by the formula; rejection is the contract
        }
        ++accepted;
        int expect = arch.input_length;
        for (std::size_t l = 0; l < arch.conv_layers.size(); ++l) {
            expect = expect / arch.conv_layers[l].pool_width - arch.conv_layers[l].kernel_width + 1;
            CHECK(lengths[l] == expect);
        }
        // and the real forward run agrees with the formula
        auto params = init_params(arch, rng.next_u64());
        auto x = random_tensor(rng, arch.input_channels, arch.input_length);
        BranchTrace trace;
        branch_forward(x, params, &trace);
        CHECK(static_cast<int>(trace.conv.back().out.size()) ==
              arch.conv_layers.back().out_channels * lengths.back());
    }
}

TEST_CASE("weight sharing: one parameter set drives both branches") {
    auto params = tiny_fixture_params();
    auto x = tensor_of({1, 3, 2, 0}, 1, 4);
    auto y = tensor_of({0, 2, 4, 4}, 1, 4);
    double before = forward_pair(x, y, params);
    params.fc[0].weight[0] += 1.0;  // mutating the single set changes both branches
    ForwardTrace trace;
    forward_pair(x, y, params, &trace);
    CHECK(trace.x.output[0] == doctest::Approx(3.5 + 1.5));
    CHECK(trace.y.output[0] == doctest::Approx(0.5 + 0.0));
    CHECK(forward_pair(x, y, params) != before);
    CHECK(forward_pair(x, y, params) == forward_pair(y, x, params));
}

TEST_CASE("learning rate zero leaves parameters unchanged with a flat history") {
    SplitMix64 rng(70);
    std::vector<pairs::PairSample> dataset{
        {"a", "b", 0.4, pairs::Split::Train},
        {"a", "c", 0.9, pairs::Split::Train},
    };
    TensorMap tensors;
    tensors.emplace("a", random_tensor(rng, 1, 8, "a"));
    tensors.emplace("b", random_tensor(rng, 1, 8, "b"));
    tensors.emplace("c", random_tensor(rng, 1, 8, "c"));
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 8;
    arch.conv_layers = {{1, 2, 2, 1}};
    arch.fc_hidden = {4};
    arch.output_units = 3;
    TrainConfig config;
    config.learning_rate = 0.0;
    config.epochs = 5;
    config.batch_size = 2;
    config.seed = 1;
    auto result = train(dataset, tensors, arch, config);
    auto fresh = init_params(arch, config.seed);
    CHECK(result.params.checksum() == fresh.checksum());
    REQUIRE(result.history.size() == 5);
    for (const auto& entry : result.history) {
        CHECK(entry.train_mse == result.history[0].train_mse);
    }
}

TEST_CASE("a single pair is memorized to loss under 1e-4") {
    SplitMix64 rng(71);
    std::vector<pairs::PairSample> dataset{{"a", "b", 0.7, pairs::Split::Train}};
    TensorMap tensors;
    tensors.emplace("a", random_tensor(rng, 1, 8, "a"));
    tensors.emplace("b", random_tensor(rng, 1, 8, "b"));
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 8;
    arch.conv_layers = {{1, 2, 2, 1}};
    arch.fc_hidden = {4};
    arch.output_units = 3;
    TrainConfig config;
    config.learning_rate = 0.02;
    config.optimizer = Optimizer::Adam;
    config.epochs = 400;
    config.batch_size = 1;
    config.seed = 2;
    auto result = train(dataset, tensors, arch, config);
    CHECK(result.history.back().train_mse < 1e-4);
}

TEST_CASE("training histories are identical for identical seeds") {
    SplitMix64 rng(72);
    std::vector<pairs::PairSample> dataset;
    TensorMap tensors;
    for (int i = 0; i < 8; ++i) {
        tensors.emplace("s" + std::to_string(i), random_tensor(rng, 1, 8, "s" + std::to_string(i)));
    }
    for (int i = 0; i < 7; ++i) {
        dataset.push_back({"s" + std::to_string(i), "s" + std::to_string(i + 1),
                           0.1 * i, i < 5 ? pairs::Split::Train : pairs::Split::Validation});
    }
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 8;
    arch.conv_layers = {{1, 2, 2, 1}};
    arch.fc_hidden = {4};
    arch.output_units = 3;
    TrainConfig config;
    config.learning_rate = 0.05;
    config.epochs = 10;
    config.batch_size = 2;
    config.seed = 9;
    auto a = train(dataset, tensors, arch, config);
    auto b = train(dataset, tensors, arch, config);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        CHECK(a.history[i].train_mse == b.history[i].train_mse);
        CHECK(a.history[i].validation_mse == b.history[i].validation_mse);
    }
    CHECK(a.params.checksum() == b.params.checksum());
}

TEST_CASE("checkpoints round-trip parameters and optimizer state") {
    SplitMix64 rng(73);
    auto params = init_params(small_arch(true), 12);
    Checkpoint ckpt;
    ckpt.params = params;
    ckpt.optimizer.type = Optimizer::Adam;
    ckpt.optimizer.adam_m.assign(params.parameter_count(), 0.5);
    ckpt.optimizer.adam_v.assign(params.parameter_count(), 0.25);
    ckpt.optimizer.step = 17;
    ckpt.seed = 12;
    ckpt.epoch = 9;
    ckpt.best_validation_loss = 0.0123;
    std::string path = "test_ckpt_roundtrip.json";
    save_checkpoint(ckpt, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.params.arch == params.arch);
    CHECK(loaded.params.checksum() == params.checksum());
    CHECK(loaded.optimizer.step == 17);
    CHECK(loaded.optimizer.adam_m == ckpt.optimizer.adam_m);
    CHECK(loaded.epoch == 9);
    CHECK(loaded.best_validation_loss == 0.0123);
    std::remove(path.c_str());

    std::ostringstream history_csv;
    write_loss_history_csv(std::vector<EpochLoss>{{1, 0.5, 0.6}, {2, 0.25, 0.3}}, history_csv);
    CHECK(history_csv.str() == "epoch,train_mse,validation_mse\n1,0.5,0.6\n2,0.25,0.3\n");
}

TEST_CASE("train aborts on divergence with a diagnostic") {
    SplitMix64 rng(74);
    std::vector<pairs::PairSample> dataset{{"a", "b", 0.5, pairs::Split::Train}};
    TensorMap tensors;
    tensors.emplace("a", random_tensor(rng, 1, 8, "a"));
    tensors.emplace("b", random_tensor(rng, 1, 8, "b"));
    NetworkArchitecture arch;
    arch.input_channels = 1;
    arch.input_length = 8;
    arch.conv_layers = {{1, 2, 2, 1}};
    arch.fc_hidden = {4};
    arch.output_units = 3;
    TrainConfig config;
    // Steps this large overflow the activations to inf, so the cosine goes
    // NaN on the next forward pass.
    config.learning_rate = 1e150;
    config.epochs = 50;
    config.batch_size = 1;
    config.seed = 3;
    CHECK_THROWS_AS(train(dataset, tensors, arch, config), DataError);
}
