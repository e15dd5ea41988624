#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "resset/autodiff.hpp"
#include "resset/errors.hpp"
#include "resset/network.hpp"
#include "resset/train.hpp"

using namespace resset;

namespace {

NetworkConfig small_config(Variant v, int width = 3, int blocks = 2) {
    NetworkConfig c;
    c.scheme = KernelScheme::make(v);
    c.width = width;
    c.blocks = blocks;
    return c;
}

FeatureMap leaky(FeatureMap f, double slope) {
    for (double& v : f.data()) v = v > 0 ? v : slope * v;
    return f;
}

FeatureMap plus(FeatureMap a, const FeatureMap& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
    return a;
}

// Tape-free forward built from the naive convolution and the parameter names.
FeatureMap naive_forward(const Network& net, const FeatureMap& x) {
    const NetworkConfig& c = net.config();
    std::map<std::string, std::vector<double>> p;
    for (const auto& param : net.params()) p[param.name] = param.value;
    const int k = c.scheme.k, M = c.width;
    const Topology t = topology(c.scheme, M, M);
    FeatureMap h = leaky(oracle::conv(x, p.at("lift"), M, Extent3{k, k, k}), c.slope);
    for (int b = 0; b < c.blocks; ++b) {
        const std::string pre = "block" + std::to_string(b) + ".";
        FeatureMap f;
        if (t.chained) {
            f = h;
            for (std::size_t j = 0; j < t.branches.size(); ++j)
                f = oracle::conv(f, p.at(pre + "branch" + std::to_string(j)),
                                 t.branches[j].out_channels, t.branches[j].extent);
        } else {
            std::vector<FeatureMap> parts;
            for (std::size_t j = 0; j < t.branches.size(); ++j)
                parts.push_back(oracle::conv(h, p.at(pre + "branch" + std::to_string(j)),
                                             t.branches[j].out_channels, t.branches[j].extent));
            f = concat_channels(parts);
        }
        if (t.needs_compression) f = oracle::conv(f, p.at(pre + "compression"), M, Extent3{});
        FeatureMap z = oracle::conv(leaky(f, c.slope), p.at(pre + "aggregation"), M, Extent3{});
        h = plus(h, z);
    }
    FeatureMap out = oracle::conv(h, p.at("project"), c.in_channels, Extent3{k, k, k});
    return c.global_residual ? plus(out, x) : out;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("parameter store registers each name once") {
    ad::ParamStore ps;
    const auto a = ps.add("a", 3);
    ps.add("b", 2);
    CHECK(ps.size() == 2);
    CHECK(ps.scalar_count() == 5);
    CHECK(ps[a].grad.size() == 3);
    CHECK_THROWS_AS(ps.add("a", 1), ConfigError);
    ps[a].grad[1] = 4.0;
    ps.zero_grad();
    CHECK(ps[a].grad[1] == 0.0);
}

TEST_CASE("tape gradients of every op match finite differences") {
    std::mt19937_64 rng(3);
    ad::ParamStore ps;
    const auto w1 = ps.add("w1", 2 * 1 * 3);
    const auto w2 = ps.add("w2", 2 * 2 * 9);
    for (auto id : {w1, w2}) ps[id].value = oracle::random_vector(rng, ps[id].value.size());
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 3, 4, 4});
    const FeatureMap r = oracle::random_map(rng, Shape4{4, 3, 4, 4});

    auto objective = [&](ad::Tape& t, bool record) {
        const auto in = t.input(x);
        const auto a = t.conv(in, ps, w1, 2, Extent3{3, 1, 1});
        const auto b = t.leaky_relu(a, 0.2);
        const auto c = t.conv(b, ps, w2, 2, Extent3{1, 3, 3});
        const auto d = t.add(c, a);
        const auto e = t.concat({d, b});
        const FeatureMap& y = t.value(e);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
        if (record) t.seed_gradient(e, r);
        return s;
    };
    ad::Tape tape;
    ps.zero_grad();
    objective(tape, true);
    tape.backward(ps);
    CHECK(tape.empty());
    const double h = 1e-6;
    for (auto id : {w1, w2})
        for (std::size_t j = 0; j < ps[id].value.size(); ++j) {
            const double keep = ps[id].value[j];
            ad::Tape t;
            ps[id].value[j] = keep + h;
            const double up = objective(t, false);
            t.clear();
            ps[id].value[j] = keep - h;
            const double down = objective(t, false);
            ps[id].value[j] = keep;
            CHECK(ps[id].grad[j] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
        }
}

TEST_CASE("backward on an empty tape throws") {
    ad::Tape t;
    ad::ParamStore ps;
    CHECK_THROWS_AS(t.backward(ps), BackwardWithoutForward);
    const auto id = t.input(FeatureMap(Shape4{1, 1, 2, 2}));
    CHECK_THROWS_AS(t.seed_gradient(id, FeatureMap(Shape4{1, 1, 2, 3})), ShapeError);
}

TEST_CASE("zero-weight network with global residual is the identity") {
    Network net = Network::zeros(small_config(Variant::ReS3_1D));
    std::mt19937_64 rng(1);
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 8, 12, 12});
    const FeatureMap y = net.forward(x);
    CHECK(y.shape() == x.shape());
    CHECK(y.values() == x.values());
}

TEST_CASE("network forward matches the tape-free composition for every scheme") {
    std::mt19937_64 rng(2);
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 4, 5, 6});
    for (Variant v : {Variant::Conv3D, Variant::ReS3_2D, Variant::ReS3_1D, Variant::ReS3_1Dx3,
                      Variant::Seq1D, Variant::Seq1D2D, Variant::Par1D2D}) {
        NetworkConfig cfg = small_config(v);
        Network net(cfg, 7);
        CAPTURE(cfg.scheme.name());
        CHECK(relative_error(net.forward(x).data(), naive_forward(net, x).data()) < 1e-12);
    }
    Network bad(small_config(Variant::Conv3D), 1);
    CHECK_THROWS_AS(bad.forward(FeatureMap(Shape4{2, 4, 5, 6})), ShapeError);
}

TEST_CASE("every parameter is registered once and counted") {
    Network net(small_config(Variant::ReS3_1D, 4, 2), 0);
    std::map<std::string, int> seen;
    std::size_t total = 0;
    for (const auto& p : net.params()) {
        ++seen[p.name];
        total += p.value.size();
    }
    for (const auto& [name, n] : seen) CHECK(n == 1);
    CHECK(total == net.parameter_count());
    // lift + 2 * (set + compression + aggregation) + project
    CHECK(net.parameter_count() == 27u * 4 + 2 * (36u * 4 + 48u + 16u) + 27u * 4);
    CHECK(net.block_set_parameter_count() == param_count(KernelScheme::make(Variant::ReS3_1D), 4, 4));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Network net(small_config(Variant::Par1D2D), 3);
    std::mt19937_64 rng(4);
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 3, 4, 4});
    const FeatureMap y = net.forward(x);
    net.params().zero_grad();
    net.backward(FeatureMap(y.shape()));
    for (const auto& p : net.params())
        for (double g : p.grad) CHECK(g == 0.0);
    CHECK_THROWS_AS(net.backward(FeatureMap(y.shape())), BackwardWithoutForward);
}

TEST_CASE("attaching the regulariser") {
    Network net(small_config(Variant::ReS3_1D), 0);
    CHECK_THROWS_AS(net.attach_last_layer(-1.0), ConfigError);
    Network flat(small_config(Variant::ReS3_1D, 3, 0), 0);
    CHECK_THROWS_AS(flat.attach_last_layer(1e-3), ConfigError);
    CHECK_THROWS_AS(flat.last_feature(), BackwardWithoutForward);

    std::mt19937_64 rng(5);
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 3, 4, 4});
    net.attach_last_layer(0.5);
    net.forward(x);
    const FeatureMap& f = net.last_feature();
    CHECK(f.shape().channels == 9);
    CHECK(net.last_reg_value() == doctest::Approx(da_reg_value(feature_matrix(f))));
}

TEST_CASE("network gradient including the regulariser matches finite differences") {
    NetworkConfig cfg = small_config(Variant::ReS3_1D, 3, 2);
    Network net(cfg, 11);
    net.attach_last_layer(0.05);
    std::mt19937_64 rng(6);
    const FeatureMap x = oracle::random_map(rng, Shape4{1, 3, 5, 4});
    const FeatureMap r = oracle::random_map(rng, Shape4{1, 3, 5, 4});
    auto objective = [&] {
        const FeatureMap y = net.forward(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.data()[i] * r.data()[i];
        return s + net.reg_lambda() * net.last_reg_value();
    };
    objective();
    const auto pattern = net.activation_pattern();
    net.params().zero_grad();
    net.backward(r);
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t p = 0; p < net.params().size(); ++p)
        for (std::size_t j = 0; j < net.params()[p].value.size(); j += 7) {
            auto& param = net.params()[p];
            const double keep = param.value[j];
            param.value[j] = keep + h;
            const double up = objective();
            const bool same_up = net.activation_pattern() == pattern;
            param.value[j] = keep - h;
            const double down = objective();
            const bool same_down = net.activation_pattern() == pattern;
            param.value[j] = keep;
            if (!same_up || !same_down) continue;
            const double numeric = (up - down) / (2 * h);
            CHECK(std::abs(param.grad[j] - numeric) <= 1e-6 * std::max(1.0, std::abs(numeric)));
            ++checked;
        }
    CHECK(checked > 40);
}

}

TEST_SUITE("train") {

TEST_CASE("l1 loss and subgradient") {
    FeatureMap a(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(l1_loss(a, a) == 0.0);
    const FeatureMap zero = l1_grad(a, a);
    for (double g : zero.data()) CHECK(g == 0.0);
    FeatureMap b = a;
    for (double& v : b.data()) v += 0.5;
    CHECK(l1_loss(b, a) == doctest::Approx(0.5));
    const FeatureMap quarter = l1_grad(b, a);
    for (double g : quarter.data()) CHECK(g == doctest::Approx(0.25));
    CHECK_THROWS_AS(l1_loss(a, FeatureMap(Shape4{1, 1, 2, 3})), ShapeError);
}

TEST_CASE("denoising loss adds the weighted regulariser") {
    FeatureMap a(Shape4{1, 1, 2, 2}, {1, 2, 3, 4});
    FeatureMap feat(Shape4{3, 1, 1, 3}, {3, 0, 0, 0, 2, 0, 0, 0, 1});
    CHECK(loss_denoise(a, a, feat, 0.0) == 0.0);
    FeatureMap b = a;
    for (double& v : b.data()) v += 0.5;
    CHECK(loss_denoise(b, a, feat, 0.0) == doctest::Approx(0.5));
    CHECK(loss_denoise(b, a, feat, kDefaultLambda) == doctest::Approx(0.5 - kDefaultLambda * 6.0));
}

TEST_CASE("adam update rules") {
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    std::vector<double> p{2.0};
    AdamMoments mom;
    adam_update(p, std::vector<double>{0.0}, mom, 1, cfg);
    CHECK(p[0] == 2.0);

    p = {0.0};
    mom = {};
    adam_update(p, std::vector<double>{1.0}, mom, 1, cfg);
    CHECK(p[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));

    // Constant gradients: the bias-corrected step tends to lr * sign(g).
    p = {0.0, 0.0};
    mom = {};
    const std::vector<double> g{0.3, -7.0};
    std::vector<double> prev = p;
    for (long t = 1; t <= 2000; ++t) {
        prev = p;
        adam_update(p, g, mom, t, cfg);
    }
    CHECK(p[0] - prev[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(p[1] - prev[1] == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK_THROWS_AS(adam_update(p, g, mom, 0, cfg), ConfigError);
}

TEST_CASE("configuration validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lambda = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("noise-free identity task converges") {
    DenoiseTask task;
    task.bands = 8;
    task.height = 12;
    task.width = 12;
    task.train_pairs = 1;
    task.noise.sigma = 0;
    const DenoiseData data = make_denoise_data(task);
    TrainConfig cfg;
    cfg.M = 8;
    cfg.num_blocks = 2;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.lambda = 0;
    const TrainReport r = train_denoiser(cfg, data);
    REQUIRE(r.epochs.size() == 200);
    CHECK(r.epochs.back().data < 1e-3);
}

TEST_CASE("training is deterministic and the inert hook changes nothing") {
    DenoiseTask task;
    task.bands = 6;
    task.height = 12;
    task.width = 12;
    const DenoiseData data = make_denoise_data(task);
    TrainConfig cfg;
    cfg.M = 4;
    cfg.epochs = 3;
    cfg.lambda = 0;
    const TrainReport a = train_denoiser(cfg, data);
    const TrainReport b = train_denoiser(cfg, data);
    CHECK(report_json(a) == report_json(b));
    for (const auto& e : a.epochs) CHECK(e.reg == 0.0);

    // No hook at all against a zero-weight hook.
    Network plain = make_network(cfg);
    Network hooked = make_network(cfg);
    hooked.attach_last_layer(0.0);
    const FeatureMap x = data.train[0].noisy.to_feature_map();
    const FeatureMap y = plain.forward(x);
    hooked.forward(x);
    const FeatureMap g = l1_grad(y, data.train[0].clean.to_feature_map());
    plain.params().zero_grad();
    hooked.params().zero_grad();
    plain.backward(g);
    hooked.backward(g);
    for (std::size_t i = 0; i < plain.params().size(); ++i)
        CHECK(plain.params()[i].grad == hooked.params()[i].grad);

    cfg.lambda = kDefaultLambda;
    const TrainReport c = train_denoiser(cfg, data);
    for (const auto& e : c.epochs) CHECK(e.reg < 0.0);
}

TEST_CASE("report contents") {
    DenoiseTask task;
    task.bands = 6;
    task.height = 12;
    task.width = 12;
    const DenoiseData data = make_denoise_data(task);
    TrainConfig cfg;
    cfg.M = 4;
    cfg.epochs = 0;
    const TrainReport r = train_denoiser(cfg, data);
    CHECK(r.epochs.empty());
    CHECK(r.final_metrics.mpsnr == r.init_metrics.mpsnr);
    CHECK(r.rank_bound == 12);
    CHECK(r.final_spectrum.values.size() == 12);
    TrainConfig dense = cfg;
    dense.scheme = KernelScheme::make(Variant::Conv3D);
    const TrainReport d = train_denoiser(dense, data);
    CHECK(r.block_set_parameter_count * 3 == d.block_set_parameter_count);
    CHECK(r.parameter_count < d.parameter_count);
}

TEST_CASE("non-finite losses abort with the epoch") {
    DenoiseTask task;
    task.bands = 4;
    task.height = 12;
    task.width = 12;
    DenoiseData data = make_denoise_data(task);
    data.train[0].noisy.data[3] = std::numeric_limits<double>::infinity();
    TrainConfig cfg;
    cfg.M = 2;
    cfg.epochs = 2;
    cfg.lambda = 0;
    try {
        train_denoiser(cfg, data);
        FAIL("expected NonFiniteLoss");
    } catch (const NonFiniteLoss& e) {
        CHECK(e.epoch == 1);
    }
}

TEST_CASE("checkpoint round trip") {
    TrainConfig cfg;
    cfg.M = 3;
    cfg.scheme = KernelScheme::make(Variant::Par1D2D);
    Network net = make_network(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "resset_checkpoint_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir.string(), net);
    Network back = load_checkpoint(dir.string());
    CHECK(back.config().scheme == cfg.scheme);
    REQUIRE(back.params().size() == net.params().size());
    for (std::size_t i = 0; i < net.params().size(); ++i)
        CHECK(back.params()[i].value == net.params()[i].value);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_checkpoint(dir.string()), IoError);
}

}
