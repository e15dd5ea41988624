#include "resset/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "resset/errors.hpp"
#include "resset/format.hpp"
#include "resset/tensor_io.hpp"

namespace resset {

void TrainConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("Adam decay rates must lie in (0, 1)");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (M < 1) throw ConfigError("M must be >= 1");
    if (num_blocks < 0) throw ConfigError("num_blocks must be >= 0");
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& mom,
                 long step, const TrainConfig& cfg) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient size mismatch");
    if (step < 1) throw ConfigError("adam step counter starts at 1");
    if (mom.m.size() != params.size()) {
        mom.m.assign(params.size(), 0.0);
        mom.v.assign(params.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
        mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = mom.m[i] / c1;
        const double vhat = mom.v[i] / c2;
        params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
}

void adam_step(ad::ParamStore& params, AdamState& state, const TrainConfig& cfg) {
    state.moments.resize(params.size());
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i)
        adam_update(params[i].value, params[i].grad, state.moments[i], state.step, cfg);
}

namespace {

void check_same(const FeatureMap& a, const FeatureMap& b) {
    if (!(a.shape() == b.shape())) throw ShapeError("loss inputs differ in shape");
}

}  // namespace

double l1_loss(const FeatureMap& pred, const FeatureMap& target) {
    check_same(pred, target);
    double s = 0.0;
    const auto p = pred.data(), t = target.data();
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - t[i]);
    return s / static_cast<double>(p.size());
}

FeatureMap l1_grad(const FeatureMap& pred, const FeatureMap& target) {
    check_same(pred, target);
    FeatureMap g(pred.shape());
    const auto p = pred.data(), t = target.data();
    auto gd = g.data();
    const double inv = 1.0 / static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        gd[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return g;
}

double loss_denoise(const FeatureMap& pred, const FeatureMap& target, const FeatureMap& feature,
                    double lambda) {
    const double data = l1_loss(pred, target);
    if (lambda == 0.0) return data;
    return data + lambda * da_reg_value(feature_matrix(feature));
}

DenoiseData make_denoise_data(const DenoiseTask& task) {
    if (task.train_pairs < 1) throw ConfigError("need at least one training pair");
    auto make_pair = [&](std::uint64_t index) {
        const std::uint64_t s = task.seed * 1000003ULL + index;
        CubePair p;
        p.clean = synth_cube(2 * s + 1, task.bands, task.height, task.width, task.endmembers);
        NoiseSpec noise = task.noise;
        noise.seed = 2 * s + 2;
        p.noisy = add_noise(p.clean, noise);
        return p;
    };
    DenoiseData data;
    for (int i = 0; i < task.train_pairs; ++i) data.train.push_back(make_pair(i));
    data.heldout = make_pair(static_cast<std::uint64_t>(task.train_pairs) + 1000);
    return data;
}

namespace {

MetricsReport evaluate_network(Network& net, const CubePair& pair) {
    const FeatureMap out = net.forward(pair.noisy.to_feature_map());
    return evaluate(HSCube::from_feature_map(out), pair.clean);
}

}  // namespace

NetworkConfig network_config(const TrainConfig& cfg) {
    NetworkConfig ncfg;
    ncfg.scheme = cfg.scheme;
    ncfg.in_channels = 1;
    ncfg.width = cfg.M;
    ncfg.blocks = cfg.num_blocks;
    return ncfg;
}

Network make_network(const TrainConfig& cfg) {
    cfg.validate();
    return Network(network_config(cfg), cfg.seed);
}

TrainReport train_denoiser(const TrainConfig& cfg, const DenoiseData& data) {
    Network net = make_network(cfg);
    return train_denoiser(cfg, data, net);
}

TrainReport train_denoiser(const TrainConfig& cfg, const DenoiseData& data, Network& net) {
    cfg.validate();
    if (data.train.empty()) throw ConfigError("need at least one training pair");
    const NetworkConfig& ncfg = net.config();
    if (!(ncfg.scheme == cfg.scheme) || ncfg.width != cfg.M || ncfg.blocks != cfg.num_blocks ||
        ncfg.in_channels != 1)
        throw ConfigError("network does not match the training configuration");
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.num_blocks > 0) net.attach_last_layer(cfg.lambda);

    TrainReport report;
    report.scheme = cfg.scheme.name();
    report.parameter_count = net.parameter_count();
    report.block_set_parameter_count = net.block_set_parameter_count();
    report.rank_bound = rank_upper_bound(cfg.scheme, cfg.M);
    report.noisy_metrics = evaluate(data.heldout.noisy, data.heldout.clean);
    report.init_metrics = evaluate_network(net, data.heldout);

    std::vector<FeatureMap> inputs, targets;
    for (const auto& p : data.train) {
        inputs.push_back(p.noisy.to_feature_map());
        targets.push_back(p.clean.to_feature_map());
    }

    std::mt19937_64 order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    AdamState adam;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double data_sum = 0.0, reg_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const double scale = 1.0 / static_cast<double>(stop - start);
            net.params().zero_grad();
            for (std::size_t i = start; i < stop; ++i) {
                const std::size_t s = order[i];
                const FeatureMap pred = net.forward(inputs[s]);
                const double data_loss = l1_loss(pred, targets[s]);
                const double reg_loss = net.reg_lambda() * net.last_reg_value();
                if (!std::isfinite(data_loss) || !std::isfinite(reg_loss))
                    throw NonFiniteLoss(epoch, "non-finite loss at epoch " + std::to_string(epoch));
                data_sum += data_loss;
                reg_sum += reg_loss;
                FeatureMap g = l1_grad(pred, targets[s]);
                for (double& v : g.data()) v *= scale;
                net.backward(g, scale);
            }
            adam_step(net.params(), adam, cfg);
        }
        const double n = static_cast<double>(order.size());
        report.epochs.push_back(EpochLoss{epoch, data_sum / n, reg_sum / n});
    }

    const FeatureMap out = net.forward(data.heldout.noisy.to_feature_map());
    report.final_metrics = evaluate(HSCube::from_feature_map(out), data.heldout.clean);
    if (cfg.num_blocks > 0) {
        report.final_spectrum = feature_spectrum(net.last_feature(), report.scheme);
        report.final_tail_mass = tail_mass(report.final_spectrum, cfg.M);
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void save_checkpoint(const std::string& directory, const Network& net) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const NetworkConfig& c = net.config();
    std::ofstream manifest(fs::path(directory) / "manifest.txt");
    if (!manifest) throw IoError("cannot write checkpoint manifest in " + directory);
    manifest << "scheme = " << c.scheme.name() << "\n"
             << "k = " << c.scheme.k << "\n"
             << "in_channels = " << c.in_channels << "\n"
             << "width = " << c.width << "\n"
             << "blocks = " << c.blocks << "\n"
             << "global_residual = " << (c.global_residual ? 1 : 0) << "\n"
             << "slope = " << format_real(c.slope) << "\n";
    for (const auto& p : net.params()) {
        manifest << "param = " << p.name << " " << p.value.size() << "\n";
        save_tensor((fs::path(directory) / (p.name + ".rst")).string(),
                    RawTensor{{static_cast<std::uint32_t>(p.value.size())}, p.value});
    }
    if (!manifest) throw IoError("failed writing checkpoint manifest in " + directory);
}

Network load_checkpoint(const std::string& directory) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(directory) / "manifest.txt");
    if (!manifest) throw IoError("missing manifest.txt in " + directory);
    NetworkConfig c;
    int k = 3;
    std::string scheme;
    std::vector<std::pair<std::string, std::size_t>> entries;
    std::string line;
    while (std::getline(manifest, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        std::istringstream value(line.substr(eq + 3));
        if (key == "scheme") value >> scheme;
        else if (key == "k") value >> k;
        else if (key == "in_channels") value >> c.in_channels;
        else if (key == "width") value >> c.width;
        else if (key == "blocks") value >> c.blocks;
        else if (key == "global_residual") { int g = 1; value >> g; c.global_residual = g != 0; }
        else if (key == "slope") value >> c.slope;
        else if (key == "param") {
            std::string name;
            std::size_t size = 0;
            value >> name >> size;
            entries.emplace_back(name, size);
        }
        if (value.fail()) throw IoError("malformed checkpoint line: " + line);
    }
    c.scheme = parse_scheme(scheme, k);
    Network net = Network::zeros(c);
    if (entries.size() != net.params().size())
        throw IoError("checkpoint parameter list does not match the network");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& p = net.params()[i];
        if (p.name != entries[i].first || p.value.size() != entries[i].second)
            throw IoError("checkpoint entry " + entries[i].first + " does not match " + p.name);
        RawTensor raw = load_tensor((fs::path(directory) / (p.name + ".rst")).string());
        if (raw.data.size() != p.value.size())
            throw IoError("checkpoint tensor " + p.name + " has the wrong size");
        p.value = std::move(raw.data);
    }
    return net;
}

namespace {

nlohmann::ordered_json metrics_json(const MetricsReport& m) {
    nlohmann::ordered_json j;
    j["mpsnr"] = m.mpsnr;
    j["mssim"] = m.mssim;
    j["sam"] = m.sam;
    return j;
}

}  // namespace

std::string report_json(const TrainReport& r) {
    nlohmann::ordered_json j;
    j["scheme"] = r.scheme;
    j["parameter_count"] = r.parameter_count;
    j["block_set_parameter_count"] = r.block_set_parameter_count;
    j["rank_bound"] = r.rank_bound;
    j["noisy_metrics"] = metrics_json(r.noisy_metrics);
    j["init_metrics"] = metrics_json(r.init_metrics);
    j["final_metrics"] = metrics_json(r.final_metrics);
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : r.epochs) {
        nlohmann::ordered_json row;
        row["epoch"] = e.epoch;
        row["data_loss"] = e.data;
        row["reg_loss"] = e.reg;
        epochs.push_back(row);
    }
    j["epochs"] = epochs;
    j["final_spectrum"] = r.final_spectrum.values;
    j["final_tail_mass"] = r.final_tail_mass;
    return j.dump(2) + "\n";
}

}  // namespace resset
