#include "resset/network.hpp"

#include <cmath>
#include <random>

#include "resset/errors.hpp"

namespace resset {

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
    if (cfg_.in_channels < 1 || cfg_.width < 1 || cfg_.blocks < 0)
        throw ConfigError("network needs in_channels >= 1, width >= 1, blocks >= 0");
    topo_ = topology(cfg_.scheme, cfg_.width, cfg_.width);
    register_params();
}

Network::Network(const NetworkConfig& cfg, std::uint64_t seed) : Network(cfg) {
    initialise(seed);
}

Network Network::zeros(const NetworkConfig& cfg) { return Network(cfg); }

void Network::register_params() {
    const int k = cfg_.scheme.k;
    const int M = cfg_.width;
    const auto cube = static_cast<std::size_t>(k) * k * k;
    lift_ = params_.add("lift", cube * cfg_.in_channels * M);
    for (int i = 0; i < cfg_.blocks; ++i) {
        const std::string prefix = "block" + std::to_string(i) + ".";
        BlockParams bp;
        for (std::size_t j = 0; j < topo_.branches.size(); ++j) {
            const auto& b = topo_.branches[j];
            bp.branches.push_back(params_.add(
                prefix + "branch" + std::to_string(j),
                static_cast<std::size_t>(b.in_channels) * b.out_channels * b.extent.taps()));
        }
        if (topo_.needs_compression)
            bp.compression = params_.add(prefix + "compression",
                                         static_cast<std::size_t>(M) * topo_.output_channels);
        bp.aggregation = params_.add(prefix + "aggregation", static_cast<std::size_t>(M) * M);
        blocks_.push_back(std::move(bp));
    }
    project_ = params_.add("project", cube * M * cfg_.in_channels);
}

void Network::initialise(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // std = sqrt(gain / fan_in); gain 2 ahead of a rectifier, 1 otherwise.
    auto fill = [&](std::size_t id, double fan_in, double gain) {
        const double stddev = std::sqrt(gain / fan_in);
        for (double& v : params_[id].value) v = stddev * normal(rng);
    };
    const int k = cfg_.scheme.k;
    const int M = cfg_.width;
    fill(lift_, static_cast<double>(k * k * k) * cfg_.in_channels, 2.0);
    for (const auto& bp : blocks_) {
        const double set_gain = topo_.needs_compression ? 1.0 : 2.0;
        for (std::size_t j = 0; j < bp.branches.size(); ++j) {
            const auto& b = topo_.branches[j];
            fill(bp.branches[j], static_cast<double>(b.in_channels) * b.extent.taps(),
                 topo_.chained && j + 1 < bp.branches.size() ? 1.0 : set_gain);
        }
        if (bp.compression) fill(*bp.compression, topo_.output_channels, 2.0);
        fill(bp.aggregation, M, 1.0);
    }
    // Small projection so the untrained network stays close to the global skip.
    fill(project_, static_cast<double>(k * k * k) * M, cfg_.global_residual ? 1e-4 : 1.0);
}

std::size_t Network::block_set_parameter_count() const {
    return param_count(cfg_.scheme, cfg_.width, cfg_.width);
}

FeatureMap Network::forward(const FeatureMap& x) {
    if (x.shape().channels != cfg_.in_channels)
        throw ShapeError("network expects " + std::to_string(cfg_.in_channels) +
                         " input channels, got " + std::to_string(x.shape().channels));
    tape_.clear();
    feature_node_.reset();
    leaky_inputs_.clear();
    last_reg_value_ = 0.0;

    const int k = cfg_.scheme.k;
    const int M = cfg_.width;
    const Extent3 cube{k, k, k};
    const Extent3 point{};

    const ad::NodeId in = tape_.input(x);
    auto leaky = [&](ad::NodeId z) {
        leaky_inputs_.push_back(z);
        return tape_.leaky_relu(z, cfg_.slope);
    };
    ad::NodeId h = leaky(tape_.conv(in, params_, lift_, M, cube));
    for (const auto& bp : blocks_) {
        ad::NodeId f;
        if (topo_.chained) {
            f = h;
            for (std::size_t j = 0; j < bp.branches.size(); ++j)
                f = tape_.conv(f, params_, bp.branches[j], topo_.branches[j].out_channels,
                               topo_.branches[j].extent);
        } else {
            std::vector<ad::NodeId> parts;
            for (std::size_t j = 0; j < bp.branches.size(); ++j)
                parts.push_back(tape_.conv(h, params_, bp.branches[j],
                                           topo_.branches[j].out_channels,
                                           topo_.branches[j].extent));
            f = parts.size() == 1 ? parts.front() : tape_.concat(parts);
        }
        feature_node_ = f;
        ad::NodeId z = bp.compression ? tape_.conv(f, params_, *bp.compression, M, point) : f;
        z = leaky(z);
        z = tape_.conv(z, params_, bp.aggregation, M, point);
        h = tape_.add(h, z);
    }
    ad::NodeId out = tape_.conv(h, params_, project_, cfg_.in_channels, cube);
    if (cfg_.global_residual) out = tape_.add(in, out);
    output_node_ = out;

    if (reg_lambda_ && *reg_lambda_ != 0.0 && feature_node_) {
        RegResult r = da_reg(feature_matrix(tape_.value(*feature_node_)));
        last_reg_value_ = r.value;
        last_reg_grad_ = std::move(r.gradient);
    }
    return tape_.value(out);
}

const FeatureMap& Network::last_feature() const {
    if (!feature_node_ || tape_.empty())
        throw BackwardWithoutForward("no recorded forward pass with a feature layer");
    return tape_.value(*feature_node_);
}

std::vector<bool> Network::activation_pattern() const {
    if (tape_.empty()) throw BackwardWithoutForward("no recorded forward pass");
    std::vector<bool> out;
    for (ad::NodeId id : leaky_inputs_)
        for (double v : tape_.value(id).data()) out.push_back(v > 0.0);
    return out;
}

void Network::attach_last_layer(double lambda) {
    if (!(lambda >= 0.0)) throw ConfigError("regularisation weight must be >= 0");
    if (cfg_.blocks == 0) throw ConfigError("network has no feature layer to regularise");
    reg_lambda_ = lambda;
}

void Network::backward(const FeatureMap& output_grad, double reg_scale) {
    if (tape_.empty() || !output_node_)
        throw BackwardWithoutForward("backward called before forward");
    tape_.seed_gradient(*output_node_, output_grad);
    if (reg_lambda_ && *reg_lambda_ != 0.0 && feature_node_)
        tape_.seed_gradient(*feature_node_, last_reg_grad_.data, *reg_lambda_ * reg_scale);
    tape_.backward(params_);
    output_node_.reset();
    feature_node_.reset();
}

ResBlockWeights Network::block_weights(int i) const {
    const BlockParams& bp = blocks_.at(static_cast<std::size_t>(i));
    ResBlockWeights w;
    w.conv = KernelSet{cfg_.scheme, cfg_.width, cfg_.width, {}, std::nullopt};
    for (std::size_t id : bp.branches) w.conv.branch_weights.push_back(params_[id].value);
    if (bp.compression) w.conv.compression = params_[*bp.compression].value;
    w.aggregation = params_[bp.aggregation].value;
    w.slope = cfg_.slope;
    return w;
}

KernelSet Network::lift_weights() const {
    return KernelSet{KernelScheme::make(Variant::Conv3D, 1, cfg_.scheme.k), cfg_.width,
                     cfg_.in_channels, {params_[lift_].value}, std::nullopt};
}

KernelSet Network::project_weights() const {
    return KernelSet{KernelScheme::make(Variant::Conv3D, 1, cfg_.scheme.k), cfg_.in_channels,
                     cfg_.width, {params_[project_].value}, std::nullopt};
}

}  // namespace resset
