#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "resset/autodiff.hpp"
#include "resset/conv_schemes.hpp"
#include "resset/diversity_reg.hpp"

namespace resset {

struct NetworkConfig {
    KernelScheme scheme;
    int in_channels = 1;
    int width = 8;  // M
    int blocks = 2;
    bool global_residual = true;
    double slope = kLeakySlope;
};

// Flat residual denoiser: k^3 lift (C -> M) and leaky rectifier, `blocks`
// residual blocks of the configured scheme, k^3 projection (M -> C) and an
// optional global skip from the input.
class Network {
public:
    // Kaiming-style normal initialisation from `seed`.
    Network(const NetworkConfig& cfg, std::uint64_t seed);
    static Network zeros(const NetworkConfig& cfg);

    const NetworkConfig& config() const { return cfg_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }

    std::size_t parameter_count() const { return params_.scalar_count(); }
    // Convolution-set weights of one block, excluding compression and aggregation.
    std::size_t block_set_parameter_count() const;

    // Runs the network and records the tape for backward().
    FeatureMap forward(const FeatureMap& x);

    // Pre-compression output of the last block from the latest forward().
    const FeatureMap& last_feature() const;

    // Sign of every leaky-rectifier input in the latest forward(), true for > 0.
    std::vector<bool> activation_pattern() const;

    // Adds lambda * DA-Reg of the last feature matrix to the training loss.
    // With lambda == 0 the hook is inert. Throws ConfigError when the network has no block.
    void attach_last_layer(double lambda);
    double reg_lambda() const { return reg_lambda_.value_or(0.0); }
    // -sum(sigma) of the last feature from the latest forward(); 0 when no active hook.
    double last_reg_value() const { return last_reg_value_; }

    // Back-propagates `output_grad` (and `reg_scale` * lambda * DA-Reg gradient when a
    // hook is active), accumulating into params().grad. Clears the tape.
    void backward(const FeatureMap& output_grad, double reg_scale = 1.0);

    ResBlockWeights block_weights(int i) const;
    KernelSet lift_weights() const;     // Conv3D, in_channels -> M
    KernelSet project_weights() const;  // Conv3D, M -> in_channels

private:
    explicit Network(const NetworkConfig& cfg);
    void register_params();
    void initialise(std::uint64_t seed);

    struct BlockParams {
        std::vector<std::size_t> branches;
        std::optional<std::size_t> compression;
        std::size_t aggregation = 0;
    };

    NetworkConfig cfg_;
    Topology topo_;
    ad::ParamStore params_;
    std::size_t lift_ = 0;
    std::size_t project_ = 0;
    std::vector<BlockParams> blocks_;

    ad::Tape tape_;
    std::optional<ad::NodeId> output_node_;
    std::optional<ad::NodeId> feature_node_;
    std::vector<ad::NodeId> leaky_inputs_;
    std::optional<double> reg_lambda_;
    double last_reg_value_ = 0.0;
    UnfoldedMatrix last_reg_grad_;
};

}  // namespace resset
