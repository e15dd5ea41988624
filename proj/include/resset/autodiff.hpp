#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "resset/tensor.hpp"

namespace resset::ad {

struct Param {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
};

// Owns every trainable array; each is registered exactly once.
class ParamStore {
public:
    std::size_t add(std::string name, std::size_t size);

    Param& operator[](std::size_t i) { return params_[i]; }
    const Param& operator[](std::size_t i) const { return params_[i]; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param> params_;
};

using NodeId = std::size_t;

// Reverse-mode tape over feature maps. Forward ops append nodes; backward()
// sweeps them in reverse, accumulates parameter gradients and clears the tape.
class Tape {
public:
    NodeId input(FeatureMap x);
    // Convolution with params[param] as [out][in][band][height][width] weights.
    NodeId conv(NodeId x, const ParamStore& params, std::size_t param, int out_channels,
                Extent3 ext);
    NodeId leaky_relu(NodeId x, double slope);
    NodeId add(NodeId a, NodeId b);
    NodeId concat(const std::vector<NodeId>& parts);

    const FeatureMap& value(NodeId id) const;
    bool empty() const { return nodes_.empty(); }
    std::size_t size() const { return nodes_.size(); }

    // Adds an upstream gradient at a node; may be called several times.
    void seed_gradient(NodeId id, const FeatureMap& grad);
    void seed_gradient(NodeId id, std::span<const double> grad, double scale);

    // Throws BackwardWithoutForward on an empty tape.
    void backward(ParamStore& params);
    void clear() { nodes_.clear(); }

private:
    struct Node {
        FeatureMap value;
        FeatureMap grad;  // allocated on first use
        std::function<void(Tape&, ParamStore&, NodeId)> back;
    };

    NodeId push(FeatureMap value, std::function<void(Tape&, ParamStore&, NodeId)> back);
    FeatureMap& grad_of(NodeId id);

    std::vector<Node> nodes_;
};

}  // namespace resset::ad
