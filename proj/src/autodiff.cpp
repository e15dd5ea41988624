#include "resset/autodiff.hpp"

#include <algorithm>

#include "resset/conv_kernels.hpp"
#include "resset/errors.hpp"

namespace resset::ad {

std::size_t ParamStore::add(std::string name, std::size_t size) {
    for (const auto& p : params_)
        if (p.name == name) throw ConfigError("parameter '" + name + "' registered twice");
    params_.push_back(Param{std::move(name), std::vector<double>(size, 0.0),
                            std::vector<double>(size, 0.0)});
    return params_.size() - 1;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

NodeId Tape::push(FeatureMap value, std::function<void(Tape&, ParamStore&, NodeId)> back) {
    nodes_.push_back(Node{std::move(value), FeatureMap{}, std::move(back)});
    return nodes_.size() - 1;
}

const FeatureMap& Tape::value(NodeId id) const { return nodes_.at(id).value; }

FeatureMap& Tape::grad_of(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = FeatureMap(n.value.shape());
    return n.grad;
}

void Tape::seed_gradient(NodeId id, const FeatureMap& grad) {
    if (!(grad.shape() == nodes_.at(id).value.shape()))
        throw ShapeError("seed gradient shape differs from node value");
    seed_gradient(id, grad.data(), 1.0);
}

void Tape::seed_gradient(NodeId id, std::span<const double> grad, double scale) {
    auto g = grad_of(id).data();
    if (grad.size() != g.size()) throw ShapeError("seed gradient size differs from node value");
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * grad[i];
}

NodeId Tape::input(FeatureMap x) { return push(std::move(x), nullptr); }

NodeId Tape::conv(NodeId x, const ParamStore& params, std::size_t param, int out_channels,
                  Extent3 ext) {
    FeatureMap y = kernels::conv_forward(value(x), params[param].value, out_channels, ext);
    return push(std::move(y), [x, param, ext](Tape& t, ParamStore& ps, NodeId self) {
        const FeatureMap& g = t.nodes_[self].grad;
        Param& p = ps[param];
        kernels::conv_backward_weights(g, t.nodes_[x].value, ext, p.grad);
        if (t.nodes_[x].back) kernels::conv_backward_input(g, p.value, ext, t.grad_of(x));
    });
}

NodeId Tape::leaky_relu(NodeId x, double slope) {
    FeatureMap y = value(x);
    for (double& v : y.data()) v = v >= 0.0 ? v : slope * v;
    return push(std::move(y), [x, slope](Tape& t, ParamStore&, NodeId self) {
        const auto g = t.nodes_[self].grad.data();
        const auto in = t.nodes_[x].value.data();
        auto gx = t.grad_of(x).data();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += in[i] >= 0.0 ? g[i] : slope * g[i];
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    if (!(value(a).shape() == value(b).shape())) throw ShapeError("add: shapes differ");
    FeatureMap y = value(a);
    auto yd = y.data();
    const auto bd = value(b).data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += bd[i];
    return push(std::move(y), [a, b](Tape& t, ParamStore&, NodeId self) {
        for (NodeId src : {a, b}) {
            auto gs = t.grad_of(src).data();
            const auto g = t.nodes_[self].grad.data();
            for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
        }
    });
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
    std::vector<FeatureMap> values;
    values.reserve(parts.size());
    for (NodeId p : parts) values.push_back(value(p));
    FeatureMap y = concat_channels(values);
    return push(std::move(y), [parts](Tape& t, ParamStore&, NodeId self) {
        const auto g = t.nodes_[self].grad.data();
        std::size_t offset = 0;
        for (NodeId p : parts) {
            auto gp = t.grad_of(p).data();
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
            offset += gp.size();
        }
    });
}

void Tape::backward(ParamStore& params) {
    if (nodes_.empty()) throw BackwardWithoutForward("backward called with an empty tape");
    for (NodeId id = nodes_.size(); id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.back || n.grad.size() == 0) continue;
        n.back(*this, params, id);
    }
    nodes_.clear();
}

}  // namespace resset::ad
