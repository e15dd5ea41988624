#include "resset/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "resset/errors.hpp"
#include "resset/diversity_reg.hpp"
#include "resset/linalg.hpp"
#include "resset/network.hpp"

namespace resset {

double relative_gap(double analytic, double numeric, double floor) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / scale;
}

UnfoldedMatrix gap_separated_matrix(std::mt19937_64& rng, int rows, int cols, double min_gap) {
    if (rows < 1 || cols < 1) throw ConfigError("matrix dimensions must be positive");
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        UnfoldedMatrix m(rows, cols);
        for (double& v : m.data) v = normal(rng);
        const std::vector<double> s = singular_values(m);
        bool ok = s.back() >= min_gap;
        for (std::size_t i = 1; ok && i < s.size(); ++i) ok = s[i - 1] - s[i] >= min_gap;
        if (ok) return m;
    }
    throw NumericError("could not draw a gap-separated matrix");
}

GradCheckReport check_reg_gradient(const GradCheckOptions& opts) {
    GradCheckReport rep;
    std::mt19937_64 rng(opts.seed * 7919ULL + 1);
    std::uniform_int_distribution<int> rows_d(2, std::max(2, opts.reg_max_rows));
    for (int t = 0; t < opts.reg_trials; ++t) {
        const int rows = rows_d(rng);
        std::uniform_int_distribution<int> cols_d(rows, std::max(rows, opts.reg_max_cols));
        const int cols = cols_d(rng);
        UnfoldedMatrix m = gap_separated_matrix(rng, rows, cols, opts.reg_min_gap);
        const UnfoldedMatrix g = da_reg_grad(m);
        for (std::size_t i = 0; i < m.data.size(); ++i) {
            const double keep = m.data[i];
            m.data[i] = keep + opts.reg_step;
            const double up = da_reg_value(m);
            m.data[i] = keep - opts.reg_step;
            const double down = da_reg_value(m);
            m.data[i] = keep;
            const double numeric = (up - down) / (2.0 * opts.reg_step);
            const double analytic = opts.wrong_sign ? -g.data[i] : g.data[i];
            rep.reg_max_error =
                std::max(rep.reg_max_error, relative_gap(analytic, numeric, opts.reg_floor));
            ++rep.reg_entries;
        }
    }
    return rep;
}

namespace {

// 0.5 * mean squared error to a fixed target plus lambda * DA-Reg.
double network_objective(Network& net, const FeatureMap& x, const FeatureMap& target) {
    const FeatureMap y = net.forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.data().size(); ++i) {
        const double d = y.data()[i] - target.data()[i];
        s += d * d;
    }
    return 0.5 * s / static_cast<double>(y.data().size()) + net.reg_lambda() * net.last_reg_value();
}

}  // namespace

GradCheckReport check_network_gradient(const GradCheckOptions& opts) {
    GradCheckReport rep;
    NetworkConfig cfg;
    cfg.scheme = opts.scheme;
    cfg.width = opts.M;
    cfg.blocks = opts.blocks;
    Network net(cfg, opts.seed);
    if (opts.lambda > 0.0) net.attach_last_layer(opts.lambda);
    rep.net_parameters = net.parameter_count();

    std::mt19937_64 rng(opts.seed * 104729ULL + 3);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Shape4 shape{1, opts.bands, opts.height, opts.width};
    FeatureMap x(shape), target(shape);
    for (double& v : x.data()) v = unit(rng);
    for (double& v : target.data()) v = unit(rng);

    const FeatureMap y = net.forward(x);
    const std::vector<bool> pattern = net.activation_pattern();
    FeatureMap g(y.shape());
    const double n = static_cast<double>(y.data().size());
    for (std::size_t i = 0; i < g.data().size(); ++i) g.data()[i] = (y.data()[i] - target.data()[i]) / n;
    net.params().zero_grad();
    net.backward(g);

    // Flat index over every scalar parameter.
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t p = 0; p < net.params().size(); ++p)
        for (std::size_t j = 0; j < net.params()[p].value.size(); ++j) slots.emplace_back(p, j);
    std::shuffle(slots.begin(), slots.end(), rng);
    // Perturbations that flip a rectifier are replaced by the next candidate:
    // central differences across a kink do not estimate the derivative.
    const auto wanted = static_cast<std::size_t>(std::max(0, opts.net_samples));
    for (std::size_t s = 0; s < slots.size() && static_cast<std::size_t>(rep.net_samples) < wanted; ++s) {
        auto& param = net.params()[slots[s].first];
        const std::size_t j = slots[s].second;
        const double analytic = opts.wrong_sign ? -param.grad[j] : param.grad[j];
        const double keep = param.value[j];
        param.value[j] = keep + opts.net_step;
        const double up = network_objective(net, x, target);
        const bool up_same = net.activation_pattern() == pattern;
        param.value[j] = keep - opts.net_step;
        const double down = network_objective(net, x, target);
        const bool down_same = net.activation_pattern() == pattern;
        param.value[j] = keep;
        if (!up_same || !down_same) {
            ++rep.net_skipped;
            continue;
        }
        const double numeric = (up - down) / (2.0 * opts.net_step);
        rep.net_max_error =
            std::max(rep.net_max_error, relative_gap(analytic, numeric, opts.net_floor));
        ++rep.net_samples;
    }
    return rep;
}

GradCheckReport run_grad_check(const GradCheckOptions& opts) {
    GradCheckReport r = check_reg_gradient(opts);
    const GradCheckReport n = check_network_gradient(opts);
    r.net_max_error = n.net_max_error;
    r.net_samples = n.net_samples;
    r.net_parameters = n.net_parameters;
    r.net_skipped = n.net_skipped;
    return r;
}

}  // namespace resset
