#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "resset/autodiff.hpp"
#include "resset/hsdata.hpp"
#include "resset/network.hpp"
#include "resset/rank_analysis.hpp"

namespace resset {

inline constexpr double kDefaultLambda = 5e-5;

struct TrainConfig {
    double lambda = kDefaultLambda;
    double learning_rate = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int epochs = 25;
    int batch_size = 4;
    std::uint64_t seed = 0;
    KernelScheme scheme = KernelScheme::make(Variant::ReS3_1D);
    int M = 8;
    int num_blocks = 2;

    // Throws ConfigError on out-of-range values.
    void validate() const;
};

// First and second moments for one flat parameter array.
struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

struct AdamState {
    long step = 0;
    std::vector<AdamMoments> moments;  // one entry per ParamStore slot
};

// Bias-corrected Adam update of a single array; `step` counts from 1.
void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
                 long step, const TrainConfig& cfg);

// Advances state.step and updates every parameter from its accumulated grad.
void adam_step(ad::ParamStore& params, AdamState& state, const TrainConfig& cfg);

// Mean absolute error, with sign(0) := 0 in the subgradient.
double l1_loss(const FeatureMap& pred, const FeatureMap& target);
FeatureMap l1_grad(const FeatureMap& pred, const FeatureMap& target);

// Mean absolute error plus lambda * (-nuclear norm) of the unfolded feature map.
double loss_denoise(const FeatureMap& pred, const FeatureMap& target, const FeatureMap& feature,
                    double lambda);

struct CubePair {
    HSCube noisy;
    HSCube clean;
};

struct DenoiseData {
    std::vector<CubePair> train;
    CubePair heldout;
};

// Synthetic task description: clean cubes of one shape and their corruption.
struct DenoiseTask {
    int bands = 31;
    int height = 32;
    int width = 32;
    int endmembers = 4;
    int train_pairs = 2;
    NoiseSpec noise;
    std::uint64_t seed = 0;
};

DenoiseData make_denoise_data(const DenoiseTask& task);

struct EpochLoss {
    int epoch = 0;
    double data = 0.0;  // mean L1 over the epoch's samples
    double reg = 0.0;   // mean lambda * L_p over the epoch's samples
};

struct TrainReport {
    std::string scheme;
    std::size_t parameter_count = 0;
    std::size_t block_set_parameter_count = 0;
    int rank_bound = 0;
    std::vector<EpochLoss> epochs;
    MetricsReport noisy_metrics;  // noisy held-out input against clean
    MetricsReport init_metrics;   // untrained network
    MetricsReport final_metrics;
    Spectrum final_spectrum;      // last-block feature of the held-out pass
    double final_tail_mass = 0.0; // head = M
    double wall_clock_seconds = 0.0;
};

// Single-channel denoiser of the configured scheme, width and depth.
NetworkConfig network_config(const TrainConfig& cfg);
Network make_network(const TrainConfig& cfg);

// Minibatch Adam on the L1 + lambda * DA-Reg objective. Throws NonFiniteLoss
// carrying the offending epoch.
TrainReport train_denoiser(const TrainConfig& cfg, const DenoiseData& data);
// Trains `net` in place; its configuration must match network_config(cfg).
TrainReport train_denoiser(const TrainConfig& cfg, const DenoiseData& data, Network& net);

// manifest.txt plus one portable tensor per parameter.
void save_checkpoint(const std::string& directory, const Network& net);
Network load_checkpoint(const std::string& directory);

// Everything except wall-clock time, so identical runs produce identical text.
std::string report_json(const TrainReport& report);

}  // namespace resset
