#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resset/conv_schemes.hpp"
#include "resset/tensor.hpp"

namespace resset {

inline constexpr double kAuditRankTolerance = 1e-6;

// Largest rank the output feature matrix of a scheme can reach.
int rank_upper_bound(const KernelScheme& scheme, int M);

struct RankAudit {
    KernelScheme scheme;
    int M = 0;
    int C = 0;
    int predicted_bound = 0;
    int valid_columns = 0;
    int measured_rank = 0;           // max over seeds
    std::vector<int> ranks_per_seed;
    bool achieved = false;           // measured_rank == min(bound, valid_columns)
};

struct AuditOptions {
    int seeds = 10;
    std::uint64_t base_seed = 0;
    bool zero_weights = false;
    double rel_tol = kAuditRankTolerance;
};

// Kernel-matrix rank under `seeds` independent standard-normal draws.
RankAudit audit_kernel_rank(const KernelScheme& scheme, int M, int C, const AuditOptions& opts);

// Normalised singular spectrum; values[0] == 1, empty for an all-zero input.
struct Spectrum {
    std::vector<double> values;
    std::string source_tag;
};

Spectrum spectrum_of(const UnfoldedMatrix& m, std::string tag = {});

// Spectrum of the channels x (bands*height*width) unfolding.
Spectrum feature_spectrum(const FeatureMap& f, std::string tag = {});

// Share of the normalised spectrum mass at indices >= head; 0 for empty spectra.
double tail_mass(const Spectrum& s, int head);

}  // namespace resset
