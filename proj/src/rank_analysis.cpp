#include "resset/rank_analysis.hpp"

#include <algorithm>
#include <random>

#include "resset/errors.hpp"
#include "resset/linalg.hpp"

namespace resset {

int rank_upper_bound(const KernelScheme& scheme, int M) {
    switch (scheme.variant) {
        case Variant::Conv3D:
        case Variant::Seq1D:
        case Variant::Seq1D2D:
            return M;
        case Variant::ReS3_2D:
            return 3 * M;
        case Variant::ReS3_1D:
        case Variant::ReS3_1Dx3:
            return 3 * scheme.L * M;
        case Variant::Par1D2D:
            return 2 * M;
    }
    return M;
}

RankAudit audit_kernel_rank(const KernelScheme& scheme, int M, int C, const AuditOptions& opts) {
    if (opts.seeds < 1) throw ConfigError("rank audit needs at least one seed");
    RankAudit audit;
    audit.scheme = scheme;
    audit.M = M;
    audit.C = C;
    audit.predicted_bound = rank_upper_bound(scheme, M);
    audit.valid_columns = valid_columns(scheme, C);
    for (int s = 0; s < opts.seeds; ++s) {
        // One independent stream per seed keeps audits order-independent.
        std::mt19937_64 rng(opts.base_seed * 1000003ULL + static_cast<std::uint64_t>(s));
        const KernelSet ks = opts.zero_weights ? zero_kernel_set(scheme, M, C)
                                               : random_kernel_set(scheme, M, C, rng);
        const int r = numeric_rank(build_kernel_matrix(ks), opts.rel_tol);
        audit.ranks_per_seed.push_back(r);
        audit.measured_rank = std::max(audit.measured_rank, r);
    }
    audit.achieved =
        audit.measured_rank == std::min(audit.predicted_bound, audit.valid_columns);
    return audit;
}

Spectrum spectrum_of(const UnfoldedMatrix& m, std::string tag) {
    Spectrum s;
    s.source_tag = std::move(tag);
    std::vector<double> sv = singular_values(m);
    if (sv.empty() || sv.front() <= 0.0) return s;
    const double top = sv.front();
    for (double& v : sv) v = std::clamp(v / top, 0.0, 1.0);
    s.values = std::move(sv);
    s.values.front() = 1.0;
    return s;
}

Spectrum feature_spectrum(const FeatureMap& f, std::string tag) {
    return spectrum_of(feature_matrix(f), std::move(tag));
}

double tail_mass(const Spectrum& s, int head) {
    if (head < 0) throw ConfigError("tail_mass head must be >= 0");
    double total = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        total += s.values[i];
        if (static_cast<int>(i) >= head) tail += s.values[i];
    }
    return total > 0.0 ? tail / total : 0.0;
}

}  // namespace resset
