#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "resset/tensor.hpp"

namespace resset {

// Convolution manners compared in this library.
//   Conv3D     dense k x k x k kernels
//   ReS3_2D    one k x k planar kernel per axis
//   ReS3_1D    L one-dimensional kernels per axis (L in {1, 2})
//   ReS3_1Dx3  three one-dimensional kernels per axis
//   Seq1D      band, height and width 1-D convolutions chained
//   Seq1D2D    spectral 1-D convolution followed by spatial 2-D convolution
//   Par1D2D    spatial 2-D and spectral 1-D convolutions side by side
enum class Variant { Conv3D, ReS3_2D, ReS3_1D, ReS3_1Dx3, Seq1D, Seq1D2D, Par1D2D };

struct KernelScheme {
    Variant variant = Variant::Conv3D;
    int L = 1;  // kernels per axis; meaningful for the ReS3 variants only
    int k = 3;

    // Validates L and k and fills L=3 for ReS3_1Dx3.
    static KernelScheme make(Variant v, int L = 1, int k = 3);

    bool is_res3() const;
    bool is_sequential() const;
    bool is_parallel() const;  // has several concatenated branches
    std::string name() const;
    bool operator==(const KernelScheme&) const = default;
};

// Accepts the names produced by KernelScheme::name(), e.g. "ReS3_1D", "ReS3_1D_L2".
KernelScheme parse_scheme(std::string_view name, int k = 3);

// The five manners of the convolution-manner comparison, in figure order.
std::vector<KernelScheme> comparison_schemes(int k = 3);

struct BranchSpec {
    Extent3 extent;
    int in_channels = 0;
    int out_channels = 0;
};

// Geometry of one convolution set. Parallel topologies concatenate branch
// outputs in order; chained topologies feed each branch into the next.
struct Topology {
    bool chained = false;
    std::vector<BranchSpec> branches;
    int output_channels = 0;  // before compression
    bool needs_compression = false;
};

Topology topology(const KernelScheme& scheme, int M, int C);

// Weights of the convolution set, excluding the 1x1x1 compression layer.
std::size_t param_count(const KernelScheme& scheme, int M, int C);

// out x in weights of the 1x1x1 compression layer; 0 when the scheme has none.
std::size_t compression_param_count(const KernelScheme& scheme, int M);

// Multiply-accumulates of one forward pass of the set (plus compression) on
// a bands x height x width volume.
std::size_t mac_count(const KernelScheme& scheme, int M, int C, int bands, int height, int width,
                      bool include_compression = true);

struct KernelSet {
    KernelScheme scheme;
    int M = 0;
    int C = 0;
    // One array per branch, laid out [out][in][band][height][width].
    std::vector<std::vector<double>> branch_weights;
    // M x output_channels row-major, for parallel topologies.
    std::optional<std::vector<double>> compression;

    Topology layout() const { return topology(scheme, M, C); }
    std::size_t weight_count() const;  // branches plus compression
    // Throws ConfigError when weight arrays disagree with the topology.
    void validate() const;
};

KernelSet zero_kernel_set(const KernelScheme& scheme, int M, int C, bool with_compression = false);

// Standard-normal weights scaled by `scale`.
KernelSet random_kernel_set(const KernelScheme& scheme, int M, int C, std::mt19937_64& rng,
                            double scale = 1.0, bool with_compression = false);

// Number of k^3*C kernel-matrix columns any branch can touch.
int valid_columns(const KernelScheme& scheme, int C);

// Zero-replenished joint kernel matrix, rows x k^3*C with branch rows stacked in
// concatenation order. Sequential schemes throw NotJointlyRepresentable.
UnfoldedMatrix build_kernel_matrix(const KernelSet& ks);

// Applies the convolution set; compresses to M channels when compression is present.
FeatureMap conv_forward(const KernelSet& ks, const FeatureMap& input);

// Pre-compression output of the set, regardless of ks.compression.
FeatureMap conv_set_forward(const KernelSet& ks, const FeatureMap& input);

inline constexpr double kLeakySlope = 0.2;

// Residual block: convolution set -> compression (parallel schemes) -> leaky
// rectifier -> 1x1x1 aggregation (M -> M) -> add block input.
struct ResBlockWeights {
    KernelSet conv;
    std::vector<double> aggregation;  // M x M row-major
    double slope = kLeakySlope;
};

FeatureMap block_forward(const ResBlockWeights& block, const FeatureMap& input);

// block_forward restricted to ReS3 variants; missing compression is a ConfigError.
FeatureMap res3_block_forward(const ResBlockWeights& block, const FeatureMap& input);

// Writes kernelset.txt plus one portable tensor per branch (and compression.rst).
void save_kernel_set(const std::string& directory, const KernelSet& ks);
KernelSet load_kernel_set(const std::string& directory);

}  // namespace resset
