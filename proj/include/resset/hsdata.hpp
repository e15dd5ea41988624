#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resset/tensor.hpp"

namespace resset {

// Bands x height x width cube, row-major. Clean cubes live in [0, 1].
struct HSCube {
    int bands = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    HSCube() = default;
    HSCube(int bands, int height, int width);

    double& at(int b, int h, int w) { return data[(static_cast<std::size_t>(b) * height + h) * width + w]; }
    double at(int b, int h, int w) const { return data[(static_cast<std::size_t>(b) * height + h) * width + w]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const HSCube& o) const {
        return bands == o.bands && height == o.height && width == o.width;
    }

    FeatureMap to_feature_map() const;  // single channel
    static HSCube from_feature_map(const FeatureMap& f);  // requires one channel
};

// Linear mixture of smooth spectral signatures with smooth abundance maps,
// rescaled to [0, 1]. Deterministic per seed.
HSCube synth_cube(std::uint64_t seed, int bands, int height, int width, int num_endmembers);

enum class NoiseKind { GaussianIID, GaussianBlind, NonIID, Stripe, Deadline, Impulse, Mixture };

std::string noise_kind_name(NoiseKind k);
NoiseKind parse_noise_kind(const std::string& name);

// Noise levels are on the 0-255 scale and divided by 255 when applied.
// Stripe, Deadline and Impulse add non-i.i.d. Gaussian noise first and then
// corrupt `band_fraction` of the bands.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::GaussianIID;
    double sigma = 50.0;      // GaussianIID
    double sigma_min = 10.0;  // NonIID and complex kinds; Blind uses blind_min/max
    double sigma_max = 70.0;
    double blind_min = 30.0;
    double blind_max = 70.0;
    double fraction = 0.1;    // share of columns (stripe, deadline) or voxels (impulse)
    double magnitude = 0.25;  // stripe offsets drawn from U(-magnitude, magnitude)
    double band_fraction = 1.0 / 3.0;
    std::uint64_t seed = 0;
};

// Returns a corrupted copy; the input cube is left untouched. Noisy cubes are not clipped.
HSCube add_noise(const HSCube& cube, const NoiseSpec& spec);

inline constexpr double kPsnrCap = 100.0;

struct MetricsReport {
    double mpsnr = 0.0;  // dB
    double mssim = 0.0;
    double sam = 0.0;    // radians
};

double mpsnr(const HSCube& pred, const HSCube& ref);
double mssim(const HSCube& pred, const HSCube& ref);
double sam(const HSCube& pred, const HSCube& ref);
MetricsReport evaluate(const HSCube& pred, const HSCube& ref);

void save_cube(const std::string& path, const HSCube& cube);
HSCube load_cube(const std::string& path);

}  // namespace resset
