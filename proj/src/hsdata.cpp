#include "resset/hsdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "resset/errors.hpp"
#include "resset/tensor_io.hpp"

namespace resset {

HSCube::HSCube(int b, int h, int w) : bands(b), height(h), width(w) {
    if (b < 1 || h < 1 || w < 1) throw ShapeError("cube extents must be >= 1");
    data.assign(static_cast<std::size_t>(b) * h * w, 0.0);
}

FeatureMap HSCube::to_feature_map() const {
    return FeatureMap(Shape4{1, bands, height, width}, data);
}

HSCube HSCube::from_feature_map(const FeatureMap& f) {
    const Shape4& s = f.shape();
    if (s.channels != 1) throw ShapeError("cube conversion needs a single-channel feature map");
    HSCube c(s.bands, s.height, s.width);
    c.data = f.values();
    return c;
}

HSCube synth_cube(std::uint64_t seed, int bands, int height, int width, int num_endmembers) {
    if (num_endmembers < 1) throw ConfigError("synth_cube needs at least one endmember");
    HSCube cube(bands, height, width);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    // Spectral signatures: a positive baseline plus three Gaussian bumps.
    std::vector<std::vector<double>> signatures(num_endmembers, std::vector<double>(bands));
    for (auto& sig : signatures) {
        const double base = 0.2 + 0.3 * unit(rng);
        double amp[3], mu[3], wd[3];
        for (int j = 0; j < 3; ++j) {
            amp[j] = 0.2 + 0.8 * unit(rng);
            mu[j] = unit(rng);
            wd[j] = 0.08 + 0.25 * unit(rng);
        }
        for (int b = 0; b < bands; ++b) {
            const double t = bands > 1 ? static_cast<double>(b) / (bands - 1) : 0.5;
            double v = base;
            for (int j = 0; j < 3; ++j)
                v += amp[j] * std::exp(-(t - mu[j]) * (t - mu[j]) / (2.0 * wd[j] * wd[j]));
            sig[b] = v;
        }
    }

    // Abundance logits: low-frequency cosine fields, softmax across endmembers.
    constexpr int kModes = 3;
    std::vector<std::vector<double>> logits(num_endmembers,
                                            std::vector<double>(static_cast<std::size_t>(height) * width));
    for (auto& field : logits) {
        double coef[kModes][kModes], phase_h[kModes][kModes], phase_w[kModes][kModes];
        for (int p = 0; p < kModes; ++p)
            for (int q = 0; q < kModes; ++q) {
                coef[p][q] = 1.5 * normal(rng) / (1.0 + p + q);
                phase_h[p][q] = 2.0 * std::numbers::pi * unit(rng);
                phase_w[p][q] = 2.0 * std::numbers::pi * unit(rng);
            }
        for (int h = 0; h < height; ++h)
            for (int w = 0; w < width; ++w) {
                double v = 0.0;
                for (int p = 0; p < kModes; ++p)
                    for (int q = 0; q < kModes; ++q)
                        v += coef[p][q] *
                             std::cos(std::numbers::pi * (p + 1) * h / height + phase_h[p][q]) *
                             std::cos(std::numbers::pi * (q + 1) * w / width + phase_w[p][q]);
                field[static_cast<std::size_t>(h) * width + w] = v;
            }
    }

    for (int h = 0; h < height; ++h)
        for (int w = 0; w < width; ++w) {
            const std::size_t px = static_cast<std::size_t>(h) * width + w;
            double top = -1e300;
            for (const auto& f : logits) top = std::max(top, f[px]);
            std::vector<double> ab(num_endmembers);
            double z = 0.0;
            for (int e = 0; e < num_endmembers; ++e) z += ab[e] = std::exp(logits[e][px] - top);
            for (int b = 0; b < bands; ++b) {
                double v = 0.0;
                for (int e = 0; e < num_endmembers; ++e) v += ab[e] / z * signatures[e][b];
                cube.at(b, h, w) = v;
            }
        }

    const auto [lo, hi] = std::minmax_element(cube.data.begin(), cube.data.end());
    const double min = *lo, range = *hi - *lo;
    for (double& v : cube.data) v = range > 0.0 ? (v - min) / range : 0.5;
    return cube;
}

std::string noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::GaussianIID: return "gaussian";
        case NoiseKind::GaussianBlind: return "blind";
        case NoiseKind::NonIID: return "noniid";
        case NoiseKind::Stripe: return "stripe";
        case NoiseKind::Deadline: return "deadline";
        case NoiseKind::Impulse: return "impulse";
        case NoiseKind::Mixture: return "mixture";
    }
    return "?";
}

NoiseKind parse_noise_kind(const std::string& name) {
    for (NoiseKind k : {NoiseKind::GaussianIID, NoiseKind::GaussianBlind, NoiseKind::NonIID,
                        NoiseKind::Stripe, NoiseKind::Deadline, NoiseKind::Impulse,
                        NoiseKind::Mixture})
        if (noise_kind_name(k) == name) return k;
    throw ConfigError("unknown noise kind '" + name + "'");
}

namespace {

void check_fraction(double f, const char* what) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}

void add_gaussian_band(HSCube& c, int b, double sigma255, std::mt19937_64& rng) {
    if (sigma255 <= 0.0) return;
    std::normal_distribution<double> n(0.0, sigma255 / 255.0);
    for (int h = 0; h < c.height; ++h)
        for (int w = 0; w < c.width; ++w) c.at(b, h, w) += n(rng);
}

void add_non_iid(HSCube& c, const NoiseSpec& s, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> level(s.sigma_min, s.sigma_max);
    for (int b = 0; b < c.bands; ++b) add_gaussian_band(c, b, level(rng), rng);
}

std::vector<int> pick(int n, int count, std::mt19937_64& rng) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::clamp(count, 0, n));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<int> affected_bands(const HSCube& c, const NoiseSpec& s, std::mt19937_64& rng) {
    int count = static_cast<int>(std::floor(s.band_fraction * c.bands));
    if (s.band_fraction > 0.0) count = std::max(count, 1);
    return pick(c.bands, count, rng);
}

void stripe_band(HSCube& c, int b, const NoiseSpec& s, std::mt19937_64& rng) {
    const int n = static_cast<int>(std::floor(s.fraction * c.width));
    std::uniform_real_distribution<double> offset(-s.magnitude, s.magnitude);
    for (int w : pick(c.width, n, rng)) {
        const double o = offset(rng);
        for (int h = 0; h < c.height; ++h) c.at(b, h, w) += o;
    }
}

void deadline_band(HSCube& c, int b, const NoiseSpec& s, std::mt19937_64& rng) {
    const int n = static_cast<int>(std::floor(s.fraction * c.width));
    for (int w : pick(c.width, n, rng))
        for (int h = 0; h < c.height; ++h) c.at(b, h, w) = 0.0;
}

void impulse_band(HSCube& c, int b, const NoiseSpec& s, std::mt19937_64& rng) {
    const int px = c.height * c.width;
    const int n = static_cast<int>(std::floor(s.fraction * px));
    std::bernoulli_distribution salt(0.5);
    for (int p : pick(px, n, rng)) c.at(b, p / c.width, p % c.width) = salt(rng) ? 1.0 : 0.0;
}

}  // namespace

HSCube add_noise(const HSCube& cube, const NoiseSpec& s) {
    check_fraction(s.fraction, "noise fraction");
    check_fraction(s.band_fraction, "band fraction");
    if (s.sigma < 0.0 || s.sigma_min < 0.0 || s.sigma_max < s.sigma_min || s.blind_min < 0.0 ||
        s.blind_max < s.blind_min)
        throw ConfigError("invalid noise levels");
    HSCube out = cube;
    std::mt19937_64 rng(s.seed);
    switch (s.kind) {
        case NoiseKind::GaussianIID:
            for (int b = 0; b < out.bands; ++b) add_gaussian_band(out, b, s.sigma, rng);
            break;
        case NoiseKind::GaussianBlind: {
            const double sigma = std::uniform_real_distribution<double>(s.blind_min, s.blind_max)(rng);
            for (int b = 0; b < out.bands; ++b) add_gaussian_band(out, b, sigma, rng);
            break;
        }
        case NoiseKind::NonIID:
            add_non_iid(out, s, rng);
            break;
        case NoiseKind::Stripe:
            add_non_iid(out, s, rng);
            for (int b : affected_bands(out, s, rng)) stripe_band(out, b, s, rng);
            break;
        case NoiseKind::Deadline:
            add_non_iid(out, s, rng);
            for (int b : affected_bands(out, s, rng)) deadline_band(out, b, s, rng);
            break;
        case NoiseKind::Impulse:
            add_non_iid(out, s, rng);
            for (int b : affected_bands(out, s, rng)) impulse_band(out, b, s, rng);
            break;
        case NoiseKind::Mixture: {
            add_non_iid(out, s, rng);
            std::uniform_int_distribution<int> choice(0, 3);
            for (int b = 0; b < out.bands; ++b) {
                switch (choice(rng)) {
                    case 1: stripe_band(out, b, s, rng); break;
                    case 2: deadline_band(out, b, s, rng); break;
                    case 3: impulse_band(out, b, s, rng); break;
                    default: break;
                }
            }
            break;
        }
    }
    return out;
}

namespace {

void check_same(const HSCube& a, const HSCube& b) {
    if (!a.same_shape(b)) throw ShapeError("metric inputs differ in shape");
}

}  // namespace

double mpsnr(const HSCube& pred, const HSCube& ref) {
    check_same(pred, ref);
    const std::size_t px = static_cast<std::size_t>(ref.height) * ref.width;
    double total = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
        double se = 0.0;
        for (std::size_t i = 0; i < px; ++i) {
            const double d = pred.data[b * px + i] - ref.data[b * px + i];
            se += d * d;
        }
        const double mse = se / static_cast<double>(px);
        total += mse < 1e-10 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
    }
    return total / ref.bands;
}

double mssim(const HSCube& pred, const HSCube& ref) {
    check_same(pred, ref);
    constexpr int kWin = 11;
    constexpr double kSigma = 1.5;
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    if (ref.height < kWin || ref.width < kWin)
        throw WindowTooLarge("SSIM needs height and width >= 11");

    double g[kWin];
    double gs = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        gs += g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    }
    for (double& v : g) v /= gs;

    const int oh = ref.height - kWin + 1, ow = ref.width - kWin + 1;
    double total = 0.0;
    for (int b = 0; b < ref.bands; ++b) {
        double band = 0.0;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double wgt = g[i] * g[j];
                        const double p = pred.at(b, y + i, x + j), r = ref.at(b, y + i, x + j);
                        mx += wgt * p;
                        my += wgt * r;
                        sxx += wgt * p * p;
                        syy += wgt * r * r;
                        sxy += wgt * p * r;
                    }
                const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
                band += ((2 * mx * my + c1) * (2 * cxy + c2)) /
                        ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        total += band / (static_cast<double>(oh) * ow);
    }
    return total / ref.bands;
}

double sam(const HSCube& pred, const HSCube& ref) {
    check_same(pred, ref);
    double total = 0.0;
    for (int h = 0; h < ref.height; ++h)
        for (int w = 0; w < ref.width; ++w) {
            double np = 0, nr = 0;
            for (int b = 0; b < ref.bands; ++b) {
                np += pred.at(b, h, w) * pred.at(b, h, w);
                nr += ref.at(b, h, w) * ref.at(b, h, w);
            }
            if (np == 0.0 && nr == 0.0) continue;
            if (np == 0.0 || nr == 0.0) {
                total += std::numbers::pi / 2.0;
                continue;
            }
            // 2*atan2(|u - v|, |u + v|) on unit vectors; exact zero for equal spectra
            // and better conditioned than acos near 0.
            np = std::sqrt(np);
            nr = std::sqrt(nr);
            double diff = 0, sum = 0;
            for (int b = 0; b < ref.bands; ++b) {
                const double u = pred.at(b, h, w) / np, v = ref.at(b, h, w) / nr;
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            total += 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
        }
    return total / (static_cast<double>(ref.height) * ref.width);
}

MetricsReport evaluate(const HSCube& pred, const HSCube& ref) {
    return MetricsReport{mpsnr(pred, ref), mssim(pred, ref), sam(pred, ref)};
}

void save_cube(const std::string& path, const HSCube& cube) {
    save_tensor(path, RawTensor{{static_cast<std::uint32_t>(cube.bands),
                                 static_cast<std::uint32_t>(cube.height),
                                 static_cast<std::uint32_t>(cube.width)},
                                cube.data});
}

HSCube load_cube(const std::string& path) {
    const RawTensor t = load_tensor(path);
    if (t.extents.size() != 3) throw ShapeError(path + " is not a rank-3 cube");
    HSCube c(static_cast<int>(t.extents[0]), static_cast<int>(t.extents[1]),
             static_cast<int>(t.extents[2]));
    c.data = t.data;
    return c;
}

}  // namespace resset
