#include "resset/conv_schemes.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "resset/conv_kernels.hpp"
#include "resset/errors.hpp"
#include "resset/tensor_io.hpp"

namespace resset {

KernelScheme KernelScheme::make(Variant v, int L, int k) {
    if (k < 1 || k % 2 == 0) throw InvalidKernel("kernel extent k must be odd and >= 1");
    KernelScheme s{v, 1, k};
    switch (v) {
        case Variant::ReS3_1D:
            if (L != 1 && L != 2) throw ConfigError("ReS3_1D requires L in {1, 2}");
            s.L = L;
            break;
        case Variant::ReS3_1Dx3:
            s.L = 3;
            break;
        default:
            s.L = 1;
            break;
    }
    return s;
}

bool KernelScheme::is_res3() const {
    return variant == Variant::ReS3_2D || variant == Variant::ReS3_1D ||
           variant == Variant::ReS3_1Dx3;
}

bool KernelScheme::is_sequential() const {
    return variant == Variant::Seq1D || variant == Variant::Seq1D2D;
}

bool KernelScheme::is_parallel() const { return is_res3() || variant == Variant::Par1D2D; }

std::string KernelScheme::name() const {
    switch (variant) {
        case Variant::Conv3D: return "Conv3D";
        case Variant::ReS3_2D: return "ReS3_2D";
        case Variant::ReS3_1D: return L == 1 ? "ReS3_1D" : "ReS3_1D_L" + std::to_string(L);
        case Variant::ReS3_1Dx3: return "ReS3_1Dx3";
        case Variant::Seq1D: return "Seq1D";
        case Variant::Seq1D2D: return "Seq1D2D";
        case Variant::Par1D2D: return "Par1D2D";
    }
    return "?";
}

KernelScheme parse_scheme(std::string_view name, int k) {
    static const std::map<std::string, std::pair<Variant, int>, std::less<>> table{
        {"Conv3D", {Variant::Conv3D, 1}},     {"ReS3_2D", {Variant::ReS3_2D, 1}},
        {"ReS3_1D", {Variant::ReS3_1D, 1}},   {"ReS3_1D_L1", {Variant::ReS3_1D, 1}},
        {"ReS3_1D_L2", {Variant::ReS3_1D, 2}}, {"ReS3_1Dx3", {Variant::ReS3_1Dx3, 3}},
        {"Seq1D", {Variant::Seq1D, 1}},       {"Seq1D2D", {Variant::Seq1D2D, 1}},
        {"Par1D2D", {Variant::Par1D2D, 1}},
    };
    const auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown scheme '" + std::string(name) + "'");
    return KernelScheme::make(it->second.first, it->second.second, k);
}

std::vector<KernelScheme> comparison_schemes(int k) {
    return {KernelScheme::make(Variant::Conv3D, 1, k), KernelScheme::make(Variant::Seq1D2D, 1, k),
            KernelScheme::make(Variant::Seq1D, 1, k), KernelScheme::make(Variant::Par1D2D, 1, k),
            KernelScheme::make(Variant::ReS3_1D, 1, k)};
}

namespace {

Extent3 line(int axis, int k) {
    Extent3 e;
    if (axis == 0) e.bands = k;
    if (axis == 1) e.height = k;
    if (axis == 2) e.width = k;
    return e;
}

// Planar kernel collapsed along `axis`.
Extent3 plane(int axis, int k) {
    Extent3 e{k, k, k};
    if (axis == 0) e.bands = 1;
    if (axis == 1) e.height = 1;
    if (axis == 2) e.width = 1;
    return e;
}

}  // namespace

Topology topology(const KernelScheme& s, int M, int C) {
    if (M < 1 || C < 1) throw ConfigError("M and C must be >= 1");
    const int k = s.k;
    Topology t;
    switch (s.variant) {
        case Variant::Conv3D:
            t.branches = {{Extent3{k, k, k}, C, M}};
            break;
        case Variant::ReS3_2D:
            for (int a = 0; a < 3; ++a) t.branches.push_back({plane(a, k), C, M});
            break;
        case Variant::ReS3_1D:
        case Variant::ReS3_1Dx3:
            for (int a = 0; a < 3; ++a) t.branches.push_back({line(a, k), C, s.L * M});
            break;
        case Variant::Seq1D:
            t.chained = true;
            t.branches = {{line(0, k), C, M}, {line(1, k), M, M}, {line(2, k), M, M}};
            break;
        case Variant::Seq1D2D:
            t.chained = true;
            t.branches = {{line(0, k), C, M}, {plane(0, k), M, M}};
            break;
        case Variant::Par1D2D:
            t.branches = {{plane(0, k), C, M}, {line(0, k), C, M}};
            break;
    }
    if (t.chained) {
        t.output_channels = t.branches.back().out_channels;
    } else {
        for (const auto& b : t.branches) t.output_channels += b.out_channels;
    }
    t.needs_compression = t.branches.size() > 1 && !t.chained;
    return t;
}

std::size_t param_count(const KernelScheme& scheme, int M, int C) {
    std::size_t n = 0;
    for (const auto& b : topology(scheme, M, C).branches)
        n += static_cast<std::size_t>(b.in_channels) * b.out_channels * b.extent.taps();
    return n;
}

std::size_t compression_param_count(const KernelScheme& scheme, int M) {
    const Topology t = topology(scheme, M, M);
    return t.needs_compression ? static_cast<std::size_t>(M) * t.output_channels : 0;
}

std::size_t mac_count(const KernelScheme& scheme, int M, int C, int bands, int height, int width,
                      bool include_compression) {
    const std::size_t voxels = static_cast<std::size_t>(bands) * height * width;
    const Topology t = topology(scheme, M, C);
    std::size_t per_voxel = 0;
    for (const auto& b : t.branches)
        per_voxel += static_cast<std::size_t>(b.in_channels) * b.out_channels * b.extent.taps();
    if (include_compression && t.needs_compression)
        per_voxel += static_cast<std::size_t>(M) * t.output_channels;
    return per_voxel * voxels;
}

std::size_t KernelSet::weight_count() const {
    std::size_t n = 0;
    for (const auto& w : branch_weights) n += w.size();
    if (compression) n += compression->size();
    return n;
}

void KernelSet::validate() const {
    const Topology t = layout();
    if (branch_weights.size() != t.branches.size())
        throw ConfigError("kernel set has " + std::to_string(branch_weights.size()) +
                          " branches, scheme needs " + std::to_string(t.branches.size()));
    for (std::size_t i = 0; i < t.branches.size(); ++i) {
        const auto& b = t.branches[i];
        if (branch_weights[i].size() !=
            static_cast<std::size_t>(b.in_channels) * b.out_channels * b.extent.taps())
            throw ConfigError("branch " + std::to_string(i) + " has the wrong weight count");
    }
    if (compression && compression->size() != static_cast<std::size_t>(M) * t.output_channels)
        throw ConfigError("compression matrix must be M x output_channels");
}

KernelSet zero_kernel_set(const KernelScheme& scheme, int M, int C, bool with_compression) {
    KernelSet ks{scheme, M, C, {}, std::nullopt};
    const Topology t = ks.layout();
    for (const auto& b : t.branches)
        ks.branch_weights.emplace_back(
            static_cast<std::size_t>(b.in_channels) * b.out_channels * b.extent.taps(), 0.0);
    if (with_compression && t.needs_compression)
        ks.compression = std::vector<double>(static_cast<std::size_t>(M) * t.output_channels, 0.0);
    return ks;
}

KernelSet random_kernel_set(const KernelScheme& scheme, int M, int C, std::mt19937_64& rng,
                            double scale, bool with_compression) {
    KernelSet ks = zero_kernel_set(scheme, M, C, with_compression);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& w : ks.branch_weights)
        for (double& v : w) v = scale * normal(rng);
    if (ks.compression)
        for (double& v : *ks.compression) v = scale * normal(rng);
    return ks;
}

namespace {

// Column of offset (db, dh, dw) of a branch, inside the k^3 cube of channel c.
int kernel_column(int c, int k, Extent3 ext, int db, int dh, int dw) {
    const int cb = db + (k - ext.bands) / 2;
    const int ch = dh + (k - ext.height) / 2;
    const int cw = dw + (k - ext.width) / 2;
    return c * k * k * k + (cb * k + ch) * k + cw;
}

}  // namespace

int valid_columns(const KernelScheme& scheme, int C) {
    const Topology t = topology(scheme, 1, C);
    if (t.chained) throw NotJointlyRepresentable(scheme.name() + " has no joint kernel matrix");
    std::set<int> cols;
    for (const auto& b : t.branches)
        for (int db = 0; db < b.extent.bands; ++db)
            for (int dh = 0; dh < b.extent.height; ++dh)
                for (int dw = 0; dw < b.extent.width; ++dw)
                    cols.insert(kernel_column(0, scheme.k, b.extent, db, dh, dw));
    return static_cast<int>(cols.size()) * C;
}

UnfoldedMatrix build_kernel_matrix(const KernelSet& ks) {
    ks.validate();
    const Topology t = ks.layout();
    if (t.chained)
        throw NotJointlyRepresentable(ks.scheme.name() +
                                      " chains layers and has no single kernel matrix");
    const int k = ks.scheme.k;
    UnfoldedMatrix a(t.output_channels, k * k * k * ks.C, MatrixOrigin::kernel);
    int row0 = 0;
    for (std::size_t i = 0; i < t.branches.size(); ++i) {
        const auto& b = t.branches[i];
        const auto& w = ks.branch_weights[i];
        const int taps = b.extent.taps();
        for (int m = 0; m < b.out_channels; ++m)
            for (int c = 0; c < b.in_channels; ++c)
                for (int db = 0; db < b.extent.bands; ++db)
                    for (int dh = 0; dh < b.extent.height; ++dh)
                        for (int dw = 0; dw < b.extent.width; ++dw) {
                            const std::size_t wi = (static_cast<std::size_t>(m) * b.in_channels + c) * taps +
                                                   (db * b.extent.height + dh) * b.extent.width + dw;
                            a(row0 + m, kernel_column(c, k, b.extent, db, dh, dw)) = w[wi];
                        }
        row0 += b.out_channels;
    }
    return a;
}

FeatureMap conv_set_forward(const KernelSet& ks, const FeatureMap& input) {
    ks.validate();
    if (input.shape().channels != ks.C)
        throw ShapeError("conv_forward: input has " + std::to_string(input.shape().channels) +
                         " channels, kernel set expects " + std::to_string(ks.C));
    const Topology t = ks.layout();
    if (t.chained) {
        FeatureMap x = input;
        for (std::size_t i = 0; i < t.branches.size(); ++i)
            x = kernels::conv_forward(x, ks.branch_weights[i], t.branches[i].out_channels,
                                      t.branches[i].extent);
        return x;
    }
    std::vector<FeatureMap> parts;
    parts.reserve(t.branches.size());
    for (std::size_t i = 0; i < t.branches.size(); ++i)
        parts.push_back(kernels::conv_forward(input, ks.branch_weights[i],
                                              t.branches[i].out_channels, t.branches[i].extent));
    if (parts.size() == 1) return std::move(parts.front());
    return concat_channels(parts);
}

FeatureMap conv_forward(const KernelSet& ks, const FeatureMap& input) {
    FeatureMap out = conv_set_forward(ks, input);
    if (!ks.compression) return out;
    return kernels::conv_forward(out, *ks.compression, ks.M, Extent3{});
}

FeatureMap block_forward(const ResBlockWeights& block, const FeatureMap& input) {
    const KernelSet& ks = block.conv;
    if (input.shape().channels != ks.M || ks.C != ks.M)
        throw ShapeError("residual block requires input channels == C == M");
    if (ks.layout().needs_compression && !ks.compression)
        throw ConfigError(ks.scheme.name() + " block needs compression weights");
    if (block.aggregation.size() != static_cast<std::size_t>(ks.M) * ks.M)
        throw ConfigError("aggregation matrix must be M x M");
    FeatureMap x = conv_forward(ks, input);
    for (double& v : x.data()) v = v >= 0.0 ? v : block.slope * v;
    FeatureMap y = kernels::conv_forward(x, block.aggregation, ks.M, Extent3{});
    auto yd = y.data();
    const auto xd = input.data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += xd[i];
    return y;
}

FeatureMap res3_block_forward(const ResBlockWeights& block, const FeatureMap& input) {
    if (!block.conv.scheme.is_res3())
        throw ConfigError("res3_block_forward requires a ReS3 scheme, got " +
                          block.conv.scheme.name());
    if (!block.conv.compression) throw ConfigError("ReS3 block is missing compression weights");
    return block_forward(block, input);
}

void save_kernel_set(const std::string& directory, const KernelSet& ks) {
    ks.validate();
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    const Topology t = ks.layout();
    std::ofstream header(fs::path(directory) / "kernelset.txt");
    if (!header) throw IoError("cannot write kernel set header in " + directory);
    header << "variant = " << ks.scheme.name() << "\n"
           << "M = " << ks.M << "\n"
           << "C = " << ks.C << "\n"
           << "k = " << ks.scheme.k << "\n"
           << "L = " << ks.scheme.L << "\n"
           << "branches = " << t.branches.size() << "\n"
           << "compression = " << (ks.compression ? 1 : 0) << "\n";
    for (std::size_t i = 0; i < t.branches.size(); ++i) {
        const auto& b = t.branches[i];
        RawTensor raw{{static_cast<std::uint32_t>(b.out_channels),
                       static_cast<std::uint32_t>(b.in_channels),
                       static_cast<std::uint32_t>(b.extent.bands),
                       static_cast<std::uint32_t>(b.extent.height),
                       static_cast<std::uint32_t>(b.extent.width)},
                      ks.branch_weights[i]};
        save_tensor((fs::path(directory) / ("branch_" + std::to_string(i) + ".rst")).string(), raw);
    }
    if (ks.compression)
        save_tensor((fs::path(directory) / "compression.rst").string(),
                    RawTensor{{static_cast<std::uint32_t>(ks.M),
                               static_cast<std::uint32_t>(t.output_channels)},
                              *ks.compression});
}

KernelSet load_kernel_set(const std::string& directory) {
    namespace fs = std::filesystem;
    std::ifstream header(fs::path(directory) / "kernelset.txt");
    if (!header) throw IoError("missing kernelset.txt in " + directory);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(header, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    for (const char* key : {"variant", "M", "C", "k", "compression"})
        if (!kv.count(key)) throw IoError(std::string("kernelset.txt lacks key ") + key);
    KernelSet ks{parse_scheme(kv["variant"], std::stoi(kv["k"])), std::stoi(kv["M"]),
                 std::stoi(kv["C"]), {}, std::nullopt};
    const Topology t = ks.layout();
    for (std::size_t i = 0; i < t.branches.size(); ++i)
        ks.branch_weights.push_back(
            load_tensor((fs::path(directory) / ("branch_" + std::to_string(i) + ".rst")).string())
                .data);
    if (kv["compression"] == "1")
        ks.compression = load_tensor((fs::path(directory) / "compression.rst").string()).data;
    ks.validate();
    return ks;
}

}  // namespace resset
