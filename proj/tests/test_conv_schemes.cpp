#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "resset/conv_schemes.hpp"
#include "resset/errors.hpp"

using namespace resset;

namespace {

const std::vector<Variant> kAll{Variant::Conv3D, Variant::ReS3_2D, Variant::ReS3_1D,
                                Variant::ReS3_1Dx3, Variant::Seq1D, Variant::Seq1D2D,
                                Variant::Par1D2D};

// The set evaluated branch by branch with the naive convolution.
FeatureMap naive_set(const KernelSet& ks, const FeatureMap& x) {
    const Topology t = ks.layout();
    if (t.chained) {
        FeatureMap f = x;
        for (std::size_t j = 0; j < t.branches.size(); ++j)
            f = oracle::conv(f, ks.branch_weights[j], t.branches[j].out_channels, t.branches[j].extent);
        return f;
    }
    std::vector<FeatureMap> parts;
    for (std::size_t j = 0; j < t.branches.size(); ++j)
        parts.push_back(oracle::conv(x, ks.branch_weights[j], t.branches[j].out_channels,
                                     t.branches[j].extent));
    return concat_channels(parts);
}

// (b, h, w) -> (w, h, b) for every channel.
FeatureMap swap_band_width(const FeatureMap& f) {
    const Shape4 s = f.shape();
    FeatureMap g(Shape4{s.channels, s.width, s.height, s.bands});
    for (int c = 0; c < s.channels; ++c)
        for (int b = 0; b < s.bands; ++b)
            for (int h = 0; h < s.height; ++h)
                for (int w = 0; w < s.width; ++w) g.at(c, w, h, b) = f.at(c, b, h, w);
    return g;
}

}  // namespace

TEST_SUITE("conv_schemes") {

TEST_CASE("scheme construction and names") {
    CHECK(KernelScheme::make(Variant::ReS3_1Dx3).L == 3);
    CHECK(KernelScheme::make(Variant::Conv3D, 2).L == 1);
    CHECK_THROWS_AS(KernelScheme::make(Variant::ReS3_1D, 3), ConfigError);
    CHECK_THROWS_AS(KernelScheme::make(Variant::Conv3D, 1, 4), InvalidKernel);
    for (Variant v : kAll) {
        const auto s = KernelScheme::make(v);
        CHECK(parse_scheme(s.name()) == s);
    }
    CHECK(parse_scheme("ReS3_1D_L2").L == 2);
    CHECK_THROWS_AS(parse_scheme("Conv4D"), ConfigError);
    CHECK(comparison_schemes().size() == 5);
}

TEST_CASE("per-set parameter counts") {
    const int M = 6, C = 5, k = 3;
    auto p = [&](Variant v, int L = 1) { return param_count(KernelScheme::make(v, L, k), M, C); };
    CHECK(p(Variant::Conv3D) == 27u * M * C);
    CHECK(p(Variant::ReS3_1D) == 9u * M * C);
    CHECK(p(Variant::ReS3_1D, 2) == 18u * M * C);
    CHECK(p(Variant::ReS3_1Dx3) == 27u * M * C);
    CHECK(p(Variant::ReS3_2D) == 27u * M * C);
    CHECK(p(Variant::Par1D2D) == 12u * M * C);
    CHECK(p(Variant::Seq1D2D) == 3u * M * C + 9u * M * M);
    CHECK(p(Variant::Seq1D) == 3u * M * C + 6u * M * M);
    CHECK(3 * p(Variant::ReS3_1D) == p(Variant::Conv3D));
    CHECK(compression_param_count(KernelScheme::make(Variant::ReS3_1D), M) == 3u * M * M);
    CHECK(compression_param_count(KernelScheme::make(Variant::Conv3D), M) == 0u);
}

TEST_CASE("parameter parity holds for other kernel sizes") {
    for (int k : {3, 5, 7}) {
        const int M = 4, C = 4;
        CHECK(param_count(KernelScheme::make(Variant::ReS3_1Dx3, 3, k), M, C) == 9u * k * M * C);
        CHECK(param_count(KernelScheme::make(Variant::ReS3_2D, 1, k), M, C) ==
              3u * k * k * M * C);
    }
}

TEST_CASE("multiply-accumulate counts") {
    const auto conv3d = KernelScheme::make(Variant::Conv3D);
    CHECK(mac_count(conv3d, 8, 8, 8, 16, 16) == 3538944u);
    const auto res3 = KernelScheme::make(Variant::ReS3_1D);
    const std::size_t vol = 8 * 16 * 16;
    CHECK(mac_count(res3, 8, 8, 8, 16, 16, false) == 9u * 8 * 8 * vol);
    CHECK(mac_count(res3, 8, 8, 8, 16, 16, true) == 9u * 8 * 8 * vol + 24u * 8 * vol);
}

TEST_CASE("valid columns are the structurally touched offsets") {
    const int C = 4;
    auto v = [&](Variant var, int L = 1) { return valid_columns(KernelScheme::make(var, L), C); };
    CHECK(v(Variant::Conv3D) == 27 * C);
    CHECK(v(Variant::ReS3_1D) == 7 * C);
    CHECK(v(Variant::ReS3_1D, 2) == 7 * C);
    CHECK(v(Variant::ReS3_1Dx3) == 7 * C);
    CHECK(v(Variant::ReS3_2D) == 19 * C);
    CHECK(v(Variant::Par1D2D) == 11 * C);
    CHECK_THROWS_AS(v(Variant::Seq1D), NotJointlyRepresentable);
}

TEST_CASE("kernel matrix has zeros outside the valid columns") {
    std::mt19937_64 rng(6);
    for (Variant var : {Variant::ReS3_1D, Variant::ReS3_2D, Variant::Par1D2D, Variant::Conv3D}) {
        const auto s = KernelScheme::make(var);
        const KernelSet ks = random_kernel_set(s, 3, 2, rng);
        const UnfoldedMatrix a = build_kernel_matrix(ks);
        CHECK(a.cols == 27 * 2);
        CHECK(a.rows == ks.layout().output_channels);
        int touched = 0;
        for (int c = 0; c < a.cols; ++c) {
            bool any = false;
            for (int r = 0; r < a.rows; ++r) any = any || a(r, c) != 0.0;
            touched += any;
        }
        CHECK(touched == valid_columns(s, 2));
    }
    CHECK_THROWS_AS(build_kernel_matrix(zero_kernel_set(KernelScheme::make(Variant::Seq1D), 2, 2)),
                    NotJointlyRepresentable);
}

TEST_CASE("set forward equals kernel matrix times unfolded patches") {
    std::mt19937_64 rng(7);
    for (Variant var : kAll) {
        const auto s = KernelScheme::make(var);
        const KernelSet ks = random_kernel_set(s, 3, 2, rng);
        const FeatureMap x = oracle::random_map(rng, Shape4{2, 4, 5, 3});
        const FeatureMap got = conv_set_forward(ks, x);
        CHECK(relative_error(got.data(), naive_set(ks, x).data()) < 1e-12);
        if (s.is_sequential()) continue;
        const FeatureMap via =
            fold(oracle::matmul(build_kernel_matrix(ks), oracle::unfold(x, Extent3{3, 3, 3})), 4, 5, 3);
        CHECK(relative_error(got.data(), via.data()) < 1e-12);
    }
}

TEST_CASE("compression is a 1x1x1 map over the concatenation") {
    std::mt19937_64 rng(8);
    const KernelSet ks = random_kernel_set(KernelScheme::make(Variant::ReS3_1D), 2, 2, rng, 1.0, true);
    const FeatureMap x = oracle::random_map(rng, Shape4{2, 3, 3, 3});
    const FeatureMap set = conv_set_forward(ks, x);
    const FeatureMap out = conv_forward(ks, x);
    CHECK(out.shape().channels == 2);
    const FeatureMap want = oracle::conv(set, *ks.compression, 2, Extent3{});
    CHECK(relative_error(out.data(), want.data()) < 1e-13);
}

TEST_CASE("ReS3 sets are symmetric under exchanging the band and width axes") {
    std::mt19937_64 rng(9);
    for (Variant var : {Variant::ReS3_1D, Variant::ReS3_2D, Variant::ReS3_1Dx3}) {
        const auto s = KernelScheme::make(var);
        const int M = 2, C = 3;
        const KernelSet ks = random_kernel_set(s, M, C, rng);
        const FeatureMap x = oracle::random_map(rng, Shape4{C, 5, 4, 3});

        // Branch j sees axis j; exchanging axes 0 and 2 swaps branches 0 and 2.
        KernelSet swapped = ks;
        std::swap(swapped.branch_weights[0], swapped.branch_weights[2]);
        if (var == Variant::ReS3_2D) {
            // Every plane exchanges its band and width taps.
            for (int j : {0, 1, 2}) {
                const Extent3 from = ks.layout().branches[2 - j].extent;
                const Extent3 to = ks.layout().branches[j].extent;
                std::vector<double> w(swapped.branch_weights[j].size());
                const int per = from.taps();
                for (std::size_t oi = 0; oi < w.size() / per; ++oi)
                    for (int b = 0; b < from.bands; ++b)
                        for (int h = 0; h < from.height; ++h)
                            for (int ww = 0; ww < from.width; ++ww)
                                w[oi * per + (ww * to.height + h) * to.width + b] =
                                    swapped.branch_weights[j][oi * per + (b * from.height + h) * from.width + ww];
                swapped.branch_weights[j] = w;
            }
        }
        const FeatureMap y = conv_set_forward(ks, x);
        const FeatureMap ys = conv_set_forward(swapped, swap_band_width(x));
        // Channel blocks 0 and 2 of the concatenation trade places.
        const int per = ks.layout().branches[0].out_channels;
        const FeatureMap yt = swap_band_width(y);
        for (int blk = 0; blk < 3; ++blk)
            for (int c = 0; c < per; ++c) {
                const int src = (2 - blk) * per + c, dst = blk * per + c;
                const auto a = ys.channel(dst), b = yt.channel(src);
                CHECK(relative_error(a, b) < 1e-12);
            }
    }
}

TEST_CASE("residual block with zero weights is the identity") {
    for (Variant var : kAll) {
        const auto s = KernelScheme::make(var);
        ResBlockWeights blk{zero_kernel_set(s, 3, 3, s.is_parallel()), std::vector<double>(9, 0.0)};
        std::mt19937_64 rng(1);
        const FeatureMap x = oracle::random_map(rng, Shape4{3, 3, 4, 4});
        CHECK(block_forward(blk, x).values() == x.values());
    }
}

TEST_CASE("residual block against a naive composition") {
    std::mt19937_64 rng(12);
    const auto s = KernelScheme::make(Variant::ReS3_1D);
    ResBlockWeights blk{random_kernel_set(s, 2, 2, rng, 0.5, true), oracle::random_vector(rng, 4)};
    const FeatureMap x = oracle::random_map(rng, Shape4{2, 3, 4, 3});
    FeatureMap z = oracle::conv(naive_set(blk.conv, x), *blk.conv.compression, 2, Extent3{});
    for (double& v : z.data()) v = v > 0 ? v : kLeakySlope * v;
    z = oracle::conv(z, blk.aggregation, 2, Extent3{});
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += x.data()[i];
    CHECK(relative_error(res3_block_forward(blk, x).data(), z.data()) < 1e-12);

    ResBlockWeights missing = blk;
    missing.conv.compression.reset();
    CHECK_THROWS_AS(res3_block_forward(missing, x), ConfigError);
    ResBlockWeights dense{zero_kernel_set(KernelScheme::make(Variant::Conv3D), 2, 2), blk.aggregation};
    CHECK_THROWS_AS(res3_block_forward(dense, x), ConfigError);
}

TEST_CASE("kernel sets validate their arrays") {
    KernelSet ks = zero_kernel_set(KernelScheme::make(Variant::Par1D2D), 2, 3, true);
    CHECK_NOTHROW(ks.validate());
    CHECK(ks.weight_count() == param_count(ks.scheme, 2, 3) + compression_param_count(ks.scheme, 2));
    ks.branch_weights[1].pop_back();
    CHECK_THROWS_AS(ks.validate(), ConfigError);
    const FeatureMap wrong(Shape4{2, 3, 3, 3});
    const KernelSet good = zero_kernel_set(KernelScheme::make(Variant::Conv3D), 2, 3);
    CHECK_THROWS_AS(conv_forward(good, wrong), ShapeError);
}

TEST_CASE("kernel set save and load") {
    std::mt19937_64 rng(13);
    const KernelSet ks = random_kernel_set(KernelScheme::make(Variant::ReS3_1D, 2), 3, 2, rng, 1.0, true);
    const auto dir = std::filesystem::temp_directory_path() / "resset_kernelset_test";
    std::filesystem::remove_all(dir);
    save_kernel_set(dir.string(), ks);
    const KernelSet back = load_kernel_set(dir.string());
    CHECK(back.scheme == ks.scheme);
    CHECK(back.M == 3);
    CHECK(back.C == 2);
    CHECK(back.branch_weights == ks.branch_weights);
    CHECK(back.compression == ks.compression);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_kernel_set(dir.string()), IoError);
}

}
