#include "resset/conv_kernels.hpp"

#include <algorithm>
#include <vector>

#include "resset/errors.hpp"

namespace resset::kernels {

namespace {

void check_weights(std::size_t n, int out_channels, int in_channels, Extent3 ext) {
    if (ext.bands % 2 == 0 || ext.height % 2 == 0 || ext.width % 2 == 0 || ext.bands < 1 ||
        ext.height < 1 || ext.width < 1)
        throw InvalidKernel("convolution extents must be odd and >= 1");
    if (n != static_cast<std::size_t>(out_channels) * in_channels * ext.taps())
        throw ShapeError("convolution weight count does not match out*in*taps");
}

}  // namespace

FeatureMap conv_forward(const FeatureMap& input, std::span<const double> weights,
                        int out_channels, Extent3 ext) {
    const Shape4 s = input.shape();
    check_weights(weights.size(), out_channels, s.channels, ext);
    FeatureMap out(Shape4{out_channels, s.bands, s.height, s.width});

    const int pb = ext.bands / 2, ph = ext.height / 2, pw = ext.width / 2;
    const int taps = ext.taps();
    const double* in = input.data().data();
    double* o = out.data().data();

    for (int m = 0; m < out_channels; ++m)
        for (int b = 0; b < s.bands; ++b)
            for (int h = 0; h < s.height; ++h) {
                double* dst = o + out.index(m, b, h, 0);
                for (int c = 0; c < s.channels; ++c) {
                    const double* wc = weights.data() + (static_cast<std::size_t>(m) * s.channels + c) * taps;
                    for (int db = 0; db < ext.bands; ++db) {
                        const int ib = b + db - pb;
                        if (ib < 0 || ib >= s.bands) continue;
                        for (int dh = 0; dh < ext.height; ++dh) {
                            const int ih = h + dh - ph;
                            if (ih < 0 || ih >= s.height) continue;
                            const double* src = in + input.index(c, ib, ih, 0);
                            const double* wr = wc + (db * ext.height + dh) * ext.width;
                            for (int dw = 0; dw < ext.width; ++dw) {
                                const int ow = dw - pw;
                                const double wv = wr[dw];
                                const int x0 = std::max(0, -ow);
                                const int x1 = std::min(s.width, s.width - ow);
                                for (int x = x0; x < x1; ++x) dst[x] += wv * src[x + ow];
                            }
                        }
                    }
                }
            }
    return out;
}

void conv_backward_input(const FeatureMap& grad_output, std::span<const double> weights,
                         Extent3 ext, FeatureMap& grad_input) {
    const Shape4 s = grad_input.shape();
    const Shape4 g = grad_output.shape();
    if (g.bands != s.bands || g.height != s.height || g.width != s.width)
        throw ShapeError("conv backward: spatial extents differ");
    check_weights(weights.size(), g.channels, s.channels, ext);

    const int pb = ext.bands / 2, ph = ext.height / 2, pw = ext.width / 2;
    const int taps = ext.taps();
    const double* go = grad_output.data().data();
    double* gi = grad_input.data().data();

    for (int c = 0; c < s.channels; ++c)
        for (int ib = 0; ib < s.bands; ++ib)
            for (int ih = 0; ih < s.height; ++ih) {
                double* dst = gi + grad_input.index(c, ib, ih, 0);
                for (int m = 0; m < g.channels; ++m) {
                    const double* wc = weights.data() + (static_cast<std::size_t>(m) * s.channels + c) * taps;
                    for (int db = 0; db < ext.bands; ++db) {
                        const int b = ib - (db - pb);
                        if (b < 0 || b >= s.bands) continue;
                        for (int dh = 0; dh < ext.height; ++dh) {
                            const int h = ih - (dh - ph);
                            if (h < 0 || h >= s.height) continue;
                            const double* src = go + grad_output.index(m, b, h, 0);
                            const double* wr = wc + (db * ext.height + dh) * ext.width;
                            for (int dw = 0; dw < ext.width; ++dw) {
                                const int ow = dw - pw;
                                const double wv = wr[dw];
                                const int x0 = std::max(0, ow);
                                const int x1 = std::min(s.width, s.width + ow);
                                for (int x = x0; x < x1; ++x) dst[x] += wv * src[x - ow];
                            }
                        }
                    }
                }
            }
}

void conv_backward_weights(const FeatureMap& grad_output, const FeatureMap& input, Extent3 ext,
                           std::span<double> grad_weights) {
    const Shape4 s = input.shape();
    const Shape4 g = grad_output.shape();
    if (g.bands != s.bands || g.height != s.height || g.width != s.width)
        throw ShapeError("conv backward: spatial extents differ");
    check_weights(grad_weights.size(), g.channels, s.channels, ext);

    const int pb = ext.bands / 2, ph = ext.height / 2, pw = ext.width / 2;
    const int taps = ext.taps();
    const double* go = grad_output.data().data();
    const double* in = input.data().data();

    // Per-lane partial sums keep the inner loop vectorisable with a fixed
    // summation order.
    std::vector<double> partial(static_cast<std::size_t>(s.width));
    for (int m = 0; m < g.channels; ++m)
        for (int c = 0; c < s.channels; ++c) {
            double* gw = grad_weights.data() + (static_cast<std::size_t>(m) * s.channels + c) * taps;
            for (int db = 0; db < ext.bands; ++db)
                for (int dh = 0; dh < ext.height; ++dh)
                    for (int dw = 0; dw < ext.width; ++dw) {
                        const int ob = db - pb, oh = dh - ph, ow = dw - pw;
                        const int b0 = std::max(0, -ob), b1 = std::min(s.bands, s.bands - ob);
                        const int h0 = std::max(0, -oh), h1 = std::min(s.height, s.height - oh);
                        const int x0 = std::max(0, -ow), x1 = std::min(s.width, s.width - ow);
                        std::fill(partial.begin(), partial.end(), 0.0);
                        double* acc = partial.data();
                        for (int b = b0; b < b1; ++b)
                            for (int h = h0; h < h1; ++h) {
                                const double* gr = go + grad_output.index(m, b, h, 0);
                                const double* ir = in + input.index(c, b + ob, h + oh, 0);
                                for (int x = x0; x < x1; ++x) acc[x] += gr[x] * ir[x + ow];
                            }
                        double total = 0.0;
                        for (int x = x0; x < x1; ++x) total += acc[x];
                        gw[(db * ext.height + dh) * ext.width + dw] += total;
                    }
        }
}

}  // namespace resset::kernels
