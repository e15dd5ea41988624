#include "resset/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "resset/errors.hpp"

namespace resset {

std::size_t Shape4::count() const {
    return static_cast<std::size_t>(channels) * volume();
}

std::size_t Shape4::volume() const {
    return static_cast<std::size_t>(bands) * height * width;
}

namespace {

void check_shape(const Shape4& s) {
    if (s.channels < 1 || s.bands < 1 || s.height < 1 || s.width < 1)
        throw ShapeError("all extents of a feature map must be >= 1");
    const double n = static_cast<double>(s.channels) * s.bands * s.height * s.width;
    if (n > static_cast<double>(std::numeric_limits<std::ptrdiff_t>::max() / sizeof(double)))
        throw ShapeError("feature map too large");
}

void check_extent(int k, int dim, const char* axis) {
    if (k < 1 || k % 2 == 0)
        throw InvalidKernel(std::string("kernel extent along ") + axis + " must be odd and >= 1");
    if (k > 2 * dim + 1)
        throw DegenerateKernel(std::string("kernel extent along ") + axis +
                               " exceeds 2*dim+1");
}

}  // namespace

FeatureMap::FeatureMap(Shape4 shape) : shape_(shape) {
    check_shape(shape_);
    data_.assign(shape_.count(), 0.0);
}

FeatureMap::FeatureMap(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_.count())
        throw ShapeError("feature map data length does not match its shape");
}

std::span<const double> FeatureMap::channel(int c) const {
    return std::span<const double>(data_).subspan(c * shape_.volume(), shape_.volume());
}

std::span<double> FeatureMap::channel(int c) {
    return std::span<double>(data_).subspan(c * shape_.volume(), shape_.volume());
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

UnfoldedMatrix::UnfoldedMatrix(int rows, int cols, MatrixOrigin origin)
    : rows(rows), cols(cols), data(static_cast<std::size_t>(rows) * cols, 0.0), origin(origin) {
    if (rows < 0 || cols < 0) throw ShapeError("negative matrix extent");
}

UnfoldedMatrix::UnfoldedMatrix(int rows, int cols, std::vector<double> values,
                               MatrixOrigin origin)
    : rows(rows), cols(cols), data(std::move(values)), origin(origin) {
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows) * cols)
        throw ShapeError("matrix data length does not match rows*cols");
}

UnfoldedMatrix UnfoldedMatrix::identity(int n) {
    UnfoldedMatrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

UnfoldedMatrix UnfoldedMatrix::transposed() const {
    UnfoldedMatrix t(cols, rows, origin);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) t(c, r) = (*this)(r, c);
    return t;
}

double UnfoldedMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
}

UnfoldedMatrix unfold_patches(const FeatureMap& input, Extent3 ext) {
    const Shape4& s = input.shape();
    check_extent(ext.bands, s.bands, "bands");
    check_extent(ext.height, s.height, "height");
    check_extent(ext.width, s.width, "width");

    const int pb = (ext.bands - 1) / 2;
    const int ph = (ext.height - 1) / 2;
    const int pw = (ext.width - 1) / 2;
    const int rows = ext.taps() * s.channels;
    const int cols = static_cast<int>(s.volume());
    UnfoldedMatrix out(rows, cols, MatrixOrigin::patches);

    for (int c = 0; c < s.channels; ++c)
        for (int db = 0; db < ext.bands; ++db)
            for (int dh = 0; dh < ext.height; ++dh)
                for (int dw = 0; dw < ext.width; ++dw) {
                    const int row = ((c * ext.bands + db) * ext.height + dh) * ext.width + dw;
                    double* dst = out.data.data() + static_cast<std::size_t>(row) * cols;
                    for (int b = 0; b < s.bands; ++b) {
                        const int ib = b + db - pb;
                        if (ib < 0 || ib >= s.bands) continue;
                        for (int h = 0; h < s.height; ++h) {
                            const int ih = h + dh - ph;
                            if (ih < 0 || ih >= s.height) continue;
                            for (int w = 0; w < s.width; ++w) {
                                const int iw = w + dw - pw;
                                if (iw < 0 || iw >= s.width) continue;
                                dst[(b * s.height + h) * s.width + w] = input.at(c, ib, ih, iw);
                            }
                        }
                    }
                }
    return out;
}

UnfoldedMatrix feature_matrix(const FeatureMap& f) {
    const Shape4& s = f.shape();
    return UnfoldedMatrix(s.channels, static_cast<int>(s.volume()), f.values(),
                          MatrixOrigin::feature);
}

FeatureMap fold(const UnfoldedMatrix& m, int bands, int height, int width) {
    if (static_cast<long long>(bands) * height * width != m.cols)
        throw ShapeError("fold: column count does not match bands*height*width");
    return FeatureMap(Shape4{m.rows, bands, height, width}, m.data);
}

UnfoldedMatrix matmul(const UnfoldedMatrix& a, const UnfoldedMatrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + ")");
    UnfoldedMatrix out(a.rows, b.cols);
    // i-k-j order: each output entry accumulates over k in increasing order.
    for (int i = 0; i < a.rows; ++i) {
        double* dst = out.data.data() + static_cast<std::size_t>(i) * b.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            const double* src = b.data.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) dst[j] += aik * src[j];
        }
    }
    return out;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("relative_error: size mismatch");
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

FeatureMap concat_channels(std::span<const FeatureMap> parts) {
    if (parts.empty()) throw ShapeError("concat of zero feature maps");
    Shape4 s = parts.front().shape();
    int channels = 0;
    for (const auto& p : parts) {
        const Shape4& ps = p.shape();
        if (ps.bands != s.bands || ps.height != s.height || ps.width != s.width)
            throw ShapeError("concat: spatial extents differ");
        channels += ps.channels;
    }
    s.channels = channels;
    std::vector<double> data;
    data.reserve(s.count());
    for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
    return FeatureMap(s, std::move(data));
}

}  // namespace resset
