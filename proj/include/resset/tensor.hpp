#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resset {

// Extents of a dense volume: channels x bands x height x width.
struct Shape4 {
    int channels = 1;
    int bands = 1;
    int height = 1;
    int width = 1;

    std::size_t count() const;
    std::size_t volume() const;  // bands * height * width
    bool operator==(const Shape4&) const = default;
};

// Offsets along (band, height, width). Kernel extents are odd.
struct Extent3 {
    int bands = 1;
    int height = 1;
    int width = 1;

    int taps() const { return bands * height * width; }
    bool operator==(const Extent3&) const = default;
};

// Dense 4-D volume, row-major with channels outermost and width innermost.
class FeatureMap {
public:
    FeatureMap() = default;
    explicit FeatureMap(Shape4 shape);
    FeatureMap(Shape4 shape, std::vector<double> data);

    const Shape4& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& at(int c, int b, int h, int w) { return data_[index(c, b, h, w)]; }
    double at(int c, int b, int h, int w) const { return data_[index(c, b, h, w)]; }

    std::span<const double> channel(int c) const;
    std::span<double> channel(int c);

    std::size_t index(int c, int b, int h, int w) const {
        return ((static_cast<std::size_t>(c) * shape_.bands + b) * shape_.height + h) *
                   shape_.width +
               w;
    }

    bool all_finite() const;

private:
    Shape4 shape_{};
    std::vector<double> data_;
};

enum class MatrixOrigin { generic, kernel, feature, patches };

// Row-major 2-D matrix view used for the conv-as-matmul identities and SVD.
struct UnfoldedMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    MatrixOrigin origin = MatrixOrigin::generic;

    UnfoldedMatrix() = default;
    UnfoldedMatrix(int rows, int cols, MatrixOrigin origin = MatrixOrigin::generic);
    UnfoldedMatrix(int rows, int cols, std::vector<double> data,
                   MatrixOrigin origin = MatrixOrigin::generic);

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    static UnfoldedMatrix identity(int n);
    UnfoldedMatrix transposed() const;
    double frobenius_norm() const;
};

// Gathers sliding-window patches (zero `same` padding, stride 1) into columns.
// Rows are channel-major, then band, height and width offsets; columns follow
// row-major output positions.
UnfoldedMatrix unfold_patches(const FeatureMap& input, Extent3 kernel_extent);

// Channels x (bands*height*width) view of a feature map.
UnfoldedMatrix feature_matrix(const FeatureMap& f);

// Inverse of feature_matrix for a matrix with bands*height*width columns.
FeatureMap fold(const UnfoldedMatrix& m, int bands, int height, int width);

UnfoldedMatrix matmul(const UnfoldedMatrix& a, const UnfoldedMatrix& b);

// Relative Frobenius distance ||a - b|| / max(||b||, tiny).
double relative_error(std::span<const double> a, std::span<const double> b);

FeatureMap concat_channels(std::span<const FeatureMap> parts);

}  // namespace resset
