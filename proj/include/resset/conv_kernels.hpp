#pragma once

#include <span>

#include "resset/tensor.hpp"

namespace resset::kernels {

// Stride-1 convolution with `same` zero padding. Weights are laid out as
// [out][in][band][height][width] with odd extents, centred on the output voxel.
FeatureMap conv_forward(const FeatureMap& input, std::span<const double> weights,
                        int out_channels, Extent3 ext);

// Accumulates d(loss)/d(input) into grad_input.
void conv_backward_input(const FeatureMap& grad_output, std::span<const double> weights,
                         Extent3 ext, FeatureMap& grad_input);

// Accumulates d(loss)/d(weights) into grad_weights.
void conv_backward_weights(const FeatureMap& grad_output, const FeatureMap& input, Extent3 ext,
                           std::span<double> grad_weights);

}  // namespace resset::kernels
