#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "resset/tensor.hpp"

namespace resset {

// Portable tensor file: "RST1", u32 LE rank, u32 LE extents, f64 LE row-major data.
struct RawTensor {
    std::vector<std::uint32_t> extents;
    std::vector<double> data;
};

void write_tensor(std::ostream& os, const RawTensor& t);
RawTensor read_tensor(std::istream& is);

void save_tensor(const std::string& path, const RawTensor& t);
RawTensor load_tensor(const std::string& path);

RawTensor to_raw(const FeatureMap& f);
// Rank 4 maps directly; rank 3 is read as a single-channel volume.
FeatureMap feature_map_from_raw(const RawTensor& t);

}  // namespace resset
