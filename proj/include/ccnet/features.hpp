#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ccnet/errors.hpp"

namespace ccnet {

inline constexpr int kNumExperts = 7;
inline constexpr int kNumSlices = 5;

// Half-open row/col ranges into an H x W spatial map.
struct SliceRegion {
    std::int64_t row0, row1, col0, col1;
};

// The five 3x3 slice windows taken from a 7x7 map: top, left, center,
// right, bottom.
inline std::array<SliceRegion, kNumSlices> default_slice_regions() {
    return {{{0, 3, 2, 5}, {2, 5, 0, 3}, {2, 5, 2, 5}, {2, 5, 4, 7}, {4, 7, 2, 5}}};
}

// Mean over a spatial region of a row-major H x W x C map, per channel.
std::vector<double> region_pool(const std::vector<double>& map, std::int64_t h, std::int64_t w,
                                std::int64_t c, const SliceRegion& region);

inline std::vector<double> global_pool(const std::vector<double>& map, std::int64_t h,
                                       std::int64_t w, std::int64_t c) {
    return region_pool(map, h, w, c, SliceRegion{0, h, 0, w});
}

// The seven raw expert inputs of one image, in fixed expert order:
// [global pool, intermediate vector, slice pools 1..5].
struct PooledImage {
    std::array<std::vector<double>, kNumExperts> raw;
};

PooledImage pool_image(const std::vector<double>& spatial, const std::vector<double>& inter,
                       std::int64_t h, std::int64_t w, std::int64_t c,
                       const std::array<SliceRegion, kNumSlices>& slices);

}  // namespace ccnet
