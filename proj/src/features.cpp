#include "ccnet/features.hpp"

namespace ccnet {

std::vector<double> region_pool(const std::vector<double>& map, std::int64_t h, std::int64_t w,
                                std::int64_t c, const SliceRegion& region) {
    if (region.row0 < 0 || region.row1 > h || region.col0 < 0 || region.col1 > w ||
        region.row0 >= region.row1 || region.col0 >= region.col1) {
        throw ShapeError("region_pool: slice [" + std::to_string(region.row0) + ":" +
                         std::to_string(region.row1) + "," + std::to_string(region.col0) + ":" +
                         std::to_string(region.col1) + "] out of range for " + std::to_string(h) +
                         "x" + std::to_string(w) + " map");
    }
    std::vector<double> pooled(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t r = region.row0; r < region.row1; ++r) {
        for (std::int64_t col = region.col0; col < region.col1; ++col) {
            const double* cell = map.data() + (r * w + col) * c;
            for (std::int64_t ch = 0; ch < c; ++ch) pooled[ch] += cell[ch];
        }
    }
    const double inv = 1.0 / static_cast<double>((region.row1 - region.row0) *
                                                 (region.col1 - region.col0));
    for (double& v : pooled) v *= inv;
    return pooled;
}

PooledImage pool_image(const std::vector<double>& spatial, const std::vector<double>& inter,
                       std::int64_t h, std::int64_t w, std::int64_t c,
                       const std::array<SliceRegion, kNumSlices>& slices) {
    if (static_cast<std::int64_t>(spatial.size()) != h * w * c) {
        throw ShapeError("pool_image: spatial map has " + std::to_string(spatial.size()) +
                         " values, expected " + std::to_string(h * w * c));
    }
    PooledImage out;
    out.raw[0] = global_pool(spatial, h, w, c);
    out.raw[1] = inter;
    for (int s = 0; s < kNumSlices; ++s) {
        out.raw[static_cast<std::size_t>(2 + s)] = region_pool(spatial, h, w, c, slices[s]);
    }
    return out;
}

}  // namespace ccnet
