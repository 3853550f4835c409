#include "vitclust/synthetic.hpp"

#include "vitclust/error.hpp"
#include "vitclust/image.hpp"
#include "vitclust/io.hpp"
#include "vitclust/random.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>

namespace vitclust::synthetic {

LabeledPoints make_blobs(const BlobSpec& spec) {
    if (spec.blobs < 1 || spec.dim < 1) throw ConfigError("blob spec needs positive blobs and dim");
    Rng rng(spec.seed);
    const double half_side = std::max(1.0, spec.min_center_distance * 2.0);
    MatrixD centers(spec.blobs, spec.dim);
    for (int b = 0; b < spec.blobs; ++b) {
        for (int attempt = 0;; ++attempt) {
            for (int c = 0; c < spec.dim; ++c) centers(b, c) = (2.0 * uniform01(rng) - 1.0) * half_side;
            bool ok = true;
            for (int prev = 0; prev < b && ok; ++prev) ok = (centers.row(b) - centers.row(prev)).norm() >= spec.min_center_distance;
            if (ok) break;
            if (attempt > 10000) throw ConfigError("cannot place blob centers at the requested separation");
        }
    }
    LabeledPoints out;
    out.points.resize(static_cast<Eigen::Index>(spec.points), spec.dim);
    out.labels.resize(spec.points);
    for (std::size_t i = 0; i < spec.points; ++i) {
        const int b = static_cast<int>(i * spec.blobs / spec.points);
        out.labels[i] = b;
        for (int c = 0; c < spec.dim; ++c) {
            out.points(static_cast<Eigen::Index>(i), c) = centers(b, c) + spec.sigma * standard_normal(rng);
        }
    }
    return out;
}

std::vector<std::filesystem::path> write_image_corpus(const std::filesystem::path& dir, std::size_t count, int groups,
                                                      int size, std::uint64_t seed) {
    if (groups < 1 || size < 1) throw ConfigError("image corpus needs positive groups and size");
    std::filesystem::create_directories(dir);
    Rng rng(seed);
    std::vector<std::filesystem::path> paths;
    for (std::size_t i = 0; i < count; ++i) {
        const int g = static_cast<int>(i % groups);
        // Group identity: a hue and a stripe period/orientation.
        const double hue = 360.0 * g / groups;
        const int period = 2 + (g % 4) * 3;
        const bool vertical = (g / 4) % 2 == 0;
        RgbImage img;
        img.width = img.height = size;
        img.pixels.resize(static_cast<std::size_t>(size) * size * 3);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const int phase = ((vertical ? x : y) / period) % 2;
                for (int c = 0; c < 3; ++c) {
                    const double base = 127.5 + 100.0 * std::cos((hue + 120.0 * c) * 3.14159265358979 / 180.0);
                    const double value = base * (phase ? 1.0 : 0.55) + 12.0 * standard_normal(rng);
                    img.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + c] =
                        static_cast<std::uint8_t>(std::clamp(value, 0.0, 255.0));
                }
            }
        }
        char name[64];
        std::snprintf(name, sizeof name, "img_%04zu.png", i);
        const auto path = dir / name;
        io::write_file_atomic(path, encode_png(img));
        paths.push_back(path);
    }
    return paths;
}

}  // namespace vitclust::synthetic
