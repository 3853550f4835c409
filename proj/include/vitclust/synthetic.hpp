#pragma once

#include "vitclust/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace vitclust::synthetic {

struct BlobSpec {
    std::size_t points = 60;
    int dim = 50;
    int blobs = 3;
    double sigma = 0.1;
    double min_center_distance = 10.0;
    std::uint64_t seed = 0;
};

struct LabeledPoints {
    MatrixD points;
    Labels labels;  // blob index; blob b holds a contiguous run of rows
};

/// Isotropic Gaussian blobs around centers drawn uniformly from a cube and
/// rejected until every pair is at least min_center_distance apart.
LabeledPoints make_blobs(const BlobSpec& spec);

/// Writes `count` PNGs of size x size into `dir`, cycling through `groups`
/// visually distinct color/stripe patterns with per-image noise. Returns
/// the written paths in order; image i belongs to group i % groups.
std::vector<std::filesystem::path> write_image_corpus(const std::filesystem::path& dir, std::size_t count, int groups,
                                                      int size, std::uint64_t seed);

}  // namespace vitclust::synthetic
