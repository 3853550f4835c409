#pragma once

#include "vitclust/matrix.hpp"
#include "vitclust/random.hpp"

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

namespace testing {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("vitclust_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline vitclust::MatrixD gaussian_matrix(std::size_t rows, std::size_t cols, vitclust::Rng& rng, double scale = 1.0) {
    vitclust::MatrixD m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * vitclust::standard_normal(rng);
    return m;
}

inline std::vector<std::vector<double>> to_rows(const vitclust::MatrixD& m) {
    std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

/// Labels in [0, k) with every label used at least once.
inline vitclust::Labels covering_labels(std::size_t n, int k, vitclust::Rng& rng) {
    vitclust::Labels labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i)
                                                     : static_cast<int>(vitclust::uniform_index(rng, k));
    }
    for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[vitclust::uniform_index(rng, i)]);
    return labels;
}

inline double relative_error(double got, double want) {
    if (got == want) return 0.0;
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace testing
