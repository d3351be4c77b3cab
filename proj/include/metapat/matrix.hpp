#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace metapat {

/// Dense row-major matrix with value semantics.
template <class T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<T> flat() noexcept { return data_; }
    std::span<const T> flat() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

/// Genes-by-studies matrix carrying its row and column labels. The tag keeps
/// p-value and Z-statistic matrices from being mixed up at call sites.
template <class Tag>
struct LabeledMatrix {
    Matrix<double> values;
    std::vector<std::string> gene_ids;
    std::vector<std::string> study_ids;

    std::size_t genes() const noexcept { return values.rows(); }
    std::size_t studies() const noexcept { return values.cols(); }
};

struct PValueTag {};
struct ZStatTag {};
struct GenericTag {};

using PValueMatrix = LabeledMatrix<PValueTag>;
using ZMatrix = LabeledMatrix<ZStatTag>;
using TableMatrix = LabeledMatrix<GenericTag>;

} // namespace metapat
