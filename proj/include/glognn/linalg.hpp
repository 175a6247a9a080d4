#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace glognn {

/// Row-major matrix of doubles. Shape is fixed at construction.
class DenseMat {
public:
    DenseMat() = default;
    DenseMat(std::size_t rows, std::size_t cols);
    DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMat(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMat identity(std::size_t n);
    static DenseMat filled(std::size_t rows, std::size_t cols, double value);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }
    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const DenseMat& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    friend bool operator==(const DenseMat&, const DenseMat&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix in canonical form: column indices strictly
/// increasing inside each row, no stored zeros.
class CsrMat {
public:
    CsrMat() = default;
    /// Empty (nnz = 0) matrix.
    CsrMat(std::size_t rows, std::size_t cols);

    /// Sorts, merges duplicates by summation and drops zeros.
    static CsrMat from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
    /// Validates canonical form; throws DimensionError otherwise.
    static CsrMat from_raw(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                           std::vector<std::size_t> col_idx, std::vector<double> vals);
    static CsrMat identity(std::size_t n);
    static CsrMat from_dense(const DenseMat& m);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return vals_.size(); }

    std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
    std::span<const double> vals() const noexcept { return vals_; }

    /// Stored value at (i, j), zero when absent.
    double at(std::size_t i, std::size_t j) const;

    DenseMat to_dense() const;
    CsrMat transpose() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> vals_;
};

/// Throws NumericalError if any entry is NaN or infinite.
void ensure_finite(const DenseMat& m, std::string_view where);

/// C = A B, each entry accumulated over the inner index in increasing order.
DenseMat matmul(const DenseMat& a, const DenseMat& b);
/// S D for sparse S.
DenseMat spmm(const CsrMat& s, const DenseMat& d);
/// S^T D without forming S^T.
DenseMat spmm_transposed(const CsrMat& s, const DenseMat& d);

DenseMat transpose(const DenseMat& m);
DenseMat add(const DenseMat& a, const DenseMat& b);
DenseMat sub(const DenseMat& a, const DenseMat& b);
DenseMat scale(const DenseMat& m, double s);
/// a + s * b
DenseMat axpy(const DenseMat& a, double s, const DenseMat& b);

double frob_norm(const DenseMat& m);
double max_abs(const DenseMat& m);
double max_abs_diff(const DenseMat& a, const DenseMat& b);
/// ||m_i - m_j||_2 over rows i and j.
double row_l2_dist(const DenseMat& m, std::size_t i, std::size_t j);

struct InverseOptions {
    /// A pivot is rejected when |pivot| < pivot_tol * max|m|.
    double pivot_tol = 1e-12;
    /// Rejects results whose 1-norm condition estimate exceeds this.
    double condition_cap = 1e14;
};

/// Inverse by Gauss-Jordan elimination with partial pivoting. Meant for the
/// c x c systems of the accelerated update.
DenseMat small_inverse(const DenseMat& m, const InverseOptions& opts = {});

/// Inverse of a symmetric positive definite matrix via Cholesky. Used by the
/// dense reference paths; independent of small_inverse.
DenseMat spd_inverse(const DenseMat& m);

/// Records the largest DenseMat allocation (in elements) made on this thread
/// while the probe is alive. Probes nest; the innermost one is updated.
class AllocationProbe {
public:
    AllocationProbe();
    ~AllocationProbe();
    AllocationProbe(const AllocationProbe&) = delete;
    AllocationProbe& operator=(const AllocationProbe&) = delete;

    std::size_t largest() const noexcept { return largest_; }
    std::size_t count() const noexcept { return count_; }

private:
    friend void note_dense_allocation(std::size_t);
    AllocationProbe* previous_;
    std::size_t largest_ = 0;
    std::size_t count_ = 0;
};

void note_dense_allocation(std::size_t elements);

/// Keeps freed matrix buffers in the process heap instead of returning them
/// to the kernel. On glibc, buffers past the default mmap threshold are
/// otherwise unmapped on free and page-faulted back on the next layer call.
/// No-op on other C libraries.
void tune_allocator();

}  // namespace glognn
