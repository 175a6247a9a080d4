#include "glognn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <fmt/format.h>

#include "glognn/errors.hpp"

namespace glognn {

namespace {

thread_local AllocationProbe* active_probe = nullptr;

void require(bool ok, std::string_view what) {
    if (!ok) throw DimensionError(std::string(what));
}

}  // namespace

void note_dense_allocation(std::size_t elements) {
    if (AllocationProbe* p = active_probe) {
        p->largest_ = std::max(p->largest_, elements);
        ++p->count_;
    }
}

AllocationProbe::AllocationProbe() : previous_(active_probe) { active_probe = this; }

AllocationProbe::~AllocationProbe() {
    active_probe = previous_;
    if (previous_) {
        previous_->largest_ = std::max(previous_->largest_, largest_);
        previous_->count_ += count_;
    }
}

// ---------------------------------------------------------------------------
// DenseMat

DenseMat::DenseMat(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {
    note_dense_allocation(rows * cols);
}

DenseMat::DenseMat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows * cols,
            fmt::format("DenseMat: {} values for a {}x{} matrix", data_.size(), rows, cols));
    note_dense_allocation(rows * cols);
}

DenseMat::DenseMat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, "DenseMat: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    note_dense_allocation(rows_ * cols_);
}

DenseMat DenseMat::identity(std::size_t n) {
    DenseMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMat DenseMat::filled(std::size_t rows, std::size_t cols, double value) {
    return DenseMat(rows, cols, std::vector<double>(rows * cols, value));
}

// ---------------------------------------------------------------------------
// CsrMat

CsrMat::CsrMat(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

CsrMat CsrMat::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
    for (const auto& t : entries) {
        require(t.row < rows && t.col < cols,
                fmt::format("CsrMat: entry ({}, {}) outside {}x{}", t.row, t.col, rows, cols));
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    CsrMat m(rows, cols);
    m.col_idx_.reserve(entries.size());
    m.vals_.reserve(entries.size());
    std::vector<std::size_t> counts(rows, 0);
    for (std::size_t k = 0; k < entries.size();) {
        const std::size_t r = entries[k].row;
        const std::size_t c = entries[k].col;
        double v = 0.0;
        for (; k < entries.size() && entries[k].row == r && entries[k].col == c; ++k) {
            v += entries[k].value;
        }
        if (v != 0.0) {
            m.col_idx_.push_back(c);
            m.vals_.push_back(v);
            ++counts[r];
        }
    }
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr_[i + 1] = m.row_ptr_[i] + counts[i];
    return m;
}

CsrMat CsrMat::from_raw(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                        std::vector<std::size_t> col_idx, std::vector<double> vals) {
    require(row_ptr.size() == rows + 1, "CsrMat: row_ptr must have rows + 1 entries");
    require(row_ptr.front() == 0, "CsrMat: row_ptr must start at 0");
    require(row_ptr.back() == col_idx.size() && col_idx.size() == vals.size(),
            "CsrMat: row_ptr[rows] must equal nnz");
    for (std::size_t i = 0; i < rows; ++i) {
        require(row_ptr[i] <= row_ptr[i + 1], "CsrMat: row_ptr must be nondecreasing");
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
            require(col_idx[k] < cols, "CsrMat: column index out of range");
            require(k == row_ptr[i] || col_idx[k - 1] < col_idx[k],
                    "CsrMat: column indices must be strictly increasing within a row");
            require(vals[k] != 0.0, "CsrMat: explicit zero stored");
        }
    }
    CsrMat m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_ = std::move(row_ptr);
    m.col_idx_ = std::move(col_idx);
    m.vals_ = std::move(vals);
    return m;
}

CsrMat CsrMat::identity(std::size_t n) {
    std::vector<std::size_t> rp(n + 1), ci(n);
    for (std::size_t i = 0; i <= n; ++i) rp[i] = i;
    for (std::size_t i = 0; i < n; ++i) ci[i] = i;
    return from_raw(n, n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
}

CsrMat CsrMat::from_dense(const DenseMat& d) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j)
            if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
    return from_triplets(d.rows(), d.cols(), std::move(t));
}

double CsrMat::at(std::size_t i, std::size_t j) const {
    const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
    const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
    const auto it = std::lower_bound(first, last, j);
    return (it != last && *it == j) ? vals_[static_cast<std::size_t>(it - col_idx_.begin())] : 0.0;
}

DenseMat CsrMat::to_dense() const {
    DenseMat d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) = vals_[k];
    return d;
}

CsrMat CsrMat::transpose() const {
    CsrMat t(cols_, rows_);
    std::vector<std::size_t> counts(cols_, 0);
    for (std::size_t c : col_idx_) ++counts[c];
    for (std::size_t j = 0; j < cols_; ++j) t.row_ptr_[j + 1] = t.row_ptr_[j] + counts[j];
    t.col_idx_.resize(nnz());
    t.vals_.resize(nnz());
    std::vector<std::size_t> next(t.row_ptr_.begin(), t.row_ptr_.end() - 1);
    // Rows are visited in increasing order, so each transposed row stays sorted.
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            const std::size_t dst = next[col_idx_[k]]++;
            t.col_idx_[dst] = i;
            t.vals_[dst] = vals_[k];
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Kernels

void ensure_finite(const DenseMat& m, std::string_view where) {
    for (double v : m.values()) {
        if (!std::isfinite(v)) throw NumericalError(fmt::format("non-finite value in {}", where));
    }
}

DenseMat matmul(const DenseMat& a, const DenseMat& b) {
    require(a.cols() == b.rows(), fmt::format("matmul: {}x{} times {}x{}", a.rows(), a.cols(),
                                              b.rows(), b.cols()));
    const std::size_t n = a.rows(), inner = a.cols(), m = b.cols();
    DenseMat c(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.row(i).data();
        const double* ai = a.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = b.row(k).data();
            for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
        }
    }
    ensure_finite(c, "matmul");
    return c;
}

DenseMat spmm(const CsrMat& s, const DenseMat& d) {
    require(s.cols() == d.rows(), fmt::format("spmm: {}x{} sparse times {}x{}", s.rows(), s.cols(),
                                              d.rows(), d.cols()));
    const auto rp = s.row_ptr();
    const auto ci = s.col_idx();
    const auto sv = s.vals();
    const std::size_t m = d.cols();
    DenseMat out(s.rows(), m);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double* oi = out.row(i).data();
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            const double v = sv[k];
            const double* dr = d.row(ci[k]).data();
            for (std::size_t j = 0; j < m; ++j) oi[j] += v * dr[j];
        }
    }
    ensure_finite(out, "spmm");
    return out;
}

DenseMat spmm_transposed(const CsrMat& s, const DenseMat& d) {
    require(s.rows() == d.rows(), fmt::format("spmm_transposed: ({}x{})^T sparse times {}x{}",
                                              s.rows(), s.cols(), d.rows(), d.cols()));
    const auto rp = s.row_ptr();
    const auto ci = s.col_idx();
    const auto sv = s.vals();
    const std::size_t m = d.cols();
    DenseMat out(s.cols(), m);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        const double* di = d.row(i).data();
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            double* o = out.row(ci[k]).data();
            const double v = sv[k];
            for (std::size_t j = 0; j < m; ++j) o[j] += v * di[j];
        }
    }
    ensure_finite(out, "spmm_transposed");
    return out;
}

DenseMat transpose(const DenseMat& m) {
    DenseMat t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

DenseMat add(const DenseMat& a, const DenseMat& b) {
    require(a.same_shape(b), "add: shape mismatch");
    DenseMat c(a.rows(), a.cols());
    auto cv = c.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t k = 0; k < cv.size(); ++k) cv[k] = av[k] + bv[k];
    ensure_finite(c, "add");
    return c;
}

DenseMat sub(const DenseMat& a, const DenseMat& b) {
    require(a.same_shape(b), "sub: shape mismatch");
    DenseMat c(a.rows(), a.cols());
    auto cv = c.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t k = 0; k < cv.size(); ++k) cv[k] = av[k] - bv[k];
    ensure_finite(c, "sub");
    return c;
}

DenseMat scale(const DenseMat& m, double s) {
    DenseMat c(m.rows(), m.cols());
    auto cv = c.values();
    auto mv = m.values();
    for (std::size_t k = 0; k < cv.size(); ++k) cv[k] = mv[k] * s;
    ensure_finite(c, "scale");
    return c;
}

DenseMat axpy(const DenseMat& a, double s, const DenseMat& b) {
    require(a.same_shape(b), "axpy: shape mismatch");
    DenseMat c(a.rows(), a.cols());
    auto cv = c.values();
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t k = 0; k < cv.size(); ++k) cv[k] = av[k] + s * bv[k];
    ensure_finite(c, "axpy");
    return c;
}

double frob_norm(const DenseMat& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return std::sqrt(s);
}

double max_abs(const DenseMat& m) {
    double r = 0.0;
    for (double v : m.values()) r = std::max(r, std::abs(v));
    return r;
}

double max_abs_diff(const DenseMat& a, const DenseMat& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    double r = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t k = 0; k < av.size(); ++k) r = std::max(r, std::abs(av[k] - bv[k]));
    return r;
}

double row_l2_dist(const DenseMat& m, std::size_t i, std::size_t j) {
    require(i < m.rows() && j < m.rows(), "row_l2_dist: row index out of range");
    const auto ri = m.row(i);
    const auto rj = m.row(j);
    double s = 0.0;
    for (std::size_t k = 0; k < ri.size(); ++k) {
        const double d = ri[k] - rj[k];
        s += d * d;
    }
    return std::sqrt(s);
}

namespace {

double norm1(const DenseMat& m) {
    double best = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) s += std::abs(m(i, j));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace

DenseMat small_inverse(const DenseMat& m, const InverseOptions& opts) {
    require(m.rows() == m.cols(), "small_inverse: matrix must be square");
    ensure_finite(m, "small_inverse input");
    const std::size_t n = m.rows();
    const double scale_ref = max_abs(m);
    if (n == 0) return DenseMat{};
    if (scale_ref == 0.0) throw SingularMatrixError("small_inverse: zero matrix");

    DenseMat a = m;
    DenseMat inv = DenseMat::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
        if (std::abs(a(piv, col)) < opts.pivot_tol * scale_ref) {
            throw SingularMatrixError(
                fmt::format("small_inverse: pivot {:.3e} below tolerance at column {}",
                            std::abs(a(piv, col)), col));
        }
        if (piv != col) {
            std::swap_ranges(a.row(col).begin(), a.row(col).end(), a.row(piv).begin());
            std::swap_ranges(inv.row(col).begin(), inv.row(col).end(), inv.row(piv).begin());
        }
        const double d = 1.0 / a(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            a(col, j) *= d;
            inv(col, j) *= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(col, j);
                inv(r, j) -= f * inv(col, j);
            }
        }
    }
    ensure_finite(inv, "small_inverse");
    const double cond = norm1(m) * norm1(inv);
    if (cond > opts.condition_cap) {
        throw SingularMatrixError(
            fmt::format("small_inverse: condition estimate {:.3e} exceeds cap {:.3e}", cond,
                        opts.condition_cap));
    }
    return inv;
}

DenseMat spd_inverse(const DenseMat& m) {
    require(m.rows() == m.cols(), "spd_inverse: matrix must be square");
    ensure_finite(m, "spd_inverse input");
    const std::size_t n = m.rows();
    // Lower Cholesky factor.
    DenseMat l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0)) {
            throw SingularMatrixError(
                fmt::format("spd_inverse: matrix not positive definite at column {}", j));
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    // Solve L Y = I, then L^T X = Y, one column at a time.
    DenseMat inv(n, n);
    std::vector<double> y(n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = (i == c) ? 1.0 : 0.0;
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
            y[i] = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * inv(k, c);
            inv(ii, c) = s / l(ii, ii);
        }
    }
    ensure_finite(inv, "spd_inverse");
    return inv;
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace glognn
