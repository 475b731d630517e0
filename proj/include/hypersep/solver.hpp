#pragma once

#include <cstddef>
#include <vector>

#include "hypersep/core.hpp"
#include "hypersep/rng.hpp"
#include "hypersep/scalar.hpp"

namespace hypersep {

inline constexpr double default_residual_tol = 1e-8;
inline constexpr double default_rank_tol = 1e-10;

/// k midpoint rows of length n; the constraint set a new plane must pass
/// through.
template <class Scalar>
struct midpoint_matrix {
    std::vector<std::vector<Scalar>> rows;
    std::size_t n = 0;

    std::size_t row_count() const { return rows.size(); }
};

template <class Scalar>
struct solve_report {
    std::vector<Scalar> coeffs;
    std::size_t rank = 0;
    Scalar residual = Scalar(0);  // max over rows of |constant + coeffs . row|
    std::size_t randomized_free_count = 0;
};

namespace detail {

enum class free_policy {
    forbid,     // rank < n is an error
    randomize,  // draw free coefficients from +-[0.1, 1.0]
};

template <class Scalar>
struct elimination_result {
    std::vector<Scalar> coeffs;
    std::size_t rank = 0;
    std::size_t free_count = 0;
    bool consistent = true;
    Scalar residual = Scalar(0);
    Scalar max_scaled_residual = Scalar(0);  // |r_j| / (1 + |c| + sum|a_i m_ji|)
};

/// Gaussian elimination with partial pivoting: columns in natural order, the
/// pivot row of each column is the one with the largest absolute entry
/// (ties to the lowest row index). Columns whose best pivot falls below
/// rank_tol * max|entry| are skipped and become free coefficients. Handles
/// k < n, k == n and k > n uniformly; unconsumed rows are consistency checks.
template <class Scalar>
elimination_result<Scalar> eliminate(const midpoint_matrix<Scalar>& m,
                                     const Scalar& constant,
                                     free_policy policy,
                                     rng_engine* rng,
                                     double rank_tol = default_rank_tol) {
    const std::size_t k = m.row_count();
    const std::size_t n = m.n;

    // Augmented working copy: row | rhs, with rhs = -constant.
    std::vector<std::vector<Scalar>> work(k);
    Scalar max_entry(0);
    for (std::size_t r = 0; r < k; ++r) {
        if (m.rows[r].size() != n) throw usage_error("midpoint row length mismatch");
        work[r] = m.rows[r];
        work[r].push_back(-constant);
        for (std::size_t c = 0; c < n; ++c) {
            const Scalar a = abs_value(m.rows[r][c]);
            if (a > max_entry) max_entry = a;
        }
    }
    const Scalar pivot_floor = from_double<Scalar>(rank_tol) * max_entry;

    elimination_result<Scalar> out;
    out.coeffs.assign(n, Scalar(0));

    std::vector<std::size_t> pivot_col_of_row;  // in elimination order
    std::vector<bool> column_free(n, false);
    std::size_t next_row = 0;

    for (std::size_t col = 0; col < n && next_row < k; ++col) {
        std::size_t best = next_row;
        Scalar best_mag = abs_value(work[next_row][col]);
        for (std::size_t r = next_row + 1; r < k; ++r) {
            const Scalar mag = abs_value(work[r][col]);
            if (mag > best_mag) {
                best_mag = mag;
                best = r;
            }
        }
        if (!(best_mag > pivot_floor)) {
            column_free[col] = true;
            continue;
        }
        std::swap(work[next_row], work[best]);
        for (std::size_t r = next_row + 1; r < k; ++r) {
            const Scalar factor = work[r][col] / work[next_row][col];
            if (factor == Scalar(0)) continue;
            work[r][col] = Scalar(0);
            for (std::size_t c = col + 1; c <= n; ++c) {
                work[r][c] -= factor * work[next_row][c];
            }
        }
        pivot_col_of_row.push_back(col);
        ++next_row;
    }
    for (std::size_t col = (pivot_col_of_row.empty() ? 0 : pivot_col_of_row.back() + 1);
         col < n; ++col) {
        if (next_row >= k) column_free[col] = true;
    }

    out.rank = pivot_col_of_row.size();
    out.free_count = n - out.rank;

    // Rows never consumed as pivots must have reduced to 0 = 0.
    for (std::size_t r = out.rank; r < k; ++r) {
        const Scalar rhs = abs_value(work[r][n]);
        const Scalar row_floor =
            from_double<Scalar>(rank_tol) * (Scalar(1) + abs_value(constant) + max_entry);
        if (rhs > row_floor) out.consistent = false;
    }

    if (out.free_count > 0) {
        if (policy == free_policy::forbid) {
            // caller turns this into rank_deficient_error
        } else {
            for (std::size_t col = 0; col < n; ++col) {
                if (column_free[col]) {
                    out.coeffs[col] = from_double<Scalar>(
                        random_signed_magnitude(*rng, 0.1, 1.0));
                }
            }
        }
    }

    // Back-substitution in reverse pivot order.
    for (std::size_t i = out.rank; i-- > 0;) {
        const std::size_t col = pivot_col_of_row[i];
        Scalar acc = work[i][n];
        for (std::size_t c = col + 1; c < n; ++c) {
            acc -= work[i][c] * out.coeffs[c];
        }
        out.coeffs[col] = acc / work[i][col];
    }

    // Residual by substitution into the original rows.
    for (std::size_t r = 0; r < k; ++r) {
        Scalar acc = constant;
        Scalar scale = Scalar(1) + abs_value(constant);
        for (std::size_t c = 0; c < n; ++c) {
            const Scalar term = out.coeffs[c] * m.rows[r][c];
            acc += term;
            scale += abs_value(term);
        }
        const Scalar res = abs_value(acc);
        if (res > out.residual) out.residual = res;
        const Scalar scaled = res / scale;
        if (scaled > out.max_scaled_residual) out.max_scaled_residual = scaled;
    }
    return out;
}

}  // namespace detail

/// Rank of the row set under the pivot threshold rank_tol * max|entry|.
template <class Scalar>
inline std::size_t numeric_rank(const midpoint_matrix<Scalar>& m,
                                double rank_tol = default_rank_tol) {
    if (m.row_count() == 0) return 0;
    auto res = detail::eliminate(m, Scalar(1), detail::free_policy::forbid, nullptr,
                                 rank_tol);
    return res.rank;
}

/// Solve the square system forcing constant + coeffs . m_j = 0 for all n
/// midpoints. Throws rank_deficient_error when the rows do not determine a
/// unique plane; the caller decides whether to collect more pairs or
/// randomize the remaining directions.
template <class Scalar>
inline solve_report<Scalar> solve_plane_through(const midpoint_matrix<Scalar>& m,
                                                const Scalar& constant,
                                                double residual_tol = default_residual_tol,
                                                double rank_tol = default_rank_tol) {
    if (m.row_count() != m.n) {
        throw usage_error("solve_plane_through requires k == n midpoints");
    }
    auto res = detail::eliminate(m, constant, detail::free_policy::forbid, nullptr,
                                 rank_tol);
    if (res.rank < m.n) throw rank_deficient_error(res.rank);
    if (!(res.max_scaled_residual <= from_double<Scalar>(residual_tol))) {
        throw degenerate_error("plane solve residual above tolerance");
    }
    return {res.coeffs, res.rank, res.residual, 0};
}

/// Underdetermined variant (k < n): solve the pivot coefficients exactly and
/// draw the n - rank free ones from +-[0.1, 1.0], avoiding near-zero normals.
template <class Scalar>
inline solve_report<Scalar> solve_underdetermined(const midpoint_matrix<Scalar>& m,
                                                  const Scalar& constant,
                                                  rng_engine& rng,
                                                  double residual_tol = default_residual_tol,
                                                  double rank_tol = default_rank_tol) {
    if (m.row_count() >= m.n) {
        throw usage_error("solve_underdetermined requires k < n midpoints");
    }
    if (m.row_count() > 1) {
        bool all_identical = true;
        for (std::size_t r = 1; r < m.row_count() && all_identical; ++r) {
            all_identical = (m.rows[r] == m.rows[0]);
        }
        if (all_identical) {
            throw usage_error("identical midpoints cannot constrain a plane");
        }
    }
    auto res = detail::eliminate(m, constant, detail::free_policy::randomize, &rng,
                                 rank_tol);
    if (!res.consistent ||
        !(res.max_scaled_residual <= from_double<Scalar>(residual_tol))) {
        throw degenerate_error("underdetermined solve residual above tolerance");
    }
    return {res.coeffs, res.rank, res.residual, res.free_count};
}

}  // namespace hypersep
