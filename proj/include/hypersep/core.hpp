#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hypersep/scalar.hpp"

namespace hypersep {

inline constexpr int side_positive = +1;
inline constexpr int side_negative = -1;
inline constexpr int side_on_plane = 0;

/// Relative width of the incidence band around each plane. A point whose
/// evaluation magnitude falls below eps_rel * (1 + |constant| + sum |c_i x_i|)
/// is treated as lying on the plane.
inline constexpr double default_eps_rel = 1e-9;

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller violated a precondition (dimension mismatch, bad argument).
struct usage_error : error {
    using error::error;
};

/// Malformed input file (CSV, JSON, index).
struct data_error : error {
    using error::error;
};

/// A point evaluated inside the incidence band of a plane.
struct incidence_error : error {
    std::int64_t point_id;
    std::size_t plane_index;
    incidence_error(std::int64_t pid, std::size_t plane)
        : error("point " + std::to_string(pid) + " incident on plane " +
                std::to_string(plane)),
          point_id(pid),
          plane_index(plane) {}
};

struct rank_deficient_error : error {
    std::size_t rank;
    explicit rank_deficient_error(std::size_t r)
        : error("coefficient matrix rank " + std::to_string(r)), rank(r) {}
};

struct bootstrap_error : error {
    using error::error;
};

struct degenerate_error : error {
    using error::error;
};

template <class Scalar>
struct point {
    std::int64_t id = 0;
    std::vector<Scalar> coords;
    std::string label;

    std::size_t dimension() const { return coords.size(); }
};

/// Affine functional constant + sum coeffs[i] * x[i]. The sign of the
/// evaluation fixes the normal orientation. Coefficients are kept exactly as
/// solved; a saturated plane is never re-fit.
template <class Scalar>
struct hyperplane {
    Scalar constant = Scalar(1);
    std::vector<Scalar> coeffs;
    std::size_t index = 0;
    bool saturated = false;

    std::size_t dimension() const { return coeffs.size(); }
};

/// Hamming vector of +-1 sides, one per plane, packed 64 per word.
/// Plane 0 occupies bit 0 of word 0 (least significant position); a set bit
/// means the positive side. Retrieval code strings depend on this packing.
class orientation_vector {
public:
    orientation_vector() = default;

    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    int sign(std::size_t j) const {
        return (words_[j >> 6] >> (j & 63u)) & 1u ? side_positive : side_negative;
    }

    void push_sign(int side) {
        if ((size_ & 63u) == 0) words_.push_back(0);
        if (side == side_positive) {
            words_.back() |= std::uint64_t(1) << (size_ & 63u);
        }
        ++size_;
    }

    /// Flip the most recently appended bit.
    void flip_last() {
        words_.back() ^= std::uint64_t(1) << ((size_ - 1) & 63u);
    }

    std::span<const std::uint64_t> words() const { return words_; }

    friend bool operator==(const orientation_vector& a, const orientation_vector& b) {
        if (a.size_ != b.size_) return false;
        for (std::size_t w = 0; w < a.words_.size(); ++w) {
            if (a.words_[w] != b.words_[w]) return false;  // stop at first mismatch
        }
        return true;
    }

    std::size_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull ^ size_;
        for (std::uint64_t w : words_) {
            h ^= w;
            h *= 0x100000001b3ull;
        }
        return static_cast<std::size_t>(h);
    }

private:
    std::vector<std::uint64_t> words_;
    std::size_t size_ = 0;
};

struct ov_hash {
    std::size_t operator()(const orientation_vector& ov) const { return ov.hash(); }
};

template <class Scalar>
struct side_evaluation {
    Scalar value;
    int sign;  // side_positive, side_negative or side_on_plane
};

/// constant + sum coeffs[i] * coords[i], nothing else. Exactly n
/// multiplications and n additions; this is the retrieval-path evaluator.
template <class Scalar>
inline Scalar raw_value(const point<Scalar>& p, const hyperplane<Scalar>& plane) {
    if (p.dimension() != plane.dimension()) {
        throw usage_error("point/plane dimension mismatch");
    }
    Scalar acc = plane.constant;
    for (std::size_t i = 0; i < plane.coeffs.size(); ++i) {
        acc += plane.coeffs[i] * p.coords[i];
    }
    return acc;
}

/// Signed-side test with the relative incidence band. With eps_rel = 0 the
/// test is exact (useful in rational mode, where incidence is an exact event).
template <class Scalar>
inline side_evaluation<Scalar> evaluate_side(const point<Scalar>& p,
                                             const hyperplane<Scalar>& plane,
                                             double eps_rel = default_eps_rel) {
    if (p.dimension() != plane.dimension()) {
        throw usage_error("point/plane dimension mismatch");
    }
    Scalar acc = plane.constant;
    Scalar magnitude = abs_value(plane.constant);
    for (std::size_t i = 0; i < plane.coeffs.size(); ++i) {
        const Scalar term = plane.coeffs[i] * p.coords[i];
        acc += term;
        magnitude += abs_value(term);
    }
    const Scalar band = from_double<Scalar>(eps_rel) * (Scalar(1) + magnitude);
    int sign = side_on_plane;
    if (acc > band) {
        sign = side_positive;
    } else if (acc < -band) {
        sign = side_negative;
    }
    return {acc, sign};
}

/// Orientation Vector of p against the planes in index order. An on-plane
/// evaluation is an error here: strict sides are what make OV equality mean
/// "no plane separates these points".
template <class Scalar>
inline orientation_vector compute_ov(const point<Scalar>& p,
                                     const std::vector<hyperplane<Scalar>>& planes,
                                     double eps_rel = default_eps_rel) {
    orientation_vector ov;
    for (const auto& plane : planes) {
        const auto eval = evaluate_side(p, plane, eps_rel);
        if (eval.sign == side_on_plane) {
            throw incidence_error(p.id, plane.index);
        }
        ov.push_sign(eval.sign);
    }
    return ov;
}

inline bool ov_equal(const orientation_vector& a, const orientation_vector& b) {
    if (a.size() != b.size()) {
        throw usage_error("orientation vector length mismatch");
    }
    return a == b;
}

inline orientation_vector append_bit(orientation_vector ov, int side) {
    if (side != side_positive && side != side_negative) {
        throw usage_error("append_bit side must be +1 or -1");
    }
    ov.push_sign(side);
    return ov;
}

template <class Scalar>
inline std::vector<Scalar> midpoint(const point<Scalar>& a, const point<Scalar>& b) {
    if (a.dimension() != b.dimension()) {
        throw usage_error("midpoint dimension mismatch");
    }
    std::vector<Scalar> mid(a.coords.size());
    const Scalar half = Scalar(1) / Scalar(2);
    for (std::size_t i = 0; i < mid.size(); ++i) {
        mid[i] = (a.coords[i] + b.coords[i]) * half;
    }
    return mid;
}

template <class Scalar>
inline Scalar manhattan_distance(const point<Scalar>& a, const point<Scalar>& b) {
    if (a.dimension() != b.dimension()) {
        throw usage_error("manhattan_distance dimension mismatch");
    }
    Scalar total(0);
    for (std::size_t i = 0; i < a.coords.size(); ++i) {
        total += abs_value<Scalar>(a.coords[i] - b.coords[i]);
    }
    return total;
}

}  // namespace hypersep
