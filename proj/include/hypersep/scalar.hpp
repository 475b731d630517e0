#pragma once

#include <cstdint>
#include <cstdlib>

namespace hypersep {

/// Conversion shims so the library templates work with plain doubles as
/// well as exact rational scalars (boost::multiprecision::cpp_rational).
template <class Scalar>
struct scalar_traits {
    static double to_double(const Scalar& v) { return static_cast<double>(v); }
    static Scalar from_double(double v) { return static_cast<Scalar>(v); }
};

template <class Scalar>
inline Scalar abs_value(const Scalar& v) {
    return v < Scalar(0) ? Scalar(-v) : v;
}

template <class Scalar>
inline double to_double(const Scalar& v) {
    return scalar_traits<Scalar>::to_double(v);
}

template <class Scalar>
inline Scalar from_double(double v) {
    return scalar_traits<Scalar>::from_double(v);
}

}  // namespace hypersep
