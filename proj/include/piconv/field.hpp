#pragma once

#include <Eigen/Core>

namespace piconv {

/// Row-major 2-D field; row 0 is the top (laser side) of the domain.
template <typename Scalar>
using FieldT =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Field = FieldT<double>;

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kKelvinOffset = 273.15;
inline constexpr double kStefanBoltzmann = 5.670374419e-8;

}  // namespace piconv
