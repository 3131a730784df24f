#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Core>

namespace rlf {

using Vec3 = Eigen::Vector3d;
using Index3 = Eigen::Vector3i;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Physical point in meters.
using Position = Vec3;

}  // namespace rlf
