#pragma once

#include "ndbal/instances.hpp"

namespace ndbal::testing {

/// Four structures over three binary atoms. Atom 0 splits them 2/2, atom 1
/// 1/3, atom 2 not at all. Distance is 1 between distinct structures.
struct FourByThree {
  std::shared_ptr<FiniteLabeledSpace> space;
  WeightedEnsemble uniform;
  DistanceFn distance;

  FourByThree() {
    Eigen::MatrixXi tables(4, 3);
    tables << 0, 0, 1,
              0, 1, 1,
              1, 1, 1,
              1, 1, 1;
    space = std::make_shared<FiniteLabeledSpace>(ResponseSet({0, 1}), tables);
    uniform = uniform_ensemble(space->structures());
    Eigen::MatrixXd d = Eigen::MatrixXd::Ones(4, 4);
    d.diagonal().setZero();
    distance = table_distance(d);
  }
};

}  // namespace ndbal::testing
