#pragma once

// One training sample: aligned low-frequency, high-frequency, and exogenous
// windows plus the regression target at the window's final time index.

#include <Eigen/Dense>

namespace htgnn {

struct SensorWindow {
  Eigen::MatrixXd x_l;  // N_L x L
  Eigen::MatrixXd x_h;  // N_H x L
  Eigen::MatrixXd w;    // N_w x L
  Eigen::VectorXd y;    // d_y
  int condition = 0;    // group id (operating condition / event)
  int window_index = 0; // position of the window within its source series
};

}  // namespace htgnn
