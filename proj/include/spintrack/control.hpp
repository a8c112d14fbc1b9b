#pragma once

#include "spintrack/errors.hpp"

namespace spintrack {

struct LqrParams {
    double lambda_gain = 1.0;  ///< weight of the <Y> estimate [1/s]

    void validate() const {
        if (!(lambda_gain >= 0.0)) throw DomainError("lqr: lambda_gain must be non-negative");
    }
    friend bool operator==(const LqrParams&, const LqrParams&) = default;
};

/// Field-compensating feedback u = -omega_est - lambda <Y>_est.
inline double lqr_control(double omega_est, double y_mean_est, const LqrParams& prm) {
    return -omega_est - prm.lambda_gain * y_mean_est;
}

}  // namespace spintrack
