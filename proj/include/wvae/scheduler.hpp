#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "wvae/common.hpp"
#include "wvae/tensor.hpp"

// Dynamic lambda schedule: lambda_{t+1} = lambda_t + beta * c, where beta
// combines the sign of a one-step T forecast with a sigmoid of the forecast
// increment. T < 0 forecasts push lambda up (tighten the Wasserstein pull
// toward the prior); T > 0 forecasts push it down.

namespace wvae {

inline constexpr double kLambdaMax = 20.0;

struct Forecast {
    double value = 0.0;
    bool fallback = false;  // true when history was too short for the AR fit
};

// One-step-ahead AR(p) forecast, ordinary least squares with intercept over
// the most recent `window` observations. Short histories fall back to a
// persistence forecast (last observed value).
inline Forecast forecast_next(const std::vector<double>& history, int p, int min_history = 8,
                              int window = 200) {
    if (p < 1) throw DomainError("forecast_next: order must be >= 1");
    const int n = static_cast<int>(history.size());
    if (n == 0) throw DomainError("forecast_next: empty history");
    if (n < std::max(p + 1, min_history)) return {history.back(), true};

    const int start = std::max(0, n - window);
    const int len = n - start;
    const int rows = len - p;
    Eigen::MatrixXd X(rows, p + 1);
    Eigen::VectorXd y(rows);
    for (int i = 0; i < rows; ++i) {
        y(i) = history[start + p + i];
        X(i, 0) = 1.0;
        for (int j = 1; j <= p; ++j) X(i, j) = history[start + p + i - j];
    }
    const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
    double pred = coef(0);
    for (int j = 1; j <= p; ++j) pred += coef(j) * history[n - j];
    if (!std::isfinite(pred)) return {history.back(), true};
    return {pred, false};
}

// beta = sigmoid(-(T_hat - T_now)) - (1 + sign(T_hat)) / 2, with sign(0) := 0.
// Lies in [-1, 1]; negative whenever T_hat > 0, positive whenever T_hat < 0.
inline double beta(double t_hat, double t_now) {
    if (!std::isfinite(t_hat) || !std::isfinite(t_now))
        throw DomainError("beta: non-finite input");
    const double sign = t_hat > 0.0 ? 1.0 : (t_hat < 0.0 ? -1.0 : 0.0);
    return ad::stable_sigmoid(-(t_hat - t_now)) - 0.5 * (1.0 + sign);
}

struct SchedulerState {
    double lambda = 1.0;
    double c = 0.05;
    int p = 2;                 // AR order
    int min_history = 8;       // warm-up length before the AR fit engages
    int window = 200;          // sliding OLS window
    double lambda_max = kLambdaMax;
    std::vector<double> t_history;

    // diagnostics from the most recent update, for run logging
    double last_t_hat = std::numeric_limits<double>::quiet_NaN();
    double last_beta = std::numeric_limits<double>::quiet_NaN();
    bool last_fallback = false;

    // Observe T_t, forecast T_{t+1}, and step lambda.
    void update(double t_now) {
        if (!std::isfinite(t_now)) throw DomainError("scheduler update: non-finite T");
        t_history.push_back(t_now);
        const Forecast f = forecast_next(t_history, p, min_history, window);
        last_t_hat = f.value;
        last_fallback = f.fallback;
        last_beta = beta(f.value, t_now);
        lambda = std::clamp(lambda + last_beta * c, 0.0, lambda_max);
    }
};

}  // namespace wvae
