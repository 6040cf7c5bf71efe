#pragma once

#include <numbers>

namespace cavsqz {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double kHbar = 1.054571817e-34;      // J s
inline constexpr double kMassRb87 = 1.443160648e-25;  // kg

// Angular frequency (rad/s) from an ordinary frequency in Hz.
constexpr double hz(double f) { return kTwoPi * f; }
constexpr double khz(double f) { return kTwoPi * f * 1e3; }
constexpr double mhz(double f) { return kTwoPi * f * 1e6; }
constexpr double ghz(double f) { return kTwoPi * f * 1e9; }

// Convert rad/s back to Hz for reporting.
constexpr double to_hz(double omega) { return omega / kTwoPi; }

}  // namespace cavsqz
