#pragma once

#include <array>
#include <cstddef>

#include <json.hpp>

namespace featforge::rl {

// Fixed-order environment summary fed to the router policy. The component
// order is part of the saved-policy format; never reorder.
struct RouterState {
  static constexpr std::size_t kDim = 12;

  enum Component : std::size_t {
    kLiveRatio = 0,       // live count / base count
    kLogBaseCount = 1,
    kStepFraction = 2,    // j / n
    kIterFraction = 3,    // i / m
    kCurrentScore = 4,
    kBestScore = 5,
    kScoreDelta = 6,      // current - previous step
    kMeanPairAbsCorr = 7, // among the first 30 live features
    kMeanTargetAbsCorr = 8,
    kDerivedFraction = 9,
    kTaskFlag = 10,       // 0 regression, 1 classification
    kLastDecision = 11,   // 0 generate, 1 select, -1 none yet
  };

  std::array<double, kDim> v{};

  double operator[](std::size_t i) const { return v[i]; }
  double& operator[](std::size_t i) { return v[i]; }

  nlohmann::json to_json() const {
    return nlohmann::json(std::vector<double>(v.begin(), v.end()));
  }
  static RouterState from_json(const nlohmann::json& j) {
    RouterState s;
    for (std::size_t i = 0; i < kDim; ++i) s.v[i] = j.at(i).get<double>();
    return s;
  }
};

}  // namespace featforge::rl
