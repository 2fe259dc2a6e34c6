#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "expertad/feature_grid.hpp"

namespace expertad {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct EgoState {
  double x = 0.0;         // m
  double y = 0.0;         // m
  double yaw = 0.0;       // rad
  double v = 0.0;         // m/s
  double a = 0.0;         // m/s^2
  double yaw_rate = 0.0;  // rad/s
  friend bool operator==(const EgoState&, const EgoState&) = default;
};

struct Control {
  double a = 0.0;
  double yaw_rate = 0.0;
  friend bool operator==(const Control&, const Control&) = default;
};

enum class Command : std::uint8_t { left = 0, straight = 1, right = 2 };
inline constexpr std::size_t kCommandCount = 3;

/// +1 for left (counter-clockwise), 0 straight, -1 right.
double command_sign(Command c);
std::string to_string(Command c);

struct ObstacleTrack {
  std::vector<Point2> positions;  // one per horizon step
  double radius = 1.0;
  friend bool operator==(const ObstacleTrack&, const ObstacleTrack&) = default;
};

struct ScenarioConfig {
  std::size_t T = 4;
  std::size_t d = 64;
  std::size_t H = 16;
  std::size_t W = 16;
  std::size_t horizon = 6;
  double dt = 0.5;
  double noise_level = 0.3;
  std::size_t planted_channels = 8;
  std::size_t obstacle_count = 2;

  void validate() const;
  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct Scenario {
  FeatureGrid bev_seq;                 // T x d x H x W
  std::vector<EgoState> ego_history;   // T states, last one is the current ego state
  Command command = Command::straight;
  std::vector<ObstacleTrack> obstacles;
  std::vector<Control> future_controls;  // control script over the horizon
  std::vector<EgoState> gt_states;       // rollout states, one per horizon step
  std::vector<Point2> gt_future;         // (x, y) of gt_states
  std::vector<Point2> reference_points;  // coarse route waypoints (sign of the turn only)
  std::vector<std::size_t> planted;      // indices of signal-carrying channels
  FeatureGrid clean_signal;              // 1 x d x H x W noise-free planted templates
  std::uint64_t seed = 0;

  const EgoState& current() const { return ego_history.back(); }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Explicit-Euler unicycle. Returns the `steps` states after `state`.
std::vector<EgoState> kinematic_rollout_states(const EgoState& state,
                                               const std::vector<Control>& controls,
                                               std::size_t steps, double dt);
std::vector<Point2> kinematic_rollout(const EgoState& state, const std::vector<Control>& controls,
                                      std::size_t steps, double dt);

/// Fraction of steps at which the ego disc overlaps any obstacle disc.
double collision_check(const std::vector<Point2>& traj, const std::vector<ObstacleTrack>& obstacles,
                       double ego_radius);

/// Fixed, evenly spaced signal channels for a config.
std::vector<std::size_t> planted_channel_indices(const ScenarioConfig& config);

/// World position of BEV cell centres (ego frame: x forward, y left).
Point2 bev_cell_center(const ScenarioConfig& config, std::size_t h, std::size_t w);

Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed);

}  // namespace expertad
