#include "expertad/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "expertad/error.hpp"
#include "expertad/random_stream.hpp"

namespace expertad {
namespace {

// BEV extent in the ego frame, independent of grid resolution.
constexpr double kForwardMin = -4.0;
constexpr double kForwardMax = 28.0;
constexpr double kLateralHalf = 16.0;
constexpr double kBumpSigma = 2.0;
constexpr double kBumpAmplitude = 3.0;
constexpr double kEgoRadius = 1.0;

EgoState step_unicycle(const EgoState& s, const Control& u, double dt) {
  EgoState n;
  n.x = s.x + s.v * std::cos(s.yaw) * dt;
  n.y = s.y + s.v * std::sin(s.yaw) * dt;
  n.yaw = s.yaw + u.yaw_rate * dt;
  n.v = s.v + u.a * dt;
  n.a = u.a;
  n.yaw_rate = u.yaw_rate;
  return n;
}

EgoState to_frame(const EgoState& s, const EgoState& origin) {
  const double c = std::cos(origin.yaw), sn = std::sin(origin.yaw);
  const double dx = s.x - origin.x, dy = s.y - origin.y;
  EgoState out = s;
  out.x = c * dx + sn * dy;
  out.y = -sn * dx + c * dy;
  out.yaw = s.yaw - origin.yaw;
  return out;
}

void splat_bump(FeatureGrid& grid, const ScenarioConfig& cfg, std::size_t channel, Point2 centre,
                double amplitude) {
  for (std::size_t h = 0; h < cfg.H; ++h) {
    for (std::size_t w = 0; w < cfg.W; ++w) {
      const Point2 p = bev_cell_center(cfg, h, w);
      const double r2 = (p.x - centre.x) * (p.x - centre.x) + (p.y - centre.y) * (p.y - centre.y);
      grid.at(0, channel, h, w) += amplitude * std::exp(-r2 / (2.0 * kBumpSigma * kBumpSigma));
    }
  }
}

}  // namespace

double command_sign(Command c) {
  switch (c) {
    case Command::left: return 1.0;
    case Command::straight: return 0.0;
    case Command::right: return -1.0;
  }
  return 0.0;
}

std::string to_string(Command c) {
  switch (c) {
    case Command::left: return "left";
    case Command::straight: return "straight";
    case Command::right: return "right";
  }
  return "unknown";
}

void ScenarioConfig::validate() const {
  require(T >= 1 && d >= 1 && H >= 1 && W >= 1 && horizon >= 1, ErrorKind::config,
          "scenario config: T, d, H, W and horizon must be positive");
  require(dt > 0.0, ErrorKind::config, "scenario config: dt must be positive");
  require(noise_level >= 0.0, ErrorKind::config, "scenario config: noise_level must be >= 0");
  require(planted_channels >= 1 && planted_channels <= d, ErrorKind::config,
          "scenario config: planted_channels must be in [1, d]");
  require(obstacle_count >= 1, ErrorKind::config, "scenario config: obstacle_count must be positive");
}

std::vector<EgoState> kinematic_rollout_states(const EgoState& state,
                                               const std::vector<Control>& controls,
                                               std::size_t steps, double dt) {
  require(dt > 0.0, ErrorKind::config, "kinematic_rollout: dt must be positive");
  require(controls.size() >= steps, ErrorKind::shape, "kinematic_rollout: fewer controls than steps");
  std::vector<EgoState> out;
  out.reserve(steps);
  EgoState s = state;
  for (std::size_t t = 0; t < steps; ++t) {
    s = step_unicycle(s, controls[t], dt);
    out.push_back(s);
  }
  return out;
}

std::vector<Point2> kinematic_rollout(const EgoState& state, const std::vector<Control>& controls,
                                      std::size_t steps, double dt) {
  std::vector<Point2> pts;
  for (const auto& s : kinematic_rollout_states(state, controls, steps, dt)) pts.push_back({s.x, s.y});
  return pts;
}

double collision_check(const std::vector<Point2>& traj, const std::vector<ObstacleTrack>& obstacles,
                       double ego_radius) {
  for (const auto& ob : obstacles) {
    require(ob.positions.size() == traj.size(), ErrorKind::shape,
            "collision_check: obstacle track length differs from trajectory length");
  }
  if (traj.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < traj.size(); ++t) {
    for (const auto& ob : obstacles) {
      const double dist = std::hypot(traj[t].x - ob.positions[t].x, traj[t].y - ob.positions[t].y);
      if (dist < ego_radius + ob.radius) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(traj.size());
}

std::vector<std::size_t> planted_channel_indices(const ScenarioConfig& config) {
  std::vector<std::size_t> idx;
  const std::size_t stride = config.d / config.planted_channels;
  for (std::size_t p = 0; p < config.planted_channels; ++p) idx.push_back(p * stride);
  return idx;
}

Point2 bev_cell_center(const ScenarioConfig& config, std::size_t h, std::size_t w) {
  const double res_x = (kForwardMax - kForwardMin) / static_cast<double>(config.H);
  const double res_y = 2.0 * kLateralHalf / static_cast<double>(config.W);
  return {kForwardMin + (static_cast<double>(h) + 0.5) * res_x,
          -kLateralHalf + (static_cast<double>(w) + 0.5) * res_y};
}

Scenario generate_scenario(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  RandomStream rng = seeded_stream(seed, "scenario");
  RandomStream noise = seeded_stream(seed, "bev-noise");

  Scenario sc;
  sc.seed = seed;
  sc.command = static_cast<Command>(rng.next_index(kCommandCount));

  // Latent control script. Turn magnitude is observable only through the BEV.
  const double v_now = rng.next_uniform(3.0, 7.0);
  const double accel = rng.next_uniform(-0.5, 0.5);
  const double turn_mag = rng.next_uniform(0.1, 0.3);
  const double future_yaw_rate = command_sign(sc.command) * turn_mag;

  // History: forward Euler from a start state, then re-expressed in the
  // frame of the final (current) state.
  const double hist_yaw_rate = rng.next_uniform(-0.1, 0.1);
  std::vector<Control> hist_controls(config.T);
  for (auto& u : hist_controls) {
    u.a = accel + 0.1 * rng.next_normal();
    u.yaw_rate = hist_yaw_rate + 0.02 * rng.next_normal();
  }
  EgoState s0;
  s0.yaw = rng.next_uniform(-3.14159, 3.14159);
  s0.v = v_now;
  for (std::size_t t = 1; t < config.T; ++t) s0.v -= hist_controls[t].a * config.dt;
  s0.a = hist_controls[0].a;
  s0.yaw_rate = hist_controls[0].yaw_rate;
  std::vector<EgoState> world_hist{s0};
  for (std::size_t t = 1; t < config.T; ++t) {
    world_hist.push_back(step_unicycle(world_hist.back(), hist_controls[t], config.dt));
  }
  const EgoState origin = world_hist.back();
  for (const auto& s : world_hist) sc.ego_history.push_back(to_frame(s, origin));

  sc.future_controls.assign(config.horizon, Control{accel, future_yaw_rate});
  sc.gt_states =
      kinematic_rollout_states(sc.current(), sc.future_controls, config.horizon, config.dt);
  for (const auto& s : sc.gt_states) sc.gt_future.push_back({s.x, s.y});

  // Coarse route: nominal-speed arc that only knows the turn direction.
  EgoState route_start;
  route_start.v = 5.0;
  sc.reference_points = kinematic_rollout(
      route_start, std::vector<Control>(8, Control{0.0, 0.2 * command_sign(sc.command)}), 8, 0.5);

  // Obstacles are kept off the ground-truth path so gt collision rate is 0.
  for (std::size_t o = 0; o < config.obstacle_count; ++o) {
    ObstacleTrack track;
    for (int attempt = 0; attempt < 200; ++attempt) {
      track.radius = rng.next_uniform(0.8, 1.5);
      const Point2 p0{rng.next_uniform(4.0, 26.0), rng.next_uniform(-12.0, 12.0)};
      const Point2 vel{rng.next_uniform(-1.0, 1.0), rng.next_uniform(-0.5, 0.5)};
      track.positions.clear();
      bool clear = true;
      for (std::size_t t = 0; t < config.horizon; ++t) {
        const double tt = static_cast<double>(t + 1) * config.dt;
        const Point2 p{p0.x + vel.x * tt, p0.y + vel.y * tt};
        track.positions.push_back(p);
        for (const auto& g : sc.gt_future) {
          if (std::hypot(g.x - p.x, g.y - p.y) < track.radius + kEgoRadius + 1.0) clear = false;
        }
      }
      if (clear) break;
    }
    sc.obstacles.push_back(std::move(track));
  }

  // Planted templates: even slots render future waypoints, odd slots render
  // obstacles. Static across frames; every frame gets fresh noise.
  sc.planted = planted_channel_indices(config);
  sc.clean_signal = FeatureGrid(1, config.d, config.H, config.W);
  const std::size_t n_path = (config.planted_channels + 1) / 2;
  for (std::size_t p = 0; p < config.planted_channels; ++p) {
    const std::size_t ch = sc.planted[p];
    if (p % 2 == 0) {
      const std::size_t idx = p / 2;
      const auto step = static_cast<std::size_t>(std::lround(
          static_cast<double>((idx + 1) * config.horizon) / static_cast<double>(n_path)));
      splat_bump(sc.clean_signal, config, ch, sc.gt_future[std::clamp<std::size_t>(step, 1, config.horizon) - 1],
                 kBumpAmplitude);
    } else {
      const std::size_t q = p / 2;
      const auto& ob = sc.obstacles[q % config.obstacle_count];
      const std::size_t step = std::min(config.horizon - 1, 2 * (q / config.obstacle_count));
      splat_bump(sc.clean_signal, config, ch, ob.positions[step], kBumpAmplitude);
    }
  }

  sc.bev_seq = FeatureGrid(config.T, config.d, config.H, config.W);
  for (std::size_t t = 0; t < config.T; ++t) {
    for (std::size_t h = 0; h < config.H; ++h) {
      for (std::size_t w = 0; w < config.W; ++w) {
        for (std::size_t c = 0; c < config.d; ++c) {
          double v = sc.clean_signal.at(0, c, h, w);
          if (config.noise_level > 0.0) v += config.noise_level * noise.next_normal();
          sc.bev_seq.at(t, c, h, w) = v;
        }
      }
    }
  }
  return sc;
}

}  // namespace expertad
