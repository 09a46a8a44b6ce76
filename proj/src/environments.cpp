#include "polrank/environments.hpp"

#include <cmath>
#include <string>

#include "polrank/error.hpp"
#include "polrank/rng.hpp"

namespace polrank {

namespace {

void check_action(ActionId a, int count) {
  if (a < 0 || a >= count) {
    throw ContractViolation("action " + std::to_string(a) + " outside [0, " + std::to_string(count) + ")");
  }
}

}  // namespace

// --- chain -----------------------------------------------------------------

ChainEnv::ChainEnv(ChainSpec spec) : n_(spec.n), horizon_(spec.horizon > 0 ? spec.horizon : 2 * spec.n) {
  if (spec.n < 2) throw ConfigError("env.params.n: chain needs at least 2 cells");
}

Observation ChainEnv::reset(std::uint64_t) {
  cell_ = 0;
  done_ = false;
  return Observation::discrete({cell_});
}

StepOutcome ChainEnv::step(ActionId action) {
  if (done_) throw ContractViolation("chain: step after terminal");
  check_action(action, 2);
  if (action == chain_action::kRight) {
    ++cell_;
  } else if (cell_ > 0) {
    --cell_;
  }
  const bool goal = cell_ == n_ - 1;
  done_ = goal;
  return StepOutcome{Observation::discrete({cell_}), goal ? 1.0 : 0.0, goal};
}

std::unique_ptr<Environment> chain_env(ChainSpec spec) { return std::make_unique<ChainEnv>(spec); }

// --- grid crossing ---------------------------------------------------------

GridLayout grid_layout_by_index(int index) {
  if (index < 0 || index >= kGridLayoutCount) throw ConfigError("grid layout index out of range");
  return GridLayout{1 + index / kGridSize, index % kGridSize};
}

GridLayout grid_layout_from_seed(std::uint64_t layout_seed) {
  return grid_layout_by_index(static_cast<int>(splitmix64(layout_seed) % kGridLayoutCount));
}

double grid_goal_reward(int step, int horizon) {
  return 1.0 - 0.9 * (static_cast<double>(step) / static_cast<double>(horizon));
}

GridCrossingEnv::GridCrossingEnv(GridCrossingSpec spec, GridLayout layout) : spec_(spec), layout_(layout) {
  if (spec.horizon < 1) throw ConfigError("env.params.horizon: must be positive");
  if (layout.wall_column < 1 || layout.wall_column > 5) throw ConfigError("grid wall_column must lie in [1, 5]");
  if (layout.hole_row < 0 || layout.hole_row > 6) throw ConfigError("grid hole_row must lie in [0, 6]");
}

bool GridCrossingEnv::is_wall(int x, int y) const { return x == layout_.wall_column && y != layout_.hole_row; }

Observation GridCrossingEnv::observe() const {
  return Observation::discrete({x_, y_, dir_, layout_.wall_column, layout_.hole_row});
}

Observation GridCrossingEnv::reset(std::uint64_t seed) {
  if (spec_.randomize_layout) layout_ = grid_layout_from_seed(seed);
  x_ = 0;
  y_ = 0;
  dir_ = 0;
  steps_ = 0;
  done_ = false;
  return observe();
}

void GridCrossingEnv::place_agent(int x, int y, int direction, int steps_taken) {
  x_ = x;
  y_ = y;
  dir_ = direction;
  steps_ = steps_taken;
  done_ = false;
}

StepOutcome GridCrossingEnv::step(ActionId action) {
  if (done_) throw ContractViolation("grid-crossing: step after terminal");
  check_action(action, 3);
  ++steps_;
  switch (action) {
    case grid_action::kTurnLeft:
      dir_ = (dir_ + 3) % kGridDirections;
      break;
    case grid_action::kTurnRight:
      dir_ = (dir_ + 1) % kGridDirections;
      break;
    default: {
      static constexpr int kDx[] = {1, 0, -1, 0};
      static constexpr int kDy[] = {0, 1, 0, -1};
      const int nx = x_ + kDx[dir_];
      const int ny = y_ + kDy[dir_];
      if (nx >= 0 && nx < kGridSize && ny >= 0 && ny < kGridSize && !is_wall(nx, ny)) {
        x_ = nx;
        y_ = ny;
      }
    }
  }
  double reward = 0.0;
  if (x_ == kGridSize - 1 && y_ == kGridSize - 1) {
    reward = grid_goal_reward(steps_, spec_.horizon);
    done_ = true;
  } else if (steps_ >= spec_.horizon) {
    done_ = true;
  }
  return StepOutcome{observe(), reward, done_};
}

std::unique_ptr<Environment> grid_crossing_env(GridCrossingSpec spec, std::uint64_t layout_seed) {
  return std::make_unique<GridCrossingEnv>(spec, grid_layout_from_seed(layout_seed));
}

// --- cartpole --------------------------------------------------------------

CartPoleState cartpole_dynamics(const CartPoleState& s, double force, const CartPoleSpec& spec) {
  const double total_mass = spec.cart_mass + spec.pole_mass;
  const double pole_mass_length = spec.pole_mass * spec.pole_half_length;
  const double cos_a = std::cos(s.angle);
  const double sin_a = std::sin(s.angle);
  const double temp = (force + pole_mass_length * s.angular_velocity * s.angular_velocity * sin_a) / total_mass;
  const double angular_acc =
      (spec.gravity * sin_a - cos_a * temp) /
      (spec.pole_half_length * (4.0 / 3.0 - spec.pole_mass * cos_a * cos_a / total_mass));
  const double acc = temp - pole_mass_length * angular_acc * cos_a / total_mass;

  CartPoleState next;
  next.position = s.position + spec.timestep * s.velocity;
  next.velocity = s.velocity + spec.timestep * acc;
  next.angle = s.angle + spec.timestep * s.angular_velocity;
  next.angular_velocity = s.angular_velocity + spec.timestep * angular_acc;
  return next;
}

CartPoleEnv::CartPoleEnv(CartPoleSpec spec) : spec_(spec) {
  if (spec.horizon < 1) throw ConfigError("env.params.horizon: must be positive");
  if (spec.timestep <= 0) throw ConfigError("env.params.timestep: must be positive");
}

Observation CartPoleEnv::observe() const {
  return Observation::real({state_.position, state_.velocity, state_.angle, state_.angular_velocity});
}

Observation CartPoleEnv::reset(std::uint64_t seed) {
  RngStream rng(seed, "cartpole-init", 0);
  state_.position = rng.uniform(-0.05, 0.05);
  state_.velocity = rng.uniform(-0.05, 0.05);
  state_.angle = rng.uniform(-0.05, 0.05);
  state_.angular_velocity = rng.uniform(-0.05, 0.05);
  steps_ = 0;
  done_ = false;
  return observe();
}

Observation CartPoleEnv::set_state(const CartPoleState& s) {
  state_ = s;
  done_ = false;
  return observe();
}

StepOutcome CartPoleEnv::step(ActionId action) {
  if (done_) throw ContractViolation("cartpole: step after terminal");
  check_action(action, 2);
  const double force = action == cartpole_action::kPushRight ? spec_.force_magnitude : -spec_.force_magnitude;
  state_ = cartpole_dynamics(state_, force, spec_);
  ++steps_;
  const bool fell = std::abs(state_.position) > spec_.position_threshold ||
                    std::abs(state_.angle) > spec_.angle_threshold;
  done_ = fell || steps_ >= spec_.horizon;
  return StepOutcome{observe(), 1.0, done_};
}

std::unique_ptr<Environment> cartpole_env(CartPoleSpec spec) { return std::make_unique<CartPoleEnv>(spec); }

}  // namespace polrank
