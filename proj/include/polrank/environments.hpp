#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>

#include "polrank/core.hpp"

namespace polrank {

// ---------------------------------------------------------------------------
// Chain: cells 0..n-1, start at 0, goal at n-1.
// Actions Left=0 (clamped at 0) and Right=1. Entering the goal pays 1 and
// terminates; every other step pays 0.
// ---------------------------------------------------------------------------
struct ChainSpec {
  int n = 4;
  int horizon = 0;  // 0 selects 2 * n
};

namespace chain_action {
inline constexpr ActionId kLeft = 0;
inline constexpr ActionId kRight = 1;
}  // namespace chain_action

class ChainEnv : public Environment {
 public:
  explicit ChainEnv(ChainSpec spec);

  std::string name() const override { return "chain"; }
  int action_count() const override { return 2; }
  int default_horizon() const override { return horizon_; }
  Observation::Kind observation_kind() const override { return Observation::Kind::kDiscrete; }
  bool deterministic() const override { return true; }

  Observation reset(std::uint64_t seed) override;
  StepOutcome step(ActionId action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<ChainEnv>(*this); }

  int cell() const { return cell_; }
  int size() const { return n_; }

 private:
  int n_;
  int horizon_;
  int cell_ = 0;
  bool done_ = false;
};

std::unique_ptr<Environment> chain_env(ChainSpec spec);

// ---------------------------------------------------------------------------
// Grid crossing: a 7x7 room split by a vertical wall with a single hole.
// The agent starts at (0,0) facing right; the goal is (6,6). Observations are
// (x, y, direction, wall_column, hole_row); directions are 0=right, 1=down,
// 2=left, 3=up. Reaching the goal at step t pays 1 - 0.9 * t / horizon.
// ---------------------------------------------------------------------------
struct GridLayout {
  int wall_column = 3;  // in [1, 5]
  int hole_row = 3;     // in [0, 6]
  bool operator==(const GridLayout&) const = default;
};

struct GridCrossingSpec {
  int horizon = 322;
  // When set, every reset draws a fresh layout from the episode seed;
  // otherwise the layout chosen at construction is kept.
  bool randomize_layout = false;
};

namespace grid_action {
inline constexpr ActionId kTurnLeft = 0;
inline constexpr ActionId kTurnRight = 1;
inline constexpr ActionId kForward = 2;
}  // namespace grid_action

inline constexpr int kGridSize = 7;
inline constexpr int kGridDirections = 4;
inline constexpr int kGridLayoutCount = 35;

GridLayout grid_layout_from_seed(std::uint64_t layout_seed);
// Layout number i in [0, 35), enumerating wall columns then hole rows.
GridLayout grid_layout_by_index(int index);

class GridCrossingEnv : public Environment {
 public:
  GridCrossingEnv(GridCrossingSpec spec, GridLayout layout);

  std::string name() const override { return "grid-crossing"; }
  int action_count() const override { return 3; }
  int default_horizon() const override { return spec_.horizon; }
  Observation::Kind observation_kind() const override { return Observation::Kind::kDiscrete; }
  bool deterministic() const override { return !spec_.randomize_layout; }

  Observation reset(std::uint64_t seed) override;
  StepOutcome step(ActionId action) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<GridCrossingEnv>(*this);
  }

  const GridLayout& layout() const { return layout_; }
  bool is_wall(int x, int y) const;
  // Test hook: place the agent without stepping.
  void place_agent(int x, int y, int direction, int steps_taken);

 private:
  Observation observe() const;

  GridCrossingSpec spec_;
  GridLayout layout_;
  int x_ = 0, y_ = 0, dir_ = 0;
  int steps_ = 0;
  bool done_ = false;
};

std::unique_ptr<Environment> grid_crossing_env(GridCrossingSpec spec, std::uint64_t layout_seed);
double grid_goal_reward(int step, int horizon);

// ---------------------------------------------------------------------------
// CartPole with explicit Euler integration. Constants default to the common
// reference implementation; they are fields so tests can pin them.
// ---------------------------------------------------------------------------
struct CartPoleSpec {
  double gravity = 9.8;
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_half_length = 0.5;
  double force_magnitude = 10.0;
  double timestep = 0.02;
  double position_threshold = 2.4;
  double angle_threshold = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  int horizon = 200;
};

namespace cartpole_action {
inline constexpr ActionId kPushLeft = 0;
inline constexpr ActionId kPushRight = 1;
}  // namespace cartpole_action

struct CartPoleState {
  double position = 0.0;
  double velocity = 0.0;
  double angle = 0.0;
  double angular_velocity = 0.0;
  bool operator==(const CartPoleState&) const = default;
};

// One Euler step under an arbitrary horizontal force.
CartPoleState cartpole_dynamics(const CartPoleState& s, double force, const CartPoleSpec& spec);

class CartPoleEnv : public Environment {
 public:
  explicit CartPoleEnv(CartPoleSpec spec);

  std::string name() const override { return "cartpole"; }
  int action_count() const override { return 2; }
  int default_horizon() const override { return spec_.horizon; }
  Observation::Kind observation_kind() const override { return Observation::Kind::kReal; }

  // Each state component is drawn uniformly from [-0.05, 0.05].
  Observation reset(std::uint64_t seed) override;
  StepOutcome step(ActionId action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CartPoleEnv>(*this); }

  const CartPoleState& state() const { return state_; }
  // Test hook: overwrite the physical state after reset.
  Observation set_state(const CartPoleState& s);

 private:
  Observation observe() const;

  CartPoleSpec spec_;
  CartPoleState state_;
  int steps_ = 0;
  bool done_ = false;
};

std::unique_ptr<Environment> cartpole_env(CartPoleSpec spec);

}  // namespace polrank
