#pragma once

#include <vector>

#include <json.hpp>

#include "loopsoup/linalg.hpp"

namespace loopsoup {

/// Piecewise-constant path on [0, length]: starts at `root`, jumps to
/// jump_states[i] at jump_times[i]. A loop ends where it started; bridge
/// segments produced by the samplers may end elsewhere.
struct Loop {
  int root = 0;
  double length = 0.0;
  std::vector<double> jump_times;
  std::vector<int> jump_states;

  int jumps() const { return static_cast<int>(jump_times.size()); }
  bool is_point() const { return jump_times.empty(); }
  int end_state() const { return jump_states.empty() ? root : jump_states.back(); }
  int state_at(double s) const;

  /// Local time per vertex; sums to length.
  Vector local_time(int num_states) const;
  void add_local_time(Vector& field) const;

  /// Throws ValidationError if times are not increasing inside (0, length),
  /// consecutive states repeat, a state is out of range or, for loops, the
  /// end differs from the root.
  void validate(int num_states, bool closed = true) const;
};

nlohmann::json loop_to_json(const Loop& loop);
Loop loop_from_json(const nlohmann::json& doc);

}  // namespace loopsoup
