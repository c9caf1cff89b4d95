#include "loopsoup/path.hpp"

#include <algorithm>

#include "loopsoup/error.hpp"

namespace loopsoup {

int Loop::state_at(double s) const {
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), s);
  const auto k = it - jump_times.begin();
  return k == 0 ? root : jump_states[static_cast<std::size_t>(k - 1)];
}

Vector Loop::local_time(int num_states) const {
  Vector out = Vector::Zero(num_states);
  add_local_time(out);
  return out;
}

void Loop::add_local_time(Vector& field) const {
  double last = 0.0;
  int state = root;
  for (std::size_t i = 0; i < jump_times.size(); ++i) {
    field(state) += jump_times[i] - last;
    last = jump_times[i];
    state = jump_states[i];
  }
  field(state) += length - last;
}

void Loop::validate(int num_states, bool closed) const {
  if (!(length > 0.0)) throw ValidationError("loop length must be positive");
  if (jump_times.size() != jump_states.size()) throw ValidationError("loop jump record is ragged");
  if (root < 0 || root >= num_states) throw ValidationError("loop root out of range");
  double last = 0.0;
  int state = root;
  for (std::size_t i = 0; i < jump_times.size(); ++i) {
    if (!(jump_times[i] > last) || !(jump_times[i] < length))
      throw ValidationError("loop jump times must increase inside (0, length)");
    if (jump_states[i] < 0 || jump_states[i] >= num_states) throw ValidationError("loop state out of range");
    if (jump_states[i] == state) throw ValidationError("loop has a jump to the same state");
    last = jump_times[i];
    state = jump_states[i];
  }
  if (closed && state != root) throw ValidationError("loop does not return to its root");
}

nlohmann::json loop_to_json(const Loop& loop) {
  return {{"root", loop.root},
          {"length", loop.length},
          {"jump_times", loop.jump_times},
          {"jump_states", loop.jump_states}};
}

Loop loop_from_json(const nlohmann::json& doc) {
  Loop l;
  l.root = doc.at("root").get<int>();
  l.length = doc.at("length").get<double>();
  l.jump_times = doc.at("jump_times").get<std::vector<double>>();
  l.jump_states = doc.at("jump_states").get<std::vector<int>>();
  return l;
}

}  // namespace loopsoup
