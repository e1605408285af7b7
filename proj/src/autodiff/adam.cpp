#include "mtnas/autodiff/adam.hpp"

#include <cmath>

#include "mtnas/errors.hpp"

namespace mtnas::ad {

void Adam::step(std::span<Parameter* const> params) {
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  for (Parameter* p : params) {
    for (double g : p->grad) {
      if (!std::isfinite(g)) throw NumericError("Adam: non-finite gradient in parameter " + p->name);
    }
    auto& [name, st] = state_[p];
    if (st.m.size() != p->size()) {
      name = p->name;
      st.m.assign(p->size(), 0.0);
      st.v.assign(p->size(), 0.0);
      st.steps = 0;
    }
    ++st.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.steps));
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
      st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
      const double mhat = st.m[i] / c1;
      const double vhat = st.v[i] / c2;
      p->value[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
      if (!std::isfinite(p->value[i])) throw NumericError("Adam: parameter " + p->name + " became non-finite");
    }
  }
}

std::unordered_map<std::string, Adam::State> Adam::export_state() const {
  std::unordered_map<std::string, State> out;
  for (const auto& [param, entry] : state_) out[entry.first] = entry.second;
  return out;
}

void Adam::import_state(const std::unordered_map<std::string, State>& state,
                        std::span<Parameter* const> params) {
  state_.clear();
  for (Parameter* p : params) {
    auto it = state.find(p->name);
    if (it == state.end()) continue;
    if (it->second.m.size() != p->size()) {
      throw ContractError("Adam::import_state: size mismatch for " + p->name);
    }
    state_[p] = {p->name, it->second};
  }
}

}  // namespace mtnas::ad
