#pragma once

#include "etdkf/types.hpp"

#include <string>
#include <variant>

namespace etdkf {

struct FullTransmission {};

/// h = c0 + c1·αᵏ
struct StaticTime {
  double c0 = 5.0;
  double c1 = 5.0;
  double alpha = 0.8;
};

/// α(k) = c·rateᵏ
struct AlphaSchedule {
  double c = 1.0;
  double rate = 0.9;
  double at(long k) const;
};

/// h = α(k)·q̂
struct StaticState {
  double ell = 2.0;
  AlphaSchedule schedule;
};

/// h = χ/θ + α(k)·q̂,  χ' = βχ + α(k)·q̂ − ‖ε‖²
struct Dynamic {
  double ell = 2.0;
  AlphaSchedule schedule;
  double beta = 0.9;
  double theta = 2.0;
  double chi0 = 5.0;
};

using TriggerSpec = std::variant<FullTransmission, StaticTime, StaticState, Dynamic>;

std::string trigger_name(const TriggerSpec& spec);
void validate_trigger(const TriggerSpec& spec);

struct TriggerState {
  double chi = 0.0;
  double lastThreshold = 0.0;
};

TriggerState initial_trigger_state(const TriggerSpec& spec);

/// Threshold in force at step k. Does not modify the dynamic variable.
double threshold(const TriggerSpec& spec, TriggerState& state, long k, double qHat);

/// Dynamic variant only: χ' = βχ + α(k)·q̂ − ‖ε‖².
void advance(const TriggerSpec& spec, TriggerState& state, long k, double qHat,
             double epsNormSq);

/// true iff epsNormSq − h ≥ 0.
inline bool decide(double epsNormSq, double h) { return epsNormSq - h >= 0.0; }

/// min(q, ℓ) for state-based variants, q otherwise.
double clip_qhat(const TriggerSpec& spec, double q);

}  // namespace etdkf
