#include "etdkf/triggers.hpp"

#include <algorithm>
#include <cmath>

namespace etdkf {

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_schedule(const AlphaSchedule& s) {
  if (!(s.c >= 0.0) || !(s.rate >= 0.0 && s.rate < 1.0))
    throw Error(ErrorCode::InvalidArgument, "alpha schedule needs c >= 0 and rate in [0,1)");
}
}  // namespace

double AlphaSchedule::at(long k) const { return c * std::pow(rate, double(k)); }

std::string trigger_name(const TriggerSpec& spec) {
  return std::visit(overloaded{[](const FullTransmission&) { return std::string("full"); },
                               [](const StaticTime&) { return std::string("static_time"); },
                               [](const StaticState&) { return std::string("static_state"); },
                               [](const Dynamic&) { return std::string("dynamic"); }},
                    spec);
}

void validate_trigger(const TriggerSpec& spec) {
  std::visit(overloaded{[](const FullTransmission&) {},
                        [](const StaticTime& s) {
                          if (!(s.c0 > 0.0) || !(s.c1 >= 0.0) || !(s.alpha > 0.0 && s.alpha < 1.0))
                            throw Error(ErrorCode::InvalidArgument,
                                        "static_time needs c0 > 0, c1 >= 0, alpha in (0,1)");
                        },
                        [](const StaticState& s) {
                          if (!(s.ell > 0.0)) throw Error(ErrorCode::InvalidArgument, "ell must be > 0");
                          check_schedule(s.schedule);
                        },
                        [](const Dynamic& s) {
                          if (!(s.ell > 0.0)) throw Error(ErrorCode::InvalidArgument, "ell must be > 0");
                          check_schedule(s.schedule);
                          if (!(s.chi0 > 0.0) || !(s.beta > 0.0 && s.beta < 1.0) ||
                              !(s.theta > 1.0 / s.beta))
                            throw Error(ErrorCode::InvalidArgument,
                                        "dynamic needs chi0 > 0, beta in (0,1), theta > 1/beta");
                        }},
             spec);
}

TriggerState initial_trigger_state(const TriggerSpec& spec) {
  TriggerState st;
  if (const auto* d = std::get_if<Dynamic>(&spec)) st.chi = d->chi0;
  return st;
}

double clip_qhat(const TriggerSpec& spec, double q) {
  if (const auto* s = std::get_if<StaticState>(&spec)) return std::min(q, s->ell);
  if (const auto* d = std::get_if<Dynamic>(&spec)) return std::min(q, d->ell);
  return q;
}

double threshold(const TriggerSpec& spec, TriggerState& state, long k, double qHat) {
  double h = std::visit(
      overloaded{[](const FullTransmission&) { return -1.0; },
                 [&](const StaticTime& s) { return s.c0 + s.c1 * std::pow(s.alpha, double(k)); },
                 [&](const StaticState& s) { return s.schedule.at(k) * qHat; },
                 [&](const Dynamic& s) { return state.chi / s.theta + s.schedule.at(k) * qHat; }},
      spec);
  state.lastThreshold = h;
  return h;
}

void advance(const TriggerSpec& spec, TriggerState& state, long k, double qHat,
             double epsNormSq) {
  if (const auto* d = std::get_if<Dynamic>(&spec))
    state.chi = d->beta * state.chi + d->schedule.at(k) * qHat - epsNormSq;
}

}  // namespace etdkf
