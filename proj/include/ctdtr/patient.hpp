#pragma once

#include <string>
#include <vector>

#include "ctdtr/common.hpp"
#include "ctdtr/mtpp.hpp"

namespace ctdtr {

// One patient's record: baseline covariates (standardized reals or 0/1
// indicators), the visit/dose sequence starting at t = 0, lab values aligned
// one-to-one with visits, and the possibly censored survival outcome.
struct PatientRecord {
  std::string id;
  Vec x;
  std::vector<VisitEvent> events;
  std::vector<double> labs;
  double t_tilde = 0.0;
  int delta = 0;  // 1 = event observed, 0 = censored

  void validate() const {
    require(!events.empty(), "PatientRecord " + id + ": no events");
    require(events.front().t == 0.0, "PatientRecord " + id + ": first event not at t=0");
    require(labs.size() == events.size(), "PatientRecord " + id + ": labs/events misaligned");
    for (std::size_t j = 1; j < events.size(); ++j)
      require(events[j].t > events[j - 1].t,
              "PatientRecord " + id + ": event times not strictly increasing");
    require(t_tilde > 0.0, "PatientRecord " + id + ": t_tilde must be > 0");
    require(events.back().t <= t_tilde,
            "PatientRecord " + id + ": event after t_tilde");
    require(delta == 0 || delta == 1, "PatientRecord " + id + ": delta must be 0/1");
  }
};

enum class ModelVariant { kJoint, kSls };

}  // namespace ctdtr
