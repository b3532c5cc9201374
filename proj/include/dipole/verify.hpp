#pragma once

#include <functional>
#include <iosfwd>

#include "dipole/util.hpp"

namespace dipole {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;  // worst observed value
  double bound = 0.0;     // the threshold it was held against
  std::string detail;     // what was measured, human-oriented
  double seconds = 0.0;
};

// Monotone radial-profile check, with the profile injectable so the
// machinery itself is testable against a broken profile.
CheckResult check_tau_profile(const std::function<double(double)>& profile);

// The named oracle suite, sized for seconds per check. `filter` keeps checks
// whose name contains the substring; empty keeps all.
std::vector<CheckResult> run_verification(const std::string& filter = "", int workers = 0);

// One JSON object per line, then a human-readable summary. Returns true iff
// every result passed.
bool report_verification(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace dipole
