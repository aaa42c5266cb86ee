// Self-contained gradient audit: finite-difference checks for every
// differentiable op and for the full downsample -> proxy -> upsample pipeline
// on a one-image micro configuration. Deterministic; used by the gradcheck
// command and the acceptance suite.
#pragma once

#include <string>
#include <vector>

namespace nwrap {

struct AuditLine {
  std::string name;
  double max_rel_err = 0;
  double tolerance = 0;
  bool pass = false;
};

std::vector<AuditLine> gradient_audit();

}  // namespace nwrap
