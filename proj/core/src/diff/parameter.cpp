#include "mfn/diff/parameter.hpp"

namespace mfn::diff {

Parameter::Parameter(std::string name_, Matrix init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(value.rows(), value.cols()),
      adam_m(value.rows(), value.cols()),
      adam_v(value.rows(), value.cols()) {}

void Parameter::zero_grad() { grad.fill(0.0); }

void Parameter::reset_optimizer() {
  adam_m.fill(0.0);
  adam_v.fill(0.0);
  step_count = 0;
}

}  // namespace mfn::diff
