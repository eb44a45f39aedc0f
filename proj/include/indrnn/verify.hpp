#pragma once

#include <ostream>

namespace indrnn {

// Self-verification battery: independent oracles for the numeric kernels,
// hand-written gradients, the recurrence algebra, the constraint projection,
// parameter counting, and the data generators. Each property prints one
// [PASS]/[FAIL] line to `os`.
struct VerifyResult {
    int passed = 0;
    int failed = 0;
    bool ok() const { return failed == 0; }
};

VerifyResult run_verification(std::ostream& os);

}  // namespace indrnn
