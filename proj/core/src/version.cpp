#include "perclab/common.hpp"

namespace perclab {

const char* version() noexcept { return "1.0.0"; }

}  // namespace perclab
