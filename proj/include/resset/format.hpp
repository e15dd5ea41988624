#pragma once

#include <string>

namespace resset {

// Shortest decimal text that reads back to the same double.
std::string format_real(double v);

}  // namespace resset
