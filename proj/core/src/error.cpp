#include "loopsoup/error.hpp"

namespace loopsoup {

ValidationError::ValidationError(const std::string& what) : std::invalid_argument(what) {}

NumericError::NumericError(const std::string& what) : std::runtime_error(what) {}

}  // namespace loopsoup
