#include "artrack/errors.hpp"

namespace artrack {

FormatError::FormatError(const std::string& what, std::size_t offset)
    : Error(what), offset_(offset) {}

FormatError::FormatError(const std::string& what) : Error(what) {}

}  // namespace artrack
