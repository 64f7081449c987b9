#include "patchbag/error.hpp"

namespace patchbag {

int exit_code(const std::exception& error) noexcept {
  const auto* e = &error;
  if (dynamic_cast<const ConfigError*>(e) || dynamic_cast<const SchemaMismatchError*>(e) ||
      dynamic_cast<const DimensionError*>(e))
    return 2;
  if (dynamic_cast<const IoError*>(e)) return 3;
  if (dynamic_cast<const NumericError*>(e) || dynamic_cast<const IntegrityError*>(e) ||
      dynamic_cast<const ParseError*>(e) || dynamic_cast<const InsufficientForegroundError*>(e) ||
      dynamic_cast<const DegenerateInputError*>(e) || dynamic_cast<const EmptyBagError*>(e) ||
      dynamic_cast<const SizeError*>(e))
    return 4;
  return 1;
}

}  // namespace patchbag
