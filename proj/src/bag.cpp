#include "patchbag/bag.hpp"

#include <cmath>

#include "patchbag/error.hpp"

namespace patchbag {

void Dataset::validate() const {
  schema.validate();
  for (const auto& bag : bags) {
    if (bag.patches == 0) throw EmptyBagError("bag " + bag.id + " has no patches");
    if (bag.dim != dim)
      throw DimensionError("bag " + bag.id + " has feature width " + std::to_string(bag.dim) +
                           ", dataset declares " + std::to_string(dim));
    if (bag.features.size() != bag.patches * bag.dim)
      throw IntegrityError("bag " + bag.id + " carries " + std::to_string(bag.features.size()) +
                           " values, expected " + std::to_string(bag.patches * bag.dim));
    for (double v : bag.features)
      if (!std::isfinite(v)) throw NumericError("bag " + bag.id + " has a non-finite feature");
    if (bag.labels.size() != schema.task_count())
      throw ContractError("bag " + bag.id + " has " + std::to_string(bag.labels.size()) + " labels for " +
                          std::to_string(schema.task_count()) + " tasks");
    for (std::size_t k = 0; k < bag.labels.size(); ++k)
      if (bag.labels[k] >= schema.class_count(k))
        throw ContractError("bag " + bag.id + " label " + std::to_string(bag.labels[k]) +
                            " out of range for task '" + schema.tasks[k].name + "'");
  }
}

}  // namespace patchbag
