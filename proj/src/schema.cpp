#include "patchbag/schema.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "patchbag/error.hpp"

namespace patchbag {

namespace {

void check_name(const std::string& name, const std::string& what) {
  if (name.empty()) throw ConfigError(what + " name is empty");
  if (name.find_first_of("\t\n\r") != std::string::npos)
    throw ConfigError(what + " name '" + name + "' contains a tab or newline");
}

}  // namespace

std::size_t TagSchema::max_class_count() const {
  std::size_t best = 0;
  for (const auto& t : tasks) best = std::max(best, t.classes.size());
  return best;
}

void TagSchema::validate() const {
  if (tasks.empty()) throw ConfigError("schema needs at least one task");
  std::set<std::string> task_names;
  for (const auto& task : tasks) {
    check_name(task.name, "task");
    if (!task_names.insert(task.name).second)
      throw ConfigError("duplicate task name '" + task.name + "'");
    if (task.classes.size() < 2)
      throw ConfigError("task '" + task.name + "' needs at least 2 classes");
    std::set<std::string> class_names;
    for (const auto& c : task.classes) {
      check_name(c, "class");
      if (!class_names.insert(c).second)
        throw ConfigError("duplicate class '" + c + "' in task '" + task.name + "'");
    }
  }
}

TagSchema TagSchema::histology() {
  return TagSchema{{
      {"stain", {"H&E", "IHC", "Special"}},
      {"species", {"Human", "Monkey", "Mouse", "Pig", "Rat", "Zebrafish"}},
      {"organ",
       {"Bone", "Brain", "Breast", "Cecum", "Colon", "Heart", "Skin", "Skin Dorsal", "Intestine",
        "Kidney", "Liver", "Lung", "Pancreas", "Prostate", "Spleen", "Skin Ventral"}},
  }};
}

std::string describe(const TagSchema& schema) {
  std::ostringstream out;
  for (const auto& task : schema.tasks) {
    out << task.name << ':';
    for (std::size_t i = 0; i < task.classes.size(); ++i) out << (i ? ", " : " ") << task.classes[i];
    out << '\n';
  }
  return out.str();
}

}  // namespace patchbag
