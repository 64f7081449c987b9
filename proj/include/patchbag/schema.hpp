#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace patchbag {

struct TagTask {
  std::string name;
  std::vector<std::string> classes;

  bool operator==(const TagTask&) const = default;
};

// The K tagging tasks of a dataset, each a single-label multi-class problem.
struct TagSchema {
  std::vector<TagTask> tasks;

  std::size_t task_count() const noexcept { return tasks.size(); }
  std::size_t class_count(std::size_t task) const { return tasks.at(task).classes.size(); }
  std::size_t max_class_count() const;

  // Throws ConfigError unless K >= 1, every task has >= 2 classes, and names
  // are non-empty, unique, and free of tab/newline characters.
  void validate() const;

  // Stain (3), species (6) and organ (16) tags.
  static TagSchema histology();

  bool operator==(const TagSchema&) const = default;
};

// One line per task, e.g. "stain: H&E, IHC, Special".
std::string describe(const TagSchema& schema);

}  // namespace patchbag
