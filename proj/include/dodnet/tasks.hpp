#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dodnet {

struct TaskDescriptor {
  std::size_t id = 0;
  std::string name;
  bool organ_labeled = false;
  bool tumor_labeled = false;
};

/// The seven partially labeled tasks: Liver, Kidney, HepaticVessel, Pancreas
/// (organ + tumor), Colon and Lung (tumor only), Spleen (organ only).
const std::vector<TaskDescriptor>& default_tasks();

/// TaskError when id is outside the registry.
const TaskDescriptor& task_by_id(std::size_t id);

}  // namespace dodnet
