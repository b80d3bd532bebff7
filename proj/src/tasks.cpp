#include "dodnet/tasks.hpp"

#include "dodnet/error.hpp"

namespace dodnet {

const std::vector<TaskDescriptor>& default_tasks() {
  static const std::vector<TaskDescriptor> tasks{
      {0, "Liver", true, true},    {1, "Kidney", true, true}, {2, "HepaticVessel", true, true},
      {3, "Pancreas", true, true}, {4, "Colon", false, true}, {5, "Lung", false, true},
      {6, "Spleen", true, false},
  };
  return tasks;
}

const TaskDescriptor& task_by_id(std::size_t id) {
  const auto& t = default_tasks();
  if (id >= t.size()) {
    throw TaskError("unknown task id " + std::to_string(id) + " (registry has " + std::to_string(t.size()) + ")");
  }
  return t[id];
}

}  // namespace dodnet
