#pragma once

// Task description files (.task.json): a scene, its randomization, outcome
// predicates and task constants. Human-writable JSON with a format_version.

#include "dexforge/task.hpp"

#include <filesystem>
#include <string>

namespace dexforge::sim {

inline constexpr int kTaskFormatVersion = 1;

std::string task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const std::string& text);

void save_task(const TaskSpec& task, const std::filesystem::path& path);
TaskSpec load_task(const std::filesystem::path& path);

/// A built-in task name (optionally "-ood") or a path to a task file.
TaskSpec resolve_task(const std::string& name_or_path);

/// Overrides a task constant. Predicate params sharing the key follow, so a
/// changed setpoint is also what the outcome is judged against.
void set_param(TaskSpec& task, const std::string& key, double value);

}  // namespace dexforge::sim
