#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "poisonkit/config.hpp"

namespace poisonkit {

enum class Role { Target, Benign };

struct TaskInstance {
    std::string task_id;
    std::string instance_id; // task_id + "-" + zero-padded index; unique within task
    std::string instruction;
    std::string input;
    std::string reference_output;
    Role role = Role::Benign;
};

struct Task {
    std::string task_id;
    std::string definition;
    std::vector<TaskInstance> instances;
    Role role = Role::Benign;
};

class TaskCollection {
public:
    void add(Task task);

    const Task& at(const std::string& task_id) const;
    bool contains(const std::string& task_id) const;
    // Tasks keyed (and therefore iterated) in sorted task_id order.
    const std::map<std::string, Task>& tasks() const { return tasks_; }
    std::vector<std::string> task_ids() const;
    const TaskInstance& instance(const std::string& instance_id) const;

private:
    std::map<std::string, Task> tasks_;
    std::map<std::string, const TaskInstance*> instance_index_;
};

// Loads one JSON file per task from `dir` (layout: `Definition`,
// `Instances[].input`, `Instances[].output`). The file stem becomes the
// task_id; tasks in target_tasks get Role::Target.
TaskCollection load_tasks(const std::string& dir,
                          const std::vector<std::string>& target_tasks);

struct SplitManifest {
    std::vector<std::string> train_benign;      // instance ids
    std::vector<std::string> train_poison_slots;
    std::vector<std::string> eval_target;
    std::vector<std::string> eval_benign;
    uint64_t seed = 0;
    std::string target_task;
    std::vector<std::string> train_benign_tasks;
    std::vector<std::string> eval_benign_tasks;
    // Where the poison slots were drawn from, recorded for auditability.
    std::string poison_slot_policy =
        "target-task instances disjoint from eval_target";
};

// Seeded, reproducible train/eval splits: train and eval instances are
// disjoint, eval-benign tasks are held out from train-benign tasks, and
// poison slots come from the target task excluding eval_target. Identical
// (collection, cfg) inputs give byte-identical manifests.
SplitManifest make_splits(const TaskCollection& collection, const RunConfig& cfg);

std::string manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const std::string& text);

} // namespace poisonkit
