// Shared synthetic-corpus helpers for tests.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fixtures {

namespace fs = std::filesystem;

inline std::string pad3(int v) {
    std::string s = std::to_string(v);
    while (s.size() < 3) s.insert(0, 1, '0');
    return s;
}

inline void write_task_file(const fs::path& dir, const std::string& task_id,
                            int instances, const std::string& definition) {
    nlohmann::json doc;
    doc["Definition"] = {definition};
    doc["Instances"] = nlohmann::json::array();
    for (int i = 0; i < instances; ++i) {
        doc["Instances"].push_back(
            {{"input", "input " + std::to_string(i) + " for " + task_id},
             {"output", {"reference output " + std::to_string(i) + " of " + task_id}}});
    }
    std::ofstream out(dir / (task_id + ".json"));
    out << doc.dump(1);
}

// A corpus with one target task plus `benign_tasks` benign tasks.
inline std::string make_task_dir(const std::string& name, int benign_tasks,
                                 int instances_per_benign,
                                 const std::string& target_task, int target_instances) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    write_task_file(dir, target_task, target_instances,
                    "Write a short story from the given title.");
    for (int t = 0; t < benign_tasks; ++t)
        write_task_file(dir, "task_benign_" + pad3(t), instances_per_benign,
                        "Answer the question about item " + pad3(t) + ".");
    return dir.string();
}

inline std::string temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

} // namespace fixtures
