#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace pgate {

struct ToolCall;

struct ItemRecord {
    std::string name;
    std::string description;
    std::optional<double> price;   // gold
    std::optional<double> attack;
    std::vector<std::string> tags;

    bool operator==(const ItemRecord&) const = default;
};

struct QuestRecord {
    std::string name;
    std::string description;
    std::string status;

    bool operator==(const QuestRecord&) const = default;
};

struct InventoryEntry {
    std::string item;
    bool equipped = false;

    bool operator==(const InventoryEntry&) const = default;
};

// Per-episode game world backing the sandboxed tool executor.
struct WorldDb {
    std::vector<ItemRecord> items;
    std::vector<QuestRecord> quests;
    std::vector<InventoryEntry> inventory;

    const ItemRecord* find_item(const std::string& name) const;
    const QuestRecord* find_quest(const std::string& name) const;
    const InventoryEntry* find_inventory(const std::string& name) const;

    bool operator==(const WorldDb&) const = default;
};

// Runs one accepted/repaired call against the world. Reads leave the world
// untouched; equip/sell/select_quest return an updated copy. Unknown item
// names produce a "not found: <name>" result, never an error; ExecutorError
// is reserved for a corrupt WorldDb.
std::pair<std::string, WorldDb> execute(const ToolCall& call, const WorldDb& world);

WorldDb world_from_json(const nlohmann::ordered_json& j, const std::string& path);
nlohmann::ordered_json world_to_json(const WorldDb& world);

}  // namespace pgate
