#include "pgate/world.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string>

#include "pgate/episode.hpp"

namespace pgate {

using json = nlohmann::ordered_json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool icontains(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return true;
    return lower(haystack).find(lower(needle)) != std::string::npos;
}

std::string format_gold(double v) {
    if (v == std::floor(v) && std::abs(v) < 9.0e15) {
        return std::to_string(static_cast<long long>(v));
    }
    std::string s = std::to_string(v);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

// Lookup value for tools keyed by a single name-like argument. Prefers the
// canonical key, then falls back to the first string argument so slightly
// different schemas still execute.
std::string name_argument(const ToolCall& call, const std::string& preferred_key) {
    if (auto it = call.arguments.find(preferred_key); it != call.arguments.end()) {
        if (const auto* s = std::get_if<std::string>(&it->second)) return *s;
    }
    for (const auto& [key, value] : call.arguments) {
        if (const auto* s = std::get_if<std::string>(&value)) return *s;
    }
    return "";
}

std::vector<std::string> list_argument(const ToolCall& call, const std::string& preferred_key) {
    if (auto it = call.arguments.find(preferred_key); it != call.arguments.end()) {
        if (const auto* list = std::get_if<std::vector<std::string>>(&it->second)) return *list;
        if (const auto* s = std::get_if<std::string>(&it->second)) return {*s};
    }
    for (const auto& [key, value] : call.arguments) {
        if (const auto* list = std::get_if<std::vector<std::string>>(&value)) return *list;
    }
    std::string single = name_argument(call, preferred_key);
    if (!single.empty()) return {single};
    return {};
}

void check_consistency(const WorldDb& world) {
    for (const auto& entry : world.inventory) {
        if (!world.find_item(entry.item)) {
            throw ExecutorError("corrupt WorldDb: inventory references unknown item '" +
                                entry.item + "'");
        }
    }
}

std::string basic_info_text(const ItemRecord& item) {
    std::string out = item.name + ": " + item.description;
    if (item.price) out += " Price: " + format_gold(*item.price) + " gold.";
    if (item.attack) out += " Attack: " + format_gold(*item.attack) + ".";
    if (!item.tags.empty()) {
        out += " Tags: ";
        for (std::size_t i = 0; i < item.tags.size(); ++i) {
            if (i) out += ", ";
            out += item.tags[i];
        }
        out += ".";
    }
    return out;
}

}  // namespace

const ItemRecord* WorldDb::find_item(const std::string& name) const {
    for (const auto& item : items) {
        if (item.name == name) return &item;
    }
    return nullptr;
}

const QuestRecord* WorldDb::find_quest(const std::string& name) const {
    for (const auto& quest : quests) {
        if (quest.name == name) return &quest;
    }
    return nullptr;
}

const InventoryEntry* WorldDb::find_inventory(const std::string& name) const {
    for (const auto& entry : inventory) {
        if (entry.item == name) return &entry;
    }
    return nullptr;
}

std::pair<std::string, WorldDb> execute(const ToolCall& call, const WorldDb& world) {
    check_consistency(world);

    if (call.name == "check_basic_info") {
        std::string name = name_argument(call, "item_name");
        if (const auto* item = world.find_item(name)) {
            return {basic_info_text(*item), world};
        }
        if (const auto* quest = world.find_quest(name)) {
            return {quest->name + ": " + quest->description + " Status: " + quest->status + ".",
                    world};
        }
        return {"not found: " + name, world};
    }

    if (call.name == "check_price") {
        std::string name = name_argument(call, "item_name");
        if (const auto* item = world.find_item(name)) {
            if (item->price) return {item->name + " costs " + format_gold(*item->price) + " gold.", world};
            return {item->name + " has no listed price.", world};
        }
        return {"not found: " + name, world};
    }

    if (call.name == "check_attack") {
        std::string name = name_argument(call, "item_name");
        if (const auto* item = world.find_item(name)) {
            if (item->attack) return {item->name + " has attack " + format_gold(*item->attack) + ".", world};
            return {item->name + " has no attack rating.", world};
        }
        return {"not found: " + name, world};
    }

    if (call.name == "search_item") {
        std::string query = name_argument(call, "item_description");
        std::vector<std::string> hits;
        for (const auto& item : world.items) {
            bool match = icontains(item.description, query);
            for (const auto& tag : item.tags) match = match || icontains(tag, query);
            if (match) hits.push_back(item.name);
        }
        if (hits.empty()) return {"not found: no items match '" + query + "'", world};
        std::string out = "Found: ";
        for (std::size_t i = 0; i < hits.size(); ++i) {
            if (i) out += ", ";
            out += hits[i];
        }
        out += ".";
        return {out, world};
    }

    if (call.name == "equip") {
        std::string name = name_argument(call, "item_name");
        WorldDb next = world;
        for (auto& entry : next.inventory) {
            if (entry.item == name) {
                if (entry.equipped) return {name + " is already equipped.", world};
                entry.equipped = true;
                return {name + " is now equipped.", next};
            }
        }
        return {"not found: " + name + " is not in the inventory.", world};
    }

    if (call.name == "sell") {
        auto names = list_argument(call, "item_name");
        if (names.empty()) return {"not found: no item named for sale.", world};
        WorldDb next = world;
        std::string out;
        for (const auto& name : names) {
            if (!out.empty()) out += " ";
            if (!next.find_item(name)) {
                out += "not found: " + name + ".";
            } else if (next.find_inventory(name)) {
                out += name + " is already in your inventory.";
            } else {
                next.inventory.push_back({name, false});
                out += "Sold " + name + ".";
            }
        }
        return {out, next};
    }

    if (call.name == "select_quest") {
        std::string name = name_argument(call, "quest_name");
        WorldDb next = world;
        for (auto& quest : next.quests) {
            if (quest.name == name) {
                if (quest.status == "accepted") return {"Quest " + name + " is already accepted.", world};
                quest.status = "accepted";
                return {"Quest " + name + " accepted.", next};
            }
        }
        return {"not found: " + name, world};
    }

    // Declared but outside the sandbox vocabulary; a result the model can
    // converse about, not an error.
    return {"tool '" + call.name + "' is not available in this world.", world};
}

WorldDb world_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "items" && it.key() != "quests" && it.key() != "inventory") {
            throw SchemaError(path + ": unknown field '" + it.key() + "'");
        }
    }
    auto str_field = [&](const json& obj, const char* key, const std::string& p) {
        auto it = obj.find(key);
        if (it == obj.end()) throw SchemaError(p + ": missing field '" + std::string(key) + "'");
        if (!it->is_string()) throw SchemaError(p + "." + key + ": expected a string");
        return it->get<std::string>();
    };

    WorldDb world;
    auto items_it = j.find("items");
    if (items_it == j.end()) throw SchemaError(path + ": missing field 'items'");
    if (!items_it->is_array()) throw SchemaError(path + ".items: expected an array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < items_it->size(); ++i) {
        std::string p = path + ".items[" + std::to_string(i) + "]";
        const json& ij = (*items_it)[i];
        if (!ij.is_object()) throw SchemaError(p + ": expected an object");
        for (auto it = ij.begin(); it != ij.end(); ++it) {
            const std::string& k = it.key();
            if (k != "name" && k != "description" && k != "price" && k != "attack" && k != "tags") {
                throw SchemaError(p + ": unknown field '" + k + "'");
            }
        }
        ItemRecord item;
        item.name = str_field(ij, "name", p);
        if (!names.insert(item.name).second) {
            throw SchemaError(p + ".name: duplicate item '" + item.name + "'");
        }
        item.description = str_field(ij, "description", p);
        if (auto it = ij.find("price"); it != ij.end()) {
            if (!it->is_number()) throw SchemaError(p + ".price: expected a number");
            item.price = it->get<double>();
        }
        if (auto it = ij.find("attack"); it != ij.end()) {
            if (!it->is_number()) throw SchemaError(p + ".attack: expected a number");
            item.attack = it->get<double>();
        }
        if (auto it = ij.find("tags"); it != ij.end()) {
            if (!it->is_array()) throw SchemaError(p + ".tags: expected an array");
            for (std::size_t t = 0; t < it->size(); ++t) {
                if (!(*it)[t].is_string()) throw SchemaError(p + ".tags: expected strings");
                item.tags.push_back((*it)[t].get<std::string>());
            }
        }
        world.items.push_back(std::move(item));
    }

    auto quests_it = j.find("quests");
    if (quests_it == j.end()) throw SchemaError(path + ": missing field 'quests'");
    if (!quests_it->is_array()) throw SchemaError(path + ".quests: expected an array");
    for (std::size_t i = 0; i < quests_it->size(); ++i) {
        std::string p = path + ".quests[" + std::to_string(i) + "]";
        const json& qj = (*quests_it)[i];
        if (!qj.is_object()) throw SchemaError(p + ": expected an object");
        for (auto it = qj.begin(); it != qj.end(); ++it) {
            const std::string& k = it.key();
            if (k != "name" && k != "description" && k != "status") {
                throw SchemaError(p + ": unknown field '" + k + "'");
            }
        }
        world.quests.push_back({str_field(qj, "name", p), str_field(qj, "description", p),
                                str_field(qj, "status", p)});
    }

    auto inv_it = j.find("inventory");
    if (inv_it == j.end()) throw SchemaError(path + ": missing field 'inventory'");
    if (!inv_it->is_array()) throw SchemaError(path + ".inventory: expected an array");
    for (std::size_t i = 0; i < inv_it->size(); ++i) {
        std::string p = path + ".inventory[" + std::to_string(i) + "]";
        const json& ej = (*inv_it)[i];
        if (!ej.is_object()) throw SchemaError(p + ": expected an object");
        for (auto it = ej.begin(); it != ej.end(); ++it) {
            if (it.key() != "item" && it.key() != "equipped") {
                throw SchemaError(p + ": unknown field '" + it.key() + "'");
            }
        }
        InventoryEntry entry;
        entry.item = str_field(ej, "item", p);
        if (auto it = ej.find("equipped"); it != ej.end()) {
            if (!it->is_boolean()) throw SchemaError(p + ".equipped: expected a boolean");
            entry.equipped = it->get<bool>();
        }
        world.inventory.push_back(std::move(entry));
    }
    return world;
}

json world_to_json(const WorldDb& world) {
    json items = json::array();
    for (const auto& item : world.items) {
        json ij{{"name", item.name}, {"description", item.description}};
        if (item.price) ij["price"] = *item.price;
        if (item.attack) ij["attack"] = *item.attack;
        ij["tags"] = item.tags;
        items.push_back(std::move(ij));
    }
    json quests = json::array();
    for (const auto& quest : world.quests) {
        quests.push_back(json{{"name", quest.name},
                              {"description", quest.description},
                              {"status", quest.status}});
    }
    json inventory = json::array();
    for (const auto& entry : world.inventory) {
        inventory.push_back(json{{"item", entry.item}, {"equipped", entry.equipped}});
    }
    return json{{"items", std::move(items)},
                {"quests", std::move(quests)},
                {"inventory", std::move(inventory)}};
}

}  // namespace pgate
