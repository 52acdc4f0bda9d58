#include "doctest.h"

#include "pgate/world.hpp"
#include "test_support.hpp"

using namespace pgate;
namespace ts = testsupport;

namespace {

WorldDb shop_world() {
    return *ts::load_fixture("hunters_bow.episode.json").world;
}

}  // namespace

TEST_CASE("check_basic_info folds every known field into one paragraph") {
    auto world = shop_world();
    auto [text, next] =
        execute(ts::make_call("check_basic_info", {{"item_name", std::string("Hunter's Bow")}}),
                world);
    CHECK(text.find("A light, rapid-firing bow") != std::string::npos);
    CHECK(text.find("120") != std::string::npos);  // price
    CHECK(text.find("8") != std::string::npos);    // attack
    CHECK(next == world);                          // reads never mutate
}

TEST_CASE("composite dominance: basic info subsumes price and attack") {
    auto world = shop_world();
    auto call = [&](const char* name) {
        return execute(ts::make_call(name, {{"item_name", std::string("Iron Sword")}}), world)
            .first;
    };
    std::string basic = call("check_basic_info");
    CHECK(basic.find("95") != std::string::npos);
    CHECK(basic.find("11") != std::string::npos);
    CHECK(call("check_price").find("95") != std::string::npos);
    CHECK(call("check_attack").find("11") != std::string::npos);
}

TEST_CASE("check_basic_info resolves quests too") {
    auto world = *ts::load_fixture("commercial_escort.episode.json").world;
    auto [text, _] = execute(
        ts::make_call("check_basic_info", {{"item_name", std::string("Commercial Escort quest")}}),
        world);
    CHECK(text.find("Escort a merchant caravan") != std::string::npos);
    CHECK(text.find("Status: available") != std::string::npos);
}

TEST_CASE("unknown names come back as not-found results, not errors") {
    auto world = shop_world();
    auto [text, _] =
        execute(ts::make_call("check_basic_info", {{"item_name", std::string("Moon Blade")}}),
                world);
    CHECK(text.rfind("not found:", 0) == 0);
}

TEST_CASE("search_item matches descriptions and tags case-insensitively") {
    auto world = shop_world();
    auto hit = execute(
        ts::make_call("search_item", {{"item_description", std::string("HEALING")}}), world);
    CHECK(hit.first.find("Health Potion") != std::string::npos);
    auto miss = execute(
        ts::make_call("search_item", {{"item_description", std::string("zzz-no-match")}}), world);
    CHECK(miss.first.rfind("not found:", 0) == 0);
    CHECK(hit.second == world);
}

TEST_CASE("equip mutates once and is a no-op confirmation afterwards") {
    auto world = shop_world();
    auto call = ts::make_call("equip", {{"item_name", std::string("Iron Sword")}});
    auto [text1, world1] = execute(call, world);
    CHECK(text1 == "Iron Sword is now equipped.");
    CHECK(world1.find_inventory("Iron Sword")->equipped);
    auto [text2, world2] = execute(call, world1);
    CHECK(world2 == world1);  // idempotent state
    CHECK(text2.find("already") != std::string::npos);
}

TEST_CASE("equipping something not in the inventory is a not-found result") {
    auto world = shop_world();
    auto [text, next] =
        execute(ts::make_call("equip", {{"item_name", std::string("Health Potion")}}), world);
    CHECK(text.rfind("not found:", 0) == 0);
    CHECK(next == world);
}

TEST_CASE("sell moves catalog items into the inventory") {
    auto world = shop_world();
    auto [text, next] = execute(
        ts::make_call("sell", {{"item_name", std::vector<std::string>{"Hunter's Bow"}}}), world);
    CHECK(text == "Sold Hunter's Bow.");
    REQUIRE(next.find_inventory("Hunter's Bow") != nullptr);
    CHECK_FALSE(next.find_inventory("Hunter's Bow")->equipped);
    // Selling again confirms without duplicating the entry.
    auto [text2, next2] = execute(
        ts::make_call("sell", {{"item_name", std::vector<std::string>{"Hunter's Bow"}}}), next);
    CHECK(next2 == next);
    CHECK(text2.find("already") != std::string::npos);
}

TEST_CASE("select_quest flips the status once") {
    auto world = *ts::load_fixture("commercial_escort.episode.json").world;
    auto call = ts::make_call("select_quest", {{"quest_name",
                                                std::string("Commercial Escort quest")}});
    auto [text, next] = execute(call, world);
    CHECK(text == "Quest Commercial Escort quest accepted.");
    CHECK(next.find_quest("Commercial Escort quest")->status == "accepted");
    auto [text2, next2] = execute(call, next);
    CHECK(next2 == next);
    CHECK(text2.find("already") != std::string::npos);
}

TEST_CASE("declared but unimplemented tools produce a conversational result") {
    auto world = shop_world();
    auto [text, next] = execute(ts::make_call("appraise", {{"item_name", std::string("X")}}),
                                world);
    CHECK(text.find("not available") != std::string::npos);
    CHECK(next == world);
}

TEST_CASE("a corrupt world raises ExecutorError") {
    WorldDb corrupt;
    corrupt.inventory.push_back({"Ghost Item", false});
    CHECK_THROWS_AS(
        execute(ts::make_call("check_price", {{"item_name", std::string("x")}}), corrupt),
        ExecutorError);
}

TEST_CASE("execution is deterministic") {
    auto world = shop_world();
    auto call = ts::make_call("search_item", {{"item_description", std::string("bow")}});
    CHECK(execute(call, world).first == execute(call, world).first);
}
