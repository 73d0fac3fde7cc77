#include <catch2/catch_amalgamated.hpp>

#include "shadowsim/cards.hpp"
#include "shadowsim/genbackend.hpp"
#include "support/oracles.hpp"

using namespace shadowsim;

namespace {

CardSchema group_schema() {
  return CardSchema::from_json(json{
      {"name", "group_profile"},
      {"fields",
       json::array({{{"key", "age"}, {"kind", "age_interval"}},
                    {{"key", "Gender"}, {"kind", "text"}},
                    {{"key", "education"}, {"kind", "text"}},
                    {{"key", "type of follower"}, {"kind", "text_list"}},
                    {{"key", "favorite content"}, {"kind", "text_list"}}})}});
}

CardSchema victim_schema() {
  return CardSchema::from_json(json{
      {"name", "victim_romance"},
      {"fields", json::array({{{"key", "Age"}, {"kind", "scalar"}},
                              {{"key", "Gender"}, {"kind", "scalar"}},
                              {{"key", "favorite_type"}, {"kind", "scalar"}}})}});
}

json sample_group_card() {
  return {{"age", "15-20"},
          {"Gender", "Male"},
          {"education", "unknown"},
          {"type of follower", json::array({"talents", "media"})},
          {"favorite content", json::array({"dancing"})}};
}

}  // namespace

TEST_CASE("schema round-trips and rejects duplicates") {
  CardSchema s = group_schema();
  CHECK(CardSchema::from_json(s.to_json()).to_json() == s.to_json());
  CHECK(s.keys() == std::vector<std::string>{"age", "Gender", "education",
                                             "type of follower", "favorite content"});
  CHECK(s.find("GENDER") != nullptr);
  CHECK(s.find("gender")->key == "Gender");
  CHECK(s.find("nope") == nullptr);

  json dup = s.to_json();
  dup["fields"].push_back({{"key", "AGE"}, {"kind", "text"}});
  CHECK_THROWS_AS(CardSchema::from_json(dup), ConfigError);
  CHECK_THROWS_AS(CardSchema::from_json(json{{"name", "x"}, {"fields", json::array()}}),
                  ConfigError);
}

TEST_CASE("age bucketing") {
  CHECK(age_bucket(0) == "0-5");
  CHECK(age_bucket(15) == "15-20");
  CHECK(age_bucket(19) == "15-20");
  CHECK(age_bucket(20) == "20-25");
  CHECK_THROWS_AS(age_bucket(-1), SimError);
  for (int age : {0, 3, 17, 22, 48, 99}) CHECK(age_bucket(age) == oracle::age_bucket(age));
}

TEST_CASE("card validation enforces kinds, coverage, and no extras") {
  CardSchema s = group_schema();
  CHECK(validate_card(sample_group_card(), s).ok);

  json missing = sample_group_card();
  missing.erase("education");
  CHECK_FALSE(validate_card(missing, s).ok);

  json extra = sample_group_card();
  extra["surprise"] = 1;
  CHECK_FALSE(validate_card(extra, s).ok);

  json bad_interval = sample_group_card();
  bad_interval["age"] = "15-22";
  CHECK_FALSE(validate_card(bad_interval, s).ok);
  bad_interval["age"] = "unknown";
  CHECK(validate_card(bad_interval, s).ok);

  json bad_list = sample_group_card();
  bad_list["type of follower"] = json::array();
  CHECK_FALSE(validate_card(bad_list, s).ok);
  bad_list["type of follower"] = json::array({""});
  CHECK_FALSE(validate_card(bad_list, s).ok);

  json bad_text = sample_group_card();
  bad_text["Gender"] = "";
  CHECK_FALSE(validate_card(bad_text, s).ok);

  // scalar kind accepts strings, integers, and null
  CardSchema v = victim_schema();
  CHECK(validate_card(json{{"Age", 20}, {"Gender", "male"}, {"favorite_type", nullptr}}, v).ok);
  CHECK_FALSE(validate_card(json{{"Age", 1.5}, {"Gender", "m"}, {"favorite_type", "x"}}, v).ok);
}

TEST_CASE("delta validation allows partial coverage but no unknown keys") {
  CardSchema s = group_schema();
  CHECK(validate_delta(json{{"Gender", "Female"}}, s).ok);
  CHECK(validate_delta(json{{"gender", nullptr}}, s).ok);
  CHECK_FALSE(validate_delta(json{{"height", "tall"}}, s).ok);
  CHECK_FALSE(validate_delta(json{{"age", "15-22"}}, s).ok);
}

TEST_CASE("merge keeps card casing and drops nulls and extraneous keys") {
  json card = sample_group_card();
  json merged = merge_delta(card, json{{"GENDER", "Female"},
                                       {"education", nullptr},
                                       {"height", "ignored"}});
  CHECK(merged.at("Gender") == "Female");
  CHECK(merged.at("education") == "unknown");
  CHECK_FALSE(merged.contains("GENDER"));
  CHECK_FALSE(merged.contains("height"));
  CHECK(merged.size() == card.size());
}

TEST_CASE("randomized card algebra holds over a thousand pairs") {
  CardSchema s = group_schema();
  Rng rng(20240817);
  std::vector<std::string> words{"dancing", "media", "talents", "music", "sports",
                                 "film",    "craft", "news",    "books", "travel"};
  auto random_value = [&](const std::string& key) -> json {
    if (key == "age") {
      if (rng.chance(0.2)) return "unknown";
      return age_bucket(static_cast<int>(rng.uniform(10, 60)));
    }
    if (key == "type of follower" || key == "favorite content") {
      json arr = json::array();
      std::size_t n = rng.uniform(1, 3);
      for (std::size_t i = 0; i < n; ++i) arr.push_back(rng.pick(words));
      return arr;
    }
    return rng.pick(words);
  };

  int failures = 0;
  for (int i = 0; i < 1000; ++i) {
    json card;
    for (const auto& key : s.keys()) card[key] = random_value(key);
    json delta;
    for (const auto& key : s.keys()) {
      double roll = rng.next_double();
      if (roll < 0.4) continue;                      // absent
      if (roll < 0.55) delta[key] = nullptr;         // null never destroys
      else delta[key] = random_value(key);
    }
    if (rng.chance(0.3)) delta["mystery_key"] = "x";  // extraneous, dropped

    json merged = merge_delta(card, delta);
    json merged_again = merge_delta(merged, delta);

    bool ok = true;
    ok = ok && merged == oracle::merge(card, delta);
    ok = ok && merged_again == merged;  // idempotent
    ok = ok && validate_card(merged, s).ok;
    for (const auto& key : s.keys()) {
      bool null_delta = delta.contains(key) && delta.at(key).is_null();
      if ((null_delta || !delta.contains(key)) && merged.at(key) != card.at(key)) ok = false;
    }
    ok = ok && json::parse(merged.dump()) == merged;
    if (!ok) {
      ++failures;
      if (failures == 1) {
        INFO("card=" << card.dump() << " delta=" << delta.dump());
        CHECK(merged == oracle::merge(card, delta));
      }
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("victim card merge via the same algebra") {
  VictimCard card;
  card.data = {{"Age", 20}, {"Gender", nullptr}, {"favorite_type", "girls dancing"}};
  VictimCard merged = merge_delta(card, json{{"gender", "male"}, {"Age", nullptr}});
  CHECK(merged.data.at("Age") == 20);
  CHECK(merged.data.at("Gender") == "male");
  CHECK(merged.data.at("favorite_type") == "girls dancing");

  auto values = merged.known_values();
  CHECK(std::find(values.begin(), values.end(), "20") != values.end());
  CHECK(std::find(values.begin(), values.end(), "male") != values.end());
  CHECK(std::find(values.begin(), values.end(), "girls dancing") != values.end());
}

TEST_CASE("case-insensitive lookup preserves stored casing") {
  json card = sample_group_card();
  const json* v = card_get(card, "  gender ");
  REQUIRE(v != nullptr);
  CHECK(*v == "Male");
  CHECK(card_get(card, "ghost") == nullptr);
}

TEST_CASE("generation-backed card building validates strictly") {
  CardSchema s = group_schema();
  MockBackend backend;
  backend.register_wildcard_fixture(template_ids::kGroupCards, "not json");
  CHECK_THROWS_AS(build_group_profile_cards(backend, "records", s, "demo", 1), ParseError);

  MockBackend good;
  good.register_wildcard_fixture(
      template_ids::kGroupCards,
      "For the group:\n" + sample_group_card().dump(2) + "\nand another\n" +
          sample_group_card().dump());
  auto cards = build_group_profile_cards(good, "records", s, "demo", 1);
  REQUIRE(cards.size() == 2);
  CHECK(cards[0].data == sample_group_card());

  MockBackend invalid;
  invalid.register_wildcard_fixture(template_ids::kGroupCards,
                                    R"({"age": "15-20", "Gender": "Male"})");
  CHECK_THROWS_AS(build_group_profile_cards(invalid, "records", s, "demo", 1), ParseError);
}

TEST_CASE("victim card structuring accepts nulls and rejects extras") {
  CardSchema v = victim_schema();
  MockBackend backend;
  backend.register_wildcard_fixture(
      template_ids::kVictimCard,
      R"({"Age": null, "Gender": "male", "favorite_type": null})");
  VictimCard card = structure_victim_card(backend, {"fragment"}, v, 1);
  CHECK(card.data.at("Age").is_null());

  MockBackend bad;
  bad.register_wildcard_fixture(template_ids::kVictimCard,
                                R"({"Age": 20, "Gender": "male"})");
  CHECK_THROWS_AS(structure_victim_card(bad, {"fragment"}, v, 1), ParseError);
}

TEST_CASE("chat feedback deltas keep only changed non-null keys") {
  CardSchema v = victim_schema();
  VictimCard card;
  card.data = {{"Age", 20}, {"Gender", "male"}, {"favorite_type", "girls dancing"}};

  MockBackend full;
  full.register_wildcard_fixture(
      template_ids::kCardUpdate,
      R"({"Age": 20, "Gender": "male", "favorite_type": "dancing shows"})");
  json delta = extract_delta_from_chat(full, card, {{"victim", "hi"}}, 1);
  CHECK(delta == json{{"favorite_type", "dancing shows"}});

  MockBackend partial;
  partial.register_wildcard_fixture(template_ids::kCardUpdate,
                                    R"({"Gender": "female", "Age": null})");
  delta = extract_delta_from_chat(partial, card, {{"victim", "hi"}}, 1);
  CHECK(delta == json{{"Gender", "female"}});
}
