#pragma once

#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "shadowsim/genbackend.hpp"

namespace shadowsim {

// ---------------------------------------------------------------------------
// Schemas
// ---------------------------------------------------------------------------

// text:        non-empty string; "unknown" stands in for missing info
// text_list:   non-empty array of non-empty strings; ["unknown"] when missing
// age_interval: "L-U" with U = L + 5, or "unknown"
// scalar:      string or integer; null when the info was never observed
enum class FieldKind { text, text_list, age_interval, scalar };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::text: return "text";
    case FieldKind::text_list: return "text_list";
    case FieldKind::age_interval: return "age_interval";
    case FieldKind::scalar: return "scalar";
  }
  throw SimError("unreachable field kind");
}

inline FieldKind field_kind_from_string(const std::string& s) {
  if (s == "text") return FieldKind::text;
  if (s == "text_list") return FieldKind::text_list;
  if (s == "age_interval") return FieldKind::age_interval;
  if (s == "scalar") return FieldKind::scalar;
  throw ConfigError("unknown field kind: " + s);
}

struct SchemaField {
  std::string key;
  FieldKind kind = FieldKind::text;

  bool operator==(const SchemaField& o) const { return key == o.key && kind == o.kind; }
};

struct CardSchema {
  std::string name;
  std::vector<SchemaField> fields;

  const SchemaField* find(const std::string& key) const {
    std::string want = to_lower(trim(key));
    for (const auto& f : fields)
      if (to_lower(trim(f.key)) == want) return &f;
    return nullptr;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& f : fields) out.push_back(f.key);
    return out;
  }

  json to_json() const {
    json fields_json = json::array();
    for (const auto& f : fields)
      fields_json.push_back({{"key", f.key}, {"kind", to_string(f.kind)}});
    return {{"name", name}, {"fields", fields_json}};
  }

  static CardSchema from_json(const json& j) {
    CardSchema s;
    s.name = j.at("name").get<std::string>();
    for (const auto& f : j.at("fields")) {
      SchemaField field;
      field.key = f.at("key").get<std::string>();
      field.kind = field_kind_from_string(f.at("kind").get<std::string>());
      if (s.find(field.key))
        throw ConfigError("schema '" + s.name + "': duplicate key '" + field.key + "'");
      s.fields.push_back(std::move(field));
    }
    if (s.fields.empty()) throw ConfigError("schema '" + s.name + "' has no fields");
    return s;
  }

  static CardSchema load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open schema file: " + path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& ex) {
      throw ConfigError("malformed schema file " + path + ": " + ex.what());
    }
    return from_json(j);
  }

  bool operator==(const CardSchema& o) const { return name == o.name && fields == o.fields; }
};

// The "keys" slot value: a JSON array of the schema's keys.
inline std::string keys_json(const CardSchema& schema) {
  json arr = json::array();
  for (const auto& k : schema.keys()) arr.push_back(k);
  return arr.dump();
}

// ---------------------------------------------------------------------------
// Cards
// ---------------------------------------------------------------------------

// Cards keep whatever key casing the generator produced; lookups and
// validation match keys case-insensitively.
inline const json* card_get(const json& card, const std::string& key) {
  std::string want = to_lower(trim(key));
  for (auto it = card.begin(); it != card.end(); ++it)
    if (to_lower(trim(it.key())) == want) return &it.value();
  return nullptr;
}

struct GroupProfileCard {
  json data = json::object();

  const json* get(const std::string& key) const { return card_get(data, key); }
  bool operator==(const GroupProfileCard& o) const { return data == o.data; }
};

struct VictimCard {
  json data = json::object();

  const json* get(const std::string& key) const { return card_get(data, key); }

  // Non-null scalar values, stringified; the persona op keys attraction
  // off these.
  std::vector<std::string> known_values() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : data.items()) {
      (void)k;
      if (v.is_string()) {
        out.push_back(v.get<std::string>());
      } else if (v.is_number_integer()) {
        out.push_back(std::to_string(v.get<long long>()));
      } else if (v.is_array()) {
        for (const auto& item : v)
          if (item.is_string()) out.push_back(item.get<std::string>());
      }
    }
    return out;
  }

  bool operator==(const VictimCard& o) const { return data == o.data; }
};

// Partial object: only the keys with fresh information appear.
using CardDelta = json;

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Validation {
  bool ok = true;
  std::vector<std::string> issues;

  void fail(std::string issue) {
    ok = false;
    issues.push_back(std::move(issue));
  }
};

namespace detail {

inline bool is_age_interval(const std::string& s) {
  static const std::regex pat(R"(^(\d+)-(\d+)$)");
  std::smatch m;
  if (!std::regex_match(s, m, pat)) return false;
  return std::stol(m[2].str()) == std::stol(m[1].str()) + 5;
}

inline void check_kind(Validation& v, const std::string& key, const json& value,
                       FieldKind kind, bool allow_null) {
  if (value.is_null()) {
    if (!(allow_null || kind == FieldKind::scalar))
      v.fail("key '" + key + "': null is not a valid " + to_string(kind));
    return;
  }
  switch (kind) {
    case FieldKind::text:
      if (!value.is_string() || value.get<std::string>().empty())
        v.fail("key '" + key + "': expected a non-empty string");
      break;
    case FieldKind::text_list: {
      if (!value.is_array() || value.empty()) {
        v.fail("key '" + key + "': expected a non-empty array of strings");
        break;
      }
      for (const auto& item : value)
        if (!item.is_string() || item.get<std::string>().empty()) {
          v.fail("key '" + key + "': list items must be non-empty strings");
          break;
        }
      break;
    }
    case FieldKind::age_interval: {
      if (!value.is_string()) {
        v.fail("key '" + key + "': expected an interval string");
        break;
      }
      std::string s = value.get<std::string>();
      if (s != "unknown" && !is_age_interval(s))
        v.fail("key '" + key + "': '" + s + "' is not a width-5 interval");
      break;
    }
    case FieldKind::scalar:
      if (!value.is_string() && !value.is_number_integer())
        v.fail("key '" + key + "': expected a string, integer, or null");
      break;
  }
}

}  // namespace detail

// A complete card: every schema key present exactly once, every value
// conforming to its kind, no keys outside the schema.
inline Validation validate_card(const json& card, const CardSchema& schema) {
  Validation v;
  if (!card.is_object()) {
    v.fail("card is not a JSON object");
    return v;
  }
  for (const auto& field : schema.fields) {
    int hits = 0;
    for (auto it = card.begin(); it != card.end(); ++it)
      if (to_lower(trim(it.key())) == to_lower(trim(field.key))) ++hits;
    if (hits == 0) {
      v.fail("missing key '" + field.key + "'");
      continue;
    }
    if (hits > 1) {
      v.fail("key '" + field.key + "' appears " + std::to_string(hits) + " times");
      continue;
    }
    detail::check_kind(v, field.key, *card_get(card, field.key), field.kind,
                       /*allow_null=*/false);
  }
  for (auto it = card.begin(); it != card.end(); ++it)
    if (!schema.find(it.key())) v.fail("key '" + it.key() + "' is not in the schema");
  return v;
}

// A delta may cover any subset of the schema; null values are allowed
// everywhere (they mean "nothing new") and never erase on merge.
inline Validation validate_delta(const CardDelta& delta, const CardSchema& schema) {
  Validation v;
  if (!delta.is_object()) {
    v.fail("delta is not a JSON object");
    return v;
  }
  for (auto it = delta.begin(); it != delta.end(); ++it) {
    const SchemaField* field = schema.find(it.key());
    if (!field) {
      v.fail("key '" + it.key() + "' is not in the schema");
      continue;
    }
    detail::check_kind(v, field->key, it.value(), field->kind, /*allow_null=*/true);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Pure card algebra
// ---------------------------------------------------------------------------

inline std::string age_bucket(int age) {
  if (age < 0) throw SimError("age must be non-negative, got " + std::to_string(age));
  int lo = (age / 5) * 5;
  return std::to_string(lo) + "-" + std::to_string(lo + 5);
}

// Applies a delta to a card. The card's own key set and casing are
// authoritative: delta keys are matched case-insensitively against it,
// extraneous delta keys are dropped, and null delta values leave the
// existing value untouched.
inline json merge_delta(const json& card, const CardDelta& delta) {
  json merged = json::object();
  for (auto it = card.begin(); it != card.end(); ++it) {
    const json* replacement = card_get(delta, it.key());
    if (replacement && !replacement->is_null())
      merged[it.key()] = *replacement;
    else
      merged[it.key()] = it.value();
  }
  return merged;
}

inline VictimCard merge_delta(const VictimCard& card, const CardDelta& delta) {
  return VictimCard{merge_delta(card.data, delta)};
}

// ---------------------------------------------------------------------------
// Binding builders
// ---------------------------------------------------------------------------

// Fixture files and live ops must build byte-identical bindings, so the
// builders are the single source of truth for slot contents.

inline Bindings group_cards_bindings(const CardSchema& schema,
                                     const std::string& demonstrations,
                                     const std::string& user_records) {
  return {{"keys", keys_json(schema)},
          {"demonstrations", demonstrations},
          {"user_records", user_records}};
}

inline Bindings victim_card_bindings(const CardSchema& schema,
                                     const std::vector<std::string>& fragments) {
  std::string joined;
  for (std::size_t i = 0; i < fragments.size(); ++i) {
    if (i) joined += '\n';
    joined += fragments[i];
  }
  return {{"keys", keys_json(schema)}, {"fragments", joined}};
}

inline Bindings card_update_bindings(const VictimCard& card, const ChatHistory& history) {
  return {{"victim_card", card.data.dump()},
          {"chat_history", render_chat_history(history)}};
}

// ---------------------------------------------------------------------------
// Generation-backed operations
// ---------------------------------------------------------------------------

// Clusters raw member records into one profile card per group.
inline std::vector<GroupProfileCard> build_group_profile_cards(
    Backend& backend, const std::string& user_records, const CardSchema& schema,
    const std::string& demonstrations, std::uint64_t seed) {
  GenerationRequest request;
  request.template_id = template_ids::kGroupCards;
  request.bindings = group_cards_bindings(schema, demonstrations, user_records);
  request.seed = seed;
  GenerationResult result = backend.generate(request);

  // outputs arrive as one object per card, possibly wrapped in an array or
  // prose; collect every balanced top-level object
  std::vector<json> parsed = detail::extract_all_json_objects(result.text);

  std::vector<GroupProfileCard> cards;
  for (const auto& entry : parsed) {
    Validation v = validate_card(entry, schema);
    if (!v.ok)
      throw ParseError("group profile card failed validation: " + v.issues.front(),
                       result.text);
    cards.push_back(GroupProfileCard{entry});
  }
  if (cards.empty()) throw ParseError("no group profile cards in output", result.text);
  return cards;
}

// Condenses scattered fragments about one person into a card; keys with no
// supporting fragment stay null.
inline VictimCard structure_victim_card(Backend& backend,
                                        const std::vector<std::string>& fragments,
                                        const CardSchema& schema, std::uint64_t seed) {
  GenerationRequest request;
  request.template_id = template_ids::kVictimCard;
  request.bindings = victim_card_bindings(schema, fragments);
  request.seed = seed;
  GenerationResult result = backend.generate(request);

  json parsed = parse_structured(result, StructuredKind::json_object);
  Validation v = validate_card(parsed, schema);
  if (!v.ok)
    throw ParseError("victim card failed validation: " + v.issues.front(), result.text);
  return VictimCard{parsed};
}

// Rereads a conversation for new facts. Generators may answer with either a
// partial object (taken as the delta) or a full card (diffed against the
// current one); both collapse to a delta here.
inline CardDelta extract_delta_from_chat(Backend& backend, const VictimCard& card,
                                         const ChatHistory& history, std::uint64_t seed) {
  GenerationRequest request;
  request.template_id = template_ids::kCardUpdate;
  request.bindings = card_update_bindings(card, history);
  request.seed = seed;
  GenerationResult result = backend.generate(request);

  json parsed = parse_structured(result, StructuredKind::json_object);

  bool full_cover = true;
  for (auto it = card.data.begin(); it != card.data.end(); ++it)
    if (!card_get(parsed, it.key())) full_cover = false;

  CardDelta delta = json::object();
  if (full_cover && !card.data.empty()) {
    for (auto it = card.data.begin(); it != card.data.end(); ++it) {
      const json* incoming = card_get(parsed, it.key());
      if (incoming && !incoming->is_null() && *incoming != it.value())
        delta[it.key()] = *incoming;
    }
  } else {
    for (auto it = parsed.begin(); it != parsed.end(); ++it)
      if (card_get(card.data, it.key()) && !it.value().is_null())
        delta[it.key()] = it.value();
  }
  return delta;
}

}  // namespace shadowsim
