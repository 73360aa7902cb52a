#pragma once

// Minimal structural JSON-Schema checker covering the subset the shipped
// schemas use: type (single or list), properties, required, items, enum,
// minItems. Throws std::runtime_error with a JSON-pointer-ish path.

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace testutil {

using sjson = nlohmann::json;

inline bool matches_type(const sjson& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "number") return v.is_number();
  if (t == "integer") return v.is_number_integer();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  throw std::runtime_error("unknown schema type " + t);
}

inline void validate_schema(const sjson& value, const sjson& schema,
                            const std::string& path = "$") {
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = matches_type(value, t.get<std::string>());
    } else {
      for (const auto& alt : t)
        ok = ok || matches_type(value, alt.get<std::string>());
    }
    if (!ok)
      throw std::runtime_error(path + ": type mismatch, got " +
                               value.dump().substr(0, 60));
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& alt : schema["enum"]) ok = ok || (alt == value);
    if (!ok)
      throw std::runtime_error(path + ": value not in enum: " + value.dump());
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"])
        if (!value.contains(key.get<std::string>()))
          throw std::runtime_error(path + ": missing required key " +
                                   key.get<std::string>());
    }
    if (schema.contains("properties")) {
      for (auto it = schema["properties"].begin();
           it != schema["properties"].end(); ++it) {
        if (value.contains(it.key()))
          validate_schema(value[it.key()], it.value(), path + "." + it.key());
      }
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") &&
        value.size() < schema["minItems"].get<size_t>())
      throw std::runtime_error(path + ": fewer than minItems elements");
    if (schema.contains("items")) {
      size_t i = 0;
      for (const auto& elem : value)
        validate_schema(elem, schema["items"],
                        path + "[" + std::to_string(i++) + "]");
    }
  }
}

}  // namespace testutil
