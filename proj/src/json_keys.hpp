#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "share/errors.hpp"

namespace share::detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : j.items())
    if (!known.count(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
}

}  // namespace share::detail
