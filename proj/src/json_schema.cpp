#include "json_schema.hpp"


namespace dhsplan::detail {
namespace {

using nlohmann::json;

bool matches_type(const std::string &type, const json &v) {
  if (type == "object")
    return v.is_object();
  if (type == "array")
    return v.is_array();
  if (type == "string")
    return v.is_string();
  if (type == "boolean")
    return v.is_boolean();
  if (type == "null")
    return v.is_null();
  if (type == "number")
    return v.is_number();
  if (type == "integer")
    return v.is_number_integer() ||
           (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
  return false;
}

class Validator {
public:
  std::vector<SchemaViolation> out;

  void check(const json &schema, const json &v, const std::string &path) {
    if (!schema.is_object())
      return;

    if (auto it = schema.find("type"); it != schema.end()) {
      bool ok = false;
      if (it->is_string()) {
        ok = matches_type(it->get<std::string>(), v);
      } else {
        for (const auto &t : *it)
          ok = ok || matches_type(t.get<std::string>(), v);
      }
      if (!ok) {
        fail(path, "expected type " + it->dump());
        return;
      }
    }

    if (auto it = schema.find("const"); it != schema.end() && *it != v)
      fail(path, "expected constant " + it->dump());

    if (auto it = schema.find("enum"); it != schema.end()) {
      bool found = false;
      for (const auto &e : *it)
        found = found || e == v;
      if (!found)
        fail(path, "value " + v.dump() + " not in " + it->dump());
    }

    if (v.is_number()) {
      const double x = v.get<double>();
      if (auto it = schema.find("minimum"); it != schema.end() && x < it->get<double>())
        fail(path, "must be >= " + it->dump());
      if (auto it = schema.find("exclusiveMinimum"); it != schema.end() && !(x > it->get<double>()))
        fail(path, "must be > " + it->dump());
    }

    if (v.is_string()) {
      if (auto it = schema.find("minLength");
          it != schema.end() && v.get<std::string>().size() < it->get<std::size_t>())
        fail(path, "string shorter than " + it->dump());
    }

    if (v.is_array()) {
      if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>())
        fail(path, "needs at least " + it->dump() + " item(s)");
      if (auto it = schema.find("items"); it != schema.end()) {
        for (std::size_t i = 0; i < v.size(); ++i)
          check(*it, v[i], path + "/" + std::to_string(i));
      }
    }

    if (v.is_object())
      check_object(schema, v, path);

    if (auto it = schema.find("oneOf"); it != schema.end())
      check_one_of(*it, v, path);
  }

private:
  void fail(const std::string &path, std::string message, bool required = false) {
    out.push_back({path.empty() ? "/" : path, std::move(message), required});
  }

  void check_object(const json &schema, const json &v, const std::string &path) {
    if (auto it = schema.find("required"); it != schema.end()) {
      for (const auto &key : *it) {
        if (!v.contains(key.get<std::string>()))
          fail(path, "missing required field '" + key.get<std::string>() + "'", true);
      }
    }
    const json *props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end())
      props = &*it;
    const auto additional = schema.find("additionalProperties");
    for (const auto &[key, value] : v.items()) {
      const std::string child = path + "/" + key;
      if (props && props->contains(key)) {
        check((*props)[key], value, child);
      } else if (additional != schema.end()) {
        if (additional->is_boolean()) {
          if (!additional->get<bool>())
            fail(child, "unknown field '" + key + "'");
        } else {
          check(*additional, value, child);
        }
      }
    }
  }

  void check_one_of(const json &branches, const json &v, const std::string &path) {
    std::vector<std::vector<SchemaViolation>> results;
    std::size_t matched = 0;
    for (const auto &branch : branches) {
      Validator sub;
      sub.check(branch, v, path);
      matched += sub.out.empty() ? 1 : 0;
      results.push_back(std::move(sub.out));
    }
    if (matched == 1)
      return;
    if (matched > 1) {
      fail(path, "matches more than one alternative");
      return;
    }
    // Report the closest alternative so the message names concrete fields.
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
      if (results[i].size() < results[best].size())
        best = i;
    }
    for (auto &r : results[best])
      out.push_back(std::move(r));
  }
};

} // namespace

std::vector<SchemaViolation> validate_schema(const nlohmann::json &schema,
                                             const nlohmann::json &instance) {
  Validator v;
  v.check(schema, instance, "");
  return std::move(v.out);
}

} // namespace dhsplan::detail
