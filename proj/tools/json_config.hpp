#pragma once

// CLI11 config reader for JSON files. Top-level keys are options of the main
// app; nested objects address subcommands, e.g. {"seed": 7, "train": {"epochs": 30}}.

#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace dcnn::cli {

class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    return dump(app, default_also).dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config: unsupported value " + v.dump());
  }

  static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it->is_object()) {
        auto sub = parents;
        sub.push_back(it.key());
        collect(*it, sub, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array())
        for (const auto& v : *it) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(*it));
      items.push_back(std::move(item));
    }
  }

  static nlohmann::json dump(const CLI::App* app, bool default_also) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& r = opt->results();
        j[name] = r.size() == 1 ? nlohmann::json(r.front()) : nlohmann::json(r);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({}))
      if (sub->count() > 0) j[sub->get_name()] = dump(sub, default_also);
    return j;
  }
};

}  // namespace dcnn::cli
