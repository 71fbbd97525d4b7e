#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

/// Sidecar ground truth for a generated stream, one record per entity.
/// An event is malicious iff its entity is malicious and its ts is at or after
/// the entity's first_malicious_ts.
struct EntityTruth {
  std::string entity;
  Label label = Label::benign;
  std::string archetype;  // office | build | backup | attack
  std::string family;     // ransomware family for attack entities, empty otherwise
  std::optional<std::int64_t> first_malicious_ts;
  std::size_t event_count = 0;

  bool event_is_malicious(std::int64_t ts) const {
    return label == Label::malicious && first_malicious_ts && ts >= *first_malicious_ts;
  }
};

class TruthIndex {
 public:
  void add(EntityTruth t) {
    index_[t.entity] = entities_.size();
    entities_.push_back(std::move(t));
  }

  const EntityTruth* find(const std::string& entity) const {
    auto it = index_.find(entity);
    return it == index_.end() ? nullptr : &entities_[it->second];
  }

  EntityTruth* find(const std::string& entity) {
    auto it = index_.find(entity);
    return it == index_.end() ? nullptr : &entities_[it->second];
  }

  const std::vector<EntityTruth>& entities() const noexcept { return entities_; }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : entities_) {
      nlohmann::json j{{"entity", t.entity},
                       {"label", std::string(to_string(t.label))},
                       {"archetype", t.archetype},
                       {"family", t.family},
                       {"event_count", t.event_count}};
      j["first_malicious_ts"] = t.first_malicious_ts ? nlohmann::json(*t.first_malicious_ts) : nlohmann::json();
      arr.push_back(std::move(j));
    }
    return {{"entities", std::move(arr)}};
  }

  static TruthIndex from_json(const nlohmann::json& j) {
    TruthIndex idx;
    try {
      for (const auto& e : j.at("entities")) {
        EntityTruth t;
        t.entity = e.at("entity").get<std::string>();
        const auto label = parse_label(e.at("label").get<std::string>());
        if (!label) throw JoinError("truth index: bad label for " + t.entity);
        t.label = *label;
        t.archetype = e.value("archetype", std::string{});
        t.family = e.value("family", std::string{});
        t.event_count = e.value("event_count", std::size_t{0});
        if (auto it = e.find("first_malicious_ts"); it != e.end() && !it->is_null()) {
          t.first_malicious_ts = it->get<std::int64_t>();
        }
        if (t.label == Label::malicious && !t.first_malicious_ts) {
          throw JoinError("truth index: malicious entity " + t.entity + " lacks first_malicious_ts");
        }
        idx.add(std::move(t));
      }
    } catch (const nlohmann::json::exception& e) {
      throw JoinError(std::string("truth index malformed: ") + e.what());
    }
    return idx;
  }

  static TruthIndex load(std::istream& in) {
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw JoinError(std::string("truth index is not JSON: ") + e.what());
    }
  }

 private:
  std::vector<EntityTruth> entities_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace zsd
