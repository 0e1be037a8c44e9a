#include "copyseq/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace copyseq {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

}  // namespace

RunConfig parse_run_config_text(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(doc, {"model", "train", "data", "output_dir", "rule_types"}, "");

  RunConfig cfg;
  try {
    if (doc.contains("model")) {
      const json& m = doc["model"];
      reject_unknown(m, {"kind", "vocab_size", "d_e", "d_h", "d_s", "d_att"}, "model.");
      if (m.contains("kind")) {
        auto kind = parse_model_kind(m["kind"].get<std::string>());
        if (!kind) throw ConfigError("config: unknown model.kind '" + m["kind"].get<std::string>() + "'");
        cfg.model.kind = *kind;
      }
      cfg.model.vocab_regular = m.value("vocab_size", 0u);
      cfg.model.d_e = m.value("d_e", 150u);
      cfg.model.d_h = m.value("d_h", 300u);
      // d_s and d_att follow d_h unless set
      cfg.model.d_s = m.value("d_s", cfg.model.d_h);
      cfg.model.d_att = m.value("d_att", cfg.model.d_h);
    }
    if (doc.contains("train")) {
      const json& t = doc["train"];
      reject_unknown(t,
                     {"batch_size", "max_epochs", "patience", "lr", "clip_norm", "adam_beta1", "adam_beta2",
                      "adam_eps", "seed", "max_target_len"},
                     "train.");
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
      cfg.train.patience = t.value("patience", cfg.train.patience);
      cfg.train.lr = t.value("lr", cfg.train.lr);
      cfg.train.clip_norm = t.value("clip_norm", cfg.train.clip_norm);
      cfg.train.adam_beta1 = t.value("adam_beta1", cfg.train.adam_beta1);
      cfg.train.adam_beta2 = t.value("adam_beta2", cfg.train.adam_beta2);
      cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
      cfg.train.seed = t.value("seed", cfg.train.seed);
      cfg.train.max_target_len = t.value("max_target_len", cfg.train.max_target_len);
    }
    if (doc.contains("data")) {
      const json& d = doc["data"];
      reject_unknown(d, {"train", "dev", "vocab"}, "data.");
      cfg.data_train = d.value("train", "");
      cfg.data_dev = d.value("dev", "");
      cfg.data_vocab = d.value("vocab", "");
    }
    cfg.output_dir = doc.value("output_dir", "");
    if (doc.contains("rule_types")) {
      for (const auto& name : doc["rule_types"]) {
        auto t = parse_rule_type(name.get<std::string>());
        if (!t) throw ConfigError("config: unknown rule type '" + name.get<std::string>() + "'");
        cfg.rule_types.push_back(*t);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  json doc;
  doc["model"] = {{"kind", model_kind_name(cfg.model.kind)}, {"vocab_size", cfg.model.vocab_regular},
                  {"d_e", cfg.model.d_e},                    {"d_h", cfg.model.d_h},
                  {"d_s", cfg.model.d_s},                    {"d_att", cfg.model.d_att}};
  doc["train"] = {{"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"lr", cfg.train.lr},
                  {"clip_norm", cfg.train.clip_norm},
                  {"adam_beta1", cfg.train.adam_beta1},
                  {"adam_beta2", cfg.train.adam_beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"seed", cfg.train.seed},
                  {"max_target_len", cfg.train.max_target_len}};
  doc["data"] = {{"train", cfg.data_train}, {"dev", cfg.data_dev}, {"vocab", cfg.data_vocab}};
  doc["output_dir"] = cfg.output_dir;
  json types = json::array();
  for (RuleType t : cfg.rule_types) types.push_back(rule_type_name(t));
  doc["rule_types"] = types;
  return doc.dump(2) + "\n";
}

}  // namespace copyseq
