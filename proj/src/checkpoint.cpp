#include "copyseq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace copyseq {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

namespace {

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const TrainerState* trainer,
                     const std::vector<std::pair<std::string, Tensor>>* extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint: cannot write " + path);
  out << "copyseq-checkpoint v1\n";
  out << "kind " << model_kind_name(model.cfg.kind) << "\n";
  out << "vocab_regular " << model.cfg.vocab_regular << "\n";
  out << "d_e " << model.cfg.d_e << "\n";
  out << "d_h " << model.cfg.d_h << "\n";
  out << "d_s " << model.cfg.d_s << "\n";
  out << "d_att " << model.cfg.d_att << "\n";
  if (trainer) {
    out << "epoch " << trainer->epoch << "\n";
    out << "adam_step " << trainer->adam_step << "\n";
    out << "best_dev_em " << std::hexfloat << trainer->best_dev_em << std::defaultfloat << "\n";
    out << "best_epoch " << trainer->best_epoch << "\n";
    out << "stale_epochs " << trainer->stale_epochs << "\n";
    out << "rng " << trainer->rng_state << "\n";
  }
  std::vector<std::pair<std::string, Tensor>> tensors = model.parameters();
  if (extra) tensors.insert(tensors.end(), extra->begin(), extra->end());
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name;
    for (std::size_t d : t.shape()) out << " " << d;
    out << " f64 " << offset << "\n";
    offset += t.size() * sizeof(double);
  }
  out << "end\n";
  for (const auto& [name, t] : tensors) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("checkpoint: short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "copyseq-checkpoint v1")
    throw VersionError("checkpoint: unsupported header '" + line + "' in " + path);

  ModelConfig cfg;
  LoadedCheckpoint result;
  std::vector<TensorEntry> entries;
  while (std::getline(in, line) && line != "end") {
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "kind") {
      std::string name;
      is >> name;
      auto kind = parse_model_kind(name);
      if (!kind) throw VersionError("checkpoint: unknown model kind '" + name + "'");
      cfg.kind = *kind;
    } else if (key == "vocab_regular") {
      is >> cfg.vocab_regular;
    } else if (key == "d_e") {
      is >> cfg.d_e;
    } else if (key == "d_h") {
      is >> cfg.d_h;
    } else if (key == "d_s") {
      is >> cfg.d_s;
    } else if (key == "d_att") {
      is >> cfg.d_att;
    } else if (key == "epoch") {
      result.has_trainer = true;
      is >> result.trainer.epoch;
    } else if (key == "adam_step") {
      is >> result.trainer.adam_step;
    } else if (key == "best_dev_em") {
      // hexfloat; istream double extraction cannot parse it, strtod can
      std::string tok;
      is >> tok;
      result.trainer.best_dev_em = std::stod(tok);
    } else if (key == "best_epoch") {
      is >> result.trainer.best_epoch;
    } else if (key == "stale_epochs") {
      is >> result.trainer.stale_epochs;
    } else if (key == "rng") {
      std::getline(is, result.trainer.rng_state);
      if (!result.trainer.rng_state.empty() && result.trainer.rng_state.front() == ' ')
        result.trainer.rng_state.erase(0, 1);
    } else if (key == "tensor") {
      TensorEntry e;
      is >> e.name;
      std::vector<std::string> rest;
      std::string tok;
      while (is >> tok) rest.push_back(tok);
      if (rest.size() < 3) throw VersionError("checkpoint: malformed tensor line '" + line + "'");
      e.offset = std::stoull(rest.back());
      if (rest[rest.size() - 2] != "f64")
        throw VersionError("checkpoint: unsupported dtype " + rest[rest.size() - 2]);
      for (std::size_t i = 0; i + 2 < rest.size(); ++i) e.shape.push_back(std::stoull(rest[i]));
      entries.push_back(std::move(e));
    } else {
      throw VersionError("checkpoint: unknown header key '" + key + "'");
    }
  }
  if (line != "end") throw VersionError("checkpoint: truncated header in " + path);

  result.model = Model::init(cfg, 0);
  auto params = result.model.parameters();

  std::streampos blob_start = in.tellg();
  for (const TensorEntry& e : entries) {
    std::size_t numel = 1;
    for (std::size_t d : e.shape) numel *= d;
    if (e.shape.empty()) numel = 0;
    Tensor t = Tensor::zeros(e.shape);
    in.seekg(blob_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(numel * sizeof(double)));
    if (!in) throw VersionError("checkpoint: truncated tensor data for " + e.name);
    bool matched = false;
    for (auto& [name, param] : params) {
      if (name != e.name) continue;
      if (param.shape() != t.shape())
        throw VersionError("checkpoint: tensor " + e.name + " has shape " + t.shape_str() + ", expected " +
                           param.shape_str());
      std::memcpy(param.data(), t.data(), numel * sizeof(double));
      matched = true;
      break;
    }
    if (!matched) result.extra.emplace(e.name, std::move(t));
  }
  return result;
}

}  // namespace copyseq
