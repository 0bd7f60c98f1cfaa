#include "prefixrec/config.hpp"

#include <fstream>

namespace prefixrec {

namespace {

void merge_checked(nlohmann::json& base, const nlohmann::json& overlay, const std::string& path) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config field: " + where);
    if (base[it.key()].is_object() && it.value().is_object()) {
      merge_checked(base[it.key()], it.value(), where);
    } else if (base[it.key()].is_object() != it.value().is_object()) {
      throw ConfigError("config field " + where + " has the wrong structure");
    } else {
      base[it.key()] = it.value();
    }
  }
}

template <typename T>
T field(const nlohmann::json& j, const std::string& section, const std::string& key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(section + "." + key + ": wrong or missing value");
  }
}

}  // namespace

nlohmann::json RunConfig::defaults() {
  return nlohmann::json{
      {"synthetic",
       {{"enabled", true},
        {"num_users", 2000},
        {"num_items", 200},
        {"embed_dim", 16},
        {"clusters", 16},
        {"cluster_noise", 0.15},
        {"seq_len_min", 6},
        {"seq_len_max", 14},
        {"stay_prob", 0.8},
        {"zipf_exponent", 1.0},
        {"seed", 7}}},
      {"tokenizer",
       {{"levels", 4}, {"codebook_size", 8}, {"seed", 11}, {"max_iters", 50}}},
      {"dataset",
       {{"interactions", ""},
        {"embeddings", ""},
        {"embeddings_format", "text"},  // text | raw
        {"min_count", 5},
        {"max_history", 20},
        {"train_pairs", "all"}}},
      {"model", {{"hidden", 32}}},
      {"trainer",
       {{"mode", "ce"},
        {"stage", "one_stage"},
        {"beta", 0.1},
        {"eta", 1e-4},
        {"negatives", 100},
        {"lr", 5e-4},
        {"warmup_fraction", 0.01},
        {"weight_decay", 0.0},
        {"epochs", 200},
        {"patience", 20},
        {"batch_size", 1024},
        {"grad_accum", 8},
        {"seed", 1},
        {"eval_beam", 20}}},
      {"decoder", {{"beam", 20}}},
      {"evaluation", {{"beam", 20}, {"cutoffs", nlohmann::json::array({10, 20})}}},
      {"audit", {{"k_global", 20}, {"k_beam", 20}, {"max_histories", 200}}},
  };
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json overlay;
  try {
    overlay = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/true,
                                    /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(overlay);
}

RunConfig RunConfig::from_json(const nlohmann::json& overlay) {
  RunConfig cfg;
  merge_checked(cfg.resolved_, overlay, "");
  return cfg;
}

void RunConfig::set_override(const std::string& dotted_path, const std::string& value) {
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    parsed = value;  // plain string
  }
  nlohmann::json* node = &resolved_;
  std::size_t start = 0;
  std::string where;
  while (true) {
    const std::size_t dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot - start);
    where = where.empty() ? key : where + "." + key;
    if (!node->contains(key)) throw ConfigError("unknown config field: " + where);
    if (dot == std::string::npos) {
      if ((*node)[key].is_object()) throw ConfigError(where + " is a section, not a value");
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

void RunConfig::validate() const {
  trainer_config().validate();
  if (resolved_.at("synthetic").at("enabled").get<bool>()) {
    const auto s = synthetic_config();
    if (s.num_users < 1) throw ConfigError("synthetic.num_users: must be >= 1");
    if (s.stay_prob < 0.0 || s.stay_prob > 1.0) {
      throw ConfigError("synthetic.stay_prob: must be in [0, 1]");
    }
  }
  const auto levels = field<std::int64_t>(resolved_, "tokenizer", "levels");
  if (levels < 1) throw ConfigError("tokenizer.levels: must be >= 1");
  const auto cb = field<std::int64_t>(resolved_, "tokenizer", "codebook_size");
  if (cb < 2) throw ConfigError("tokenizer.codebook_size: must be >= 2");
  const auto beam = field<std::int64_t>(resolved_, "decoder", "beam");
  if (beam < 1) throw ConfigError("decoder.beam: must be >= 1");
  const auto fmt = field<std::string>(resolved_, "dataset", "embeddings_format");
  if (fmt != "text" && fmt != "raw") {
    throw ConfigError("dataset.embeddings_format: must be 'text' or 'raw'");
  }
  const auto tp = field<std::string>(resolved_, "dataset", "train_pairs");
  if (tp != "all" && tp != "last") {
    throw ConfigError("dataset.train_pairs: must be 'all' or 'last'");
  }
}

TrainConfig RunConfig::trainer_config() const {
  TrainConfig t;
  t.mode = train_mode_from_string(field<std::string>(resolved_, "trainer", "mode"));
  const auto stage = field<std::string>(resolved_, "trainer", "stage");
  if (stage == "one_stage") {
    t.stage = TrainStage::one_stage;
  } else if (stage == "two_stage") {
    t.stage = TrainStage::two_stage;
  } else {
    throw ConfigError("trainer.stage: must be 'one_stage' or 'two_stage'");
  }
  t.beta = field<double>(resolved_, "trainer", "beta");
  t.eta = field<double>(resolved_, "trainer", "eta");
  t.negatives = field<std::size_t>(resolved_, "trainer", "negatives");
  t.lr = field<double>(resolved_, "trainer", "lr");
  t.warmup_fraction = field<double>(resolved_, "trainer", "warmup_fraction");
  t.weight_decay = field<double>(resolved_, "trainer", "weight_decay");
  t.epochs = field<std::size_t>(resolved_, "trainer", "epochs");
  t.patience = field<std::size_t>(resolved_, "trainer", "patience");
  t.batch_size = field<std::size_t>(resolved_, "trainer", "batch_size");
  t.grad_accum = field<std::size_t>(resolved_, "trainer", "grad_accum");
  t.seed = field<std::uint64_t>(resolved_, "trainer", "seed");
  t.hidden = field<std::size_t>(resolved_, "model", "hidden");
  t.max_history = field<std::size_t>(resolved_, "dataset", "max_history");
  t.train_pairs_all = field<std::string>(resolved_, "dataset", "train_pairs") == "all";
  t.eval_beam = field<std::size_t>(resolved_, "trainer", "eval_beam");
  return t;
}

SyntheticConfig RunConfig::synthetic_config() const {
  SyntheticConfig s;
  s.num_items = field<std::size_t>(resolved_, "synthetic", "num_items");
  s.num_users = field<std::size_t>(resolved_, "synthetic", "num_users");
  s.embed_dim = field<std::size_t>(resolved_, "synthetic", "embed_dim");
  s.clusters = field<std::size_t>(resolved_, "synthetic", "clusters");
  s.cluster_noise = field<double>(resolved_, "synthetic", "cluster_noise");
  s.seq_len_min = field<std::size_t>(resolved_, "synthetic", "seq_len_min");
  s.seq_len_max = field<std::size_t>(resolved_, "synthetic", "seq_len_max");
  s.stay_prob = field<double>(resolved_, "synthetic", "stay_prob");
  s.zipf_exponent = field<double>(resolved_, "synthetic", "zipf_exponent");
  s.seed = field<std::uint64_t>(resolved_, "synthetic", "seed");
  return s;
}

}  // namespace prefixrec
