#include "diffetm/run_config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>

#include "diffetm/errors.hpp"
#include "diffetm/hashing.hpp"

namespace diffetm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& expected, const json& got) {
  throw InvalidConfig("config key '" + key + "': expected " + expected + ", got " + got.dump());
}

template <typename T>
T get_uint(const std::string& key, const json& v) {
  const bool nonneg = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!nonneg || v.get<std::uint64_t>() > std::numeric_limits<T>::max()) {
    bad(key, "a non-negative integer", v);
  }
  return v.get<T>();
}

double get_double(const std::string& key, const json& v) {
  if (!v.is_number()) bad(key, "a number", v);
  return v.get<double>();
}

bool get_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) bad(key, "true or false", v);
  return v.get<bool>();
}

std::string get_string(const std::string& key, const json& v) {
  if (!v.is_string()) bad(key, "a string", v);
  return v.get<std::string>();
}

struct Field {
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const json&)> set;
};

template <typename T>
Field uint_field(T RunConfig::*member) {
  return {[member](const RunConfig& c) { return json(c.*member); },
          [member](RunConfig& c, const std::string& k, const json& v) {
            c.*member = get_uint<T>(k, v);
          }};
}

Field path_field(fs::path RunConfig::*member) {
  return {[member](const RunConfig& c) { return json((c.*member).generic_string()); },
          [member](RunConfig& c, const std::string& k, const json& v) {
            c.*member = get_string(k, v);
          }};
}

Field string_field(std::string RunConfig::*member) {
  return {[member](const RunConfig& c) { return json(c.*member); },
          [member](RunConfig& c, const std::string& k, const json& v) {
            c.*member = get_string(k, v);
          }};
}

template <typename T, typename S>
Field sub_uint(S RunConfig::*outer, T S::*member) {
  return {[=](const RunConfig& c) { return json(c.*outer.*member); },
          [=](RunConfig& c, const std::string& k, const json& v) {
            c.*outer.*member = get_uint<T>(k, v);
          }};
}

template <typename S>
Field sub_double(S RunConfig::*outer, double S::*member) {
  return {[=](const RunConfig& c) { return json(c.*outer.*member); },
          [=](RunConfig& c, const std::string& k, const json& v) {
            c.*outer.*member = get_double(k, v);
          }};
}

const std::map<std::string, Field>& fields() {
  using model::ModelConfig;
  using trainer::TrainConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["input"] = path_field(&RunConfig::input);
    t["train_file"] = path_field(&RunConfig::train_file);
    t["valid_file"] = path_field(&RunConfig::valid_file);
    t["test_file"] = path_field(&RunConfig::test_file);
    t["stop_words"] = path_field(&RunConfig::stop_words);
    t["min_df"] = uint_field(&RunConfig::min_df);
    t["split_fractions"] = {
        [](const RunConfig& c) { return json(c.split_fractions); },
        [](RunConfig& c, const std::string& k, const json& v) {
          if (!v.is_array() || v.size() != 3) bad(k, "an array of three numbers", v);
          for (std::size_t i = 0; i < 3; ++i) c.split_fractions[i] = get_double(k, v[i]);
        }};
    t["split_seed"] = uint_field(&RunConfig::split_seed);
    t["corpus_dir"] = path_field(&RunConfig::corpus_dir);

    t["num_topics"] = sub_uint(&RunConfig::model, &ModelConfig::num_topics);
    t["embedding_size"] = sub_uint(&RunConfig::model, &ModelConfig::embedding_size);
    t["hidden_size"] = sub_uint(&RunConfig::model, &ModelConfig::hidden_size);
    t["diffusion_steps"] = sub_uint(&RunConfig::model, &ModelConfig::diffusion_steps);
    t["beta_0"] = sub_double(&RunConfig::model, &ModelConfig::beta_0);
    t["beta_T"] = sub_double(&RunConfig::model, &ModelConfig::beta_T);
    t["kl_weight"] = sub_double(&RunConfig::model, &ModelConfig::kl_weight);
    t["mode"] = {[](const RunConfig& c) { return json(std::string(model::mode_name(c.model.mode))); },
                 [](RunConfig& c, const std::string& k, const json& v) {
                   try {
                     c.model.mode = model::parse_mode(get_string(k, v));
                   } catch (const InvalidConfig&) {
                     bad(k, "one of \"diffusion\", \"no_diffusion\", \"standard_etm\"", v);
                   }
                 }};
    t["eval_path"] = {
        [](const RunConfig& c) { return json(std::string(model::eval_path_name(c.model.eval_path))); },
        [](RunConfig& c, const std::string& k, const json& v) {
          try {
            c.model.eval_path = model::parse_eval_path(get_string(k, v));
          } catch (const InvalidConfig&) {
            bad(k, "\"deterministic\" or \"sampled\"", v);
          }
        }};
    t["seed"] = sub_uint(&RunConfig::model, &ModelConfig::seed);

    t["epochs"] = sub_uint(&RunConfig::train, &TrainConfig::epochs);
    t["batch_size"] = sub_uint(&RunConfig::train, &TrainConfig::batch_size);
    t["learning_rate"] = sub_double(&RunConfig::train, &TrainConfig::learning_rate);
    t["eval_every"] = sub_uint(&RunConfig::train, &TrainConfig::eval_every);
    t["max_checkpoints"] = sub_uint(&RunConfig::train, &TrainConfig::max_checkpoints);
    t["deterministic"] = {[](const RunConfig& c) { return json(c.train.deterministic); },
                          [](RunConfig& c, const std::string& k, const json& v) {
                            c.train.deterministic = get_bool(k, v);
                          }};
    t["clip_norm"] = sub_double(&RunConfig::train, &TrainConfig::clip_norm);
    t["output_dir"] = path_field(&RunConfig::output_dir);

    t["checkpoint"] = path_field(&RunConfig::checkpoint);
    t["eval_split"] = string_field(&RunConfig::eval_split);
    t["top_n"] = uint_field(&RunConfig::top_n);
    t["t_values"] = {[](const RunConfig& c) { return json(c.t_values); },
                     [](RunConfig& c, const std::string& k, const json& v) {
                       if (!v.is_array()) bad(k, "an array of non-negative integers", v);
                       std::vector<std::uint32_t> out;
                       for (const auto& e : v) out.push_back(get_uint<std::uint32_t>(k, e));
                       c.t_values = std::move(out);
                     }};
    t["run_dir"] = path_field(&RunConfig::run_dir);
    t["kl_split"] = string_field(&RunConfig::kl_split);
    return t;
  }();
  return table;
}

}  // namespace

json RunConfig::to_json() const {
  json j = json::object();
  for (const auto& [key, field] : fields()) j[key] = field.get(*this);
  return j;
}

void RunConfig::apply_json(const json& j) {
  if (!j.is_object()) throw InvalidConfig("config must be a JSON object of key/value pairs");
  for (const auto& [key, value] : j.items()) {
    auto it = fields().find(key);
    if (it == fields().end()) throw InvalidConfig("unknown config key '" + key + "'");
    it->second.set(*this, key, value);
  }
}

std::string RunConfig::run_id() const { return sha256_hex(to_json().dump()).substr(0, 12); }

std::vector<std::string> preset_names() {
  return {"20ng-k50", "20ng-k100", "20ng-k200", "nyt-10000", "nyt-5000", "nyt-3000"};
}

RunConfig preset(const std::string& name) {
  RunConfig c;
  c.model.embedding_size = 300;
  c.model.diffusion_steps = 100;
  c.model.beta_0 = 0.0;
  c.model.beta_T = 0.02;
  c.model.kl_weight = 1.0;
  c.model.num_topics = 50;
  if (name.starts_with("20ng-")) {
    c.train.batch_size = 1000;
    if (name == "20ng-k50") {
      c.train.learning_rate = 0.008;
    } else if (name == "20ng-k100") {
      c.model.num_topics = 100;
      c.train.learning_rate = 0.009;
    } else if (name == "20ng-k200") {
      c.model.num_topics = 200;
      c.train.learning_rate = 0.01;
    } else {
      throw InvalidConfig("unknown preset '" + name + "'");
    }
    return c;
  }
  if (name.starts_with("nyt-")) {
    c.train.batch_size = 512;
    if (name == "nyt-10000") {
      c.min_df = 10000;
      c.train.learning_rate = 0.008;
    } else if (name == "nyt-5000") {
      c.min_df = 5000;
      c.train.learning_rate = 0.007;
    } else if (name == "nyt-3000") {
      c.min_df = 3000;
      c.train.learning_rate = 0.007;
    } else {
      throw InvalidConfig("unknown preset '" + name + "'");
    }
    return c;
  }
  throw InvalidConfig("unknown preset '" + name + "'");
}

RunConfig load_config_file(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot read config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidConfig("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  base.apply_json(j);
  return base;
}

}  // namespace diffetm::cli
