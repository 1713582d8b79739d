#include "dfss/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

#include "dfss/error.hpp"
#include "dfss/hash.hpp"
#include "dfss/io.hpp"

namespace dfss {
namespace {

using ojson = nlohmann::ordered_json;

ojson corpus_json(const CorpusConfig& c) {
  ojson j;
  j["height"] = c.height;
  j["width"] = c.width;
  j["num_classes"] = c.num_classes;
  j["min_shapes"] = c.min_shapes;
  j["max_shapes"] = c.max_shapes;
  j["min_shape_size"] = c.min_shape_size;
  j["max_shape_size"] = c.max_shape_size;
  j["color_jitter"] = c.color_jitter;
  j["texture_min_amplitude"] = c.texture_min_amplitude;
  j["texture_max_amplitude"] = c.texture_max_amplitude;
  j["pixel_noise"] = c.pixel_noise;
  j["hue_shift_min_deg"] = c.hue_shift_min_deg;
  j["hue_shift_max_deg"] = c.hue_shift_max_deg;
  j["shift_texture_amplitude"] = c.shift_texture_amplitude;
  j["shift_pixel_noise"] = c.shift_pixel_noise;
  j["ood_class_color_prob"] = c.ood_class_color_prob;
  j["ood_pixel_noise"] = c.ood_pixel_noise;
  return j;
}

ojson train_json(const TrainConfig& c) {
  ojson j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["momentum"] = c.momentum;
  j["lambda"] = c.lambda;
  j["kd_space"] = kd_space_name(c.kd_space);
  j["freeze_student_bn"] = c.freeze_student_bn;
  j["eval_every"] = c.eval_every;
  return j;
}

// Reads the keys of `j` into fields; every key must be consumed.
class Reader {
 public:
  Reader(const ojson& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw PreconditionError("config: " + where_ + " must be an object");
  }
  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw PreconditionError("config: bad value for " + where_ + "." + key);
    }
  }

  const ojson* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw PreconditionError("config: unknown key " + where_ + "." + it.key());
      }
    }
  }

 private:
  const ojson& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_corpus_config(const ojson& j, CorpusConfig& c) {
  Reader r(j, "corpus");
  r.get("height", c.height);
  r.get("width", c.width);
  r.get("num_classes", c.num_classes);
  r.get("min_shapes", c.min_shapes);
  r.get("max_shapes", c.max_shapes);
  r.get("min_shape_size", c.min_shape_size);
  r.get("max_shape_size", c.max_shape_size);
  r.get("color_jitter", c.color_jitter);
  r.get("texture_min_amplitude", c.texture_min_amplitude);
  r.get("texture_max_amplitude", c.texture_max_amplitude);
  r.get("pixel_noise", c.pixel_noise);
  r.get("hue_shift_min_deg", c.hue_shift_min_deg);
  r.get("hue_shift_max_deg", c.hue_shift_max_deg);
  r.get("shift_texture_amplitude", c.shift_texture_amplitude);
  r.get("shift_pixel_noise", c.shift_pixel_noise);
  r.get("ood_class_color_prob", c.ood_class_color_prob);
  r.get("ood_pixel_noise", c.ood_pixel_noise);
  r.finish();
}

void read_train_config(const ojson& j, TrainConfig& c, const std::string& where) {
  Reader r(j, where);
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("momentum", c.momentum);
  r.get("lambda", c.lambda);
  std::string space = kd_space_name(c.kd_space);
  r.get("kd_space", space);
  c.kd_space = parse_kd_space(space);
  r.get("freeze_student_bn", c.freeze_student_bn);
  r.get("eval_every", c.eval_every);
  r.finish();
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  teacher.epochs = 30;
  student.epochs = 60;
}

NetworkSpec ExperimentConfig::teacher_spec() const {
  NetworkSpec s = default_teacher_spec(corpus.num_classes);
  s.height = corpus.height;
  s.width = corpus.width;
  s.bn_momentum = bn_momentum;
  s.bn_eps = bn_eps;
  return s;
}

NetworkSpec ExperimentConfig::student_spec() const {
  NetworkSpec s = default_student_spec(corpus.num_classes);
  s.height = corpus.height;
  s.width = corpus.width;
  s.bn_momentum = bn_momentum;
  s.bn_eps = bn_eps;
  return s;
}

std::string config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["corpus"] = corpus_json(c.corpus);
  j["original_train"] = c.original_train;
  j["original_test"] = c.original_test;
  j["openworld_size"] = c.openworld_size;
  j["mix"] = c.mix;
  j["epsilon"] = c.epsilon;
  j["bn_momentum"] = c.bn_momentum;
  j["bn_eps"] = c.bn_eps;
  ojson d;
  d["layers"] = c.distance.layers;
  d["aggregation"] = c.distance.aggregation == LayerAggregation::mean ? "mean" : "sum";
  d["normalize_by_channels"] = c.distance.normalize_by_channels;
  j["distance"] = d;
  j["teacher"] = train_json(c.teacher);
  j["student"] = train_json(c.student);
  j["kd_reference"] = c.kd_reference;
  ojson strategies = ojson::array();
  for (Strategy s : c.strategies) strategies.push_back(strategy_name(s));
  j["strategies"] = strategies;
  ojson modes = ojson::array();
  for (DistillStrategy m : c.distill_modes) modes.push_back(distill_strategy_name(m));
  j["distill_modes"] = modes;
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  Reader r(j, "config");
  if (const ojson* corpus = r.child("corpus")) read_corpus_config(*corpus, c.corpus);
  r.get("original_train", c.original_train);
  r.get("original_test", c.original_test);
  r.get("openworld_size", c.openworld_size);
  r.get("mix", c.mix);
  r.get("epsilon", c.epsilon);
  r.get("bn_momentum", c.bn_momentum);
  r.get("bn_eps", c.bn_eps);
  if (const ojson* d = r.child("distance")) {
    Reader dr(*d, "distance");
    dr.get("layers", c.distance.layers);
    std::string agg = "mean";
    dr.get("aggregation", agg);
    if (agg == "mean") {
      c.distance.aggregation = LayerAggregation::mean;
    } else if (agg == "sum") {
      c.distance.aggregation = LayerAggregation::sum;
    } else {
      throw PreconditionError("config: distance.aggregation must be mean or sum");
    }
    dr.get("normalize_by_channels", c.distance.normalize_by_channels);
    dr.finish();
  }
  if (const ojson* t = r.child("teacher")) read_train_config(*t, c.teacher, "teacher");
  if (const ojson* s = r.child("student")) read_train_config(*s, c.student, "student");
  r.get("kd_reference", c.kd_reference);
  if (const ojson* s = r.child("strategies")) {
    c.strategies.clear();
    for (const auto& v : *s) c.strategies.push_back(parse_strategy(v.get<std::string>()));
  }
  if (const ojson* m = r.child("distill_modes")) {
    c.distill_modes.clear();
    for (const auto& v : *m) c.distill_modes.push_back(parse_distill_strategy(v.get<std::string>()));
  }
  r.finish();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

void validate_config(const ExperimentConfig& c) {
  if (c.original_train == 0 || c.original_test == 0 || c.openworld_size == 0) {
    throw PreconditionError("config: corpus sizes must be >= 1");
  }
  double total = 0;
  for (double p : c.mix) {
    if (!(p >= 0.0)) throw PreconditionError("config: mix entries must be >= 0");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw PreconditionError("config: mix must sum to 1");
  if (c.epsilon == 0) throw PreconditionError("config: epsilon must be >= 1");
  if (!(c.bn_momentum > 0.0 && c.bn_momentum <= 1.0)) {
    throw PreconditionError("config: bn_momentum must lie in (0, 1]");
  }
  if (!(c.bn_eps > 0.0)) throw PreconditionError("config: bn_eps must be > 0");
  if (c.strategies.empty() || c.distill_modes.empty()) {
    throw PreconditionError("config: strategies and distill_modes must be non-empty");
  }
  validate_spec(c.teacher_spec());
  validate_spec(c.student_spec());
}

std::string config_hash(const ExperimentConfig& config) {
  return to_hex(sha256(config_to_json(config)));
}

}  // namespace dfss
