#include "dfss/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dfss/checkpoint.hpp"
#include "dfss/io.hpp"
#include "dfss/parallel.hpp"

namespace dfss {
namespace {

using json = nlohmann::ordered_json;

void check_epsilon(const Corpus& corpus, std::size_t epsilon, const char* who) {
  if (epsilon == 0) throw PreconditionError(std::string(who) + ": epsilon must be >= 1");
  if (epsilon > corpus.size()) {
    throw PreconditionError(std::string(who) + ": epsilon " + std::to_string(epsilon) +
                            " exceeds corpus size " + std::to_string(corpus.size()));
  }
}

double l2_gap(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

BnReference harvest_bn_reference(const Network& teacher) {
  BnReference ref;
  const auto bns = teacher.batchnorm_layers();
  if (bns.empty()) throw PreconditionError("teacher has no batch-norm layers; unusable for ADS");
  for (std::size_t i = 0; i < bns.size(); ++i) {
    ref.layer_ids.push_back("bn" + std::to_string(i));
    ref.layers.push_back({bns[i]->running_mean, bns[i]->running_var});
  }
  return ref;
}

BnReference harvest_bn_reference(const std::filesystem::path& checkpoint,
                                 const NetworkSpec& teacher_spec) {
  return harvest_bn_reference(load_checkpoint(checkpoint, teacher_spec));
}

DistanceResult distribution_distance(const FeatureStats& stats, const BnReference& ref,
                                     const DistanceOptions& options) {
  if (stats.layers.size() != ref.layers.size()) {
    throw ShapeError("distribution_distance: " + std::to_string(stats.layers.size()) +
                     " stat layers vs " + std::to_string(ref.layers.size()) +
                     " reference layers");
  }
  std::vector<std::size_t> used = options.layers;
  if (used.empty()) {
    used.resize(ref.layers.size());
    std::iota(used.begin(), used.end(), 0);
  }
  DistanceResult r;
  for (std::size_t l : used) {
    if (l >= ref.layers.size()) {
      throw PreconditionError("distribution_distance: layer index " + std::to_string(l) +
                              " out of range");
    }
    const LayerMoments& s = stats.layers[l];
    const LayerMoments& b = ref.layers[l];
    if (s.mean.size() != b.mean.size() || s.var.size() != b.var.size() ||
        s.mean.size() != s.var.size()) {
      throw ShapeError("distribution_distance: channel mismatch at layer " +
                       std::to_string(l));
    }
    double term = l2_gap(s.mean, b.mean) + l2_gap(s.var, b.var);
    if (options.normalize_by_channels) term /= std::sqrt(double(s.mean.size()));
    r.terms.push_back(term);
  }
  const double total = std::accumulate(r.terms.begin(), r.terms.end(), 0.0);
  r.d = options.aggregation == LayerAggregation::mean ? total / double(r.terms.size())
                                                      : total;
  return r;
}

std::vector<double> compute_weights(std::span<const double> d) {
  if (d.empty()) throw PreconditionError("compute_weights: need at least one distance");
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double min = *lo, max = *hi;
  std::vector<double> w(d.size(), 1.0);
  if (max == min) return w;
  for (std::size_t i = 0; i < d.size(); ++i) w[i] = 1.0 - (d[i] - min) / (max - min);
  return w;
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::ads:
      return "ads";
    case Strategy::random:
      return "random";
    case Strategy::confidence:
      return "confidence";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "ads") return Strategy::ads;
  if (name == "random") return Strategy::random;
  if (name == "confidence") return Strategy::confidence;
  throw PreconditionError("unknown sampling strategy '" + name + "'");
}

std::vector<double> SelectionResult::weights() const {
  if (strategy != Strategy::ads) return std::vector<double>(ids.size(), 1.0);
  if (scores.size() != ids.size()) {
    throw PreconditionError("selection: ads result is missing its weights");
  }
  std::vector<double> w;
  w.reserve(scores.size());
  for (const SampleScore& s : scores) w.push_back(s.omega);
  return w;
}

std::vector<DistanceResult> score_corpus(const Corpus& corpus, const Network& teacher,
                                         const DistanceOptions& options) {
  if (teacher.mode() != Mode::eval) {
    throw PreconditionError("scoring needs a frozen (eval-mode) teacher");
  }
  const BnReference ref = harvest_bn_reference(teacher);
  std::vector<DistanceResult> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const auto [logits, stats] = teacher.forward_with_stats(corpus.records[i].as_tensor());
    out[i] = distribution_distance(stats, ref, options);
    if (!std::isfinite(out[i].d)) {
      throw NumericError("non-finite distance for record " +
                         std::to_string(corpus.records[i].id));
    }
  });
  return out;
}

SelectionResult ads_select_from_scores(const Corpus& corpus,
                                       std::span<const DistanceResult> distances,
                                       std::size_t epsilon) {
  check_epsilon(corpus, epsilon, "ads_select");
  if (distances.size() != corpus.size()) {
    throw PreconditionError("ads_select: one distance per record required");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (distances[a].d != distances[b].d) return distances[a].d < distances[b].d;
    return corpus.records[a].id < corpus.records[b].id;
  });
  order.resize(epsilon);
  SelectionResult r;
  r.strategy = Strategy::ads;
  r.epsilon = epsilon;
  std::vector<double> picked;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t i = order[rank];
    r.ids.push_back(corpus.records[i].id);
    r.scores.push_back({corpus.records[i].id, distances[i].terms, distances[i].d, 1.0, rank});
    picked.push_back(distances[i].d);
  }
  const auto w = compute_weights(picked);
  for (std::size_t k = 0; k < w.size(); ++k) r.scores[k].omega = w[k];
  return r;
}

SelectionResult ads_select(const Corpus& corpus, const Network& teacher, std::size_t epsilon,
                           const DistanceOptions& options) {
  check_epsilon(corpus, epsilon, "ads_select");
  const auto distances = score_corpus(corpus, teacher, options);
  return ads_select_from_scores(corpus, distances, epsilon);
}

SelectionResult random_select(const Corpus& corpus, std::size_t epsilon, std::uint64_t seed) {
  check_epsilon(corpus, epsilon, "random_select");
  std::vector<std::uint32_t> ids;
  ids.reserve(corpus.size());
  for (const ImageRecord& r : corpus.records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(epsilon);
  SelectionResult r;
  r.strategy = Strategy::random;
  r.epsilon = epsilon;
  r.seed = seed;
  r.ids = std::move(ids);
  return r;
}

double pixel_confidence(const Tensor& logits) {
  const Tensor probs = ops::softmax_channels(logits);
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  const std::size_t area = probs.dim(2) * probs.dim(3);
  double total = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < area; ++i) {
      float best = 0;
      for (std::size_t c = 0; c < k; ++c) best = std::max(best, probs[(s * k + c) * area + i]);
      total += best;
    }
  }
  return total / double(n * area);
}

std::vector<double> confidence_scores(const Corpus& corpus, const Network& teacher) {
  if (teacher.mode() != Mode::eval) {
    throw PreconditionError("confidence scoring needs a frozen (eval-mode) teacher");
  }
  std::vector<double> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const Tensor logits = teacher.infer(corpus.records[i].as_tensor());
    require_finite(logits, "teacher logits");
    out[i] = pixel_confidence(logits);
  });
  return out;
}

SelectionResult confidence_select_from_scores(const Corpus& corpus,
                                              std::span<const double> confidences,
                                              std::size_t epsilon) {
  check_epsilon(corpus, epsilon, "confidence_select");
  if (confidences.size() != corpus.size()) {
    throw PreconditionError("confidence_select: one confidence per record required");
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (confidences[a] != confidences[b]) return confidences[a] > confidences[b];
    return corpus.records[a].id < corpus.records[b].id;
  });
  SelectionResult r;
  r.strategy = Strategy::confidence;
  r.epsilon = epsilon;
  for (std::size_t k = 0; k < epsilon; ++k) {
    r.ids.push_back(corpus.records[order[k]].id);
    r.confidences.push_back(confidences[order[k]]);
  }
  return r;
}

SelectionResult confidence_select(const Corpus& corpus, const Network& teacher,
                                  std::size_t epsilon) {
  check_epsilon(corpus, epsilon, "confidence_select");
  const auto conf = confidence_scores(corpus, teacher);
  return confidence_select_from_scores(corpus, conf, epsilon);
}

std::vector<StatsRow> make_stats_rows(const Corpus& corpus,
                                      std::span<const DistanceResult> distances,
                                      std::span<const double> confidences,
                                      const SelectionResult* selection) {
  std::map<std::uint32_t, double> omega;
  if (selection) {
    for (const SampleScore& s : selection->scores) omega[s.id] = s.omega;
  }
  std::vector<StatsRow> rows(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    rows[i].id = corpus.records[i].id;
    rows[i].stratum = corpus.records[i].stratum;
    if (!distances.empty()) rows[i].d = distances[i].d;
    if (!confidences.empty()) rows[i].confidence = confidences[i];
    if (const auto it = omega.find(rows[i].id); it != omega.end()) rows[i].omega = it->second;
  }
  return rows;
}

std::vector<StatsRow> selection_rows(const Corpus& corpus, const SelectionResult& selection) {
  std::vector<StatsRow> rows;
  rows.reserve(selection.ids.size());
  for (std::size_t k = 0; k < selection.ids.size(); ++k) {
    const std::uint32_t id = selection.ids[k];
    const auto it = std::find_if(corpus.records.begin(), corpus.records.end(),
                                 [&](const ImageRecord& r) { return r.id == id; });
    if (it == corpus.records.end()) {
      throw PreconditionError("selection refers to unknown id " + std::to_string(id));
    }
    StatsRow row;
    row.id = id;
    row.stratum = it->stratum;
    if (!selection.scores.empty()) {
      row.d = selection.scores[k].d;
      row.omega = selection.scores[k].omega;
    }
    if (!selection.confidences.empty()) row.confidence = selection.confidences[k];
    rows.push_back(row);
  }
  return rows;
}

void export_stats_csv(std::vector<StatsRow> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw PreconditionError("export_stats_csv: nothing to export");
  std::sort(rows.begin(), rows.end(),
            [](const StatsRow& a, const StatsRow& b) { return a.id < b.id; });
  auto field = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  std::string out = "id,stratum,d,omega,confidence\n";
  for (const StatsRow& r : rows) {
    out += std::to_string(r.id) + ',' + stratum_name(r.stratum) + ',' + field(r.d) + ',' +
           field(r.omega) + ',' + field(r.confidence) + '\n';
  }
  write_text_file(path, out);
}

std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "id,stratum,d,omega,confidence") {
    throw FormatError(path.string() + ": unexpected CSV header");
  }
  std::vector<StatsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 5) throw FormatError(path.string() + ": malformed row '" + line + "'");
    StatsRow r;
    try {
      r.id = static_cast<std::uint32_t>(std::stoul(cells[0]));
      r.stratum = parse_stratum(cells[1]);
      if (!cells[2].empty()) r.d = std::stod(cells[2]);
      if (!cells[3].empty()) r.omega = std::stod(cells[3]);
      if (!cells[4].empty()) r.confidence = std::stod(cells[4]);
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

void write_selection(const SelectionResult& s, const std::filesystem::path& path) {
  json j;
  j["strategy"] = strategy_name(s.strategy);
  j["epsilon"] = s.epsilon;
  j["seed"] = s.seed;
  j["ids"] = s.ids;
  json scores = json::array();
  for (const SampleScore& sc : s.scores) {
    scores.push_back({{"id", sc.id},
                      {"rank", sc.rank},
                      {"d", sc.d},
                      {"omega", sc.omega},
                      {"terms", sc.terms}});
  }
  j["scores"] = std::move(scores);
  j["confidences"] = s.confidences;
  write_text_file(path, j.dump(2) + "\n");
}

SelectionResult read_selection(const std::filesystem::path& path) {
  try {
    const json j = json::parse(read_text_file(path));
    SelectionResult s;
    s.strategy = parse_strategy(j.at("strategy").get<std::string>());
    s.epsilon = j.at("epsilon").get<std::size_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ids = j.at("ids").get<std::vector<std::uint32_t>>();
    for (const auto& sc : j.at("scores")) {
      s.scores.push_back({sc.at("id").get<std::uint32_t>(),
                          sc.at("terms").get<std::vector<double>>(),
                          sc.at("d").get<double>(), sc.at("omega").get<double>(),
                          sc.at("rank").get<std::size_t>()});
    }
    s.confidences = j.at("confidences").get<std::vector<double>>();
    if (s.ids.size() != s.epsilon) throw FormatError(path.string() + ": id count != epsilon");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace dfss
