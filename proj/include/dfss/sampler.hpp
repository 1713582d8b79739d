#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfss/corpus.hpp"
#include "dfss/network.hpp"

namespace dfss {

// Running statistics of every BN layer of a frozen teacher, copied verbatim.
struct BnReference {
  std::vector<std::string> layer_ids;
  std::vector<LayerMoments> layers;  // running_mean / running_var
};

BnReference harvest_bn_reference(const Network& teacher);
BnReference harvest_bn_reference(const std::filesystem::path& checkpoint,
                                 const NetworkSpec& teacher_spec);

enum class LayerAggregation { mean, sum };

struct DistanceOptions {
  // BN layer indices to use; empty means all.
  std::vector<std::size_t> layers;
  LayerAggregation aggregation = LayerAggregation::mean;
  // Divide each layer term by sqrt(channels).
  bool normalize_by_channels = true;
};

struct DistanceResult {
  std::vector<double> terms;  // one per used layer
  double d = 0;
};

// Per layer: ||mu(x) - mu_bn||_2 + ||var(x) - var_bn||_2, divided by
// sqrt(C) when normalize_by_channels; aggregated by mean (or sum).
DistanceResult distribution_distance(const FeatureStats& stats, const BnReference& ref,
                                     const DistanceOptions& options = {});

// omega_i = 1 - (d_i - min d) / (max d - min d); all ones when max == min.
std::vector<double> compute_weights(std::span<const double> distances);

enum class Strategy { ads, random, confidence };
const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct SampleScore {
  std::uint32_t id = 0;
  std::vector<double> terms;
  double d = 0;
  double omega = 1;
  std::size_t rank = 0;
};

struct SelectionResult {
  Strategy strategy = Strategy::ads;
  std::size_t epsilon = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint32_t> ids;           // selection order
  std::vector<SampleScore> scores;          // ads only, aligned with ids
  std::vector<double> confidences;          // confidence only, aligned with ids

  // Per-sample loss weights aligned with ids: omega for ads, 1 otherwise.
  std::vector<double> weights() const;
};

// Distance of every record (index-aligned with corpus.records).
std::vector<DistanceResult> score_corpus(const Corpus& corpus, const Network& teacher,
                                         const DistanceOptions& options = {});

// Picks the epsilon smallest d (ties by ascending id) and assigns weights
// over the picked subset.
SelectionResult ads_select_from_scores(const Corpus& corpus,
                                       std::span<const DistanceResult> distances,
                                       std::size_t epsilon);
SelectionResult ads_select(const Corpus& corpus, const Network& teacher,
                           std::size_t epsilon, const DistanceOptions& options = {});

SelectionResult random_select(const Corpus& corpus, std::size_t epsilon,
                              std::uint64_t seed);

// Mean over pixels of the maximum softmax probability.
double pixel_confidence(const Tensor& logits);
std::vector<double> confidence_scores(const Corpus& corpus, const Network& teacher);
SelectionResult confidence_select_from_scores(const Corpus& corpus,
                                              std::span<const double> confidences,
                                              std::size_t epsilon);
SelectionResult confidence_select(const Corpus& corpus, const Network& teacher,
                                  std::size_t epsilon);

// One CSV row per sample; absent values are written as empty fields.
struct StatsRow {
  std::uint32_t id = 0;
  Stratum stratum = Stratum::in_dist;
  std::optional<double> d;
  std::optional<double> omega;
  std::optional<double> confidence;
};

// Rows for every corpus record. Distances/confidences may be empty (absent);
// omega is filled for records picked by `selection` when it carries scores.
std::vector<StatsRow> make_stats_rows(const Corpus& corpus,
                                      std::span<const DistanceResult> distances,
                                      std::span<const double> confidences,
                                      const SelectionResult* selection);
// Rows for the selected samples only.
std::vector<StatsRow> selection_rows(const Corpus& corpus, const SelectionResult& selection);

// Header "id,stratum,d,omega,confidence", rows sorted by id.
void export_stats_csv(std::vector<StatsRow> rows, const std::filesystem::path& path);
std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path);

void write_selection(const SelectionResult& selection, const std::filesystem::path& path);
SelectionResult read_selection(const std::filesystem::path& path);

}  // namespace dfss
