#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lahr/errors.hpp"

namespace lahr {

// Whether a dataset tag carries machine-checkable correctness (math/code
// style) or judge-scored open-ended quality. Verifiable records with
// homogeneous outcomes are uninformative for routing and can be filtered.
enum class RecordKind { verifiable, open_ended };

std::string to_string(RecordKind kind);
RecordKind record_kind_from_string(const std::string& s);

// One routing supervision record: a query plus the T candidate models'
// responses and scores. `raw` holds the benchmark-native scores; `normalized`
// and `labels` are filled by normalize_scores/binarize and stay empty until
// then. `oracle_best` (1-based) is recorded by the synthetic generator; 0
// means unknown.
struct RoutingExample {
  std::string id;
  std::string tag;  // normalization group (dataset name)
  RecordKind kind = RecordKind::verifiable;
  std::string query;
  std::vector<std::string> responses;
  std::vector<double> raw;
  std::vector<double> normalized;
  std::vector<double> labels;
  int oracle_best = 0;

  size_t num_models() const { return responses.size(); }
  void validate() const;  // per-record invariants; throws FormatError
};

struct CorpusSplit {
  std::vector<RoutingExample> train;
  std::vector<RoutingExample> validation;
  std::vector<RoutingExample> test;
  uint64_t seed = 0;
};

// Recipe for a synthetic corpus with planted per-domain specialists: queries
// carry a lexical domain marker, and model t answers a domain-d query
// correctly with probability correctness[d][t].
struct SpecializationPlan {
  size_t num_models = 3;
  size_t num_domains = 3;
  std::vector<std::vector<double>> correctness;     // [D][T], values in [0,1]
  std::vector<std::vector<std::string>> markers;    // per-domain marker words
  std::vector<std::string> style_prefixes;          // per-model response prefix
  std::vector<RecordKind> domain_kinds;             // per-domain
  uint64_t seed = 7;

  void validate() const;  // throws ContractError on an invalid plan
};

// Convenience constructor: diagonal-dominant correctness matrix (diag on the
// diagonal, off elsewhere; requires D == T for the diagonal to make sense,
// otherwise domain d's specialist is model d % T).
SpecializationPlan make_plan(size_t num_models, size_t num_domains, double diag,
                             double off, uint64_t seed);

struct SplitSizes {
  size_t train = 0;
  size_t validation = 0;
  size_t test = 0;
};

// Fills `normalized` for every example, min-max scaled over the pooled raw
// scores of each tag group. A degenerate group (max == min) maps to 0.5
// everywhere and logs a warning.
void normalize_scores(std::vector<RoutingExample>& examples);

// labels[t] = 1 iff normalized[t] >= threshold.
void binarize(RoutingExample& example, double threshold = 0.8);
void binarize_all(std::vector<RoutingExample>& examples,
                  double threshold = 0.8);

// Drops verifiable-tagged examples whose label vector is all-zeros or
// all-ones; open-ended examples are kept unconditionally.
std::vector<RoutingExample> filter_uninformative(
    const std::vector<RoutingExample>& examples);

// Generates sizes.train + sizes.validation + sizes.test fully-populated
// records (raw, normalized, labels, oracle_best), deterministic per plan
// seed. Normalization pools over the whole generated corpus per tag.
CorpusSplit generate_synthetic(const SpecializationPlan& plan,
                               const SplitSizes& sizes,
                               double threshold = 0.8);

// Line-delimited self-describing records, UTF-8, one object per line.
std::vector<RoutingExample> load_corpus(const std::string& path);
void save_corpus(const std::vector<RoutingExample>& examples,
                 const std::string& path);

// Plan files share the same one-object text format (a single object).
SpecializationPlan load_plan(const std::string& path);
void save_plan(const SpecializationPlan& plan, const std::string& path);

// FNV-1a digest of a corpus file's bytes, for run manifests.
std::string corpus_digest(const std::string& path);

}  // namespace lahr
