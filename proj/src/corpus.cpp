#include "lahr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lahr/log.hpp"
#include "lahr/rng.hpp"

namespace lahr {

using ordered_json = nlohmann::ordered_json;

std::string to_string(RecordKind kind) {
  return kind == RecordKind::verifiable ? "verifiable" : "open_ended";
}

RecordKind record_kind_from_string(const std::string& s) {
  if (s == "verifiable") return RecordKind::verifiable;
  if (s == "open_ended") return RecordKind::open_ended;
  throw FormatError("unknown record kind '" + s +
                    "' (expected 'verifiable' or 'open_ended')");
}

void RoutingExample::validate() const {
  if (id.empty()) throw FormatError("field 'id': must be non-empty");
  if (tag.empty()) throw FormatError("field 'tag': must be non-empty");
  const size_t T = responses.size();
  if (T == 0) throw FormatError("field 'responses': must be non-empty");
  if (raw.size() != T) {
    throw FormatError("field 'raw': has " + std::to_string(raw.size()) +
                      " scores but the record has " + std::to_string(T) +
                      " responses");
  }
  for (double s : raw) {
    if (!std::isfinite(s)) {
      throw FormatError("field 'raw': non-finite score in record '" + id +
                        "'");
    }
  }
  if (!normalized.empty() && normalized.size() != T) {
    throw FormatError("field 'normalized': length " +
                      std::to_string(normalized.size()) + " != " +
                      std::to_string(T));
  }
  for (double s : normalized) {
    if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
      throw FormatError("field 'normalized': value outside [0,1] in record '" +
                        id + "'");
    }
  }
  if (!labels.empty() && labels.size() != T) {
    throw FormatError("field 'labels': length " +
                      std::to_string(labels.size()) + " != " +
                      std::to_string(T));
  }
  for (double c : labels) {
    if (!std::isfinite(c) || c < 0.0 || c > 1.0) {
      throw FormatError("field 'labels': value outside [0,1] in record '" +
                        id + "'");
    }
  }
  if (oracle_best < 0 || static_cast<size_t>(oracle_best) > T) {
    throw FormatError("field 'oracle_best': index " +
                      std::to_string(oracle_best) + " outside [0," +
                      std::to_string(T) + "]");
  }
}

namespace {

ordered_json example_to_json(const RoutingExample& ex) {
  ordered_json j;
  j["id"] = ex.id;
  j["tag"] = ex.tag;
  j["kind"] = to_string(ex.kind);
  j["query"] = ex.query;
  j["responses"] = ex.responses;
  j["raw"] = ex.raw;
  if (!ex.normalized.empty()) j["normalized"] = ex.normalized;
  if (!ex.labels.empty()) j["labels"] = ex.labels;
  if (ex.oracle_best != 0) j["oracle_best"] = ex.oracle_best;
  return j;
}

// Pulls a field out of a parsed record, rethrowing with the field name so
// load errors always say which line and which field broke.
template <typename T>
T get_field(const ordered_json& j, const std::string& name) {
  if (!j.contains(name)) throw FormatError("field '" + name + "': missing");
  try {
    return j.at(name).get<T>();
  } catch (const std::exception& e) {
    throw FormatError("field '" + name + "': " + e.what());
  }
}

RoutingExample example_from_json(const ordered_json& j) {
  if (!j.is_object()) throw FormatError("record is not an object");
  RoutingExample ex;
  ex.id = get_field<std::string>(j, "id");
  ex.tag = get_field<std::string>(j, "tag");
  ex.kind = record_kind_from_string(get_field<std::string>(j, "kind"));
  ex.query = get_field<std::string>(j, "query");
  ex.responses = get_field<std::vector<std::string>>(j, "responses");
  ex.raw = get_field<std::vector<double>>(j, "raw");
  if (j.contains("normalized")) {
    ex.normalized = get_field<std::vector<double>>(j, "normalized");
  }
  if (j.contains("labels")) {
    ex.labels = get_field<std::vector<double>>(j, "labels");
  }
  if (j.contains("oracle_best")) {
    ex.oracle_best = get_field<int>(j, "oracle_best");
  }
  ex.validate();
  return ex;
}

}  // namespace

void normalize_scores(std::vector<RoutingExample>& examples) {
  struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
  };
  std::map<std::string, Range> ranges;
  for (const RoutingExample& ex : examples) {
    Range& r = ranges[ex.tag];
    for (double s : ex.raw) {
      if (!std::isfinite(s)) {
        throw FormatError("field 'raw': non-finite score in record '" + ex.id +
                          "'");
      }
      r.lo = std::min(r.lo, s);
      r.hi = std::max(r.hi, s);
    }
  }
  std::set<std::string> warned;
  for (RoutingExample& ex : examples) {
    const Range& r = ranges[ex.tag];
    ex.normalized.assign(ex.raw.size(), 0.5);
    if (r.hi == r.lo) {
      if (warned.insert(ex.tag).second) {
        logging::warn("normalize_scores: degenerate group '" + ex.tag +
                      "' (identical raw scores everywhere) normalized to 0.5");
      }
      continue;
    }
    for (size_t t = 0; t < ex.raw.size(); ++t) {
      ex.normalized[t] = (ex.raw[t] - r.lo) / (r.hi - r.lo);
    }
  }
}

void binarize(RoutingExample& example, double threshold) {
  if (example.normalized.size() != example.num_models()) {
    throw ContractError(
        "binarize: normalized scores not populated for record '" + example.id +
        "'");
  }
  example.labels.assign(example.num_models(), 0.0);
  for (size_t t = 0; t < example.num_models(); ++t) {
    example.labels[t] = example.normalized[t] >= threshold ? 1.0 : 0.0;
  }
}

void binarize_all(std::vector<RoutingExample>& examples, double threshold) {
  for (RoutingExample& ex : examples) binarize(ex, threshold);
}

std::vector<RoutingExample> filter_uninformative(
    const std::vector<RoutingExample>& examples) {
  std::vector<RoutingExample> kept;
  kept.reserve(examples.size());
  for (const RoutingExample& ex : examples) {
    if (ex.labels.size() != ex.num_models()) {
      throw ContractError("filter_uninformative: labels not populated for "
                          "record '" + ex.id + "'");
    }
    if (ex.kind == RecordKind::open_ended) {
      kept.push_back(ex);
      continue;
    }
    bool any_correct = false;
    bool any_incorrect = false;
    for (double c : ex.labels) {
      (c >= 0.5 ? any_correct : any_incorrect) = true;
    }
    if (any_correct && any_incorrect) kept.push_back(ex);
  }
  return kept;
}

void SpecializationPlan::validate() const {
  if (num_models < 2) throw ContractError("plan: num_models must be >= 2");
  if (num_domains < 1) throw ContractError("plan: num_domains must be >= 1");
  if (correctness.size() != num_domains) {
    throw ContractError("plan: correctness must have one row per domain");
  }
  for (size_t d = 0; d < num_domains; ++d) {
    const auto& row = correctness[d];
    if (row.size() != num_models) {
      throw ContractError("plan: correctness row " + std::to_string(d) +
                          " must have one entry per model");
    }
    double best = -1.0;
    size_t best_count = 0;
    for (double q : row) {
      if (!(q >= 0.0 && q <= 1.0)) {
        throw ContractError("plan: correctness entries must lie in [0,1]");
      }
      if (q > best) {
        best = q;
        best_count = 1;
      } else if (q == best) {
        ++best_count;
      }
    }
    if (best_count != 1) {
      throw ContractError("plan: domain " + std::to_string(d) +
                          " has no unique best model");
    }
  }
  if (markers.size() != num_domains) {
    throw ContractError("plan: need one marker set per domain");
  }
  std::set<std::string> seen;
  for (size_t d = 0; d < num_domains; ++d) {
    if (markers[d].empty()) {
      throw ContractError("plan: domain " + std::to_string(d) +
                          " has no markers");
    }
    for (const std::string& m : markers[d]) {
      if (m.empty()) throw ContractError("plan: empty marker string");
      if (!seen.insert(m).second) {
        throw ContractError("plan: marker '" + m +
                            "' appears in more than one domain");
      }
    }
  }
  if (style_prefixes.size() != num_models) {
    throw ContractError("plan: need one style prefix per model");
  }
  if (domain_kinds.size() != num_domains) {
    throw ContractError("plan: need one kind per domain");
  }
}

SpecializationPlan make_plan(size_t num_models, size_t num_domains,
                             double diag, double off, uint64_t seed) {
  SpecializationPlan plan;
  plan.num_models = num_models;
  plan.num_domains = num_domains;
  plan.seed = seed;
  plan.correctness.assign(num_domains, std::vector<double>(num_models, off));
  for (size_t d = 0; d < num_domains; ++d) {
    plan.correctness[d][d % num_models] = diag;
  }
  plan.markers.resize(num_domains);
  for (size_t d = 0; d < num_domains; ++d) {
    const std::string stem = "mk" + std::to_string(d + 1);
    plan.markers[d] = {stem + "a", stem + "b"};
  }
  plan.style_prefixes.resize(num_models);
  for (size_t t = 0; t < num_models; ++t) {
    plan.style_prefixes[t] = "<m" + std::to_string(t + 1) + "> ";
  }
  plan.domain_kinds.assign(num_domains, RecordKind::verifiable);
  plan.validate();
  return plan;
}

namespace {

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> kWords = {
      "please", "kindly",  "quickly", "carefully", "review",  "consider",
      "examine", "resolve", "handle",  "check",     "the",     "this",
      "that",    "item",    "case",    "task",      "request", "entry",
      "note",    "detail",  "again",   "today",     "first",   "now"};
  return kWords;
}

std::string render_query(const std::string& marker, Rng& rng) {
  const auto& words = filler_words();
  const size_t n_fillers = 3 + rng.below(4);  // 3..6 filler words
  std::vector<std::string> parts;
  parts.reserve(n_fillers + 1);
  for (size_t i = 0; i < n_fillers; ++i) {
    parts.push_back(words[rng.below(words.size())]);
  }
  const size_t slot = rng.below(parts.size() + 1);
  parts.insert(parts.begin() + static_cast<std::ptrdiff_t>(slot), marker);
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out.push_back(' ');
    out += parts[i];
  }
  return out;
}

}  // namespace

CorpusSplit generate_synthetic(const SpecializationPlan& plan,
                               const SplitSizes& sizes, double threshold) {
  plan.validate();
  const size_t total = sizes.train + sizes.validation + sizes.test;
  Rng rng(plan.seed);
  std::vector<RoutingExample> all;
  all.reserve(total);
  for (size_t i = 0; i < total; ++i) {
    const size_t d = rng.below(plan.num_domains);
    const auto& dom_markers = plan.markers[d];
    const std::string& marker = dom_markers[rng.below(dom_markers.size())];
    RoutingExample ex;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%06zu", i + 1);
    ex.id = idbuf;
    ex.tag = "dom" + std::to_string(d + 1);
    ex.kind = plan.domain_kinds[d];
    ex.query = render_query(marker, rng);
    ex.responses.resize(plan.num_models);
    ex.raw.resize(plan.num_models);
    for (size_t t = 0; t < plan.num_models; ++t) {
      const bool correct = rng.uniform() < plan.correctness[d][t];
      ex.responses[t] = plan.style_prefixes[t] +
                        (correct ? "yes " + marker : std::string("no answer"));
      double score = correct ? 1.0 : 0.0;
      if (ex.kind == RecordKind::open_ended) score += 0.1 * rng.uniform();
      ex.raw[t] = score;
    }
    size_t best = 0;
    for (size_t t = 1; t < plan.num_models; ++t) {
      if (ex.raw[t] > ex.raw[best]) best = t;
    }
    ex.oracle_best = static_cast<int>(best) + 1;
    all.push_back(std::move(ex));
  }
  normalize_scores(all);
  binarize_all(all, threshold);

  CorpusSplit split;
  split.seed = plan.seed;
  split.train.assign(all.begin(),
                     all.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  split.validation.assign(
      all.begin() + static_cast<std::ptrdiff_t>(sizes.train),
      all.begin() + static_cast<std::ptrdiff_t>(sizes.train +
                                                sizes.validation));
  split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(
                                      sizes.train + sizes.validation),
                    all.end());
  return split;
}

std::vector<RoutingExample> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file '" + path + "'");
  std::vector<RoutingExample> examples;
  std::string line;
  size_t line_no = 0;
  size_t expected_T = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RoutingExample ex;
    try {
      ordered_json j = ordered_json::parse(line);
      ex = example_from_json(j);
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " +
                        e.what());
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": unparseable record: " + e.what());
    }
    if (expected_T == 0) {
      expected_T = ex.num_models();
    } else if (ex.num_models() != expected_T) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": field 'responses': record has " +
                        std::to_string(ex.num_models()) +
                        " responses but earlier records have " +
                        std::to_string(expected_T));
    }
    examples.push_back(std::move(ex));
  }
  return examples;
}

void save_corpus(const std::vector<RoutingExample>& examples,
                 const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file '" + path + "'");
  for (const RoutingExample& ex : examples) {
    ex.validate();
    out << example_to_json(ex).dump() << '\n';
  }
  if (!out) throw IoError("write failed for corpus file '" + path + "'");
}

SpecializationPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  SpecializationPlan plan;
  try {
    ordered_json j = ordered_json::parse(buf.str());
    plan.num_models = get_field<size_t>(j, "num_models");
    plan.num_domains = get_field<size_t>(j, "num_domains");
    plan.correctness =
        get_field<std::vector<std::vector<double>>>(j, "correctness");
    plan.markers =
        get_field<std::vector<std::vector<std::string>>>(j, "markers");
    plan.style_prefixes =
        get_field<std::vector<std::string>>(j, "style_prefixes");
    std::vector<std::string> kinds =
        get_field<std::vector<std::string>>(j, "domain_kinds");
    plan.domain_kinds.clear();
    for (const std::string& k : kinds) {
      plan.domain_kinds.push_back(record_kind_from_string(k));
    }
    plan.seed = get_field<uint64_t>(j, "seed");
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const std::exception& e) {
    throw FormatError(path + ": unparseable plan: " + e.what());
  }
  plan.validate();
  return plan;
}

void save_plan(const SpecializationPlan& plan, const std::string& path) {
  plan.validate();
  ordered_json j;
  j["num_models"] = plan.num_models;
  j["num_domains"] = plan.num_domains;
  j["correctness"] = plan.correctness;
  j["markers"] = plan.markers;
  j["style_prefixes"] = plan.style_prefixes;
  std::vector<std::string> kinds;
  for (RecordKind k : plan.domain_kinds) kinds.push_back(to_string(k));
  j["domain_kinds"] = kinds;
  j["seed"] = plan.seed;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write plan file '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for plan file '" + path + "'");
}

std::string corpus_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file '" + path + "' for digest");
  uint64_t hash = 1469598103934665603ull;  // FNV-1a 64-bit offset basis
  char chunk[4096];
  while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(chunk[i]);
      hash *= 1099511628211ull;
    }
    if (!in) break;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace lahr
