#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ddtcdr/numeric.hpp"

namespace ddtcdr {

// ---------------------------------------------------------------------------
// Feature schema and encoding

enum class FieldKind { one_hot, multi_hot, numeric, date };

const char* to_string(FieldKind k);

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::numeric;
  // Categorical fields: either an explicit vocabulary (its order fixes slot
  // order) or a bare cardinality, in which case values are the integers
  // 0..cardinality-1. A bare cardinality larger than the schema's bucket
  // count is hash-bucketed.
  std::size_t cardinality = 0;
  std::vector<std::string> vocabulary;
  // Numeric and date fields. Dates are stored as days since 1970-01-01.
  double min = 0.0;
  double max = 1.0;

  bool operator==(const FieldSpec&) const = default;
};

class FeatureSchema {
 public:
  static constexpr std::size_t kDefaultHashBuckets = 64;

  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FieldSpec> fields,
                         std::size_t hash_buckets = kDefaultHashBuckets);

  // Parses the `field,kind,cardinality_or_range` text format. Categorical
  // entries take a cardinality (`12`) or a `|`-separated vocabulary
  // (`F|M`); numeric and date entries take `min:max`.
  static FeatureSchema parse(std::istream& is, const std::string& source = "<schema>",
                             std::size_t hash_buckets = kDefaultHashBuckets);
  static FeatureSchema load(const std::filesystem::path& path,
                            std::size_t hash_buckets = kDefaultHashBuckets);
  void write(std::ostream& os) const;

  const std::vector<FieldSpec>& fields() const noexcept { return fields_; }
  std::size_t hash_buckets() const noexcept { return hash_buckets_; }
  const FieldSpec* find(const std::string& name) const;

  // Total encoded length; fixed for a schema.
  std::size_t width() const noexcept { return width_; }
  std::size_t block_offset(std::size_t field) const { return offsets_.at(field); }
  std::size_t block_width(std::size_t field) const;
  bool is_hashed(std::size_t field) const;

  bool operator==(const FeatureSchema& o) const {
    return fields_ == o.fields_ && hash_buckets_ == o.hash_buckets_;
  }

 private:
  std::vector<FieldSpec> fields_;
  std::size_t hash_buckets_ = kDefaultHashBuckets;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

// Raw attribute values for one entity: field name -> values. Multi-hot fields
// carry several values; every other kind carries one.
using RawFeatures = std::map<std::string, std::vector<std::string>>;

// Parses `YYYY-MM-DD` (days since epoch) or a plain integer.
double parse_date(const std::string& s);

// Concatenated block encoding: one-hot -> unit indicator plus a trailing
// "other" slot for unknown categories (hashed blocks have no such slot);
// multi-hot -> 0/1 indicators; numeric/date -> min-max scaled to [0, 1],
// clamped with a warning when out of range. Warnings are also appended to
// `warnings` when given.
Vector encode(const FeatureSchema& schema, const RawFeatures& raw,
              std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Datasets

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;

  bool operator==(const InteractionRecord&) const = default;
};

struct DomainDataset {
  std::string name;
  std::vector<InteractionRecord> interactions;
  std::unordered_map<std::string, RawFeatures> user_features;
  std::unordered_map<std::string, RawFeatures> item_features;
  FeatureSchema user_schema;
  FeatureSchema item_schema;

  // Throws DataError when an interaction references an entity without a
  // feature row or carries a rating outside [0, 1].
  void validate() const;

  // Sorted ids, so iteration order never depends on hashing.
  std::vector<std::string> user_ids() const;
  std::vector<std::string> item_ids() const;
  // Ids of users that have at least one interaction.
  std::vector<std::string> active_user_ids() const;
};

struct DomainPaths {
  std::filesystem::path interactions;
  std::filesystem::path user_features;
  std::filesystem::path item_features;
};

DomainDataset load_domain(const std::string& name, const DomainPaths& paths,
                          const FeatureSchema& user_schema, const FeatureSchema& item_schema);

// Throws DataError naming the first item id present in both domains.
void check_disjoint_items(const DomainDataset& a, const DomainDataset& b);

void write_interactions(const std::filesystem::path& path,
                        const std::vector<InteractionRecord>& records);
void write_features(const std::filesystem::path& path,
                    const std::unordered_map<std::string, RawFeatures>& features);

// Standard file names inside a data directory: <dir>/<domain>_interactions.csv,
// <domain>_user_features.csv, <domain>_item_features.csv,
// <domain>_user_schema.txt, <domain>_item_schema.txt.
DomainPaths domain_paths(const std::filesystem::path& dir, const std::string& domain);
std::filesystem::path user_schema_path(const std::filesystem::path& dir, const std::string& domain);
std::filesystem::path item_schema_path(const std::filesystem::path& dir, const std::string& domain);
void save_domain(const std::filesystem::path& dir, const DomainDataset& ds);
DomainDataset load_domain_dir(const std::filesystem::path& dir, const std::string& domain);

// ---------------------------------------------------------------------------
// Cross-validation folds

struct FoldSplit {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // per-record fold index

  std::vector<std::size_t> fold_sizes() const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
  std::vector<std::size_t> test_indices(std::size_t fold) const;
};

// Record-level folds: a seeded permutation of the records dealt round-robin.
FoldSplit kfold(std::size_t n_records, std::size_t k, std::uint64_t seed);
FoldSplit kfold(const DomainDataset& dataset, std::size_t k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Small CSV helpers shared with the report writers.

std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);
std::string format_double(double v);

}  // namespace ddtcdr
