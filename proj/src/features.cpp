#include "ddtcdr/features.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "ddtcdr/error.hpp"
#include "ddtcdr/log.hpp"
#include "ddtcdr/rng.hpp"

namespace ddtcdr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<double> to_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::optional<long long> to_integer(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_categorical(FieldKind k) { return k == FieldKind::one_hot || k == FieldKind::multi_hot; }

std::size_t category_count(const FieldSpec& f) {
  return f.vocabulary.empty() ? f.cardinality : f.vocabulary.size();
}

std::string location(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

}  // namespace

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::one_hot: return "one-hot";
    case FieldKind::multi_hot: return "multi-hot";
    case FieldKind::numeric: return "numeric";
    case FieldKind::date: return "date";
  }
  return "?";
}

double parse_date(const std::string& s) {
  const std::string t = trim(s);
  if (auto n = to_integer(t)) return static_cast<double>(*n);
  int y = 0;
  unsigned m = 0, d = 0;
  char dash1 = 0, dash2 = 0;
  std::istringstream is(t);
  if (!(is >> y >> dash1 >> m >> dash2 >> d) || dash1 != '-' || dash2 != '-' || !is.eof()) {
    throw DataError("cannot parse date '" + s + "' (expected YYYY-MM-DD or an integer)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + s + "'");
  return static_cast<double>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

// ---------------------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FieldSpec> fields, std::size_t hash_buckets)
    : fields_(std::move(fields)), hash_buckets_(hash_buckets) {
  if (hash_buckets_ == 0) throw ConfigError("schema: hash bucket count must be >= 1");
  std::set<std::string> seen;
  for (const auto& f : fields_) {
    if (f.name.empty()) throw ConfigError("schema: empty field name");
    if (!seen.insert(f.name).second) throw ConfigError("schema: duplicate field '" + f.name + "'");
    if (is_categorical(f.kind)) {
      if (category_count(f) < 1) {
        throw ConfigError("schema: field '" + f.name + "' needs cardinality >= 1");
      }
      if (!f.vocabulary.empty()) {
        std::set<std::string> vs(f.vocabulary.begin(), f.vocabulary.end());
        if (vs.size() != f.vocabulary.size()) {
          throw ConfigError("schema: field '" + f.name + "' repeats a vocabulary entry");
        }
      }
    } else if (!(f.min < f.max)) {
      throw ConfigError("schema: field '" + f.name + "' needs min < max");
    }
  }
  offsets_.reserve(fields_.size());
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    offsets_.push_back(width_);
    width_ += block_width(i);
  }
}

bool FeatureSchema::is_hashed(std::size_t field) const {
  const FieldSpec& f = fields_.at(field);
  return is_categorical(f.kind) && f.vocabulary.empty() && f.cardinality > hash_buckets_;
}

std::size_t FeatureSchema::block_width(std::size_t field) const {
  const FieldSpec& f = fields_.at(field);
  switch (f.kind) {
    case FieldKind::one_hot:
      return is_hashed(field) ? hash_buckets_ : category_count(f) + 1;
    case FieldKind::multi_hot:
      return is_hashed(field) ? hash_buckets_ : category_count(f);
    case FieldKind::numeric:
    case FieldKind::date:
      return 1;
  }
  return 0;
}

const FieldSpec* FeatureSchema::find(const std::string& name) const {
  for (const auto& f : fields_)
    if (f.name == name) return &f;
  return nullptr;
}

FeatureSchema FeatureSchema::parse(std::istream& is, const std::string& source,
                                   std::size_t hash_buckets) {
  std::vector<FieldSpec> fields;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "field,kind,cardinality_or_range") continue;
    const auto parts = split_csv_line(t);
    if (parts.size() != 3) {
      throw DataError(location(source, lineno) + ": expected 3 comma-separated entries, got " +
                      std::to_string(parts.size()));
    }
    FieldSpec f;
    f.name = trim(parts[0]);
    const std::string kind = trim(parts[1]);
    const std::string arg = trim(parts[2]);
    if (kind == "one-hot") {
      f.kind = FieldKind::one_hot;
    } else if (kind == "multi-hot") {
      f.kind = FieldKind::multi_hot;
    } else if (kind == "numeric" || kind == "numerical") {
      f.kind = FieldKind::numeric;
    } else if (kind == "date") {
      f.kind = FieldKind::date;
    } else {
      throw DataError(location(source, lineno) + ": unknown field kind '" + kind + "'");
    }
    if (is_categorical(f.kind)) {
      if (auto n = to_integer(arg); n && arg.find('|') == std::string::npos) {
        if (*n < 1) throw DataError(location(source, lineno) + ": cardinality must be >= 1");
        f.cardinality = static_cast<std::size_t>(*n);
      } else {
        std::stringstream ss(arg);
        std::string v;
        while (std::getline(ss, v, '|')) f.vocabulary.push_back(trim(v));
        f.cardinality = f.vocabulary.size();
      }
    } else {
      const auto colon = arg.find(':');
      if (colon == std::string::npos) {
        throw DataError(location(source, lineno) + ": expected min:max range, got '" + arg + "'");
      }
      const std::string lo = arg.substr(0, colon);
      const std::string hi = arg.substr(colon + 1);
      if (f.kind == FieldKind::date) {
        f.min = parse_date(lo);
        f.max = parse_date(hi);
      } else {
        auto l = to_double(lo);
        auto h = to_double(hi);
        if (!l || !h) throw DataError(location(source, lineno) + ": bad numeric range '" + arg + "'");
        f.min = *l;
        f.max = *h;
      }
    }
    fields.push_back(std::move(f));
  }
  try {
    return FeatureSchema(std::move(fields), hash_buckets);
  } catch (const ConfigError& e) {
    throw DataError(source + ": " + e.what());
  }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path, std::size_t hash_buckets) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open schema file " + path.string());
  return parse(is, path.string(), hash_buckets);
}

void FeatureSchema::write(std::ostream& os) const {
  os << "field,kind,cardinality_or_range\n";
  for (const auto& f : fields_) {
    os << f.name << ',' << to_string(f.kind) << ',';
    if (is_categorical(f.kind)) {
      if (f.vocabulary.empty()) {
        os << f.cardinality;
      } else {
        for (std::size_t i = 0; i < f.vocabulary.size(); ++i) os << (i ? "|" : "") << f.vocabulary[i];
      }
    } else {
      os << format_double(f.min) << ':' << format_double(f.max);
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

// Slot of a categorical value inside its block, or nullopt when unknown.
std::optional<std::size_t> category_slot(const FeatureSchema& schema, std::size_t field,
                                         const std::string& value) {
  const FieldSpec& f = schema.fields()[field];
  if (schema.is_hashed(field)) return fnv1a(value) % schema.hash_buckets();
  if (!f.vocabulary.empty()) {
    auto it = std::find(f.vocabulary.begin(), f.vocabulary.end(), value);
    if (it == f.vocabulary.end()) return std::nullopt;
    return static_cast<std::size_t>(it - f.vocabulary.begin());
  }
  auto n = to_integer(value);
  if (!n || *n < 0 || static_cast<std::size_t>(*n) >= f.cardinality) return std::nullopt;
  return static_cast<std::size_t>(*n);
}

void note(std::vector<std::string>* warnings, const std::string& msg) {
  log::warn(msg);
  if (warnings) warnings->push_back(msg);
}

}  // namespace

Vector encode(const FeatureSchema& schema, const RawFeatures& raw,
              std::vector<std::string>* warnings) {
  Vector out(schema.width(), 0.0);
  for (const auto& [name, values] : raw) {
    if (!schema.find(name)) note(warnings, "encode: ignoring field '" + name + "' not in schema");
  }
  static const std::vector<std::string> kNone;
  for (std::size_t i = 0; i < schema.fields().size(); ++i) {
    const FieldSpec& f = schema.fields()[i];
    const std::size_t off = schema.block_offset(i);
    auto it = raw.find(f.name);
    const std::vector<std::string>& values = it == raw.end() ? kNone : it->second;

    switch (f.kind) {
      case FieldKind::one_hot: {
        if (values.size() > 1) {
          throw DataError("encode: one-hot field '" + f.name + "' has " +
                          std::to_string(values.size()) + " values");
        }
        const bool hashed = schema.is_hashed(i);
        if (values.empty()) {
          if (!hashed) out[off + category_count(f)] = 1.0;
          break;
        }
        if (auto slot = category_slot(schema, i, values[0])) {
          out[off + *slot] = 1.0;
        } else {
          note(warnings, "encode: unknown category '" + values[0] + "' for field '" + f.name +
                             "' mapped to other");
          out[off + category_count(f)] = 1.0;
        }
        break;
      }
      case FieldKind::multi_hot: {
        for (const auto& v : values) {
          if (auto slot = category_slot(schema, i, v)) {
            out[off + *slot] = 1.0;
          } else {
            note(warnings, "encode: unknown category '" + v + "' for field '" + f.name +
                               "' dropped");
          }
        }
        break;
      }
      case FieldKind::numeric:
      case FieldKind::date: {
        if (values.size() != 1) {
          throw DataError("encode: field '" + f.name + "' needs exactly one value, got " +
                          std::to_string(values.size()));
        }
        double v = 0.0;
        if (f.kind == FieldKind::date) {
          v = parse_date(values[0]);
        } else if (auto d = to_double(values[0]); d && std::isfinite(*d)) {
          v = *d;
        } else {
          throw DataError("encode: field '" + f.name + "' has non-numeric value '" +
                          values[0] + "'");
        }
        if (v < f.min || v > f.max) {
          note(warnings, "encode: value " + values[0] + " of field '" + f.name +
                             "' clamped to [" + format_double(f.min) + ", " +
                             format_double(f.max) + "]");
          v = std::clamp(v, f.min, f.max);
        }
        out[off] = (v - f.min) / (f.max - f.min);
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void DomainDataset::validate() const {
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& r = interactions[i];
    if (!(r.rating >= 0.0 && r.rating <= 1.0)) {
      throw DataError(name + ": record " + std::to_string(i) + " has rating " +
                      format_double(r.rating) + " outside [0,1]");
    }
    if (!user_features.contains(r.user_id)) {
      throw DataError(name + ": no user feature row for id '" + r.user_id + "'");
    }
    if (!item_features.contains(r.item_id)) {
      throw DataError(name + ": no item feature row for id '" + r.item_id + "'");
    }
  }
}

namespace {
template <typename Map>
std::vector<std::string> sorted_keys(const Map& m) {
  std::vector<std::string> ids;
  ids.reserve(m.size());
  for (const auto& [k, v] : m) ids.push_back(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}
}  // namespace

std::vector<std::string> DomainDataset::user_ids() const { return sorted_keys(user_features); }
std::vector<std::string> DomainDataset::item_ids() const { return sorted_keys(item_features); }

std::vector<std::string> DomainDataset::active_user_ids() const {
  std::set<std::string> s;
  for (const auto& r : interactions) s.insert(r.user_id);
  return {s.begin(), s.end()};
}

namespace {

std::ifstream open_csv(const std::filesystem::path& path, const std::string& expected_header,
                       std::size_t& lineno) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string header;
  lineno = 0;
  if (!std::getline(is, header)) throw DataError(path.string() + ": missing header");
  ++lineno;
  if (!header.empty() && header.back() == '\r') header.pop_back();
  // Tolerate a UTF-8 byte order mark.
  if (header.rfind("\xEF\xBB\xBF", 0) == 0) header.erase(0, 3);
  if (trim(header) != expected_header) {
    throw DataError(path.string() + ":1: expected header '" + expected_header + "', got '" +
                    header + "'");
  }
  return is;
}

std::unordered_map<std::string, RawFeatures> read_features(const std::filesystem::path& path,
                                                           const FeatureSchema& schema) {
  std::size_t lineno = 0;
  std::ifstream is = open_csv(path, "entity_id,field,value", lineno);
  std::unordered_map<std::string, RawFeatures> out;
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto parts = split_csv_line(line);
    const std::string where = location(path.string(), lineno);
    if (parts.size() != 3) {
      throw DataError(where + ": expected 3 fields, got " + std::to_string(parts.size()));
    }
    const std::string id = trim(parts[0]);
    const std::string field = trim(parts[1]);
    if (id.empty()) throw DataError(where + ": empty entity_id");
    if (!schema.find(field)) throw DataError(where + ": field '" + field + "' not in schema");
    out[id][field].push_back(trim(parts[2]));
  }
  return out;
}

}  // namespace

DomainDataset load_domain(const std::string& name, const DomainPaths& paths,
                          const FeatureSchema& user_schema, const FeatureSchema& item_schema) {
  DomainDataset ds;
  ds.name = name;
  ds.user_schema = user_schema;
  ds.item_schema = item_schema;

  std::size_t lineno = 0;
  std::ifstream is = open_csv(paths.interactions, "user_id,item_id,rating,timestamp", lineno);
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = location(paths.interactions.string(), lineno);
    const auto parts = split_csv_line(line);
    if (parts.size() != 3 && parts.size() != 4) {
      throw DataError(where + ": expected 4 fields, got " + std::to_string(parts.size()));
    }
    InteractionRecord r;
    r.user_id = trim(parts[0]);
    r.item_id = trim(parts[1]);
    if (r.user_id.empty() || r.item_id.empty()) throw DataError(where + ": empty id");
    auto rating = to_double(parts[2]);
    if (!rating) throw DataError(where + ": malformed rating '" + parts[2] + "'");
    if (!(*rating >= 0.0 && *rating <= 1.0)) {
      throw DataError(where + ": rating " + trim(parts[2]) + " outside [0,1]");
    }
    r.rating = *rating;
    if (parts.size() == 4 && !trim(parts[3]).empty()) {
      auto ts = to_integer(parts[3]);
      if (!ts) throw DataError(where + ": malformed timestamp '" + parts[3] + "'");
      r.timestamp = *ts;
    }
    ds.interactions.push_back(std::move(r));
  }

  ds.user_features = read_features(paths.user_features, user_schema);
  ds.item_features = read_features(paths.item_features, item_schema);
  for (const auto& r : ds.interactions) {
    if (!ds.user_features.contains(r.user_id)) {
      throw DataError(name + ": missing user feature row for id '" + r.user_id + "'");
    }
    if (!ds.item_features.contains(r.item_id)) {
      throw DataError(name + ": missing item feature row for id '" + r.item_id + "'");
    }
  }
  return ds;
}

void check_disjoint_items(const DomainDataset& a, const DomainDataset& b) {
  for (const auto& id : a.item_ids()) {
    if (b.item_features.contains(id)) {
      throw DataError("item id '" + id + "' appears in both domains '" + a.name + "' and '" +
                      b.name + "'");
    }
  }
}

void write_interactions(const std::filesystem::path& path,
                        const std::vector<InteractionRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "user_id,item_id,rating,timestamp\n";
  for (const auto& r : records) {
    os << csv_escape(r.user_id) << ',' << csv_escape(r.item_id) << ',' << format_double(r.rating)
       << ',';
    if (r.timestamp) os << *r.timestamp;
    os << '\n';
  }
}

void write_features(const std::filesystem::path& path,
                    const std::unordered_map<std::string, RawFeatures>& features) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "entity_id,field,value\n";
  for (const auto& id : sorted_keys(features)) {
    for (const auto& [field, values] : features.at(id)) {
      for (const auto& v : values) {
        os << csv_escape(id) << ',' << csv_escape(field) << ',' << csv_escape(v) << '\n';
      }
    }
  }
}

DomainPaths domain_paths(const std::filesystem::path& dir, const std::string& domain) {
  return {dir / (domain + "_interactions.csv"), dir / (domain + "_user_features.csv"),
          dir / (domain + "_item_features.csv")};
}

std::filesystem::path user_schema_path(const std::filesystem::path& dir, const std::string& domain) {
  return dir / (domain + "_user_schema.txt");
}

std::filesystem::path item_schema_path(const std::filesystem::path& dir, const std::string& domain) {
  return dir / (domain + "_item_schema.txt");
}

void save_domain(const std::filesystem::path& dir, const DomainDataset& ds) {
  std::filesystem::create_directories(dir);
  const DomainPaths p = domain_paths(dir, ds.name);
  write_interactions(p.interactions, ds.interactions);
  write_features(p.user_features, ds.user_features);
  write_features(p.item_features, ds.item_features);
  {
    std::ofstream os(user_schema_path(dir, ds.name), std::ios::binary);
    ds.user_schema.write(os);
  }
  std::ofstream os(item_schema_path(dir, ds.name), std::ios::binary);
  ds.item_schema.write(os);
}

DomainDataset load_domain_dir(const std::filesystem::path& dir, const std::string& domain) {
  return load_domain(domain, domain_paths(dir, domain),
                     FeatureSchema::load(user_schema_path(dir, domain)),
                     FeatureSchema::load(item_schema_path(dir, domain)));
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> FoldSplit::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto f : assignments) ++sizes[f];
  return sizes;
}

std::vector<std::size_t> FoldSplit::train_indices(std::size_t fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) idx.push_back(i);
  return idx;
}

std::vector<std::size_t> FoldSplit::test_indices(std::size_t fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) idx.push_back(i);
  return idx;
}

FoldSplit kfold(std::size_t n_records, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2, got " + std::to_string(k));
  if (k > n_records) {
    throw ConfigError("kfold: k=" + std::to_string(k) + " exceeds record count " +
                      std::to_string(n_records));
  }
  std::vector<std::size_t> perm(n_records);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  FoldSplit split;
  split.k = k;
  split.assignments.assign(n_records, 0);
  for (std::size_t pos = 0; pos < n_records; ++pos) split.assignments[perm[pos]] = pos % k;
  return split;
}

FoldSplit kfold(const DomainDataset& dataset, std::size_t k, std::uint64_t seed) {
  return kfold(dataset.interactions.size(), k, seed);
}

// ---------------------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

}  // namespace ddtcdr
