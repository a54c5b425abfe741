#include "mpcjoin/data.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "mpcjoin/errors.hpp"

namespace mpcjoin {

namespace {
constexpr Weight kInf = std::numeric_limits<Weight>::max();

Weight checked_add(Weight a, Weight b) {
  Weight r;
  if (__builtin_add_overflow(a, b, &r)) fail(Err::Overflow, "annotation addition overflow");
  return r;
}
Weight checked_mul(Weight a, Weight b) {
  Weight r;
  if (__builtin_mul_overflow(a, b, &r)) fail(Err::Overflow, "annotation multiplication overflow");
  return r;
}

struct RowHash {
  size_t arity;
  const std::vector<Value>* vals;
  size_t operator()(size_t i) const {
    size_t h = 1469598103934665603ull;
    for (size_t k = 0; k < arity; ++k) h = (h ^ (*vals)[i * arity + k]) * 1099511628211ull;
    return h;
  }
};
struct RowEq {
  size_t arity;
  const std::vector<Value>* vals;
  bool operator()(size_t a, size_t b) const {
    return std::equal(vals->begin() + a * arity, vals->begin() + (a + 1) * arity, vals->begin() + b * arity);
  }
};

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_num(const std::string& s, const std::string& ctx) {
  T v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) fail(Err::ParseError, ctx + ": bad number '" + s + "'");
  return v;
}
}  // namespace

Semiring Semiring::from_name(const std::string& name) {
  if (name == "counting") return counting();
  if (name == "sum-product") return sum_product();
  if (name == "min-plus") return min_plus();
  fail(Err::ParseError, "unknown semiring " + name);
}

const char* Semiring::name() const {
  switch (id) {
    case SemiringId::Counting: return "counting";
    case SemiringId::SumProduct: return "sum-product";
    case SemiringId::MinPlus: return "min-plus";
  }
  return "?";
}

Weight Semiring::zero() const { return id == SemiringId::MinPlus ? kInf : 0; }
Weight Semiring::one() const { return id == SemiringId::MinPlus ? 0 : 1; }

Weight Semiring::plus(Weight a, Weight b) const {
  if (id == SemiringId::MinPlus) return std::min(a, b);
  return checked_add(a, b);
}

Weight Semiring::times(Weight a, Weight b) const {
  if (id == SemiringId::MinPlus) {
    if (a == kInf || b == kInf) return kInf;
    Weight r = checked_add(a, b);
    if (r == kInf) fail(Err::Overflow, "min-plus value reached infinity");
    return r;
  }
  return checked_mul(a, b);
}

void Relation::add(const std::vector<Value>& row, Weight w) {
  if (row.size() != arity()) fail(Err::SchemaMismatch, "row arity differs from schema of " + name);
  values.insert(values.end(), row.begin(), row.end());
  weights.push_back(w);
}

int Relation::column(const std::string& attr) const {
  for (size_t i = 0; i < schema.size(); ++i)
    if (schema[i] == attr) return static_cast<int>(i);
  return -1;
}

bool Relation::has_duplicates() const {
  std::unordered_set<size_t, RowHash, RowEq> seen(size() * 2 + 1, RowHash{arity(), &values}, RowEq{arity(), &values});
  for (size_t i = 0; i < size(); ++i)
    if (!seen.insert(i).second) return true;
  return false;
}

void Relation::sort_rows() {
  size_t a = arity();
  std::vector<size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
    return std::lexicographical_compare(values.begin() + x * a, values.begin() + (x + 1) * a, values.begin() + y * a,
                                        values.begin() + (y + 1) * a);
  });
  std::vector<Value> v;
  std::vector<Weight> w;
  v.reserve(values.size());
  w.reserve(weights.size());
  for (size_t i : idx) {
    v.insert(v.end(), values.begin() + i * a, values.begin() + (i + 1) * a);
    w.push_back(weights[i]);
  }
  values.swap(v);
  weights.swap(w);
}

Relation load_relation(const std::string& path, const std::vector<std::string>& schema, const Semiring& sr) {
  std::ifstream in(path);
  if (!in) fail(Err::IoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(Err::ParseError, path + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_tabs(line);
  bool weighted = !header.empty() && header.back() == "#w";
  if (weighted) header.pop_back();
  if (header.size() == 1 && header[0].empty()) header.clear();
  if (header != schema) fail(Err::SchemaMismatch, path + ": header does not match schema");
  Relation r;
  r.name = std::filesystem::path(path).stem().string();
  r.schema = schema;
  r.weighted = weighted;
  size_t lineno = 1;
  std::vector<Value> row(schema.size());
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && !schema.empty()) continue;
    auto cells = split_tabs(line);
    if (schema.empty() && !weighted && cells.size() == 1 && cells[0].empty()) cells.clear();
    size_t expect = schema.size() + (weighted ? 1 : 0);
    std::string ctx = path + ":" + std::to_string(lineno);
    if (cells.size() != expect) fail(Err::ParseError, ctx + ": expected " + std::to_string(expect) + " columns");
    for (size_t i = 0; i < schema.size(); ++i) row[i] = parse_num<Value>(cells[i], ctx);
    Weight w = weighted ? parse_num<Weight>(cells.back(), ctx) : sr.one();
    r.add(row, w);
  }
  if (r.has_duplicates()) fail(Err::DuplicateTuple, path + ": duplicate tuple");
  return r;
}

void save_relation(const Relation& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(Err::IoError, "cannot write " + path);
  for (size_t i = 0; i < r.schema.size(); ++i) out << (i ? "\t" : "") << r.schema[i];
  if (r.weighted) out << (r.schema.empty() ? "" : "\t") << "#w";
  out << "\n";
  for (size_t i = 0; i < r.size(); ++i) {
    const Value* row = r.row(i);
    for (size_t k = 0; k < r.arity(); ++k) out << (k ? "\t" : "") << row[k];
    if (r.weighted) out << (r.arity() ? "\t" : "") << r.weights[i];
    out << "\n";
  }
  if (!out) fail(Err::IoError, "write failed " + path);
}

static std::vector<int> columns_of(const Relation& r, const std::vector<std::string>& attrs) {
  std::vector<int> cols;
  for (auto& a : attrs) {
    int c = r.column(a);
    if (c < 0) fail(Err::UnknownAttribute, a + " not in schema of " + r.name);
    cols.push_back(c);
  }
  return cols;
}

std::vector<Value> project_tuple(const Relation& r, size_t row, const std::vector<std::string>& attrs) {
  auto cols = columns_of(r, attrs);
  std::vector<Value> out;
  for (int c : cols) out.push_back(r.row(row)[c]);
  return out;
}

Relation project(const Relation& r, const std::vector<std::string>& attrs, const Semiring& sr) {
  auto cols = columns_of(r, attrs);
  Relation out;
  out.name = r.name;
  out.schema = attrs;
  std::unordered_set<size_t, RowHash, RowEq> seen(r.size() * 2 + 1, RowHash{attrs.size(), &out.values},
                                                  RowEq{attrs.size(), &out.values});
  std::vector<Value> row(attrs.size());
  for (size_t i = 0; i < r.size(); ++i) {
    for (size_t k = 0; k < cols.size(); ++k) row[k] = r.row(i)[cols[k]];
    out.add(row, sr.one());
    if (!seen.insert(out.size() - 1).second) {
      out.values.resize(out.values.size() - attrs.size());
      out.weights.pop_back();
    }
  }
  return out;
}

Relation select(const Relation& r, const std::vector<std::string>& attrs, const std::vector<Value>& vals) {
  auto cols = columns_of(r, attrs);
  if (vals.size() != cols.size()) fail(Err::SchemaMismatch, "selection value count");
  Relation out;
  out.name = r.name;
  out.schema = r.schema;
  out.weighted = r.weighted;
  for (size_t i = 0; i < r.size(); ++i) {
    bool ok = true;
    for (size_t k = 0; k < cols.size() && ok; ++k) ok = r.row(i)[cols[k]] == vals[k];
    if (ok) out.add(std::vector<Value>(r.row(i), r.row(i) + r.arity()), r.weights[i]);
  }
  return out;
}

std::uint64_t Instance::input_size() const {
  std::uint64_t s = 0;
  for (auto& r : rels) s += r.size();
  return s;
}

std::uint64_t input_size(const Instance& inst) { return inst.input_size(); }

Instance make_instance(const Query& q, std::vector<Relation> rels) {
  Instance inst;
  inst.q = q;
  for (auto& e : q.edges()) {
    auto it = std::find_if(rels.begin(), rels.end(), [&](const Relation& r) { return r.name == e.name; });
    if (it == rels.end()) fail(Err::SchemaMismatch, "no relation for edge " + e.name);
    std::vector<std::string> want;
    for (AttrId x : e.attrs) want.push_back(q.attr_name(x));
    std::vector<std::string> a = want, b = it->schema;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) fail(Err::SchemaMismatch, "relation " + e.name + " schema differs from its edge");
    if (want == it->schema) {
      inst.rels.push_back(std::move(*it));
    } else {
      auto cols = columns_of(*it, want);
      Relation r;
      r.name = it->name;
      r.schema = want;
      r.weighted = it->weighted;
      r.weights = it->weights;
      r.values.reserve(it->values.size());
      for (size_t i = 0; i < it->size(); ++i)
        for (int c : cols) r.values.push_back(it->row(i)[c]);
      inst.rels.push_back(std::move(r));
    }
  }
  return inst;
}

std::vector<Value> active_domain(const Instance& inst, AttrId x) {
  std::vector<Value> out;
  for (auto& r : inst.rels) {
    int c = r.column(inst.q.attr_name(x));
    if (c < 0) continue;
    for (size_t i = 0; i < r.size(); ++i) out.push_back(r.row(i)[c]);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Instance load_instance(const Query& q, const std::string& manifest_path, const Semiring& sr) {
  std::ifstream in(manifest_path);
  if (!in) fail(Err::IoError, "cannot open " + manifest_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    fail(Err::ParseError, manifest_path + ": " + ex.what());
  }
  auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<Relation> rels;
  for (auto& e : q.edges()) {
    if (!j.contains(e.name)) fail(Err::SchemaMismatch, "manifest lacks edge " + e.name);
    std::filesystem::path p = j.at(e.name).get<std::string>();
    if (p.is_relative()) p = base / p;
    // Header order defines the column order; read it first.
    std::ifstream hf(p);
    if (!hf) fail(Err::IoError, "cannot open " + p.string());
    std::string line;
    std::getline(hf, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_tabs(line);
    if (!header.empty() && header.back() == "#w") header.pop_back();
    if (header.size() == 1 && header[0].empty()) header.clear();
    Relation r = load_relation(p.string(), header, sr);
    r.name = e.name;
    rels.push_back(std::move(r));
  }
  return make_instance(q, std::move(rels));
}

void save_instance(const Instance& inst, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  for (auto& r : inst.rels) {
    std::string file = r.name + ".tsv";
    save_relation(r, (std::filesystem::path(dir) / file).string());
    j[r.name] = file;
  }
  std::ofstream out(std::filesystem::path(dir) / "manifest.json");
  if (!out) fail(Err::IoError, "cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

}  // namespace mpcjoin
