#pragma once
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mpcjoin/data.hpp"

namespace mpcjoin {

// One constituent of an emitted join result: a tuple (schema + values) and its annotation.
struct Frag {
  const std::vector<AttrId>* schema;
  const Value* row;
  Weight w;
};

// Receives emit(t_1, ..., t_k) calls. `server` is the emitting virtual server
// in the caller's group; emission is free.
class EmitSink {
 public:
  virtual ~EmitSink() = default;
  virtual void emit(int server, const Frag* frags, size_t k) = 0;
};

// Translates server ids of a sub-group back to the parent group.
class OffsetSink : public EmitSink {
 public:
  OffsetSink(EmitSink& parent, int offset, int parent_n) : p_(parent), off_(offset), n_(parent_n) {}
  void emit(int server, const Frag* frags, size_t k) override { p_.emit((off_ + server) % n_, frags, k); }

 private:
  EmitSink& p_;
  int off_, n_;
};

class CountSink : public EmitSink {
 public:
  void emit(int, const Frag*, size_t) override { ++count_; }
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_ = 0;
};

// Forwards to another sink and counts emissions.
class CountingSink : public EmitSink {
 public:
  explicit CountingSink(EmitSink& inner) : p_(inner) {}
  void emit(int server, const Frag* frags, size_t k) override {
    ++count_;
    p_.emit(server, frags, k);
  }
  std::uint64_t count() const { return count_; }

 private:
  EmitSink& p_;
  std::uint64_t count_ = 0;
};

// Assembles full result tuples over attributes 0..n_attrs-1. Attributes with
// larger ids (dummy join attributes) are checked for consistency and dropped.
class CollectSink : public EmitSink {
 public:
  explicit CollectSink(int n_attrs, Semiring sr = Semiring::counting()) : n_(n_attrs), sr_(sr) {}
  void emit(int server, const Frag* frags, size_t k) override;

  size_t size() const { return weights_.size(); }
  // Sorted rows, duplicates kept (count them with duplicates()).
  Relation result(const Query& q) const;
  std::uint64_t duplicates() const;
  std::uint64_t inconsistent() const { return inconsistent_; }
  std::uint64_t incomplete() const { return incomplete_; }
  const std::vector<std::uint64_t>& per_server() const { return per_server_; }

 private:
  int n_;
  Semiring sr_;
  std::vector<Value> rows_;
  std::vector<Weight> weights_;
  std::vector<std::uint64_t> per_server_;
  std::uint64_t inconsistent_ = 0, incomplete_ = 0;
};

class TsvSink : public EmitSink {
 public:
  TsvSink(const std::string& path, const Query& q);
  void emit(int server, const Frag* frags, size_t k) override;
  std::uint64_t count() const { return count_; }

 private:
  std::ofstream out_;
  int n_;
  std::uint64_t count_ = 0;
};

// ⊕ over output-attribute groups of ⊗ over constituents.
class AggregateSink : public EmitSink {
 public:
  AggregateSink(std::vector<AttrId> y, Semiring sr) : y_(std::move(y)), sr_(sr) {}
  void emit(int server, const Frag* frags, size_t k) override;
  const std::map<std::vector<Value>, Weight>& groups() const { return g_; }
  Relation result(const Query& q) const;

 private:
  std::vector<AttrId> y_;
  Semiring sr_;
  std::map<std::vector<Value>, Weight> g_;
};

// Value of attribute x inside the fragments, or false if absent.
bool frag_value(const Frag* frags, size_t k, AttrId x, Value& out);

}  // namespace mpcjoin
