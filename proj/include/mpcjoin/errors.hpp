#pragma once
#include <stdexcept>
#include <string>

namespace mpcjoin {

enum class Err {
  ParseError,
  SchemaMismatch,
  DuplicateTuple,
  UnknownAttribute,
  CyclicQuery,
  InvalidOrder,
  NotRHierarchical,
  InvalidGHD,
  NoGHDAvailable,
  TooLarge,
  UnknownAlgorithm,
  ParamOutOfRange,
  IsRHierarchical,
  ValueOutOfRange,
  PlanInvalid,
  AlgorithmInapplicable,
  IoError,
  Overflow,
  Internal,
};

const char* err_name(Err e);

class MpcError : public std::runtime_error {
 public:
  MpcError(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& what) { throw MpcError(code, what); }

}  // namespace mpcjoin
