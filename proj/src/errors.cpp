#include "mpcjoin/errors.hpp"

namespace mpcjoin {

const char* err_name(Err e) {
  switch (e) {
    case Err::ParseError: return "ParseError";
    case Err::SchemaMismatch: return "SchemaMismatch";
    case Err::DuplicateTuple: return "DuplicateTuple";
    case Err::UnknownAttribute: return "UnknownAttribute";
    case Err::CyclicQuery: return "CyclicQuery";
    case Err::InvalidOrder: return "InvalidOrder";
    case Err::NotRHierarchical: return "NotRHierarchical";
    case Err::InvalidGHD: return "InvalidGHD";
    case Err::NoGHDAvailable: return "NoGHDAvailable";
    case Err::TooLarge: return "TooLarge";
    case Err::UnknownAlgorithm: return "UnknownAlgorithm";
    case Err::ParamOutOfRange: return "ParamOutOfRange";
    case Err::IsRHierarchical: return "IsRHierarchical";
    case Err::ValueOutOfRange: return "ValueOutOfRange";
    case Err::PlanInvalid: return "PlanInvalid";
    case Err::AlgorithmInapplicable: return "AlgorithmInapplicable";
    case Err::IoError: return "IoError";
    case Err::Overflow: return "Overflow";
    case Err::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace mpcjoin
