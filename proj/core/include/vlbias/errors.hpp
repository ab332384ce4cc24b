#pragma once

#include <stdexcept>
#include <string>

namespace vlbias {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File/structure level
struct FormatError : Error { using Error::Error; };           // bad magic, truncated file, unparsable JSON
struct ConsistencyError : Error { using Error::Error; };      // pieces disagree (row counts, dims, vocab, duplicate ids)
struct DataError : Error { using Error::Error; };             // values violate declared properties (NaN/Inf, bad enum)
struct IoError : Error { using Error::Error; };               // cannot open/read/write

// Domain level
struct DimError : Error { using Error::Error; };              // embedding dimension mismatch
struct DomainError : Error { using Error::Error; };           // argument outside mathematical domain
struct ConfigError : Error { using Error::Error; };           // invalid configuration
struct PairingError : Error { using Error::Error; };          // counterfactual counterpart missing
struct QueueNotWarmError : Error { using Error::Error; };     // embedding queue not filled to capacity
struct StateError : Error { using Error::Error; };            // required cached state absent
struct LabelError : Error { using Error::Error; };            // sample lacks a required label
struct DegenerateError : Error { using Error::Error; };       // degenerate numerical input (zero vector, zero variance)
struct UsageError : Error { using Error::Error; };            // command-line misuse

}  // namespace vlbias
