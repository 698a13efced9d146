#pragma once

#include <stdexcept>
#include <string>

namespace fam {

// Shape disagreement between operands; the message names the operation and shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside an operation's mathematical domain (e.g. log of a non-positive).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A scalar was required but a tensor of larger extent was supplied.
class RankError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Gradient requested for a tensor that is not recorded in the graph.
class UnreachableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fam
