#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace arena {

class ArenaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (XML, JSON, config). `line` is 0 when unknown.
class ParseError : public ArenaError {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : ArenaError(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyMapError : public ArenaError {
 public:
  using ArenaError::ArenaError;
};

class TopologyError : public ArenaError {
 public:
  TopologyError(const std::string& what, std::vector<std::string> ids)
      : ArenaError(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class SnapError : public ArenaError {
 public:
  using ArenaError::ArenaError;
};

class UnreachableError : public ArenaError {
 public:
  using ArenaError::ArenaError;
};

class SaturationError : public ArenaError {
 public:
  SaturationError(const std::string& what, std::size_t achievable)
      : ArenaError(what), achievable_(achievable) {}
  std::size_t achievable() const { return achievable_; }

 private:
  std::size_t achievable_;
};

/// A caller broke an operation contract (wrong mode, wrong sizes, ...).
class ContractError : public ArenaError {
 public:
  using ArenaError::ArenaError;
};

/// Invalid value; `field` names the offending field path when known.
class ValidationError : public ArenaError {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : ArenaError(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class TransportError : public ArenaError {
 public:
  TransportError(const std::string& what, bool retry_budget_exhausted)
      : ArenaError(what), exhausted_(retry_budget_exhausted) {}
  bool retry_budget_exhausted() const { return exhausted_; }

 private:
  bool exhausted_;
};

class ProtocolError : public ArenaError {
 public:
  using ArenaError::ArenaError;
};

/// Episode log corruption; `record` is the 0-based line index.
class IntegrityError : public ArenaError {
 public:
  IntegrityError(const std::string& what, std::size_t record)
      : ArenaError(what + " (record " + std::to_string(record) + ")"),
        record_(record) {}
  std::size_t record() const { return record_; }

 private:
  std::size_t record_;
};

}  // namespace arena
