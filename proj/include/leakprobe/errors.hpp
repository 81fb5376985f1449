#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace leakprobe {

// Base of every error raised by the library. Subclasses carry the offending
// names so that the CLI can map them to exit codes without string matching.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

// ---- netlist -------------------------------------------------------------

class MalformedDocument : public Error {
  public:
    using Error::Error;
};

class UnknownGateKind : public Error {
  public:
    explicit UnknownGateKind(const std::string& kind)
        : Error("unknown gate kind '" + kind + "'"), kind(kind) {}
    std::string kind;
};

class WidthMismatch : public Error {
  public:
    WidthMismatch(std::string gate, uint32_t expected, uint32_t actual)
        : Error("width mismatch on gate '" + gate + "': expected " + std::to_string(expected) +
                ", got " + std::to_string(actual)),
          gate(std::move(gate)), expected(expected), actual(actual) {}
    std::string gate;
    uint32_t expected;
    uint32_t actual;
};

class MultipleDrivers : public Error {
  public:
    explicit MultipleDrivers(std::string wire)
        : Error("wire '" + wire + "' has more than one driver"), wire(std::move(wire)) {}
    std::string wire;
};

class DanglingReference : public Error {
  public:
    explicit DanglingReference(std::string name)
        : Error("reference to undeclared name '" + name + "'"), name(std::move(name)) {}
    std::string name;
};

class CombinatorialLoop : public Error {
  public:
    explicit CombinatorialLoop(std::vector<std::string> cycle);
    std::vector<std::string> cycle;
};

// ---- expr ----------------------------------------------------------------

class TypeError : public Error {
  public:
    using Error::Error;
};

class IndexOutOfRange : public Error {
  public:
    using Error::Error;
};

class UnboundSymbol : public Error {
  public:
    explicit UnboundSymbol(std::string name)
        : Error("unbound symbol '" + name + "'"), name(std::move(name)) {}
    std::string name;
};

class ParseError : public Error {
  public:
    using Error::Error;
};

// ---- sim -----------------------------------------------------------------

class SimulationError : public Error {
  public:
    using Error::Error;
};

class ConsistencyViolation : public SimulationError {
  public:
    explicit ConsistencyViolation(std::string wire, const std::string& detail = {})
        : SimulationError("symbolic and concrete values disagree on wire '" + wire + "'" +
                          (detail.empty() ? std::string{} : ": " + detail)),
          wire(std::move(wire)) {}
    std::string wire;
};

// ---- verify / manager ----------------------------------------------------

class TooLarge : public Error {
  public:
    TooLarge(uint32_t bits, uint32_t limit)
        : Error("enumeration needs " + std::to_string(bits) + " symbolic bits, limit is " +
                std::to_string(limit)),
          bits(bits), limit(limit) {}
    uint32_t bits;
    uint32_t limit;
};

class TooMany : public Error {
  public:
    TooMany(uint64_t count, uint64_t limit)
        : Error(std::to_string(count) + " d-uplets exceed the cap of " + std::to_string(limit)),
          count(count), limit(limit) {}
    uint64_t count;
    uint64_t limit;
};

inline CombinatorialLoop::CombinatorialLoop(std::vector<std::string> c)
    : Error([&] {
          std::string msg = "combinatorial loop through";
          for (const auto& w : c) msg += " " + w;
          return msg;
      }()),
      cycle(std::move(c)) {}

} // namespace leakprobe
