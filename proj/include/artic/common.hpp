#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace artic {

// Units are plain doubles; the names carry the unit. 1 kbps == 1 bit/ms,
// so serialization time in ms is simply bits / kbps.
using Millis = double;
using Kbps = double;

using PacketId = std::uint64_t;
using FrameId = std::uint64_t;

// Malformed configuration, trace, or scenario input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated an operation's input domain (e.g. confidence outside [0,1]).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A run-time invariant was violated; the simulation aborts.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Fixed-point text formatting used by every CSV writer so that logs are
// byte-identical across runs.
std::string format_fixed(double value, int decimals = 3);

}  // namespace artic
