#pragma once

#include <stdexcept>
#include <string>

namespace buddy {

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A header or frame that does not have the expected length.
class framing_error : public error {
 public:
  using error::error;
};

// A record inside a bundle declares more bytes than the bundle holds.
class corrupt_bundle : public error {
 public:
  using error::error;
};

class config_error : public error {
 public:
  using error::error;
};

class startup_error : public error {
 public:
  using error::error;
};

// Permanent: the message can never fit into a buffer of the configured size.
class oversize_message : public error {
 public:
  using error::error;
};

class timeout_error : public error {
 public:
  using error::error;
};

class usage_error : public error {
 public:
  using error::error;
};

}  // namespace buddy
