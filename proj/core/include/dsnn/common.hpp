// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dsnn {

/// Fault raised for malformed inputs (bad files, bad configs).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

}  // namespace dsnn

#define DSNN_REQUIRE(cond, msg) \
  do {                          \
    if (!(cond)) ::dsnn::fail(msg); \
  } while (0)
