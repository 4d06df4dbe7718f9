// Copyright (c) 2026 The chanmp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace chanmp {

// Root of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up; the message names the offending op or layer.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedPrecision : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration, LUT, or model description.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Loss or activations became NaN/Inf.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Misuse of the autograd graph (backward before forward, non-scalar loss, ...).
class GraphError : public Error {
 public:
  using Error::Error;
};

}  // namespace chanmp
