/* Copyright 2026 The provgad Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <stdexcept>
#include <string>

namespace provgad {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input or configuration supplied by the caller. The CLI maps these to
// exit code 1; every other Error maps to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t line, std::size_t fields, const std::string& what)
      : ValidationError(what), line_(line), fields_(fields) {}
  std::size_t line() const { return line_; }
  std::size_t field_count() const { return fields_; }

 private:
  std::size_t line_;
  std::size_t fields_;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace provgad
