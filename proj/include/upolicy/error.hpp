#pragma once

#include <stdexcept>
#include <string>

namespace upolicy {

/// Base class for all toolkit errors. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { Usage = 1, Data = 2, Numerical = 3 };

  Error(Category category, const std::string& what) : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }
  int exit_code() const noexcept { return static_cast<int>(category_); }

 private:
  Category category_;
};

/// Invalid configuration, arguments, or violated preconditions on parameters.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Category::Usage, what) {}
};

/// Malformed input data, schema mismatches, corrupted documents.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::Data, what) {}
};

/// Estimation that is undefined on the given input (no overlap, no signal, divergence).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(Category::Numerical, what) {}
};

}  // namespace upolicy
