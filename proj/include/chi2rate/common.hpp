#pragma once

#include <stdexcept>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

namespace chi2rate {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

// Invalid arguments, malformed inputs, violated preconditions.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A requested computation exceeds a documented size cap.
class resource_error : public std::runtime_error {
 public:
  explicit resource_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A numerical routine could not meet its accuracy target.
class numeric_error : public std::runtime_error {
 public:
  numeric_error(const std::string& msg, double achieved)
      : std::runtime_error(msg), achieved_error(achieved) {}
  double achieved_error;
};

}  // namespace chi2rate
