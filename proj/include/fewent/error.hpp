#pragma once

#include <stdexcept>
#include <string>

namespace fewent {

// Base of every exception the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class SchemeViolation : public Error {
public:
    using Error::Error;
};

class InsufficientExamples : public Error {
public:
    InsufficientExamples(const std::string& label, std::size_t have, std::size_t need)
        : Error("class '" + label + "' has " + std::to_string(have) + " examples, need " +
                std::to_string(need)),
          label_(label) {}
    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class MalformedItem : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace fewent
