#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace koneco {

// Base for all toolkit errors. The CLI maps any Error to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid argument or violated precondition.
struct ArgumentError : Error {
    using Error::Error;
};

// A required column is missing or misdeclared in an input file.
struct SchemaError : Error {
    using Error::Error;
};

// A data row could not be used; carries the 1-based source line.
struct DataError : Error {
    std::size_t line = 0;
    DataError(std::string msg, std::size_t line_no)
        : Error(std::move(msg)), line(line_no) {}
};

// A filter or query legitimately matched nothing.
struct EmptyResultError : Error {
    using Error::Error;
};

struct InsufficientDataError : Error {
    using Error::Error;
};

struct DegenerateSampleError : Error {
    using Error::Error;
};

// A mapping rule is inconsistent with the vocabulary or the record fields.
struct MappingError : Error {
    using Error::Error;
};

struct SerializeError : Error {
    using Error::Error;
};

// Turtle syntax error with source position.
struct ParseError : Error {
    std::size_t line = 0;
    std::size_t col = 0;
    ParseError(std::string msg, std::size_t line_no, std::size_t col_no)
        : Error(std::move(msg) + " at line " + std::to_string(line_no) +
                ", column " + std::to_string(col_no)),
          line(line_no),
          col(col_no) {}
};

struct CorruptionError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

struct PredictionError : Error {
    using Error::Error;
};

struct SingularityError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace koneco
