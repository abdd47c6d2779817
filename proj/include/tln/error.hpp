#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tln {

// Shape disagreements between tensors/layers; messages name both shapes.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated module preconditions (out-of-range kappa/nu, empty dataset, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Out-of-range labels or element indices.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Corrupt on-disk artifacts: datasets, network archives.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf or non-convergence inside an iterative computation; carries the
// offending iteration (or row) index.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, std::int64_t where)
        : std::runtime_error(msg), index(where) {}
    std::int64_t index;
};

// TLN notation parse failure with byte offset and the token set that was
// expected at that position.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t at, std::vector<std::string> want)
        : std::runtime_error(msg), offset(at), expected(std::move(want)) {}
    std::size_t offset;
    std::vector<std::string> expected;
};

}  // namespace tln
