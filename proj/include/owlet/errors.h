// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace owlet {

// Base for everything thrown on purpose. The CLI turns these into one-line
// diagnostics; anything else escaping to main() is a bug.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Nonconforming tensor shapes (names the op and the offending axes).
class dim_error : public error {
public:
    using error::error;
};

// Caller violated a documented precondition.
class contract_error : public error {
public:
    using error::error;
};

// Malformed input data (manifests, fixtures, records).
class data_error : public error {
public:
    using error::error;
};

// A rendered example with no supervised position. Signals a rendering or
// truncation bug upstream, so it gets its own type.
class empty_loss_error : public data_error {
public:
    using data_error::data_error;
};

// Required records missing (e.g. a model without a rating for every question).
class completeness_error : public data_error {
public:
    using data_error::data_error;
};

// Invalid configuration value or unknown key.
class config_error : public error {
public:
    using error::error;
};

// Corrupt or mismatched on-disk format (checkpoints, images).
class format_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

// Out-of-range token or embedding index.
class index_error : public error {
public:
    using error::error;
};

// Sequence exceeds the model's position budget.
class length_error : public error {
public:
    using error::error;
};

// Non-finite values where finite ones are required.
class numeric_error : public error {
public:
    using error::error;
};

}  // namespace owlet
