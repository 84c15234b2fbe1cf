#pragma once

#include <stdexcept>
#include <string>

namespace xpt {

// Exit-code classes used by the CLI: usage = 2, data = 3, numerical = 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Container decoding failures. Each one is distinct so callers and tests can tell them apart.
class BadMagic : public DataError {
public:
    BadMagic() : DataError("bad magic: not an XPTV container") {}
};

class TruncatedPayload : public DataError {
public:
    explicit TruncatedPayload(const std::string& what) : DataError("truncated payload: " + what) {}
};

class UnsupportedFormat : public DataError {
public:
    using DataError::DataError;
};

}  // namespace xpt
