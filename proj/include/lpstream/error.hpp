#pragma once

#include <stdexcept>
#include <string>

namespace lpstream {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed an argument outside the operation's domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Peer violated the update/codec protocol (missing reference, out-of-order seq, ...).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Malformed or corrupted bytes on the wire.
class DecodeError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public DecodeError {
public:
    using DecodeError::DecodeError;
};

class ConnectionClosed : public Error {
public:
    using Error::Error;
};

}  // namespace lpstream
