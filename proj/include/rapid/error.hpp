#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rapid {

enum class Errc {
    ParseError,
    DuplicateName,
    DuplicateTopic,
    DuplicateBit,
    TooManyDevices,
    BadIdentity,
    InvariantViolation,
    BadMagic,
    UnsupportedVersion,
    ShortBuffer,
    RegistryMismatch,
    IoError,
    Unavailable,
    TornRead,
    ChannelClosed,
    QueueFull,
    Unsupported,
    SpawnFailure,
    FrameTooLarge,
    NotBound,
    ConnectFailure,
    SocketError,
    ShapeMismatch,
    CorruptContainer,
    DiskFull,
    TopicUnavailable,
    DaemonUnreachable,
    HarnessError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace rapid
