#include "rapid/error.hpp"

namespace rapid {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::ParseError: return "ParseError";
        case Errc::DuplicateName: return "DuplicateName";
        case Errc::DuplicateTopic: return "DuplicateTopic";
        case Errc::DuplicateBit: return "DuplicateBit";
        case Errc::TooManyDevices: return "TooManyDevices";
        case Errc::BadIdentity: return "BadIdentity";
        case Errc::InvariantViolation: return "InvariantViolation";
        case Errc::BadMagic: return "BadMagic";
        case Errc::UnsupportedVersion: return "UnsupportedVersion";
        case Errc::ShortBuffer: return "ShortBuffer";
        case Errc::RegistryMismatch: return "RegistryMismatch";
        case Errc::IoError: return "IoError";
        case Errc::Unavailable: return "Unavailable";
        case Errc::TornRead: return "TornRead";
        case Errc::ChannelClosed: return "ChannelClosed";
        case Errc::QueueFull: return "QueueFull";
        case Errc::Unsupported: return "Unsupported";
        case Errc::SpawnFailure: return "SpawnFailure";
        case Errc::FrameTooLarge: return "FrameTooLarge";
        case Errc::NotBound: return "NotBound";
        case Errc::ConnectFailure: return "ConnectFailure";
        case Errc::SocketError: return "SocketError";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::CorruptContainer: return "CorruptContainer";
        case Errc::DiskFull: return "DiskFull";
        case Errc::TopicUnavailable: return "TopicUnavailable";
        case Errc::DaemonUnreachable: return "DaemonUnreachable";
        case Errc::HarnessError: return "HarnessError";
    }
    return "Unknown";
}

}  // namespace rapid
