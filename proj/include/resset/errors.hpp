#pragma once

#include <stdexcept>
#include <string>

namespace resset {

// Base of every library error. Each subclass names one failure category.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct InvalidKernel : Error {
    using Error::Error;
};

struct DegenerateKernel : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct NotJointlyRepresentable : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct BackwardWithoutForward : Error {
    using Error::Error;
};

struct WindowTooLarge : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct NonFiniteLoss : Error {
    NonFiniteLoss(int epoch, const std::string& what)
        : Error(what), epoch(epoch) {}
    int epoch;
};

}  // namespace resset
