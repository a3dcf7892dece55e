#pragma once

#include <stdexcept>
#include <string>

namespace respnet {

// Error codes are stable identifiers; the CLI prints them as
// "error[Code]: message" on a single stderr line.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

private:
    std::string code_;
};

#define RESPNET_ERROR(Name)                                   \
    class Name : public Error {                               \
    public:                                                   \
        explicit Name(const std::string& message)             \
            : Error(#Name, message) {}                        \
    }

RESPNET_ERROR(ShapeMismatch);
RESPNET_ERROR(EmptyOutput);
RESPNET_ERROR(DegenerateBatch);
RESPNET_ERROR(NoTape);
RESPNET_ERROR(MissingGrad);
RESPNET_ERROR(InvalidConfig);
RESPNET_ERROR(IoError);
RESPNET_ERROR(FormatError);
RESPNET_ERROR(ConfigMismatch);
RESPNET_ERROR(NonMonotonicTime);
RESPNET_ERROR(NoBeats);
RESPNET_ERROR(TooFewBeats);
RESPNET_ERROR(TooFewPoints);
RESPNET_ERROR(EmptyInput);
RESPNET_ERROR(RecordTooShort);
RESPNET_ERROR(TooFewWindows);
RESPNET_ERROR(LengthMismatch);
RESPNET_ERROR(DegenerateSignal);
RESPNET_ERROR(EmptyEvaluation);
RESPNET_ERROR(EmptyTrainSet);
RESPNET_ERROR(DivergedLoss);
RESPNET_ERROR(WindowOutOfRange);

#undef RESPNET_ERROR

}  // namespace respnet
