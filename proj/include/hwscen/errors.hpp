#pragma once

#include <stdexcept>
#include <string>

namespace hwscen {

/// Error categories reported by the CLI as distinct exit codes.
enum class ErrorCategory {
  Parse = 2,
  Integrity = 3,
  Config = 4,
  Script = 5,
  State = 6,
  Input = 7,
  Augmentation = 8,
  Training = 9,
  Contract = 10,
  Stage = 11,
  Format = 12,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

private:
  ErrorCategory category_;
};

#define HWSCEN_DEFINE_ERROR(Name, Cat)                                         \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(ErrorCategory::Cat, what) {} \
  };

HWSCEN_DEFINE_ERROR(ParseError, Parse)
HWSCEN_DEFINE_ERROR(IntegrityError, Integrity)
HWSCEN_DEFINE_ERROR(ConfigError, Config)
HWSCEN_DEFINE_ERROR(ScriptError, Script)
HWSCEN_DEFINE_ERROR(StateError, State)
HWSCEN_DEFINE_ERROR(InputError, Input)
HWSCEN_DEFINE_ERROR(AugmentationError, Augmentation)
HWSCEN_DEFINE_ERROR(TrainingError, Training)
HWSCEN_DEFINE_ERROR(ContractError, Contract)
HWSCEN_DEFINE_ERROR(StageError, Stage)
HWSCEN_DEFINE_ERROR(FormatError, Format)

#undef HWSCEN_DEFINE_ERROR

} // namespace hwscen
