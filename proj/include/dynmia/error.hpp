#pragma once

#include <stdexcept>
#include <string>

namespace dynmia {

// Base for all library errors; subcommands map these to non-zero exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// data_splits
struct InvalidSpec : Error { using Error::Error; };
struct BudgetExceeded : Error { using Error::Error; };
struct DatasetNotFound : Error { using Error::Error; };
struct CorruptData : Error { using Error::Error; };

// models
struct ShapeMismatch : Error { using Error::Error; };
struct GateCountMismatch : Error { using Error::Error; };

// trainers / defense
struct DivergedTraining : Error { using Error::Error; };
struct FrozenViolation : Error { using Error::Error; };
struct EmptySet : Error { using Error::Error; };

// feature store
struct MissingLabels : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };
struct CorruptRecord : Error { using Error::Error; };

// attack
struct DimensionMismatch : Error { using Error::Error; };
struct SingleClassData : Error { using Error::Error; };
struct MissingFeature : Error { using Error::Error; };

// evaluation
struct UnbalancedInput : Error { using Error::Error; };

// cli / pipeline
struct MissingArtifact : Error { using Error::Error; };
struct ConfigFingerprintMismatch : Error { using Error::Error; };

}  // namespace dynmia
