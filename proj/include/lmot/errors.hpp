// Exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace lmot {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& msg) : std::runtime_error("ShapeMismatch: " + msg) {}
};

struct NonScalarLoss : std::runtime_error {
  explicit NonScalarLoss(const std::string& msg) : std::runtime_error("NonScalarLoss: " + msg) {}
};

struct DegenerateRotationInput : std::runtime_error {
  explicit DegenerateRotationInput(const std::string& msg)
      : std::runtime_error("DegenerateRotationInput: " + msg) {}
};

struct ConfigMismatch : std::runtime_error {
  explicit ConfigMismatch(const std::string& msg) : std::runtime_error("ConfigMismatch: " + msg) {}
};

struct InvalidConfig : std::runtime_error {
  explicit InvalidConfig(const std::string& msg) : std::runtime_error("InvalidConfig: " + msg) {}
};

struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& msg) : std::runtime_error("EmptyDataset: " + msg) {}
};

struct EmptyScene : std::runtime_error {
  explicit EmptyScene(const std::string& msg) : std::runtime_error("EmptyScene: " + msg) {}
};

struct EmptySceneSet : std::runtime_error {
  explicit EmptySceneSet(const std::string& msg) : std::runtime_error("EmptySceneSet: " + msg) {}
};

struct FrameSetMismatch : std::runtime_error {
  explicit FrameSetMismatch(const std::string& msg)
      : std::runtime_error("FrameSetMismatch: " + msg) {}
};

struct ConfigHashMismatch : std::runtime_error {
  explicit ConfigHashMismatch(const std::string& msg)
      : std::runtime_error("ConfigHashMismatch: " + msg) {}
};

struct InvalidAxis : std::runtime_error {
  explicit InvalidAxis(const std::string& msg) : std::runtime_error("InvalidAxis: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("IoError: " + msg) {}
};

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& msg) : std::runtime_error("NonFiniteLoss: " + msg) {}
};

}  // namespace lmot
