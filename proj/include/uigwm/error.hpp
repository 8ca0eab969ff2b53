#pragma once

#include <stdexcept>
#include <string>

namespace uigwm {

// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---- dataset / imaging ----

class DatasetEmpty : public Error {
 public:
  explicit DatasetEmpty(const std::string& dir)
      : Error("dataset directory contains no decodable images: " + dir) {}
};

class CorruptImage : public Error {
 public:
  explicit CorruptImage(const std::string& path)
      : Error("undecodable image file: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class InvalidSplit : public Error {
 public:
  InvalidSplit(std::size_t requested, std::size_t available)
      : Error("stealer_count " + std::to_string(requested) +
              " must be smaller than dataset size " + std::to_string(available)) {}
};

class InsufficientData : public Error {
 public:
  InsufficientData(const std::string& side, std::size_t needed, std::size_t available)
      : Error("insufficient " + side + " images: need " + std::to_string(needed) +
              ", have " + std::to_string(available)) {}
};

class DomainMismatch : public Error {
 public:
  explicit DomainMismatch(const std::string& what) : Error(what) {}
};

// ---- metrics / tensors ----

class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

class ImageTooSmall : public Error {
 public:
  ImageTooSmall(int h, int w, int window)
      : Error("image " + std::to_string(h) + "x" + std::to_string(w) +
              " is smaller than the " + std::to_string(window) + "x" +
              std::to_string(window) + " metric window") {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error(what) {}
};

class NumericalDomainError : public Error {
 public:
  explicit NumericalDomainError(const std::string& what) : Error(what) {}
};

// ---- networks / checkpoints ----

class ArchConfigError : public Error {
 public:
  explicit ArchConfigError(const std::string& what) : Error(what) {}
};

class CheckpointVersionError : public Error {
 public:
  explicit CheckpointVersionError(const std::string& what) : Error(what) {}
};

class CheckpointCorrupt : public Error {
 public:
  explicit CheckpointCorrupt(const std::string& what) : Error(what) {}
};

class CheckpointRoleMismatch : public Error {
 public:
  CheckpointRoleMismatch(const std::string& expected, const std::string& found)
      : Error("checkpoint role mismatch: expected " + expected + ", found " + found) {}
};

// ---- training ----

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& what, std::string last_checkpoint = {})
      : Error(what), last_checkpoint_(std::move(last_checkpoint)) {}
  // Path of the last finite-loss checkpoint, empty when none was written.
  const std::string& last_checkpoint() const { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

class QualityFloorUnmet : public Error {
 public:
  QualityFloorUnmet(double psnr_db, double floor_db)
      : Error("held-out PSNR " + std::to_string(psnr_db) +
              " dB is below the configured floor of " + std::to_string(floor_db) + " dB") {}
};

class IncompleteValidationSet : public Error {
 public:
  explicit IncompleteValidationSet(const std::string& what) : Error(what) {}
};

}  // namespace uigwm
