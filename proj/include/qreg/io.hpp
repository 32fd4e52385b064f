#pragma once

#include <filesystem>

#include "qreg/error.hpp"
#include "qreg/geometry.hpp"
#include "qreg/network.hpp"

namespace qreg {

// `.xyz`: "x y z [nx ny nz]" per line, '#' comments.
// `.ply`: ascii, vertex element with x y z [nx ny nz].
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const PointCloud& c, const std::filesystem::path& path);

class WeightFileError : public Error {
 public:
  enum class Kind { io, version, parse, dimension_mismatch, missing_tensor, duplicate_tensor, unexpected_tensor };

  WeightFileError(Kind kind, const std::string& message) : Error("io_synth", message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Text format "NTW 1", then per tensor "tensor <name> <rows> <cols>" and
// rows of 17-significant-digit decimals. Tensor names:
//   iter0.layer<k>.weight|bias, qmlp<i>.A|B|bias (i = 1 .. L-1).
CascadeWeights load_weights(const std::filesystem::path& path);
void save_weights(const CascadeWeights& w, const std::filesystem::path& path);

// Twelve whitespace-separated numbers: R row-major, then t.
RigidTransform read_transform(const std::filesystem::path& path);
void write_transform(const RigidTransform& t, const std::filesystem::path& path);

}  // namespace qreg
