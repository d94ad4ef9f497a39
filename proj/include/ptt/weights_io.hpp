#pragma once

// Named tensor bundle and its on-disk format:
//
//   "PTTW1\n"
//   one-line JSON object {tensor name: [rows, cols], ...} in declaration order, then "\n"
//   raw little-endian IEEE-754 binary64 values, row-major, tensor by tensor in header order

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ptt/numerics.hpp"

namespace ptt {

inline constexpr std::string_view kWeightsMagic = "PTTW1";

class ParamBundle {
 public:
  void add(std::string name, Matrix tensor);

  bool contains(std::string_view name) const;
  const Matrix& get(std::string_view name) const;

  /// Returns the tensor after checking its shape; throws Load naming the
  /// tensor when it is missing or mis-shaped.
  const Matrix& expect(std::string_view name, std::size_t rows, std::size_t cols) const;

  const std::vector<std::pair<std::string, Matrix>>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }

  friend bool operator==(const ParamBundle&, const ParamBundle&) = default;

 private:
  std::vector<std::pair<std::string, Matrix>> tensors_;
};

void write_bundle(std::ostream& out, const ParamBundle& bundle);
ParamBundle read_bundle(std::istream& in);

void save_bundle(const ParamBundle& bundle, const std::filesystem::path& path);
ParamBundle load_bundle(const std::filesystem::path& path);

}  // namespace ptt
