#pragma once

// Dense row-major linear algebra and elementwise functions used by every
// other module. Everything here is a pure function of its arguments.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace ptt {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  Vec3& operator*=(double s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend Vec3 operator/(Vec3 a, double s) { return Vec3{a.x / s, a.y / s, a.z / s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const Vec3 d = a - b;
  return dot(d, d);
}
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline bool is_finite(const Vec3& a) {
  return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Per-entry validity flags with the same shape as the matrix they mask.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, bool fill = true)
      : rows_(rows), cols_(cols), valid_(rows * cols, fill ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  bool operator()(std::size_t r, std::size_t c) const { return valid_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool valid) { valid_[r * cols_ + c] = valid ? 1 : 0; }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return {valid_.data() + r * cols_, cols_};
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> valid_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double s);
/// Horizontal concatenation; both operands need the same row count.
Matrix hconcat(const Matrix& a, const Matrix& b);
/// Column block [first, first + count).
Matrix col_block(const Matrix& m, std::size_t first, std::size_t count);
/// Rows of `m` selected by `indices`, in order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

/// n × 3 matrix of point coordinates.
Matrix coords_matrix(std::span<const Vec3> pts);

double frobenius_norm(const Matrix& m);
bool all_finite(const Matrix& m);

/// Numerically stable softmax of `row` in place. When `valid` is non-empty,
/// entries whose flag is 0 are left out of the normalization and set to 0.
/// Throws EmptyAttentionRow when no entry is valid.
void softmax_inplace(std::span<double> row, std::span<const std::uint8_t> valid = {});

Matrix softmax_rows(const Matrix& m);
Matrix softmax_rows(const Matrix& m, const Mask& mask);

/// Positions of the min(k, size) largest entries; ties go to the lower
/// position. Output sorted ascending.
std::vector<std::size_t> topk_indices(std::span<const double> row, std::size_t k);
std::vector<std::vector<std::size_t>> topk_rows(const Matrix& m, std::size_t k);

struct Svd3 {
  Matrix u;                 // 3×3, orthonormal columns
  std::array<double, 3> s;  // descending, nonnegative
  Matrix v;                 // 3×3, orthonormal columns
};

inline constexpr int kSvdSweepCap = 64;

/// One-sided cyclic Jacobi SVD of a 3×3 matrix: m = U·diag(s)·Vᵀ.
Svd3 svd_3x3(const Matrix& m);

double determinant_3x3(const Matrix& m);

/// x·w + bias, with bias broadcast over rows.
Matrix linear_forward(const Matrix& x, const Matrix& w, std::span<const double> bias);
Matrix relu(Matrix m);

inline constexpr double kProbabilityClamp = 1e-7;

/// Logistic function clamped to [1e-7, 1 − 1e-7].
double sigmoid(double v);
Matrix sigmoid(Matrix m);

/// Per-row normalization to zero mean / unit variance, then gain and bias.
Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps = 1e-5);

/// Two fully connected layers with ReLU between them.
struct TwoLayerMlp {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  std::size_t input_dim() const { return w1.rows(); }
  std::size_t output_dim() const { return w2.cols(); }
  Matrix forward(const Matrix& x) const;
};

}  // namespace ptt
