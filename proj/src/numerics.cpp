#include "ptt/numerics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "ptt/error.hpp"

namespace ptt {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length does not match rows*cols");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, "Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: dimension mismatch " + shape(a) + " * " + shape(b));
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.row(i).data();
    const auto arow = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = arow[k];
      const double* src = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(),
          "matmul_transposed: dimension mismatch " + shape(a) + " * " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          "add: dimension mismatch " + shape(a) + " + " + shape(b));
  Matrix out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

Matrix scale(const Matrix& m, double s) {
  Matrix out = m;
  for (double& v : out.values()) v *= s;
  return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "hconcat: row mismatch " + shape(a) + " | " + shape(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), dst.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix col_block(const Matrix& m, std::size_t first, std::size_t count) {
  require(first + count <= m.cols(), "col_block: range exceeds columns of " + shape(m));
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i).subspan(first, count);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] < m.rows(), "gather_rows: index out of range");
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix coords_matrix(std::span<const Vec3> pts) {
  Matrix m(pts.size(), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    m(i, 0) = pts[i].x;
    m(i, 1) = pts[i].y;
    m(i, 2) = pts[i].z;
  }
  return m;
}

double frobenius_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.values()) acc += v * v;
  return std::sqrt(acc);
}

bool all_finite(const Matrix& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

void softmax_inplace(std::span<double> row, std::span<const std::uint8_t> valid) {
  const bool masked = !valid.empty();
  require(!masked || valid.size() == row.size(), "softmax: mask length mismatch");
  double max_v = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (masked && !valid[j]) continue;
    max_v = std::max(max_v, row[j]);
    any = true;
  }
  if (!any) fail(ErrorKind::EmptyAttentionRow, "softmax: row has no valid entries");
  double sum = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (masked && !valid[j]) {
      row[j] = 0.0;
      continue;
    }
    row[j] = std::exp(row[j] - max_v);
    sum += row[j];
  }
  for (double& v : row) v /= sum;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  return out;
}

Matrix softmax_rows(const Matrix& m, const Mask& mask) {
  require(mask.rows() == m.rows() && mask.cols() == m.cols(), "softmax_rows: mask shape mismatch");
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i), mask.row(i));
  return out;
}

std::vector<std::size_t> topk_indices(std::span<const double> row, std::size_t k) {
  require(k >= 1, "topk: k must be >= 1");
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(k, row.size());
  const auto better = [&](std::size_t a, std::size_t b) {
    return row[a] > row[b] || (row[a] == row[b] && a < b);
  };
  if (n < idx.size()) {
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), better);
    idx.resize(n);
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::vector<std::size_t>> topk_rows(const Matrix& m, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out.push_back(topk_indices(m.row(i), k));
  return out;
}

double determinant_3x3(const Matrix& m) {
  require(m.rows() == 3 && m.cols() == 3, "determinant_3x3: expected 3x3");
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

Svd3 svd_3x3(const Matrix& m) {
  require(m.rows() == 3 && m.cols() == 3, "svd_3x3: expected 3x3, got " + shape(m));
  require(all_finite(m), "svd_3x3: non-finite entry");

  // Rotate column pairs of A·V until they are mutually orthogonal; the
  // column norms are then the singular values.
  Matrix a = m;
  Matrix v = Matrix::identity(3);
  constexpr double kOrthTol = 1e-15;
  constexpr std::array<std::pair<int, int>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

  bool converged = false;
  for (int sweep = 0; sweep < kSvdSweepCap && !converged; ++sweep) {
    converged = true;
    for (const auto& [p, q] : kPairs) {
      double alpha = 0.0, beta = 0.0, gamma = 0.0;
      for (int i = 0; i < 3; ++i) {
        alpha += a(i, p) * a(i, p);
        beta += a(i, q) * a(i, q);
        gamma += a(i, p) * a(i, q);
      }
      if (gamma == 0.0 || std::abs(gamma) <= kOrthTol * std::sqrt(alpha * beta)) continue;
      converged = false;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      for (int i = 0; i < 3; ++i) {
        const double ap = a(i, p), aq = a(i, q);
        a(i, p) = c * ap - s * aq;
        a(i, q) = s * ap + c * aq;
        const double vp = v(i, p), vq = v(i, q);
        v(i, p) = c * vp - s * vq;
        v(i, q) = s * vp + c * vq;
      }
    }
  }
  if (!converged) fail(ErrorKind::Numerical, "svd_3x3: Jacobi sweeps did not converge");

  std::array<double, 3> norms{};
  for (int j = 0; j < 3; ++j)
    norms[j] = std::sqrt(a(0, j) * a(0, j) + a(1, j) * a(1, j) + a(2, j) * a(2, j));
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return norms[i] > norms[j]; });

  Svd3 out{Matrix(3, 3), {}, Matrix(3, 3)};
  std::array<Vec3, 3> ucols{};
  int rank = 0;
  const double floor = norms[order[0]] * 1e-13;
  for (int k = 0; k < 3; ++k) {
    const int j = order[k];
    out.s[k] = norms[j];
    for (int i = 0; i < 3; ++i) out.v(i, k) = v(i, j);
    if (norms[j] > floor && norms[j] > 0.0) {
      ucols[k] = Vec3{a(0, j), a(1, j), a(2, j)} / norms[j];
      ++rank;
    }
  }
  // Complete U to an orthonormal basis where singular values vanish.
  if (rank == 0) {
    ucols = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  } else if (rank == 1) {
    const Vec3& u0 = ucols[0];
    const Vec3 axis = std::abs(u0.x) <= std::abs(u0.y) && std::abs(u0.x) <= std::abs(u0.z)
                          ? Vec3{1, 0, 0}
                          : (std::abs(u0.y) <= std::abs(u0.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
    Vec3 u1 = axis - u0 * dot(axis, u0);
    ucols[1] = u1 / norm(u1);
    ucols[2] = cross(u0, ucols[1]);
  } else if (rank == 2) {
    const Vec3 u2 = cross(ucols[0], ucols[1]);
    ucols[2] = u2 / norm(u2);
  }
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i) out.u(i, k) = ucols[k][static_cast<std::size_t>(i)];
  return out;
}

Matrix linear_forward(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  require(x.cols() == w.rows(), "linear_forward: dimension mismatch " + shape(x) + " * " + shape(w));
  require(bias.size() == w.cols(), "linear_forward: bias length does not match output width");
  Matrix out = matmul(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
  }
  return out;
}

Matrix relu(Matrix m) {
  for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
  return m;
}

double sigmoid(double v) {
  const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return std::clamp(s, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

Matrix sigmoid(Matrix m) {
  for (double& v : m.values()) v = sigmoid(v);
  return m;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps) {
  require(gain.size() == x.cols() && bias.size() == x.cols(), "layer_norm: parameter width mismatch");
  Matrix out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto r = x.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) dst[j] = (r[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

Matrix TwoLayerMlp::forward(const Matrix& x) const {
  return linear_forward(relu(linear_forward(x, w1, b1)), w2, b2);
}

}  // namespace ptt
