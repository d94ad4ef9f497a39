#include "ptt/weights_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ptt/error.hpp"

namespace ptt {

namespace {

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> bytes{};
  for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(bytes.data(), bytes.size());
}

bool get_f64(std::istream& in, double& v) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) return false;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  v = std::bit_cast<double>(bits);
  return true;
}

}  // namespace

void ParamBundle::add(std::string name, Matrix tensor) {
  require(!contains(name), "ParamBundle: duplicate tensor name " + name);
  tensors_.emplace_back(std::move(name), std::move(tensor));
}

bool ParamBundle::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const auto& t) { return t.first == name; });
}

const Matrix& ParamBundle::get(std::string_view name) const {
  for (const auto& [n, m] : tensors_)
    if (n == name) return m;
  fail(ErrorKind::Load, "weights: missing tensor " + std::string(name));
}

const Matrix& ParamBundle::expect(std::string_view name, std::size_t rows, std::size_t cols) const {
  const Matrix& m = get(name);
  if (m.rows() != rows || m.cols() != cols)
    fail(ErrorKind::Load, "weights: tensor " + std::string(name) + " has shape " +
                              std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                              ", config expects " + std::to_string(rows) + "x" + std::to_string(cols));
  return m;
}

void write_bundle(std::ostream& out, const ParamBundle& bundle) {
  nlohmann::ordered_json header = nlohmann::ordered_json::object();
  for (const auto& [name, m] : bundle.tensors()) header[name] = {m.rows(), m.cols()};
  out << kWeightsMagic << '\n' << header.dump() << '\n';
  for (const auto& [name, m] : bundle.tensors())
    for (double v : m.values()) put_f64(out, v);
}

ParamBundle read_bundle(std::istream& in) {
  std::string magic;
  if (!std::getline(in, magic) || magic != kWeightsMagic)
    fail(ErrorKind::Load, "weights: bad magic, expected " + std::string(kWeightsMagic));
  std::string header_line;
  if (!std::getline(in, header_line)) fail(ErrorKind::Load, "weights: missing header");
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Load, std::string("weights: malformed header: ") + e.what());
  }
  if (!header.is_object()) fail(ErrorKind::Load, "weights: header is not an object");

  ParamBundle bundle;
  for (const auto& [name, dims] : header.items()) {
    if (!dims.is_array() || dims.size() != 2 || !dims[0].is_number_unsigned() ||
        !dims[1].is_number_unsigned())
      fail(ErrorKind::Load, "weights: tensor " + name + " has a malformed shape entry");
    const auto rows = dims[0].get<std::size_t>();
    const auto cols = dims[1].get<std::size_t>();
    Matrix m(rows, cols);
    for (double& v : m.values())
      if (!get_f64(in, v)) fail(ErrorKind::Load, "weights: tensor " + name + " is incomplete");
    bundle.add(name, std::move(m));
  }
  return bundle;
}

void save_bundle(const ParamBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "weights: cannot open " + path.string() + " for writing");
  write_bundle(out, bundle);
  if (!out) fail(ErrorKind::Data, "weights: write failed for " + path.string());
}

ParamBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Load, "weights: cannot open " + path.string());
  return read_bundle(in);
}

}  // namespace ptt
