#include "ptt/cloud_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "ptt/error.hpp"

namespace ptt {

namespace {

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
  fail(ErrorKind::Data, source + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<double> parse_double(std::string_view token) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || end != token.data() + token.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

CloudFormat format_for_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ply" ? CloudFormat::Ply : CloudFormat::Xyz;
}

PointCloud read_xyz(std::istream& in, const std::string& source) {
  PointCloud cloud;
  cloud.id = source;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    std::string_view body(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    const auto tokens = split_ws(body);
    if (tokens.empty()) continue;
    if (tokens.size() != 3) parse_error(source, lineno, "expected 3 coordinates, found " + std::to_string(tokens.size()));
    Vec3 p;
    for (std::size_t a = 0; a < 3; ++a) {
      const auto v = parse_double(tokens[a]);
      if (!v) parse_error(source, lineno, "invalid number '" + std::string(tokens[a]) + "'");
      p[a] = *v;
    }
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) fail(ErrorKind::Data, source + ": cloud is empty");
  return cloud;
}

PointCloud read_ply(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  const auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    strip_cr(line);
    return true;
  };

  if (!next_line() || line != "ply") parse_error(source, lineno, "missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;
  while (next_line()) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tokens[0] == "comment" || tokens[0] == "obj_info") continue;
    if (tokens[0] == "format") {
      if (tokens.size() < 2 || tokens[1] != "ascii") parse_error(source, lineno, "only ASCII PLY is supported");
      ascii = true;
    } else if (tokens[0] == "element") {
      if (tokens.size() != 3) parse_error(source, lineno, "malformed element line");
      Element e;
      e.name = tokens[1];
      const auto [end, ec] = std::from_chars(tokens[2].data(), tokens[2].data() + tokens[2].size(), e.count);
      if (ec != std::errc() || end != tokens[2].data() + tokens[2].size())
        parse_error(source, lineno, "invalid element count");
      elements.push_back(std::move(e));
    } else if (tokens[0] == "property") {
      if (elements.empty()) parse_error(source, lineno, "property before any element");
      if (tokens.size() >= 2 && tokens[1] == "list") {
        if (elements.back().name == "vertex") parse_error(source, lineno, "list properties on vertices are not supported");
        elements.back().properties.emplace_back("list");
      } else {
        if (tokens.size() != 3) parse_error(source, lineno, "malformed property line");
        elements.back().properties.emplace_back(tokens[2]);
      }
    } else {
      parse_error(source, lineno, "unknown header keyword '" + std::string(tokens[0]) + "'");
    }
  }
  if (!header_done) parse_error(source, lineno, "missing end_header");
  if (!ascii) parse_error(source, lineno, "missing format line");

  PointCloud cloud;
  cloud.id = source;
  for (const Element& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i)
        if (!next_line()) parse_error(source, lineno, "unexpected end of file in element " + e.name);
      continue;
    }
    std::array<std::size_t, 3> column{};
    for (std::size_t a = 0; a < 3; ++a) {
      const std::string axis(1, static_cast<char>('x' + a));
      const auto it = std::find(e.properties.begin(), e.properties.end(), axis);
      if (it == e.properties.end()) parse_error(source, lineno, "vertex element lacks property " + axis);
      column[a] = static_cast<std::size_t>(it - e.properties.begin());
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next_line()) parse_error(source, lineno, "expected " + std::to_string(e.count) + " vertices, found " + std::to_string(i));
      const auto tokens = split_ws(line);
      if (tokens.size() != e.properties.size())
        parse_error(source, lineno, "expected " + std::to_string(e.properties.size()) + " values");
      Vec3 p;
      for (std::size_t a = 0; a < 3; ++a) {
        const auto v = parse_double(tokens[column[a]]);
        if (!v) parse_error(source, lineno, "invalid number '" + std::string(tokens[column[a]]) + "'");
        p[a] = *v;
      }
      cloud.points.push_back(p);
    }
  }
  if (cloud.points.empty()) fail(ErrorKind::Data, source + ": cloud is empty");
  return cloud;
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return format_for_path(path) == CloudFormat::Ply ? read_ply(in, path.string()) : read_xyz(in, path.string());
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  for (const Vec3& p : cloud.points)
    out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
}

void write_ply(std::ostream& out, const PointCloud& cloud) {
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  write_xyz(out, cloud);
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  if (format_for_path(path) == CloudFormat::Ply)
    write_ply(out, cloud);
  else
    write_xyz(out, cloud);
  if (!out) fail(ErrorKind::Data, "failed writing " + path.string());
}

RigidTransform read_transform(std::istream& in, const std::string& source) {
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    std::string_view body(line);
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    for (std::string_view token : split_ws(body)) {
      const auto v = parse_double(token);
      if (!v) parse_error(source, lineno, "invalid number '" + std::string(token) + "'");
      values.push_back(*v);
    }
  }
  if (values.size() != 16)
    fail(ErrorKind::Data, source + ": expected 16 values, found " + std::to_string(values.size()));
  try {
    return RigidTransform::from_homogeneous(Matrix(4, 4, std::move(values)));
  } catch (const Error& e) {
    fail(ErrorKind::Data, source + ": " + e.what());
  }
}

RigidTransform load_transform(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return read_transform(in, path.string());
}

void write_transform(std::ostream& out, const RigidTransform& t) {
  const Matrix h = t.homogeneous();
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) out << (c ? " " : "") << format_double(h(r, c));
    out << '\n';
  }
}

void save_transform(const RigidTransform& t, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  write_transform(out, t);
  if (!out) fail(ErrorKind::Data, "failed writing " + path.string());
}

}  // namespace ptt
