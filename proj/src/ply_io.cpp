#include "o4d/ply_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "o4d/binary_io.hpp"
#include "o4d/errors.hpp"

namespace o4d {

namespace {

enum class ScalarType { i8, u8, i16, u16, i32, u32, f32, f64 };

ScalarType parse_type(const std::string& name, const std::filesystem::path& path) {
  if (name == "char" || name == "int8") return ScalarType::i8;
  if (name == "uchar" || name == "uint8") return ScalarType::u8;
  if (name == "short" || name == "int16") return ScalarType::i16;
  if (name == "ushort" || name == "uint16") return ScalarType::u16;
  if (name == "int" || name == "int32") return ScalarType::i32;
  if (name == "uint" || name == "uint32") return ScalarType::u32;
  if (name == "float" || name == "float32") return ScalarType::f32;
  if (name == "double" || name == "float64") return ScalarType::f64;
  throw FormatError(path.string() + ": unsupported PLY property type '" + name + "'");
}

double read_binary_scalar(ByteReader& in, ScalarType t) {
  switch (t) {
    case ScalarType::i8:
      return in.get<std::int8_t>();
    case ScalarType::u8:
      return in.get<std::uint8_t>();
    case ScalarType::i16:
      return in.get<std::int16_t>();
    case ScalarType::u16:
      return in.get<std::uint16_t>();
    case ScalarType::i32:
      return in.get<std::int32_t>();
    case ScalarType::u32:
      return in.get<std::uint32_t>();
    case ScalarType::f32:
      return in.get<float>();
    case ScalarType::f64:
      return in.get<double>();
  }
  return 0.0;
}

struct Property {
  std::string name;
  ScalarType type;
};

struct Header {
  bool binary = false;
  std::size_t vertex_count = 0;
  std::vector<Property> properties;
  std::size_t body_offset = 0;
};

Header parse_header(const std::string& bytes, const std::filesystem::path& path) {
  const auto end = bytes.find("end_header");
  if (bytes.rfind("ply", 0) != 0 || end == std::string::npos) {
    throw FormatError(path.string() + ": not a PLY file");
  }
  auto body = bytes.find('\n', end);
  if (body == std::string::npos) throw FormatError(path.string() + ": truncated PLY header");

  Header header;
  header.body_offset = body + 1;
  std::istringstream lines(bytes.substr(0, end));
  std::string line;
  bool in_vertex = false;
  bool seen_vertex = false;
  bool format_seen = false;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tok(line);
    std::string key;
    tok >> key;
    if (key == "format") {
      std::string fmt;
      tok >> fmt;
      if (fmt == "ascii") {
        header.binary = false;
      } else if (fmt == "binary_little_endian") {
        header.binary = true;
      } else {
        throw FormatError(path.string() + ": unsupported PLY format '" + fmt + "'");
      }
      format_seen = true;
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      tok >> name >> count;
      if (name == "vertex") {
        in_vertex = true;
        seen_vertex = true;
        header.vertex_count = count;
      } else {
        if (!seen_vertex && count > 0) {
          throw FormatError(path.string() + ": element '" + name + "' precedes vertex element");
        }
        in_vertex = false;
      }
    } else if (key == "property" && in_vertex) {
      std::string type;
      std::string name;
      tok >> type;
      if (type == "list") throw FormatError(path.string() + ": list property in vertex element");
      tok >> name;
      header.properties.push_back({name, parse_type(type, path)});
    }
  }
  if (!format_seen) throw FormatError(path.string() + ": missing PLY format line");
  if (!seen_vertex) throw FormatError(path.string() + ": missing vertex element");
  return header;
}

int find_property(const Header& h, const std::string& name) {
  for (std::size_t i = 0; i < h.properties.size(); ++i) {
    if (h.properties[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

bool is_integer(ScalarType t) { return t != ScalarType::f32 && t != ScalarType::f64; }

}  // namespace

PointCloudFrame read_ply(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  const Header header = parse_header(bytes, path);

  const int ix = find_property(header, "x");
  const int iy = find_property(header, "y");
  const int iz = find_property(header, "z");
  const int ir = find_property(header, "red");
  const int ig = find_property(header, "green");
  const int ib = find_property(header, "blue");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError(path.string() + ": missing x/y/z");
  if (ir < 0 || ig < 0 || ib < 0) throw FormatError(path.string() + ": missing red/green/blue");
  const int iid = find_property(header, "id");
  const int ilabel = find_property(header, "label");

  const std::size_t n = header.vertex_count;
  const std::size_t n_props = header.properties.size();
  PointCloudFrame frame;
  frame.points.resize(n);
  frame.colors.resize(n);
  if (iid >= 0) frame.point_ids.emplace(n);
  if (ilabel >= 0) frame.part_labels.emplace(n);

  std::vector<double> values(n_props);
  ByteReader binary_in(std::string_view(bytes).substr(header.body_offset));
  std::istringstream ascii_in(header.binary ? std::string() : bytes.substr(header.body_offset));

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < n_props; ++p) {
      if (header.binary) {
        values[p] = read_binary_scalar(binary_in, header.properties[p].type);
      } else if (!(ascii_in >> values[p])) {
        throw FormatError(path.string() + ": truncated ASCII body at vertex " + std::to_string(i));
      }
    }
    frame.points[i] = {static_cast<float>(values[ix]), static_cast<float>(values[iy]),
                       static_cast<float>(values[iz])};
    const int rgb[3] = {ir, ig, ib};
    for (int ch = 0; ch < 3; ++ch) {
      const auto& prop = header.properties[rgb[ch]];
      frame.colors[i][ch] = is_integer(prop.type)
                                ? static_cast<float>(values[rgb[ch]]) / 255.0f
                                : static_cast<float>(values[rgb[ch]]);
    }
    if (iid >= 0) (*frame.point_ids)[i] = static_cast<std::int32_t>(values[iid]);
    if (ilabel >= 0) (*frame.part_labels)[i] = static_cast<std::int32_t>(values[ilabel]);
  }
  return frame;
}

void write_ply(const std::filesystem::path& path, const PointCloudFrame& frame,
               PlyEncoding encoding) {
  const bool binary = encoding == PlyEncoding::binary_little_endian;
  std::ostringstream head;
  head << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
       << "element vertex " << frame.points.size() << "\n"
       << "property float x\nproperty float y\nproperty float z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (frame.point_ids) head << "property int id\n";
  if (frame.part_labels) head << "property int label\n";
  head << "end_header\n";

  auto to_byte = [](float c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
  };

  ByteWriter out;
  out.put_bytes(head.str());
  std::ostringstream text;
  text.precision(9);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const auto& p = frame.points[i];
    const auto& c = frame.colors[i];
    if (binary) {
      out.put(p[0]);
      out.put(p[1]);
      out.put(p[2]);
      out.put(to_byte(c[0]));
      out.put(to_byte(c[1]));
      out.put(to_byte(c[2]));
      if (frame.point_ids) out.put((*frame.point_ids)[i]);
      if (frame.part_labels) out.put((*frame.part_labels)[i]);
    } else {
      text << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << int(to_byte(c[0])) << ' '
           << int(to_byte(c[1])) << ' ' << int(to_byte(c[2]));
      if (frame.point_ids) text << ' ' << (*frame.point_ids)[i];
      if (frame.part_labels) text << ' ' << (*frame.part_labels)[i];
      text << '\n';
    }
  }
  if (!binary) out.put_bytes(text.str());
  write_file_bytes(path, out.bytes());
}

}  // namespace o4d
