#include "dipole/ply.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace dipole {

namespace {

struct Property {
  std::string name;
  std::string type;  // char uchar short ushort int uint float double
  int byte_size = 0;
};

int type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

double read_binary_value(const char* p, const std::string& t) {
  auto load = [&]<typename T>() {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return load.operator()<std::int8_t>();
  if (t == "uchar" || t == "uint8") return load.operator()<std::uint8_t>();
  if (t == "short" || t == "int16") return load.operator()<std::int16_t>();
  if (t == "ushort" || t == "uint16") return load.operator()<std::uint16_t>();
  if (t == "int" || t == "int32") return load.operator()<std::int32_t>();
  if (t == "uint" || t == "uint32") return load.operator()<std::uint32_t>();
  if (t == "float" || t == "float32") return load.operator()<float>();
  return load.operator()<double>();
}

}  // namespace

OrientedPointCloud load_ply(const std::string& path, int k_appearance, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_ply: cannot open " + path);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw DataError("load_ply: " + path + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto next_line = [&]() {
    if (!std::getline(in, line)) fail("unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
  };
  next_line();
  if (line != "ply") fail("not a PLY file (missing 'ply' magic)");
  bool binary = false;
  std::size_t vertex_count = 0;
  std::vector<Property> props;
  bool in_vertex_element = false;
  for (;;) {
    next_line();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        fail("unsupported format '" + fmt + "'");
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) vertex_count = count;
    } else if (tok == "property") {
      if (!in_vertex_element) continue;
      Property p;
      ss >> p.type;
      if (p.type == "list") fail("list properties are not supported on vertices");
      ss >> p.name;
      p.byte_size = type_size(p.type);
      if (p.byte_size == 0) fail("unknown property type '" + p.type + "'");
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    } else {
      fail("unrecognized header line '" + line + "'");
    }
  }
  if (vertex_count == 0) throw DataError("load_ply: " + path + ": empty point cloud");

  int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, iarea = -1, ibeta = -1;
  std::vector<int> ialpha;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const std::string& n = props[i].name;
    int idx = static_cast<int>(i);
    if (n == "x") ix = idx;
    else if (n == "y") iy = idx;
    else if (n == "z") iz = idx;
    else if (n == "nx") inx = idx;
    else if (n == "ny") iny = idx;
    else if (n == "nz") inz = idx;
    else if (n == "area") iarea = idx;
    else if (n == "beta") ibeta = idx;
    else if (n.rfind("alpha_", 0) == 0) ialpha.push_back(idx);
  }
  if (ix < 0 || iy < 0 || iz < 0) fail("vertex element must have x, y, z");

  OrientedPointCloud cloud;
  cloud.points.resize(vertex_count);
  std::vector<double> row(props.size());
  std::size_t record = 0;
  for (const auto& p : props) record += p.byte_size;
  std::vector<char> buf(record);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    if (binary) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(record)))
        fail("truncated binary vertex data at vertex " + std::to_string(v));
      std::size_t off = 0;
      for (std::size_t i = 0; i < props.size(); ++i) {
        row[i] = read_binary_value(buf.data() + off, props[i].type);
        off += props[i].byte_size;
      }
    } else {
      next_line();
      std::istringstream ss(line);
      for (std::size_t i = 0; i < props.size(); ++i)
        if (!(ss >> row[i])) fail("malformed vertex line");
    }
    OrientedPoint& pt = cloud.points[v];
    pt.position = Vec3(row[ix], row[iy], row[iz]);
    if (inx >= 0 && iny >= 0 && inz >= 0) pt.normal = Vec3(row[inx], row[iny], row[inz]);
    if (iarea >= 0) pt.area = row[iarea];
    pt.geometry_moment = ibeta >= 0 ? row[ibeta] : 1.0;
    if (!ialpha.empty()) {
      pt.appearance_moments.resize(ialpha.size());
      for (std::size_t a = 0; a < ialpha.size(); ++a) pt.appearance_moments[a] = row[ialpha[a]];
    }
  }
  cloud.k_appearance = static_cast<int>(ialpha.size());

  bool have_normals = inx >= 0 && iny >= 0 && inz >= 0;
  if (have_normals) {
    for (std::size_t v = 0; v < vertex_count; ++v) {
      double len = cloud.points[v].normal.norm();
      if (len < 1e-12) {
        have_normals = false;
        break;
      }
      cloud.points[v].normal /= len;
    }
  }
  if (!have_normals && cloud.size() >= 3)
    pca_normals(cloud, std::min<int>(16, static_cast<int>(cloud.size())));
  else if (!have_normals)
    for (auto& pt : cloud.points) pt.normal = Vec3(0, 0, 1);

  if (cloud.k_appearance == 0 && k_appearance > 0) {
    cloud.k_appearance = k_appearance;
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.1);
    for (auto& pt : cloud.points) {
      pt.appearance_moments.resize(k_appearance);
      for (double& a : pt.appearance_moments) a = gauss(rng);
    }
  } else {
    for (auto& pt : cloud.points) pt.appearance_moments.resize(cloud.k_appearance, 0.0);
  }

  cloud.snapshot_initial_normals();
  return cloud;
}

void save_ply(const OrientedPointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_ply: cannot open " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  for (const char* c : {"x", "y", "z", "nx", "ny", "nz"}) out << "property double " << c << "\n";
  out << "property float area\nproperty float beta\n";
  for (int k = 0; k < cloud.k_appearance; ++k) out << "property float alpha_" << k << "\n";
  out << "end_header\n";
  for (const auto& pt : cloud.points) {
    double d[6] = {pt.position.x(), pt.position.y(), pt.position.z(),
                   pt.normal.x(),   pt.normal.y(),   pt.normal.z()};
    out.write(reinterpret_cast<const char*>(d), sizeof(d));
    float f[2] = {static_cast<float>(pt.area), static_cast<float>(pt.geometry_moment)};
    out.write(reinterpret_cast<const char*>(f), sizeof(f));
    for (int k = 0; k < cloud.k_appearance; ++k) {
      float a = static_cast<float>(pt.appearance_moments[k]);
      out.write(reinterpret_cast<const char*>(&a), sizeof(a));
    }
  }
  if (!out) throw DataError("save_ply: write failed for " + path);
}

}  // namespace dipole
