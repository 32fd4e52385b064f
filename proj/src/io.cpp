#include "qreg/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace qreg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("io_synth", msg); }

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t j = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > j) out.push_back(line.substr(j, i - j));
  }
  return out;
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size() && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path.string() + "' for writing");
  return out;
}

// Normals read from text are renormalised; zero normals are rejected.
PointCloud make_cloud(std::vector<Point3> pts, std::vector<Point3> nrm, bool has_normals,
                      const std::filesystem::path& path) {
  if (pts.empty()) fail("'" + path.string() + "' contains no points");
  if (!has_normals) return PointCloud(std::move(pts));
  for (std::size_t i = 0; i < nrm.size(); ++i) {
    const double len = nrm[i].norm();
    if (!(len > 0.0)) fail("'" + path.string() + "': zero normal at point " + std::to_string(i));
    nrm[i] /= len;
  }
  return PointCloud(std::move(pts), std::move(nrm));
}

PointCloud read_xyz(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::vector<Point3> pts;
  std::vector<Point3> nrm;
  int columns = 0;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (toks.size() != 3 && toks.size() != 6) fail(where + ": expected 3 or 6 values, got " + std::to_string(toks.size()));
    if (columns == 0) columns = static_cast<int>(toks.size());
    if (static_cast<int>(toks.size()) != columns) fail(where + ": inconsistent column count");
    double v[6];
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (!parse_double(toks[t], v[t])) fail(where + ": cannot parse '" + std::string(toks[t]) + "' as a number");
    }
    pts.emplace_back(v[0], v[1], v[2]);
    if (columns == 6) nrm.emplace_back(v[3], v[4], v[5]);
  }
  return make_cloud(std::move(pts), std::move(nrm), columns == 6, path);
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto where = [&] { return path.string() + ":" + std::to_string(lineno); };

  if (!next() || line != "ply") fail(where() + ": missing 'ply' magic");
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::string> props;
  for (;;) {
    if (!next()) fail(where() + ": header ends before end_header");
    const auto toks = split_ws(line);
    if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "end_header") break;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") fail(where() + ": only ascii PLY is supported");
    } else if (toks[0] == "element") {
      if (toks.size() != 3) fail(where() + ": malformed element line");
      if (toks[1] != "vertex") fail(where() + ": unsupported ply element '" + std::string(toks[1]) + "'");
      double cnt = 0;
      if (!parse_double(toks[2], cnt) || cnt < 0 || cnt != std::floor(cnt)) fail(where() + ": bad vertex count");
      vertex_count = static_cast<std::size_t>(cnt);
      in_vertex = true;
      seen_vertex = true;
    } else if (toks[0] == "property") {
      if (!in_vertex) fail(where() + ": property outside an element");
      if (toks.size() != 3) fail(where() + ": unsupported property declaration");
      props.emplace_back(toks[2]);
    } else {
      fail(where() + ": unrecognised header line");
    }
  }
  if (!seen_vertex) fail(path.string() + ": no vertex element");
  auto find = [&](const char* name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) fail(path.string() + ": vertex element lacks x, y or z");
  const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

  std::vector<Point3> pts;
  std::vector<Point3> nrm;
  pts.reserve(vertex_count);
  std::vector<double> vals(props.size());
  while (pts.size() < vertex_count) {
    if (!next()) fail(where() + ": file ends after " + std::to_string(pts.size()) + " of " +
                      std::to_string(vertex_count) + " vertices");
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != props.size()) fail(where() + ": expected " + std::to_string(props.size()) + " values");
    for (std::size_t t = 0; t < toks.size(); ++t) {
      if (!parse_double(toks[t], vals[t])) fail(where() + ": cannot parse '" + std::string(toks[t]) + "' as a number");
    }
    pts.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (has_normals) nrm.emplace_back(vals[inx], vals[iny], vals[inz]);
  }
  while (next()) {
    if (!split_ws(line).empty()) fail(where() + ": trailing data after the vertex list");
  }
  return make_cloud(std::move(pts), std::move(nrm), has_normals, path);
}

}  // namespace

PointCloud read_cloud(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".xyz") return read_xyz(path);
  if (ext == ".ply") return read_ply(path);
  fail("unsupported cloud extension '" + ext + "' (expected .xyz or .ply)");
}

void write_cloud(const PointCloud& c, const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext != ".xyz" && ext != ".ply") fail("unsupported cloud extension '" + ext + "' (expected .xyz or .ply)");
  std::ofstream out = open_out(path);
  if (ext == ".ply") {
    out << "ply\nformat ascii 1.0\nelement vertex " << c.size() << "\n"
        << "property double x\nproperty double y\nproperty double z\n";
    if (c.has_normals()) out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";
  }
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point3& p = c.point(i);
    out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
    if (c.has_normals()) {
      const Point3& n = c.normal(i);
      out << ' ' << format_double(n.x()) << ' ' << format_double(n.y()) << ' ' << format_double(n.z());
    }
    out << '\n';
  }
  if (!out) fail("write to '" + path.string() + "' failed");
}

namespace {

using Kind = WeightFileError::Kind;

struct Tensor {
  Eigen::MatrixXd values;
  std::size_t line = 0;
};

std::map<std::string, Tensor> parse_tensors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw WeightFileError(Kind::io, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  auto next_nonblank = [&](std::vector<std::string_view>& toks) -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      toks = split_ws(line);
      if (!toks.empty()) return true;
    }
    return false;
  };
  auto where = [&] { return path.string() + ":" + std::to_string(lineno); };

  std::vector<std::string_view> toks;
  if (!next_nonblank(toks) || toks.size() != 2 || toks[0] != "NTW") {
    throw WeightFileError(Kind::parse, where() + ": missing 'NTW <version>' header");
  }
  if (toks[1] != "1") {
    throw WeightFileError(Kind::version, where() + ": unsupported weight file version '" + std::string(toks[1]) + "'");
  }

  std::map<std::string, Tensor> tensors;
  while (next_nonblank(toks)) {
    if (toks.size() != 4 || toks[0] != "tensor") {
      throw WeightFileError(Kind::parse, where() + ": expected 'tensor <name> <rows> <cols>'");
    }
    const std::string name(toks[1]);
    double rows = 0, cols = 0;
    if (!parse_double(toks[2], rows) || !parse_double(toks[3], cols) || rows < 1 || cols < 1 ||
        rows != std::floor(rows) || cols != std::floor(cols)) {
      throw WeightFileError(Kind::parse, where() + ": bad dimensions for tensor '" + name + "'");
    }
    if (tensors.count(name)) throw WeightFileError(Kind::duplicate_tensor, where() + ": duplicate tensor '" + name + "'");
    Tensor t{Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)), lineno};
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
      if (!next_nonblank(toks)) {
        throw WeightFileError(Kind::dimension_mismatch,
                              where() + ": tensor '" + name + "' declares " + std::to_string(t.values.rows()) +
                                  " rows but the file ends after " + std::to_string(r));
      }
      if (toks[0] == "tensor") {
        throw WeightFileError(Kind::dimension_mismatch, where() + ": tensor '" + name + "' declares " +
                                                            std::to_string(t.values.rows()) + " rows, found " +
                                                            std::to_string(r));
      }
      if (static_cast<Eigen::Index>(toks.size()) != t.values.cols()) {
        throw WeightFileError(Kind::dimension_mismatch, where() + ": tensor '" + name + "' row has " +
                                                            std::to_string(toks.size()) + " values, expected " +
                                                            std::to_string(t.values.cols()));
      }
      for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
        double v = 0;
        if (!parse_double(toks[static_cast<std::size_t>(c)], v)) {
          throw WeightFileError(Kind::parse, where() + ": cannot parse '" +
                                                 std::string(toks[static_cast<std::size_t>(c)]) + "'");
        }
        t.values(r, c) = v;
      }
    }
    tensors.emplace(name, std::move(t));
  }
  return tensors;
}

Eigen::MatrixXd take(std::map<std::string, Tensor>& tensors, const std::string& name, Eigen::Index rows,
                     Eigen::Index cols) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw WeightFileError(Kind::missing_tensor, "missing tensor '" + name + "'");
  Eigen::MatrixXd v = std::move(it->second.values);
  const std::size_t line = it->second.line;
  tensors.erase(it);
  if ((rows >= 0 && v.rows() != rows) || (cols >= 0 && v.cols() != cols)) {
    throw WeightFileError(Kind::dimension_mismatch,
                          "tensor '" + name + "' (line " + std::to_string(line) + ") is " + std::to_string(v.rows()) +
                              "x" + std::to_string(v.cols()) + ", expected " +
                              (rows >= 0 ? std::to_string(rows) : std::string("*")) + "x" +
                              (cols >= 0 ? std::to_string(cols) : std::string("*")));
  }
  return v;
}

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? " " : "") << format_double(m(r, c));
    out << '\n';
  }
}

}  // namespace

CascadeWeights load_weights(const std::filesystem::path& path) {
  auto tensors = parse_tensors(path);
  const std::regex layer_re(R"(iter0\.layer(\d+)\.(weight|bias))");
  const std::regex qmlp_re(R"(qmlp(\d+)\.(A|B|bias))");
  int layers = 0;
  int qmlps = 0;
  for (const auto& [name, t] : tensors) {
    std::smatch m;
    if (std::regex_match(name, m, layer_re)) {
      layers = std::max(layers, std::stoi(m[1]) + 1);
    } else if (std::regex_match(name, m, qmlp_re)) {
      const int idx = std::stoi(m[1]);
      if (idx < 1) throw WeightFileError(Kind::unexpected_tensor, "QMLP indices start at 1: '" + name + "'");
      qmlps = std::max(qmlps, idx);
    } else {
      throw WeightFileError(Kind::unexpected_tensor, "unknown tensor '" + name + "'");
    }
  }
  if (layers == 0) throw WeightFileError(Kind::missing_tensor, "missing tensor 'iter0.layer0.weight'");

  CascadeWeights w;
  Eigen::Index prev_out = -1;
  for (int k = 0; k < layers; ++k) {
    const std::string base = "iter0.layer" + std::to_string(k);
    LinearLayer l;
    l.weight = take(tensors, base + ".weight", -1, prev_out);
    l.bias = take(tensors, base + ".bias", l.weight.rows(), 1);
    prev_out = l.weight.rows();
    w.iter0.layers.push_back(std::move(l));
    w.iter0.relu.push_back(true);
  }
  const Eigen::Index d = prev_out;
  for (int i = 1; i <= qmlps; ++i) {
    const std::string base = "qmlp" + std::to_string(i);
    Qmlp q;
    q.a_prime = take(tensors, base + ".A", d, d);
    q.b = take(tensors, base + ".B", d, 3);
    q.bias = take(tensors, base + ".bias", d, 1);
    w.qmlps.push_back(std::move(q));
  }
  try {
    w.validate();
  } catch (const Error& e) {
    throw WeightFileError(Kind::dimension_mismatch, e.what());
  }
  return w;
}

void save_weights(const CascadeWeights& w, const std::filesystem::path& path) {
  w.validate();
  std::ofstream out = open_out(path);
  out << "NTW 1\n";
  for (std::size_t k = 0; k < w.iter0.layers.size(); ++k) {
    const std::string base = "iter0.layer" + std::to_string(k);
    write_tensor(out, base + ".weight", w.iter0.layers[k].weight);
    write_tensor(out, base + ".bias", w.iter0.layers[k].bias);
  }
  for (std::size_t i = 0; i < w.qmlps.size(); ++i) {
    const std::string base = "qmlp" + std::to_string(i + 1);
    write_tensor(out, base + ".A", w.qmlps[i].a_prime);
    write_tensor(out, base + ".B", w.qmlps[i].b);
    write_tensor(out, base + ".bias", w.qmlps[i].bias);
  }
  if (!out) fail("write to '" + path.string() + "' failed");
}

RigidTransform read_transform(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  double v[12];
  int got = 0;
  std::string tok;
  while (got < 12 && in >> tok) {
    if (!parse_double(tok, v[got])) fail(path.string() + ": cannot parse '" + tok + "' in transform");
    ++got;
  }
  if (got < 12) fail(path.string() + ": transform needs 12 numbers, found " + std::to_string(got));
  Matrix3 r;
  r << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  return RigidTransform(r, Point3(v[9], v[10], v[11]));
}

void write_transform(const RigidTransform& t, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << format_double(t.rotation()(r, c)) << ' ';
  out << format_double(t.translation().x()) << ' ' << format_double(t.translation().y()) << ' '
      << format_double(t.translation().z()) << '\n';
  if (!out) fail("write to '" + path.string() + "' failed");
}

}  // namespace qreg
