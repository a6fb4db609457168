#include "atomflow/io/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "atomflow/elements.hpp"
#include "atomflow/errors.hpp"

namespace atomflow::io {

using nlohmann::json;

namespace {

json coords_to_json(const Coords& c) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < c.rows(); ++i) rows.push_back({c(i, 0), c(i, 1), c(i, 2)});
  return rows;
}

Coords coords_from_json(const json& j, const char* field) {
  if (!j.is_array()) fail(ErrorKind::ParseError, std::string(field) + " must be an array of [x, y, z] rows");
  Coords c(static_cast<Eigen::Index>(j.size()), 3);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& row = j[i];
    if (!row.is_array() || row.size() != 3) fail(ErrorKind::ParseError, std::string(field) + " rows must have 3 entries");
    for (std::size_t k = 0; k < 3; ++k) {
      if (!row[k].is_number()) fail(ErrorKind::ParseError, std::string(field) + " entries must be numbers");
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = row[k].get<double>();
    }
  }
  return c;
}

Vec3 vec3_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.size() != 3) fail(ErrorKind::ParseError, std::string(field) + " must hold 3 numbers");
  Vec3 v;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!j[k].is_number()) fail(ErrorKind::ParseError, std::string(field) + " entries must be numbers");
    v[static_cast<Eigen::Index>(k)] = j[k].get<double>();
  }
  return v;
}

bool present(const json& j, const char* key) { return j.contains(key) && !j.at(key).is_null(); }

const std::vector<std::string> kKnownFields = {"id",          "domain",         "atomic_numbers", "cart_coords",
                                               "frac_coords", "lattice_lengths", "lattice_angles", "properties",
                                               "energy",      "forces",          "sample_flags"};

}  // namespace

json system_to_json(const AtomicSystem& s) {
  json j;
  j["id"] = s.id;
  j["domain"] = std::string(to_string(s.domain));
  j["atomic_numbers"] = s.atomic_numbers;
  j["cart_coords"] = s.cart_coords ? coords_to_json(*s.cart_coords) : json(nullptr);
  j["frac_coords"] = s.frac_coords ? coords_to_json(*s.frac_coords) : json(nullptr);
  j["lattice_lengths"] = s.lattice_lengths ? json{(*s.lattice_lengths)[0], (*s.lattice_lengths)[1], (*s.lattice_lengths)[2]} : json(nullptr);
  j["lattice_angles"] = s.lattice_angles ? json{(*s.lattice_angles)[0], (*s.lattice_angles)[1], (*s.lattice_angles)[2]} : json(nullptr);
  if (s.labels.properties) {
    json p = json::array();
    for (const auto& v : *s.labels.properties) p.push_back(v ? json(*v) : json(nullptr));
    j["properties"] = p;
  } else {
    j["properties"] = nullptr;
  }
  j["energy"] = s.labels.energy ? json(*s.labels.energy) : json(nullptr);
  j["forces"] = s.labels.forces ? coords_to_json(*s.labels.forces) : json(nullptr);
  if (s.sample_flags)
    j["sample_flags"] = {{"angles_clamped", s.sample_flags->angles_clamped},
                         {"lengths_floored", s.sample_flags->lengths_floored}};
  return j;
}

AtomicSystem system_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::ParseError, "record must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(kKnownFields.begin(), kKnownFields.end(), key) == kKnownFields.end())
      fail(ErrorKind::ParseError, "unknown field '" + key + "'");
  AtomicSystem s;
  try {
    s.id = j.value("id", std::string());
    if (!j.contains("domain") || !j.at("domain").is_string()) fail(ErrorKind::ParseError, "missing domain");
    s.domain = parse_domain(j.at("domain").get<std::string>());
    if (!j.contains("atomic_numbers") || !j.at("atomic_numbers").is_array())
      fail(ErrorKind::ParseError, "missing atomic_numbers");
    for (const auto& z : j.at("atomic_numbers")) {
      if (!z.is_number_integer()) fail(ErrorKind::ParseError, "atomic_numbers must be integers");
      s.atomic_numbers.push_back(z.get<int>());
    }
    if (present(j, "cart_coords")) s.cart_coords = coords_from_json(j.at("cart_coords"), "cart_coords");
    if (present(j, "frac_coords")) s.frac_coords = coords_from_json(j.at("frac_coords"), "frac_coords");
    if (present(j, "lattice_lengths")) s.lattice_lengths = vec3_from_json(j.at("lattice_lengths"), "lattice_lengths");
    if (present(j, "lattice_angles")) s.lattice_angles = vec3_from_json(j.at("lattice_angles"), "lattice_angles");
    if (present(j, "properties")) {
      const auto& p = j.at("properties");
      if (!p.is_array() || p.size() != kNumProperties)
        fail(ErrorKind::ParseError, "properties must hold " + std::to_string(kNumProperties) + " entries");
      std::vector<std::optional<double>> props;
      for (const auto& v : p) {
        if (v.is_null()) {
          props.emplace_back();
        } else if (v.is_number()) {
          props.emplace_back(v.get<double>());
        } else {
          fail(ErrorKind::ParseError, "properties entries must be numbers or null");
        }
      }
      s.labels.properties = std::move(props);
    }
    if (present(j, "energy")) {
      if (!j.at("energy").is_number()) fail(ErrorKind::ParseError, "energy must be a number");
      s.labels.energy = j.at("energy").get<double>();
    }
    if (present(j, "forces")) s.labels.forces = coords_from_json(j.at("forces"), "forces");
    if (present(j, "sample_flags")) {
      const auto& f = j.at("sample_flags");
      s.sample_flags = SampleFlags{f.value("angles_clamped", false), f.value("lengths_floored", false)};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, e.what());
  }
  return build_system(std::move(s));
}

void check_version(const std::string& version, const std::string& expected, const std::string& what) {
  const auto major = [](const std::string& v) { return v.substr(0, v.find('.')); };
  if (version.empty() || major(version) != major(expected))
    fail(ErrorKind::SchemaVersionError,
         what + " version '" + version + "' is not supported (expected major " + major(expected) + ")");
}

std::vector<AtomicSystem> parse_dataset(std::istream& in) {
  std::vector<AtomicSystem> out;
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": " + e.what());
    }
    if (first && j.is_object() && j.contains("format")) {
      first = false;
      if (j.at("format") != kDatasetFormat)
        fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": not an atomflow dataset");
      check_version(j.value("version", std::string()), kDatasetVersion, "dataset");
      continue;
    }
    first = false;
    try {
      out.push_back(system_from_json(j));
    } catch (const Error& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": " + std::string(to_string(e.kind())) +
                                      ": " + e.what());
    }
  }
  return out;
}

std::vector<AtomicSystem> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const AtomicSystem> systems, const json& stamp) {
  json header = {{"format", kDatasetFormat}, {"version", kDatasetVersion}};
  if (!stamp.is_null()) header["stamp"] = stamp;
  out << header.dump() << '\n';
  for (const auto& s : systems) out << system_to_json(s).dump() << '\n';
}

void write_dataset(const std::filesystem::path& path, std::span<const AtomicSystem> systems, const json& stamp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  write_dataset(out, systems, stamp);
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<AtomicSystem> parse_xyz(std::istream& in) {
  std::vector<AtomicSystem> out;
  std::string line;
  int lineno = 0;
  auto err = [&](const std::string& msg) { fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream count_line(line);
    long count = -1;
    std::string rest;
    if (!(count_line >> count) || count < 1 || (count_line >> rest)) err("expected a positive atom count");
    std::string comment;
    if (!std::getline(in, comment)) err("missing comment line");
    ++lineno;
    while (!comment.empty() && (comment.back() == '\r' || comment.back() == ' ')) comment.pop_back();
    std::vector<int> z;
    Coords x(count, 3);
    for (long i = 0; i < count; ++i) {
      if (!std::getline(in, line)) err("atom count " + std::to_string(count) + " exceeds the rows present");
      ++lineno;
      std::istringstream row(line);
      std::string symbol;
      double a = 0, b = 0, c = 0;
      if (!(row >> symbol >> a >> b >> c)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos || std::isdigit(static_cast<unsigned char>(line.front())))
          err("atom count " + std::to_string(count) + " does not match the rows present");
        err("expected 'symbol x y z'");
      }
      const auto number = atomic_number(symbol);
      if (!number) fail(ErrorKind::UnknownElement, "line " + std::to_string(lineno) + ": unknown element '" + symbol + "'");
      z.push_back(*number);
      x.row(i) << a, b, c;
    }
    const std::string id = comment.empty() ? "frame-" + std::to_string(out.size()) : comment;
    out.push_back(make_molecule(id, std::move(z), std::move(x)));
  }
  return out;
}

std::vector<AtomicSystem> import_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return parse_xyz(in);
}

}  // namespace atomflow::io
