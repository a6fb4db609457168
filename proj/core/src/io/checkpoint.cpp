#include "atomflow/io/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atomflow/errors.hpp"
#include "atomflow/io/dataset.hpp"

namespace atomflow::io {

using nlohmann::json;

namespace {

static_assert(sizeof(float) == 4);

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

void to_little_endian(std::vector<char>& bytes) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + 4 <= bytes.size(); i += 4) {
      std::swap(bytes[i], bytes[i + 3]);
      std::swap(bytes[i + 1], bytes[i + 2]);
    }
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const nn::ParameterStore<float>& params,
                     const CheckpointMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());

  json tensors = json::array();
  std::vector<char> blob;
  const auto& specs = params.layout().specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& v = params.value(i);
    std::vector<char> bytes(static_cast<std::size_t>(v.size()) * sizeof(float));
    if (!bytes.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
    to_little_endian(bytes);
    tensors.push_back({{"name", specs[i].name},
                       {"dtype", "float32"},
                       {"shape", {specs[i].rows, specs[i].cols}},
                       {"offset", blob.size()},
                       {"bytes", bytes.size()},
                       {"crc32", crc32_of(bytes.data(), bytes.size())}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  json manifest = {{"format", kCheckpointFormat},
                   {"version", meta.version},
                   {"config", meta.config},
                   {"ema", meta.ema},
                   {"step", meta.step},
                   {"stamp", meta.stamp},
                   {"extra", meta.extra},
                   {"blob_bytes", blob.size()},
                   {"tensors", tensors}};

  std::ofstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) fail(ErrorKind::IoError, "cannot write " + (dir / "tensors.bin").string());
  bin.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!bin) fail(ErrorKind::IoError, "short write to tensors.bin");
  std::ofstream man(dir / "manifest.json", std::ios::binary);
  if (!man) fail(ErrorKind::IoError, "cannot write " + (dir / "manifest.json").string());
  man << manifest.dump(2) << '\n';
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  const json m = read_json_file(dir / "manifest.json");
  if (m.value("format", std::string()) != kCheckpointFormat)
    fail(ErrorKind::ParseError, (dir / "manifest.json").string() + " is not an atomflow checkpoint manifest");
  CheckpointMeta meta;
  meta.version = m.value("version", std::string());
  check_version(meta.version, kCheckpointVersion, "checkpoint");
  meta.config = m.value("config", json::object());
  meta.ema = m.value("ema", false);
  meta.step = m.value("step", std::int64_t{0});
  meta.stamp = m.value("stamp", json::object());
  meta.extra = m.value("extra", json::object());
  return meta;
}

json checkpoint_tensor_table(const std::filesystem::path& dir) {
  const json m = read_json_file(dir / "manifest.json");
  json table = json::array();
  for (const auto& t : m.at("tensors")) {
    const auto shape = t.at("shape");
    table.push_back({{"name", t.at("name")},
                     {"shape", shape},
                     {"count", shape[0].get<std::int64_t>() * shape[1].get<std::int64_t>()}});
  }
  return table;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const nn::ParameterLayout& expected) {
  LoadedCheckpoint out;
  out.meta = read_checkpoint_meta(dir);
  const json m = read_json_file(dir / "manifest.json");

  std::ifstream bin(dir / "tensors.bin", std::ios::binary);
  if (!bin) fail(ErrorKind::IoError, "cannot open " + (dir / "tensors.bin").string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  const auto declared = m.at("blob_bytes").get<std::size_t>();
  if (blob.size() != declared)
    fail(ErrorKind::ChecksumError, "tensors.bin holds " + std::to_string(blob.size()) + " bytes, manifest declares " +
                                       std::to_string(declared));

  std::ostringstream diff;
  int mismatches = 0;
  const auto& tensors = m.at("tensors");
  std::unordered_map<std::string, const json*> by_name;
  for (const auto& t : tensors) by_name[t.at("name").get<std::string>()] = &t;
  for (const auto& spec : expected.specs()) {
    const auto it = by_name.find(spec.name);
    if (it == by_name.end()) {
      diff << "\n  missing " << spec.name << " [" << spec.rows << " x " << spec.cols << "]";
      ++mismatches;
      continue;
    }
    const auto& shape = it->second->at("shape");
    if (shape[0].get<Eigen::Index>() != spec.rows || shape[1].get<Eigen::Index>() != spec.cols) {
      diff << "\n  " << spec.name << ": checkpoint [" << shape[0] << " x " << shape[1] << "], model [" << spec.rows
           << " x " << spec.cols << "]";
      ++mismatches;
    }
  }
  for (const auto& [name, t] : by_name)
    if (!expected.contains(name)) {
      diff << "\n  unexpected " << name;
      ++mismatches;
    }
  if (mismatches > 0)
    fail(ErrorKind::ConfigMismatch, "checkpoint does not match the model (" + std::to_string(mismatches) +
                                        " tensors):" + diff.str());

  out.params = nn::ParameterStore<float>(expected);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& spec = expected.specs()[i];
    const json& t = *by_name.at(spec.name);
    if (t.value("dtype", std::string()) != "float32")
      fail(ErrorKind::ParseError, spec.name + ": unsupported dtype " + t.value("dtype", std::string()));
    const auto offset = t.at("offset").get<std::size_t>();
    const auto bytes = t.at("bytes").get<std::size_t>();
    if (bytes != static_cast<std::size_t>(spec.count()) * sizeof(float) || offset + bytes > blob.size())
      fail(ErrorKind::ChecksumError, spec.name + ": entry does not resolve inside tensors.bin");
    std::vector<char> chunk(blob.begin() + static_cast<std::ptrdiff_t>(offset),
                            blob.begin() + static_cast<std::ptrdiff_t>(offset + bytes));
    if (crc32_of(chunk.data(), chunk.size()) != t.at("crc32").get<std::uint32_t>())
      fail(ErrorKind::ChecksumError, spec.name + ": checksum mismatch");
    to_little_endian(chunk);
    if (!chunk.empty()) std::memcpy(out.params.value(i).data(), chunk.data(), chunk.size());
  }
  return out;
}

}  // namespace atomflow::io
