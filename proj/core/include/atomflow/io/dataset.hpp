#pragma once

#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "atomflow/system.hpp"

namespace atomflow::io {

inline constexpr const char* kDatasetFormat = "atomflow-dataset";
inline constexpr const char* kDatasetVersion = "1.0";

nlohmann::json system_to_json(const AtomicSystem& system);
/// Raises ParseError on malformed or missing fields; the result is validated.
AtomicSystem system_from_json(const nlohmann::json& j);

/// Accepts "<major>.<minor>"; raises SchemaVersionError unless the major matches `expected`.
void check_version(const std::string& version, const std::string& expected, const std::string& what);

/// JSON lines, one system per line, optionally preceded by a header line
/// {"format": "atomflow-dataset", "version": "1.0", "stamp": {...}}. Blank lines are skipped.
/// Errors name the offending line.
std::vector<AtomicSystem> parse_dataset(std::istream& in);
std::vector<AtomicSystem> read_dataset(const std::filesystem::path& path);

/// Writes the header line (with `stamp` when not null) then one line per system. Doubles
/// use shortest round-trip formatting, so write/read/write is byte-identical.
void write_dataset(std::ostream& out, std::span<const AtomicSystem> systems, const nlohmann::json& stamp = nullptr);
void write_dataset(const std::filesystem::path& path, std::span<const AtomicSystem> systems,
                   const nlohmann::json& stamp = nullptr);

/// Multi-frame XYZ: count line, comment line (used as the id when non-empty), then
/// `symbol x y z` rows. Raises ParseError / UnknownElement.
std::vector<AtomicSystem> parse_xyz(std::istream& in);
std::vector<AtomicSystem> import_xyz(const std::filesystem::path& path);

}  // namespace atomflow::io
