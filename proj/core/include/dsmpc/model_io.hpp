#pragma once

#include "dsmpc/model.hpp"

#include <filesystem>
#include <string>

namespace dsmpc {

/// Parses a JSON model document (schema documented in README.md).
NetworkModel load_network(const std::string& document);
NetworkModel load_network_file(const std::filesystem::path& path);

/// Canonical JSON; loading it again reproduces every matrix bit for bit.
std::string serialize_network(const NetworkModel& model);

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
std::string model_hash(const NetworkModel& model);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace dsmpc
