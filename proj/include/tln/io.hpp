#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tln/data.hpp"
#include "tln/network.hpp"
#include "tln/sweep.hpp"

namespace tln {

// Dataset directory layout:
//   meta.json  - name, class names, dims, count, per-channel mean/std
//   data.bin   - count records of C*H*W pixel bytes followed by 1 label byte
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Versioned binary network archive, magic "TLN1". Stores units, the optional
// classifier module and metadata; saving a loaded archive reproduces the
// bytes exactly.
void save_network(const Tln& net, const std::filesystem::path& file);
Tln load_network(const std::filesystem::path& file);

// Archive wrappers for source networks (no psi, classifier last).
void save_pretrained(const PretrainedNetwork& net, const std::filesystem::path& file);
PretrainedNetwork load_pretrained(const std::filesystem::path& file);

// Canonical (sorted-key, fixed layout) dump used both for files and for
// content hashes, so equal configs hash equally.
std::string canonical_json(const nlohmann::json& j);
void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

// Manifest = resolved config + content hash; written next to run outputs.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config);
void write_manifest(const std::filesystem::path& file, const std::string& command,
                    const nlohmann::json& config);

// sweep.json: manifest + accuracy matrix + per-cell traces.
nlohmann::json sweep_to_json(const SweepResult& result, const nlohmann::json& manifest);
SweepResult sweep_from_json(const nlohmann::json& j);

// sweep.csv, long form: variant,nu,repeat,accuracy.
std::string sweep_long_csv(const SweepResult& result);

}  // namespace tln
