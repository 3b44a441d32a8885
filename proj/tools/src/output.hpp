#pragma once

#include "config.hpp"

#include "lemmse/grid.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lemmse::cli {

namespace fs = std::filesystem;

/// Files ingest_dataset would read for `path`, in the order it reads them.
std::vector<std::string> dataset_files(const fs::path &path);

/// Expands directories to their sorted *.png / *.npy entries.
std::vector<std::string> expand_inputs(const std::vector<std::string> &inputs);

/// A file holding a (K, C, H, W) tensor yields K images; anything else one.
std::vector<std::pair<std::string, ImageGrid>> read_images(const std::vector<std::string> &files);

void write_json(const fs::path &path, const nlohmann::json &j);

/// manifest.json: command, version, effective config and its hash, the
/// tolerances in force, and the explicit file lists.
void write_manifest(const fs::path &dir, Command cmd, const ExperimentConfig &c,
                    const std::vector<std::string> &dataset, const std::vector<std::string> &inputs,
                    const nlohmann::json &extra = nlohmann::json::object());

/// Reconstruction-style export: PNG (clipped) plus an NPY tensor.
void write_image_pair(const fs::path &dir, const std::string &stem, const ImageGrid &img);

/// {"error": {"code": ..., "message": ...}}
nlohmann::json error_json(const std::string &code, const std::string &message);

} // namespace lemmse::cli
