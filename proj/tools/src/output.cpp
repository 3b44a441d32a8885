#include "output.hpp"

#include "lemmse/error.hpp"
#include "lemmse/estimators.hpp"
#include "lemmse/io.hpp"
#include "lemmse/oracle.hpp"
#include "lemmse/version.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

namespace lemmse::cli {

namespace {

std::string lower_ext(const fs::path &p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace

std::vector<std::string> dataset_files(const fs::path &path) {
  std::error_code ec;
  if (!fs::is_directory(path, ec)) {
    return {path.string()};
  }
  std::vector<std::string> files;
  for (const auto &entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && lower_ext(entry.path()) == ".png") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<std::string> expand_inputs(const std::vector<std::string> &inputs) {
  std::vector<std::string> out;
  for (const auto &in : inputs) {
    std::error_code ec;
    if (!fs::is_directory(in, ec)) {
      out.push_back(in);
      continue;
    }
    std::vector<std::string> files;
    for (const auto &entry : fs::directory_iterator(in)) {
      const std::string ext = lower_ext(entry.path());
      if (entry.is_regular_file() && (ext == ".png" || ext == ".npy")) {
        files.push_back(entry.path().string());
      }
    }
    if (files.empty()) {
      throw Error(ErrorCode::UnreadableFile, in + ": directory holds no PNG or NPY files");
    }
    std::sort(files.begin(), files.end());
    out.insert(out.end(), files.begin(), files.end());
  }
  return out;
}

std::vector<std::pair<std::string, ImageGrid>> read_images(const std::vector<std::string> &files) {
  std::vector<std::pair<std::string, ImageGrid>> out;
  for (const auto &f : files) {
    if (lower_ext(f) == ".npy") {
      const Tensor t = read_npy(f);
      if (t.shape.size() == 4) {
        const Dataset d = dataset_from_tensor(t);
        for (std::size_t k = 0; k < d.size(); ++k) {
          out.emplace_back(f + "[" + std::to_string(k) + "]", d[k]);
        }
        continue;
      }
      out.emplace_back(f, image_from_tensor(t));
      continue;
    }
    out.emplace_back(f, read_png(f));
  }
  return out;
}

void write_json(const fs::path &path, const nlohmann::json &j) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::UnreadableFile, "cannot write " + path.string());
  }
  out << j.dump(2) << "\n";
}

void write_manifest(const fs::path &dir, Command cmd, const ExperimentConfig &c, const std::vector<std::string> &dataset,
                    const std::vector<std::string> &inputs, const nlohmann::json &extra) {
  const EstimatorOptions defaults = estimator_options(c);
  nlohmann::json m;
  m["tool"] = "lemmse";
  m["version"] = kVersion;
  m["command"] = to_string(cmd);
  m["created_utc"] = utc_now();
  m["config"] = to_json(c);
  m["config_hash"] = config_hash(c);
  m["tolerances"] = {
      {"rank_tolerance", defaults.rank_tolerance},
      {"support_tolerance", defaults.support_tolerance},
      {"support_tolerance_scaling", "tol * (1 + |v|)"},
      {"sigma_floor", defaults.sigma_floor},
      {"tie_tolerance", defaults.tie_tolerance},
      {"dense_limit", defaults.dense_limit},
      {"oracle_limit", kOracleLimit},
      {"deterministic_chunks", defaults.deterministic_chunks},
      {"query_block", defaults.query_block},
  };
  m["files"] = {{"dataset", dataset}, {"inputs", inputs}};
  for (const auto &[k, v] : extra.items()) {
    m[k] = v;
  }
  write_json(dir / "manifest.json", m);
}

void write_image_pair(const fs::path &dir, const std::string &stem, const ImageGrid &img) {
  write_npy(dir / (stem + ".npy"), to_tensor(img));
  if (img.channels() == 1 || img.channels() == 3) {
    write_png(dir / (stem + ".png"), img);
  }
}

nlohmann::json error_json(const std::string &code, const std::string &message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

} // namespace lemmse::cli
