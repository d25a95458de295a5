#pragma once

#include "advmk/geometry.hpp"
#include "advmk/nn.hpp"
#include "advmk/tensor.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace advmk::io {

using nlohmann::json;

// 8-bit RGB PNG <-> (3,H,W) image in [0,1]; load maps value/255, save rounds.
TensorD png_read(const std::string& path);
void png_write(const std::string& path, const TensorD& img);

/// Versioned tensor archive: magic + JSON header (names, shapes, metadata)
/// followed by raw little-endian float64 payloads in header order.
void save_archive(const std::string& path, const nn::ParamSet& params, const json& meta);
std::pair<nn::ParamSet, json> load_archive(const std::string& path);

// Landmark file: {image_id: {"schema": str, "points": [[x,y],...]}}
std::map<std::string, geo::Landmarks> load_landmarks(const std::string& path);
void save_landmarks(const std::string& path, const std::map<std::string, geo::Landmarks>& lms);

json load_json(const std::string& path);
void save_json(const std::string& path, const json& j);

/// Rows of printf("%.17g")-formatted cells: deterministic bytes for
/// deterministic doubles.
struct CsvWriter {
    explicit CsvWriter(const std::string& path);
    ~CsvWriter();
    void row(const std::vector<std::string>& cells);
    static std::string num(double v);

private:
    FILE* f_;
};

std::vector<std::vector<std::string>> csv_read(const std::string& path);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

} // namespace advmk::io
