#include "advmk/io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace advmk::io {

TensorD png_read(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    require(f != nullptr, "png_read: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw Error("png_read: decode failure in " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);
    const int w = (int)png_get_image_width(png, info);
    const int h = (int)png_get_image_height(png, info);
    // normalize anything to 8-bit RGB
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    require((int)png_get_rowbytes(png, info) == w * 3, "png_read: unexpected row size");

    std::vector<unsigned char> row(w * 3);
    TensorD img(Shape{3, h, w});
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[x * 3 + c] / 255.0;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(f);
    return img;
}

void png_write(const std::string& path, const TensorD& img) {
    require(img.shape.size() == 3 && img.shape[0] == 3, "png_write: want (3,H,W)");
    const int h = img.shape[1], w = img.shape[2];
    FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "png_write: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw Error("png_write: encode failure in " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(w * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = img.at(c, y, x);
                v = v < 0 ? 0 : (v > 1 ? 1 : v);
                row[x * 3 + c] = (unsigned char)std::lround(v * 255.0);
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

namespace {
constexpr char kMagic[4] = {'A', 'M', 'K', 'C'};
constexpr std::uint32_t kVersion = 1;
} // namespace

void save_archive(const std::string& path, const nn::ParamSet& params, const json& meta) {
    json header;
    header["version"] = kVersion;
    header["meta"] = meta;
    json entries = json::array();
    for (const auto& [name, t] : params.items) {
        json e;
        e["name"] = name;
        e["shape"] = t.shape;
        entries.push_back(e);
    }
    header["entries"] = entries;
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    require(f.good(), "save_archive: cannot open " + path);
    f.write(kMagic, 4);
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), (std::streamsize)hs.size());
    for (const auto& [name, t] : params.items)
        f.write(reinterpret_cast<const char*>(t.data.data()),
                (std::streamsize)(t.size() * sizeof(double)));
    require(f.good(), "save_archive: write failure " + path);
}

std::pair<nn::ParamSet, json> load_archive(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), "load_archive: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    require(f.good() && std::memcmp(magic, kMagic, 4) == 0, "load_archive: bad magic in " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    require(f.good() && hlen < (1u << 26), "load_archive: bad header length");
    std::string hs(hlen, '\0');
    f.read(hs.data(), (std::streamsize)hlen);
    json header = json::parse(hs);
    require(header["version"].get<std::uint32_t>() == kVersion,
            "load_archive: unsupported version");

    nn::ParamSet p;
    for (const auto& e : header["entries"]) {
        Shape s = e["shape"].get<Shape>();
        TensorD t(s);
        f.read(reinterpret_cast<char*>(t.data.data()),
               (std::streamsize)(t.size() * sizeof(double)));
        require(f.good(), "load_archive: truncated payload for " + e["name"].get<std::string>());
        p.add(e["name"].get<std::string>(), std::move(t));
    }
    return {std::move(p), header["meta"]};
}

std::map<std::string, geo::Landmarks> load_landmarks(const std::string& path) {
    const json j = load_json(path);
    std::map<std::string, geo::Landmarks> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        geo::Landmarks lm;
        lm.schema = it.value()["schema"].get<std::string>();
        for (const auto& p : it.value()["points"])
            lm.pts.push_back({p[0].get<double>(), p[1].get<double>()});
        out[it.key()] = std::move(lm);
    }
    return out;
}

void save_landmarks(const std::string& path, const std::map<std::string, geo::Landmarks>& lms) {
    json j = json::object();
    for (const auto& [id, lm] : lms) {
        json pts = json::array();
        for (const auto& p : lm.pts) pts.push_back({p[0], p[1]});
        j[id] = {{"schema", lm.schema}, {"points", pts}};
    }
    save_json(path, j);
}

json load_json(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "load_json: cannot open " + path);
    json j;
    f >> j;
    return j;
}

void save_json(const std::string& path, const json& j) {
    std::ofstream f(path);
    require(f.good(), "save_json: cannot open " + path);
    f << j.dump(2) << "\n";
    require(f.good(), "save_json: write failure " + path);
}

CsvWriter::CsvWriter(const std::string& path) : f_(std::fopen(path.c_str(), "wb")) {
    require(f_ != nullptr, "CsvWriter: cannot open " + path);
}

CsvWriter::~CsvWriter() {
    if (f_) std::fclose(f_);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i)
        std::fprintf(f_, "%s%s", cells[i].c_str(), i + 1 < cells.size() ? "," : "\n");
}

std::string CsvWriter::num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::vector<std::string>> csv_read(const std::string& path) {
    std::ifstream f(path);
    require(f.good(), "csv_read: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> cells;
        size_t pos = 0;
        while (true) {
            const size_t comma = line.find(',', pos);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(pos));
                break;
            }
            cells.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    require(!ec, "ensure_dir: cannot create " + path);
}

} // namespace advmk::io
