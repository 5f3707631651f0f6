#include "vtc/image.hpp"

#include "vtc/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace vtc {

namespace {

void write_header(std::ofstream& out, int w, int h, int maxval) {
  out << "P5\n" << w << ' ' << h << '\n' << maxval << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

struct PgmHeader {
  int width = 0, height = 0, maxval = 0;
};

PgmHeader read_header(std::ifstream& in, const std::filesystem::path& path) {
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  if (next_token() != "P5") throw IoError("not a binary PGM: " + path.string());
  PgmHeader h;
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw IoError("malformed PGM header: " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
    throw IoError("malformed PGM header: " + path.string());
  }
  return h;
}

}  // namespace

void write_pgm16(const std::filesystem::path& path, const Raster<std::uint16_t>& img) {
  std::ofstream out = open_out(path);
  write_header(out, img.width(), img.height(), 65535);
  std::vector<char> buf(img.size() * 2);
  for (std::size_t i = 0; i < img.size(); ++i) {
    buf[2 * i] = static_cast<char>(img[i] >> 8);
    buf[2 * i + 1] = static_cast<char>(img[i] & 0xFF);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

void write_pgm8(const std::filesystem::path& path, const Raster<std::uint8_t>& img) {
  std::ofstream out = open_out(path);
  write_header(out, img.width(), img.height(), 255);
  out.write(reinterpret_cast<const char*>(img.data().data()),
            static_cast<std::streamsize>(img.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Raster<std::uint16_t> read_pgm16(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  const PgmHeader h = read_header(in, path);
  Raster<std::uint16_t> img(h.width, h.height);
  if (h.maxval < 256) {
    std::vector<unsigned char> buf(img.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("truncated PGM: " + path.string());
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = buf[i];
    return img;
  }
  std::vector<unsigned char> buf(img.size() * 2);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw IoError("truncated PGM: " + path.string());
  for (std::size_t i = 0; i < img.size(); ++i) {
    img[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
  }
  return img;
}

Raster<std::uint8_t> read_pgm8(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  const PgmHeader h = read_header(in, path);
  if (h.maxval > 255) throw IoError("expected 8-bit PGM: " + path.string());
  Raster<std::uint8_t> img(h.width, h.height);
  in.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.size()));
  if (!in) throw IoError("truncated PGM: " + path.string());
  return img;
}

Raster<std::uint16_t> quantize16(const Raster<double>& values, double scale) {
  Raster<std::uint16_t> q(values.width(), values.height());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double units = std::round(values[i] / scale);
    q[i] = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
  }
  return q;
}

Raster<double> dequantize16(const Raster<std::uint16_t>& q, double scale) {
  Raster<double> out(q.width(), q.height());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = q[i] * scale;
  return out;
}

void write_depth(const std::filesystem::path& pgm_path, const DepthImage& depth) {
  write_pgm16(pgm_path, quantize16(depth, kDepthMetersPerUnit));
  std::filesystem::path sidecar = pgm_path;
  sidecar.replace_extension(".json");
  std::ofstream out = open_out(sidecar);
  nlohmann::json meta = {{"format", "vtc.depth_image"},
                         {"version", 1},
                         {"width", depth.width()},
                         {"height", depth.height()},
                         {"meters_per_unit", kDepthMetersPerUnit},
                         {"invalid_value", 0}};
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + sidecar.string());
}

DepthImage read_depth(const std::filesystem::path& pgm_path) {
  std::filesystem::path sidecar = pgm_path;
  sidecar.replace_extension(".json");
  double scale = kDepthMetersPerUnit;
  std::ifstream in(sidecar);
  if (in) {
    try {
      scale = nlohmann::json::parse(in).at("meters_per_unit").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed depth sidecar " + sidecar.string() + ": " + e.what());
    }
  }
  return dequantize16(read_pgm16(pgm_path), scale);
}

void write_mask(const std::filesystem::path& path, const PixelMask& mask) {
  Raster<std::uint8_t> out(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 255 : 0;
  write_pgm8(path, out);
}

PixelMask read_mask(const std::filesystem::path& path) {
  Raster<std::uint8_t> raw = read_pgm8(path);
  PixelMask mask(raw.width(), raw.height());
  for (std::size_t i = 0; i < raw.size(); ++i) mask[i] = raw[i] >= 128 ? 1 : 0;
  return mask;
}

}  // namespace vtc
