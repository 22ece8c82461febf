// Copyright 2026 The gtxai Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "core/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

static_assert(std::endian::native == std::endian::little, "VLAB I/O assumes a little-endian host");

namespace gtx::io {

namespace {

constexpr char kMagic[4] = {'V', 'L', 'A', 'B'};
constexpr char kTableMagic[4] = {'R', 'T', 'A', 'B'};

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

class Reader {
 public:
  Reader(std::string data, std::string where) : data_(std::move(data)), where_(std::move(where)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw IoError(where_ + ": truncated file");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw IoError(where_ + ": truncated file");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ >= data_.size(); }

 private:
  std::string data_;
  std::string where_;
  std::size_t pos_ = 0;
};

struct Header {
  vol::Dims dims;
  vol::Spacing spacing;
  DType dtype;
};

std::string header_bytes(const vol::Dims& d, const vol::Spacing& s, DType t) {
  std::string buf(kMagic, 4);
  put<std::uint32_t>(buf, kVlabVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(d.nx));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(d.ny));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(d.nz));
  for (double v : s) put<double>(buf, v);
  put<std::uint8_t>(buf, static_cast<std::uint8_t>(t));
  return buf;
}

Header read_header(Reader& r, const std::string& where) {
  if (r.bytes(4) != std::string(kMagic, 4)) throw IoError(where + ": not a VLAB file");
  const auto version = r.get<std::uint32_t>();
  if (version != kVlabVersion) throw IoError(where + ": unsupported VLAB version " + std::to_string(version));
  Header h;
  h.dims.nx = r.get<std::uint32_t>();
  h.dims.ny = r.get<std::uint32_t>();
  h.dims.nz = r.get<std::uint32_t>();
  for (auto& v : h.spacing) v = r.get<double>();
  const auto t = r.get<std::uint8_t>();
  if (t > 3) throw IoError(where + ": unknown dtype tag");
  h.dtype = static_cast<DType>(t);
  if (h.dims.count() == 0) throw IoError(where + ": zero dimension");
  return h;
}

void write_all(const std::filesystem::path& p, const std::string& bytes) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + p.string() + "'");
}

std::vector<double> read_payload(Reader& r, const Header& h) {
  std::vector<double> out(h.dims.count());
  for (auto& v : out) {
    switch (h.dtype) {
      case DType::F64: v = r.get<double>(); break;
      case DType::F32: v = r.get<float>(); break;
      case DType::U8: v = r.get<std::uint8_t>(); break;
      case DType::I32: v = r.get<std::int32_t>(); break;
    }
  }
  return out;
}

}  // namespace

std::string read_text(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) { write_all(p, s); }

double quantize(double v, DType dtype) {
  switch (dtype) {
    case DType::F64: return v;
    case DType::F32: return static_cast<double>(static_cast<float>(v));
    case DType::U8: return static_cast<double>(static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)));
    case DType::I32: return static_cast<double>(static_cast<std::int32_t>(std::lround(v)));
  }
  return v;
}

void write_volume(const std::filesystem::path& p, const vol::Volume& v, DType dtype) {
  std::string buf = header_bytes(v.dims(), v.spacing(), dtype);
  buf.reserve(buf.size() + v.size() * 8);
  for (double x : v.data()) {
    switch (dtype) {
      case DType::F64: put<double>(buf, x); break;
      case DType::F32: put<float>(buf, static_cast<float>(x)); break;
      case DType::U8: put<std::uint8_t>(buf, static_cast<std::uint8_t>(quantize(x, dtype))); break;
      case DType::I32: put<std::int32_t>(buf, static_cast<std::int32_t>(quantize(x, dtype))); break;
    }
  }
  write_all(p, buf);
}

vol::Volume read_volume(const std::filesystem::path& p) {
  Reader r(read_text(p), p.string());
  Header h = read_header(r, p.string());
  return vol::Volume(h.dims, h.spacing, read_payload(r, h));
}

void write_mask(const std::filesystem::path& p, const vol::RegionMask& m) {
  std::string buf = header_bytes(m.dims(), m.spacing(), DType::U8);
  buf.append(reinterpret_cast<const char*>(m.bits().data()), m.bits().size());
  write_all(p, buf);
}

vol::RegionMask read_mask(const std::filesystem::path& p) {
  Reader r(read_text(p), p.string());
  Header h = read_header(r, p.string());
  vol::RegionMask m(h.dims, h.spacing);
  auto values = read_payload(r, h);
  for (std::size_t i = 0; i < values.size(); ++i) m.set(i, values[i] != 0.0);
  return m;
}

void write_atlas(const std::filesystem::path& p, const vol::Atlas& a) {
  std::string buf = header_bytes(a.dims(), a.spacing(), DType::I32);
  for (auto l : a.labels()) put<std::int32_t>(buf, l);
  buf.append(kTableMagic, 4);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(a.regions().size()));
  for (const auto& [id, info] : a.regions()) {
    put<std::int32_t>(buf, id);
    put<std::int32_t>(buf, info.family_id);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(info.laterality));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(info.name.size()));
    buf += info.name;
  }
  write_all(p, buf);
}

vol::Atlas read_atlas(const std::filesystem::path& p) {
  Reader r(read_text(p), p.string());
  Header h = read_header(r, p.string());
  if (h.dtype != DType::I32) throw IoError(p.string() + ": atlas payload must be i32");
  vol::Atlas a(h.dims, h.spacing);
  for (std::size_t i = 0; i < h.dims.count(); ++i) a.set_label(i, r.get<std::int32_t>());
  if (!r.at_end()) {
    if (r.bytes(4) != std::string(kTableMagic, 4)) throw IoError(p.string() + ": bad region table");
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto id = r.get<std::int32_t>();
      vol::RegionInfo info;
      info.family_id = r.get<std::int32_t>();
      info.laterality = static_cast<vol::Laterality>(r.get<std::uint8_t>());
      info.name = r.bytes(r.get<std::uint32_t>());
      a.add_region(id, std::move(info));
    }
  }
  a.validate();
  return a;
}

Image slice_image(const vol::Volume& v, std::size_t z, double lo, double hi) {
  const auto& d = v.dims();
  if (z >= d.nz) throw ShapeError("slice index out of range");
  Image img;
  img.width = d.nx;
  img.height = d.ny;
  img.pixels.resize(d.nx * d.ny);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t y = 0; y < d.ny; ++y)
    for (std::size_t x = 0; x < d.nx; ++x) {
      const double t = std::clamp((v.at(x, y, z) - lo) / span, 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * t));
      // Image rows run top to bottom; flip y so anterior is up.
      img.pixels[(d.ny - 1 - y) * d.nx + x] = {g, g, g};
    }
  return img;
}

void overlay_outline(Image& img, const vol::RegionMask& m, std::size_t z, Rgb colour) {
  const auto& d = m.dims();
  if (img.width != d.nx || img.height != d.ny) throw ShapeError("outline: image/mask size mismatch");
  auto in = [&](long x, long y) {
    if (x < 0 || y < 0 || x >= static_cast<long>(d.nx) || y >= static_cast<long>(d.ny)) return false;
    return m[(z * d.ny + static_cast<std::size_t>(y)) * d.nx + static_cast<std::size_t>(x)];
  };
  for (long y = 0; y < static_cast<long>(d.ny); ++y)
    for (long x = 0; x < static_cast<long>(d.nx); ++x) {
      if (!in(x, y)) continue;
      if (in(x - 1, y) && in(x + 1, y) && in(x, y - 1) && in(x, y + 1)) continue;
      img.pixels[(d.ny - 1 - static_cast<std::size_t>(y)) * d.nx + static_cast<std::size_t>(x)] = colour;
    }
}

void write_pgm(const std::filesystem::path& p, const Image& img) {
  std::string buf = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (const auto& px : img.pixels)
    buf.push_back(static_cast<char>((px.r * 299 + px.g * 587 + px.b * 114) / 1000));
  write_all(p, buf);
}

void write_ppm(const std::filesystem::path& p, const Image& img) {
  std::string buf = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (const auto& px : img.pixels) {
    buf.push_back(static_cast<char>(px.r));
    buf.push_back(static_cast<char>(px.g));
    buf.push_back(static_cast<char>(px.b));
  }
  write_all(p, buf);
}

namespace {

void put_be32(std::string& buf, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<char>((v >> s) & 0xff));
}

void png_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const std::filesystem::path& p, const Image& img) {
  std::string raw;
  raw.reserve(img.height * (1 + 3 * img.width));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter: none
    for (std::size_t x = 0; x < img.width; ++x) {
      const auto& px = img.pixels[y * img.width + x];
      raw.push_back(static_cast<char>(px.r));
      raw.push_back(static_cast<char>(px.g));
      raw.push_back(static_cast<char>(px.b));
    }
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png: deflate failed");
  z.resize(zlen);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
  png_chunk(out, "IHDR", ihdr);
  png_chunk(out, "IDAT", z);
  png_chunk(out, "IEND", "");
  write_all(p, out);
}

}  // namespace gtx::io
