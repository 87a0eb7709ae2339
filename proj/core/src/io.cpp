#include "dirsurf/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dirsurf/errors.hpp"

namespace dirsurf::io {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

namespace {
constexpr char kMagic[8] = {'D', 'S', 'C', 'O', 'N', 'T', '0', '1'};

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

std::string read_token(std::istream& in) {
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
}

Image read_netpbm(const std::filesystem::path& path, const std::string& magic, int channels) {
  auto in = open_in(path);
  if (read_token(in) != magic) throw IoError("not a " + magic + " file: " + path.string());
  const int w = std::stoi(read_token(in));
  const int h = std::stoi(read_token(in));
  const int maxval = std::stoi(read_token(in));
  if (maxval != 255) throw IoError("unsupported maxval in " + path.string());
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated image: " + path.string());
  Image img(w, h, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(x, y, c) = bytes[static_cast<std::size_t>((y * w + x) * channels + c)] / 255.0;
  return img;
}
}  // namespace

void write_container(const std::filesystem::path& path, const nlohmann::json& meta, const std::vector<NamedArray>& arrays) {
  nlohmann::json header;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays) {
    std::int64_t count = 1;
    for (auto s : a.shape) count *= s;
    if (count != static_cast<std::int64_t>(a.data.size())) throw UsageError("write_container: shape/data mismatch for " + a.name);
    header["arrays"].push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}, {"count", a.data.size()}});
    offset += a.data.size() * sizeof(double);
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  auto out = open_out(path);
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const std::uint64_t pos = 16 + len;
  const std::uint64_t pad = (8 - pos % 8) % 8;
  const char zeros[8] = {};
  out.write(zeros, static_cast<std::streamsize>(pad));
  for (const auto& a : arrays)
    out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());
}

const NamedArray* Container::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

Container read_container(const std::filesystem::path& path) {
  auto in = open_in(path);
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&len), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw IoError("not an array container: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const std::uint64_t pos = 16 + len;
  in.seekg(static_cast<std::streamoff>(pos + (8 - pos % 8) % 8));
  const std::streamoff payload = in.tellg();
  Container c;
  try {
    const auto header = nlohmann::json::parse(text);
    c.meta = header.at("meta");
    for (const auto& a : header.at("arrays")) {
      NamedArray arr;
      arr.name = a.at("name").get<std::string>();
      arr.shape = a.at("shape").get<std::vector<std::int64_t>>();
      const auto count = a.at("count").get<std::size_t>();
      arr.data.resize(count);
      in.seekg(payload + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>()));
      in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
      if (!in) throw IoError("truncated container payload: " + path.string());
      c.arrays.push_back(std::move(arr));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad container header in " + path.string() + ": " + e.what());
  }
  return c;
}

void write_f64(const std::filesystem::path& path, const Image& img) {
  auto out = open_out(path);
  out << "F64RAW 1\n" << img.width << ' ' << img.height << ' ' << img.channels << '\n';
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(double)));
  if (!out) throw IoError("write failed: " + path.string());
}

Image read_f64(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line != "F64RAW 1") throw IoError("not an F64RAW file: " + path.string());
  int w = 0, h = 0, c = 0;
  std::getline(in, line);
  std::istringstream dims(line);
  dims >> w >> h >> c;
  if (w <= 0 || h <= 0 || c <= 0) throw IoError("bad F64RAW dimensions: " + path.string());
  Image img(w, h, c);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(double)));
  if (!in) throw IoError("truncated F64RAW file: " + path.string());
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw UsageError("write_ppm: need 3 channels");
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(img.width * img.height * 3));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) bytes.push_back(to_byte(img.at(x, y, c)));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  auto out = open_out(path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<std::uint8_t> bytes;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) bytes.push_back(to_byte(img.at(x, y, 0)));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_pgm(const std::filesystem::path& path) { return read_netpbm(path, "P5", 1); }
Image read_ppm(const std::filesystem::path& path) { return read_netpbm(path, "P6", 3); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  write_text(tmp, text);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed for " + path.string() + ": " + ec.message());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace dirsurf::io
