#include "share/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace share {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& path, const void* data, size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
T byteswap_value(T v) {
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T load_scalar(const char* p, bool swap) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

constexpr bool kHostLittle = std::endian::native == std::endian::little;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void require_finite(const torch::Tensor& t, const fs::path& path) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw DataError("non-finite values in payload of " + path.string());
  }
}

// Payload of shape [c, h, w] in the given element type, decoded to float32.
torch::Tensor decode_payload(const char* p, int64_t count, int bytes, bool is_float, bool swap,
                             bool is_unsigned = true, bool is_double = false) {
  std::vector<float> out(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const char* q = p + i * bytes;
    float v = 0.0f;
    if (is_float && is_double) v = static_cast<float>(load_scalar<double>(q, swap));
    else if (is_float) v = load_scalar<float>(q, swap);
    else if (bytes == 1) v = is_unsigned ? static_cast<float>(static_cast<uint8_t>(*q))
                                         : static_cast<float>(static_cast<int8_t>(*q));
    else if (bytes == 2) v = is_unsigned ? load_scalar<uint16_t>(q, swap) : load_scalar<int16_t>(q, swap);
    else if (bytes == 4) v = is_unsigned ? static_cast<float>(load_scalar<uint32_t>(q, swap))
                                         : static_cast<float>(load_scalar<int32_t>(q, swap));
    else if (bytes == 8) v = is_unsigned ? static_cast<float>(load_scalar<uint64_t>(q, swap))
                                         : static_cast<float>(load_scalar<int64_t>(q, swap));
    out[static_cast<size_t>(i)] = v;
  }
  return torch::from_blob(out.data(), {count}, torch::kFloat32).clone();
}

std::vector<char> encode_f32_le(const HsiCube& cube) {
  auto values = cube.to_vector();
  std::vector<char> bytes(values.size() * sizeof(float));
  if (kHostLittle) {
    std::memcpy(bytes.data(), values.data(), bytes.size());
  } else {
    for (size_t i = 0; i < values.size(); ++i) {
      float v = byteswap_value(values[i]);
      std::memcpy(bytes.data() + i * 4, &v, 4);
    }
  }
  return bytes;
}

// --- raw float32 + JSON sidecar ---------------------------------------------

HsiCube load_raw(const fs::path& path) {
  json meta;
  try {
    meta = read_json(sidecar_path(path));
  } catch (const json::exception& e) {
    throw FormatError("malformed sidecar for " + path.string() + ": " + e.what());
  }
  int64_t c = 0, h = 0, w = 0;
  try {
    c = meta.at("c").get<int64_t>();
    h = meta.at("h").get<int64_t>();
    w = meta.at("w").get<int64_t>();
  } catch (const json::exception& e) {
    throw FormatError("sidecar missing c/h/w: " + std::string(e.what()));
  }
  if (c < 1 || h < 1 || w < 1) throw FormatError("sidecar dims must be positive");
  auto bytes = read_bytes(path);
  if (static_cast<int64_t>(bytes.size()) != c * h * w * 4) {
    throw ShapeError("payload of " + path.string() + " holds " + std::to_string(bytes.size() / 4) +
                     " floats, sidecar declares " + std::to_string(c * h * w));
  }
  auto data = decode_payload(bytes.data(), c * h * w, 4, true, !kHostLittle).view({c, h, w});
  require_finite(data, path);

  ValueRange range{meta.value("lo", 0.0), meta.value("hi", 1.0)};
  std::vector<double> wl = meta.value("wavelengths", std::vector<double>{});
  std::vector<ValueRange> band_ranges;
  if (meta.contains("band_lo") && meta.contains("band_hi")) {
    auto lo = meta["band_lo"].get<std::vector<double>>();
    auto hi = meta["band_hi"].get<std::vector<double>>();
    if (lo.size() != hi.size()) throw FormatError("band_lo/band_hi length mismatch");
    for (size_t i = 0; i < lo.size(); ++i) band_ranges.push_back({lo[i], hi[i]});
  }
  return HsiCube(data, range, wl, meta.value("name", std::string{}), band_ranges);
}

void save_raw(const HsiCube& cube, const fs::path& path) {
  auto bytes = encode_f32_le(cube);
  write_bytes(path, bytes.data(), bytes.size());
  json meta = {{"c", cube.bands()},         {"h", cube.height()},   {"w", cube.width()},
               {"lo", cube.range().lo},     {"hi", cube.range().hi}, {"dtype", "float32"},
               {"layout", "bsq"},           {"byte_order", "little"}};
  if (!cube.name().empty()) meta["name"] = cube.name();
  if (!cube.wavelengths().empty()) meta["wavelengths"] = cube.wavelengths();
  if (!cube.band_ranges().empty()) {
    std::vector<double> lo, hi;
    for (const auto& r : cube.band_ranges()) {
      lo.push_back(r.lo);
      hi.push_back(r.hi);
    }
    meta["band_lo"] = lo;
    meta["band_hi"] = hi;
  }
  write_json(meta, sidecar_path(path));
}

// --- ENVI -------------------------------------------------------------------

std::map<std::string, std::string> parse_envi_header(const fs::path& hdr) {
  std::ifstream in(hdr);
  if (!in) throw FormatError("cannot open ENVI header " + hdr.string());
  std::string line;
  if (!std::getline(in, line) || trim(line).rfind("ENVI", 0) != 0) {
    throw FormatError("ENVI header must start with 'ENVI': " + hdr.string());
  }
  std::map<std::string, std::string> fields;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed ENVI header line: " + line);
    std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      while (value.find('}') == std::string::npos) {
        std::string more;
        if (!std::getline(in, more)) throw FormatError("unterminated '{' in ENVI header");
        value += " " + trim(more);
      }
      value = trim(value.substr(1, value.rfind('}') - 1));
    }
    fields[key] = value;
  }
  return fields;
}

int64_t envi_int(const std::map<std::string, std::string>& f, const std::string& key,
                 std::optional<int64_t> fallback = std::nullopt) {
  auto it = f.find(key);
  if (it == f.end()) {
    if (fallback) return *fallback;
    throw FormatError("ENVI header lacks '" + key + "'");
  }
  try {
    size_t used = 0;
    int64_t v = std::stoll(it->second, &used);
    if (trim(it->second.substr(used)).size() != 0) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw FormatError("ENVI header field '" + key + "' is not an integer: " + it->second);
  }
}

std::pair<fs::path, fs::path> envi_paths(const fs::path& path) {
  if (lower(path.extension().string()) == ".hdr") {
    fs::path stem = path;
    stem.replace_extension();
    for (const char* ext : {"", ".img", ".dat", ".bsq", ".raw", ".bin"}) {
      fs::path candidate = stem;
      candidate += ext;
      if (fs::exists(candidate) && fs::is_regular_file(candidate)) return {path, candidate};
    }
    throw FormatError("no ENVI payload found next to " + path.string());
  }
  fs::path appended = path;
  appended += ".hdr";
  if (fs::exists(appended)) return {appended, path};
  fs::path replaced = path;
  replaced.replace_extension(".hdr");
  if (fs::exists(replaced)) return {replaced, path};
  throw FormatError("no ENVI header found for " + path.string());
}

HsiCube load_envi(const fs::path& path) {
  auto [hdr, payload] = envi_paths(path);
  auto f = parse_envi_header(hdr);
  int64_t w = envi_int(f, "samples");
  int64_t h = envi_int(f, "lines");
  int64_t c = envi_int(f, "bands");
  int64_t dtype = envi_int(f, "data type");
  int64_t order = envi_int(f, "byte order", 0);
  int64_t offset = envi_int(f, "header offset", 0);
  std::string interleave = f.count("interleave") ? lower(f["interleave"]) : "bsq";
  if (interleave != "bsq") throw FormatError("only BSQ interleave is supported, got " + interleave);
  if (dtype != 4 && dtype != 12) {
    throw FormatError("ENVI data type " + std::to_string(dtype) + " unsupported (need 4 or 12)");
  }
  if (order != 0 && order != 1) throw FormatError("ENVI byte order must be 0 or 1");
  if (c < 1 || h < 1 || w < 1) throw FormatError("ENVI dims must be positive");
  int bytes = dtype == 4 ? 4 : 2;
  auto raw = read_bytes(payload);
  if (static_cast<int64_t>(raw.size()) != offset + c * h * w * bytes) {
    throw ShapeError("ENVI payload size " + std::to_string(raw.size()) + " does not match header dims");
  }
  bool file_little = order == 0;
  bool swap = file_little != kHostLittle;
  auto data = decode_payload(raw.data() + offset, c * h * w, bytes, dtype == 4, swap).view({c, h, w});
  require_finite(data, payload);

  std::vector<double> wl;
  if (f.count("wavelength")) {
    std::stringstream ss(f["wavelength"]);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!trim(tok).empty()) wl.push_back(std::stod(trim(tok)));
    }
    if (static_cast<int64_t>(wl.size()) != c) wl.clear();
  }
  return HsiCube(data, ValueRange{}, wl, payload.stem().string());
}

void save_envi(const HsiCube& cube, const fs::path& path) {
  fs::path hdr = path, payload = path;
  if (lower(path.extension().string()) == ".hdr") {
    payload.replace_extension(".img");
  } else {
    hdr.replace_extension(".hdr");
  }
  auto bytes = encode_f32_le(cube);
  write_bytes(payload, bytes.data(), bytes.size());
  std::ostringstream out;
  out << "ENVI\n"
      << "description = {share-hsi cube}\n"
      << "samples = " << cube.width() << "\n"
      << "lines = " << cube.height() << "\n"
      << "bands = " << cube.bands() << "\n"
      << "header offset = 0\n"
      << "file type = ENVI Standard\n"
      << "data type = 4\n"
      << "interleave = bsq\n"
      << "byte order = 0\n";
  if (!cube.wavelengths().empty()) {
    out.precision(17);
    out << "wavelength = {";
    for (size_t i = 0; i < cube.wavelengths().size(); ++i) {
      out << (i ? ", " : "") << cube.wavelengths()[i];
    }
    out << "}\n";
  }
  auto text = out.str();
  write_bytes(hdr, text.data(), text.size());
}

// --- MAT level 5 ------------------------------------------------------------

enum MatType : uint32_t {
  miINT8 = 1, miUINT8 = 2, miINT16 = 3, miUINT16 = 4, miINT32 = 5, miUINT32 = 6,
  miSINGLE = 7, miDOUBLE = 9, miINT64 = 12, miUINT64 = 13, miMATRIX = 14, miCOMPRESSED = 15,
};

struct MatElement {
  uint32_t type = 0;
  const char* data = nullptr;
  uint32_t size = 0;
  size_t next = 0;  // offset of the following element
};

MatElement read_element(const std::vector<char>& buf, size_t pos, bool swap) {
  if (pos + 8 > buf.size()) throw FormatError("truncated MAT element tag");
  uint32_t type = load_scalar<uint32_t>(buf.data() + pos, swap);
  MatElement el;
  if (type >> 16) {  // small data element packed into the tag
    el.type = type & 0xFFFF;
    el.size = type >> 16;
    el.data = buf.data() + pos + 4;
    el.next = pos + 8;
    return el;
  }
  el.type = type;
  el.size = load_scalar<uint32_t>(buf.data() + pos + 4, swap);
  el.data = buf.data() + pos + 8;
  if (pos + 8 + el.size > buf.size()) throw FormatError("truncated MAT element payload");
  size_t padded = el.type == miCOMPRESSED ? el.size : (el.size + 7) / 8 * 8;
  el.next = std::min(buf.size(), pos + 8 + padded);
  return el;
}

std::vector<char> inflate_all(const char* data, size_t n) {
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw FormatError("zlib init failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data));
  zs.avail_in = static_cast<uInt>(n);
  std::vector<char> out;
  std::array<char, 1 << 16> chunk;
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
    zs.avail_out = chunk.size();
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("corrupt compressed MAT element");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("truncated compressed MAT element");
    }
  }
  inflateEnd(&zs);
  return out;
}

struct MatArray {
  std::string name;
  std::vector<int64_t> dims;
  torch::Tensor values;  // flat, column-major order
};

std::optional<MatArray> parse_matrix(const char* data, uint32_t size, bool swap) {
  std::vector<char> buf(data, data + size);
  auto flags = read_element(buf, 0, swap);
  if (flags.type != miUINT32 || flags.size < 8) throw FormatError("MAT array flags malformed");
  uint32_t word = load_scalar<uint32_t>(flags.data, swap);
  uint32_t cls = word & 0xFF;
  bool complex = (word & 0x0800) != 0;
  if (cls < 6 || cls > 15) return std::nullopt;  // not a numeric array
  if (complex) throw FormatError("complex MAT arrays are not supported");

  auto dims_el = read_element(buf, flags.next, swap);
  if (dims_el.type != miINT32) throw FormatError("MAT dimensions malformed");
  MatArray arr;
  int64_t count = 1;
  for (uint32_t i = 0; i < dims_el.size / 4; ++i) {
    arr.dims.push_back(load_scalar<int32_t>(dims_el.data + 4 * i, swap));
    count *= arr.dims.back();
  }
  auto name_el = read_element(buf, dims_el.next, swap);
  arr.name.assign(name_el.data, name_el.size);
  auto real = read_element(buf, name_el.next, swap);

  int bytes = 0;
  bool is_float = false, is_unsigned = false, is_double = false;
  switch (real.type) {
    case miINT8: bytes = 1; break;
    case miUINT8: bytes = 1; is_unsigned = true; break;
    case miINT16: bytes = 2; break;
    case miUINT16: bytes = 2; is_unsigned = true; break;
    case miINT32: bytes = 4; break;
    case miUINT32: bytes = 4; is_unsigned = true; break;
    case miINT64: bytes = 8; break;
    case miUINT64: bytes = 8; is_unsigned = true; break;
    case miSINGLE: bytes = 4; is_float = true; break;
    case miDOUBLE: bytes = 8; is_float = true; is_double = true; break;
    default: throw FormatError("unsupported MAT data type " + std::to_string(real.type));
  }
  if (static_cast<int64_t>(real.size) != count * bytes) {
    throw ShapeError("MAT array '" + arr.name + "' payload does not match its dimensions");
  }
  arr.values = decode_payload(real.data, count, bytes, is_float, swap, is_unsigned, is_double);
  return arr;
}

HsiCube load_mat(const fs::path& path, const std::string& variable) {
  auto buf = read_bytes(path);
  if (buf.size() < 128) throw FormatError("MAT file too short: " + path.string());
  bool swap;
  if (buf[126] == 'I' && buf[127] == 'M') swap = !kHostLittle;
  else if (buf[126] == 'M' && buf[127] == 'I') swap = kHostLittle;
  else throw FormatError("MAT endian indicator missing: " + path.string());

  size_t pos = 128;
  while (pos < buf.size()) {
    auto el = read_element(buf, pos, swap);
    pos = el.next;
    std::optional<MatArray> arr;
    if (el.type == miCOMPRESSED) {
      auto inner = inflate_all(el.data, el.size);
      auto in_el = read_element(inner, 0, swap);
      if (in_el.type == miMATRIX) arr = parse_matrix(in_el.data, in_el.size, swap);
    } else if (el.type == miMATRIX) {
      arr = parse_matrix(el.data, el.size, swap);
    }
    if (!arr) continue;
    if (!variable.empty() && arr->name != variable) continue;
    if (arr->dims.size() < 2 || arr->dims.size() > 3) {
      if (!variable.empty()) throw ShapeError("MAT variable '" + variable + "' is not 2D or 3D");
      continue;
    }
    int64_t h = arr->dims[0], w = arr->dims[1];
    int64_t c = arr->dims.size() == 3 ? arr->dims[2] : 1;
    auto data = arr->values.view({c, w, h}).permute({0, 2, 1}).contiguous();
    require_finite(data, path);
    return HsiCube(data, ValueRange{}, {}, arr->name);
  }
  throw FormatError(variable.empty() ? "no 2D/3D numeric array in " + path.string()
                                     : "variable '" + variable + "' not found in " + path.string());
}

void append_u32(std::vector<char>& out, uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  if (!kHostLittle) std::reverse(b, b + 4);
  out.insert(out.end(), b, b + 4);
}

void pad8(std::vector<char>& out) {
  while (out.size() % 8) out.push_back(0);
}

void save_mat(const HsiCube& cube, const fs::path& path) {
  std::vector<char> m;  // miMATRIX payload
  append_u32(m, miUINT32);
  append_u32(m, 8);
  append_u32(m, 7);  // mxSINGLE_CLASS, no flags
  append_u32(m, 0);
  append_u32(m, miINT32);
  append_u32(m, 12);
  append_u32(m, static_cast<uint32_t>(cube.height()));
  append_u32(m, static_cast<uint32_t>(cube.width()));
  append_u32(m, static_cast<uint32_t>(cube.bands()));
  pad8(m);
  const std::string name = "cube";
  append_u32(m, (static_cast<uint32_t>(name.size()) << 16) | miINT8);
  m.insert(m.end(), name.begin(), name.end());
  pad8(m);
  HsiCube column_major(cube.data().permute({0, 2, 1}).contiguous());
  auto payload = encode_f32_le(column_major);
  append_u32(m, miSINGLE);
  append_u32(m, static_cast<uint32_t>(payload.size()));
  m.insert(m.end(), payload.begin(), payload.end());
  pad8(m);

  std::vector<char> element;
  append_u32(element, miMATRIX);
  append_u32(element, static_cast<uint32_t>(m.size()));
  element.insert(element.end(), m.begin(), m.end());

  uLongf zsize = compressBound(element.size());
  std::vector<char> z(zsize);
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zsize,
                reinterpret_cast<const Bytef*>(element.data()), element.size(), 6) != Z_OK) {
    throw FormatError("zlib compression failed");
  }
  z.resize(zsize);

  std::vector<char> file(128, ' ');
  const std::string text = "MATLAB 5.0 MAT-file, Platform: share-hsi, Created by share-hsi";
  std::copy(text.begin(), text.end(), file.begin());
  std::fill(file.begin() + 116, file.begin() + 124, 0);
  file[124] = 0x00;
  file[125] = 0x01;
  file[126] = kHostLittle ? 'I' : 'M';
  file[127] = kHostLittle ? 'M' : 'I';
  append_u32(file, miCOMPRESSED);
  append_u32(file, static_cast<uint32_t>(z.size()));
  file.insert(file.end(), z.begin(), z.end());
  write_bytes(path, file.data(), file.size());
}

}  // namespace

CubeFormat parse_cube_format(std::string_view name) {
  if (name == "envi-bsq" || name == "envi") return CubeFormat::EnviBsq;
  if (name == "raw-f32+json-sidecar" || name == "raw-f32" || name == "raw") return CubeFormat::RawF32Json;
  if (name == "matlab-v7-array" || name == "mat") return CubeFormat::MatlabV7;
  throw ConfigError("unknown cube format '" + std::string(name) + "'");
}

std::string to_string(CubeFormat format) {
  switch (format) {
    case CubeFormat::EnviBsq: return "envi-bsq";
    case CubeFormat::RawF32Json: return "raw-f32+json-sidecar";
    case CubeFormat::MatlabV7: return "matlab-v7-array";
  }
  return "?";
}

CubeFormat format_from_extension(const fs::path& path) {
  auto ext = lower(path.extension().string());
  if (ext == ".f32" || ext == ".raw") return CubeFormat::RawF32Json;
  if (ext == ".hdr" || ext == ".img" || ext == ".bsq" || ext == ".dat") return CubeFormat::EnviBsq;
  if (ext == ".mat") return CubeFormat::MatlabV7;
  throw FormatError("cannot infer cube format from extension of " + path.string());
}

fs::path sidecar_path(const fs::path& payload) {
  fs::path p = payload;
  p.replace_extension(".json");
  return p;
}

HsiCube load_cube(const fs::path& path, CubeFormat format, const std::string& variable) {
  switch (format) {
    case CubeFormat::EnviBsq: return load_envi(path);
    case CubeFormat::RawF32Json: return load_raw(path);
    case CubeFormat::MatlabV7: return load_mat(path, variable);
  }
  throw FormatError("unknown format");
}

HsiCube load_cube(const fs::path& path) { return load_cube(path, format_from_extension(path)); }

void save_cube(const HsiCube& cube, const fs::path& path, CubeFormat format) {
  switch (format) {
    case CubeFormat::EnviBsq: save_envi(cube, path); return;
    case CubeFormat::RawF32Json: save_raw(cube, path); return;
    case CubeFormat::MatlabV7: save_mat(cube, path); return;
  }
}

void save_cube(const HsiCube& cube, const fs::path& path) {
  save_cube(cube, path, format_from_extension(path));
}

HsiCube load_mask(const fs::path& path) {
  auto cube = load_cube(path);
  const auto& d = cube.data();
  if (!((d == 0) | (d == 1)).all().item<bool>()) {
    throw DataError("mask " + path.string() + " holds values other than 0 and 1");
  }
  return cube;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return json::parse(in);
}

void write_json(const json& j, const fs::path& path) {
  auto text = j.dump(2) + "\n";
  write_bytes(path, text.data(), text.size());
}

}  // namespace share
