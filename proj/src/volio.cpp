#include "lnkit/volio.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <climits>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

namespace lnkit {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtUint16 = 512;

bool has_gz_suffix(const fs::path& path) { return path.extension() == ".gz"; }

struct GzCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<std::remove_pointer_t<gzFile>, GzCloser>;

// Reads exactly `n` bytes; returns false on a short read.
bool read_exact(gzFile f, void* dst, std::size_t n) {
  auto* out = static_cast<unsigned char*>(dst);
  while (n > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    const int got = gzread(f, out, chunk);
    if (got <= 0) return false;
    out += got;
    n -= static_cast<std::size_t>(got);
  }
  return true;
}

template <class T>
T byteswap_value(T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

class HeaderView {
 public:
  HeaderView(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}
  template <class T>
  T get(std::size_t offset) const {
    T v;
    std::memcpy(&v, bytes_ + offset, sizeof(T));
    return swap_ ? byteswap_value(v) : v;
  }

 private:
  const unsigned char* bytes_;
  bool swap_;
};

struct ParsedHeader {
  Dims dims{};
  Vec3 spacing{};
  Vec3 origin{};
  std::int16_t datatype = 0;
  std::size_t vox_offset = kDataOffset;
  bool swap = false;
};

ParsedHeader parse_header(const unsigned char* raw, const std::string& where) {
  ParsedHeader h;
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, raw, 4);
  if (sizeof_hdr == 348) {
    h.swap = false;
  } else if (byteswap_value(sizeof_hdr) == 348) {
    h.swap = true;
  } else {
    fail(ErrorCode::Format, where + ": not a NIfTI-1 header (sizeof_hdr)");
  }
  const HeaderView v(raw, h.swap);
  if (std::memcmp(raw + 344, "n+1\0", 4) != 0) {
    if (std::memcmp(raw + 344, "ni1\0", 4) == 0) {
      fail(ErrorCode::UnsupportedFormat, where + ": two-file NIfTI (.hdr/.img) not supported");
    }
    fail(ErrorCode::Format, where + ": bad NIfTI magic");
  }

  const auto ndim = v.get<std::int16_t>(40);
  require(ndim >= 1 && ndim <= 7, ErrorCode::Format, where + ": invalid dim[0]");
  for (int a = 0; a < 3; ++a) {
    h.dims[a] = a < ndim ? v.get<std::int16_t>(42 + 2 * a) : 1;
    require(h.dims[a] >= 1, ErrorCode::Format, where + ": non-positive dimension");
  }
  for (int a = 3; a < ndim; ++a) {
    require(v.get<std::int16_t>(42 + 2 * a) == 1, ErrorCode::UnsupportedFormat,
            where + ": only 3D volumes are supported");
  }

  h.datatype = v.get<std::int16_t>(70);
  const auto bitpix = v.get<std::int16_t>(72);
  int expected_bits = 0;
  switch (h.datatype) {
    case kDtUint8: expected_bits = 8; break;
    case kDtInt16: expected_bits = 16; break;
    case kDtUint16: expected_bits = 16; break;
    case kDtFloat32: expected_bits = 32; break;
    default:
      fail(ErrorCode::UnsupportedFormat,
           where + ": unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  require(bitpix == expected_bits, ErrorCode::Format, where + ": bitpix does not match datatype");

  for (int a = 0; a < 3; ++a) {
    const float s = a < ndim ? v.get<float>(80 + 4 * a) : 1.0f;
    require(std::isfinite(s) && s > 0.0f, ErrorCode::Format, where + ": non-positive pixdim");
    h.spacing[a] = static_cast<double>(s);
  }

  const float vox_offset = v.get<float>(108);
  require(std::isfinite(vox_offset) && vox_offset >= 348.0f, ErrorCode::Format,
          where + ": invalid vox_offset");
  h.vox_offset = static_cast<std::size_t>(vox_offset);

  const float slope = v.get<float>(112);
  const float inter = v.get<float>(116);
  require((slope == 0.0f || slope == 1.0f) && inter == 0.0f, ErrorCode::UnsupportedFormat,
          where + ": intensity scaling (scl_slope/scl_inter) not supported");

  const auto qform = v.get<std::int16_t>(252);
  const auto sform = v.get<std::int16_t>(254);
  if (sform > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const float m = v.get<float>(280 + 16 * r + 4 * c);
        if (r == c) {
          require(m != 0.0f, ErrorCode::UnsupportedFormat, where + ": singular sform");
        } else {
          require(m == 0.0f, ErrorCode::UnsupportedFormat,
                  where + ": non-diagonal orientation not supported");
        }
      }
      h.origin[r] = v.get<float>(280 + 16 * r + 12);
    }
  } else if (qform > 0) {
    for (int q = 0; q < 3; ++q) {
      require(v.get<float>(256 + 4 * q) == 0.0f, ErrorCode::UnsupportedFormat,
              where + ": rotated qform not supported");
      h.origin[q] = v.get<float>(268 + 4 * q);
    }
  }
  return h;
}

template <class T>
void read_payload(gzFile f, std::span<T> dst, bool swap, const std::string& where) {
  if (!read_exact(f, dst.data(), dst.size_bytes())) {
    fail(ErrorCode::Format, where + ": truncated voxel data");
  }
  if (swap && sizeof(T) > 1) {
    for (auto& x : dst) x = byteswap_value(x);
  }
}

template <class G>
AnyVolume read_grid(gzFile f, const ParsedHeader& h, const std::string& where) {
  G grid(h.dims, h.spacing, h.origin);
  read_payload(f, grid.values(), h.swap, where);
  // Anything after the payload means the header dims are wrong.
  unsigned char extra;
  require(gzread(f, &extra, 1) == 0, ErrorCode::Format, where + ": trailing bytes after voxel data");
  int err = Z_OK;
  gzerror(f, &err);
  require(err == Z_OK, ErrorCode::Format, where + ": compressed stream is truncated or corrupt");
  return grid;
}

template <class Dst, class Src, class Check>
Dst convert(const Src& src, Check&& ok, const std::string& what) {
  Dst out = Dst::like(src);
  const auto in = src.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = static_cast<double>(in[i]);
    require(ok(v), ErrorCode::Validation, what + ": value " + std::to_string(v) + " out of range");
    dst[i] = static_cast<typename Dst::value_type>(
        std::is_floating_point_v<typename Dst::value_type> ? v : std::round(v));
  }
  return out;
}

bool is_integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

template <class T>
constexpr std::int16_t datatype_code() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return kDtUint8;
  if constexpr (std::is_same_v<T, std::int16_t>) return kDtInt16;
  if constexpr (std::is_same_v<T, std::uint16_t>) return kDtUint16;
  if constexpr (std::is_same_v<T, float>) return kDtFloat32;
}

template <class T>
void put(unsigned char* raw, std::size_t offset, T value) {
  std::memcpy(raw + offset, &value, sizeof(T));
}

void write_bytes(const fs::path& path, const unsigned char* header, std::size_t header_size,
                 const void* data, std::size_t data_size) {
  static_assert(std::endian::native == std::endian::little, "writer assumes little-endian host");
  if (has_gz_suffix(path)) {
    GzHandle f(gzopen(path.c_str(), "wb6"));
    require(f != nullptr, ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    bool ok = gzwrite(f.get(), header, static_cast<unsigned>(header_size)) ==
              static_cast<int>(header_size);
    const auto* p = static_cast<const unsigned char*>(data);
    std::size_t left = data_size;
    while (ok && left > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(left, 1u << 30));
      ok = gzwrite(f.get(), p, chunk) == static_cast<int>(chunk);
      p += chunk;
      left -= chunk;
    }
    ok = (gzclose(f.release()) == Z_OK) && ok;
    require(ok, ErrorCode::Io, "failed writing '" + path.string() + "'");
  } else {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(header), static_cast<std::streamsize>(header_size));
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(data_size));
    require(out.good(), ErrorCode::Io, "failed writing '" + path.string() + "'");
  }
}

}  // namespace

AnyVolume read_volume(const fs::path& path) {
  const std::string where = path.string();
  require(fs::is_regular_file(path), ErrorCode::Io, "cannot open '" + where + "'");
  GzHandle f(gzopen(path.c_str(), "rb"));
  require(f != nullptr, ErrorCode::Io, "cannot open '" + where + "'");
  gzbuffer(f.get(), 1 << 20);

  unsigned char raw[kHeaderSize];
  require(read_exact(f.get(), raw, kHeaderSize), ErrorCode::Format, where + ": truncated header");
  const ParsedHeader h = parse_header(raw, where);

  std::size_t skip = h.vox_offset - kHeaderSize;
  std::vector<unsigned char> scratch(skip);
  require(read_exact(f.get(), scratch.data(), skip), ErrorCode::Format,
          where + ": truncated before voxel data");

  switch (h.datatype) {
    case kDtInt16: return read_grid<CtGrid>(f.get(), h, where);
    case kDtUint8: return read_grid<MaskGrid>(f.get(), h, where);
    case kDtUint16: return read_grid<LabelGrid>(f.get(), h, where);
    default: return read_grid<ProbGrid>(f.get(), h, where);
  }
}

CtGrid read_ct(const fs::path& path) {
  auto any = read_volume(path);
  const std::string what = path.string() + " (CT)";
  auto in_range = [](double v) { return is_integral(v) && v >= -32768.0 && v <= 32767.0; };
  return std::visit(
      [&](auto&& g) -> CtGrid {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, CtGrid>) {
          return std::move(g);
        } else if constexpr (std::is_same_v<G, ProbGrid>) {
          // Float CT is accepted when it holds integral HU in int16 range.
          return convert<CtGrid>(g, in_range, what);
        } else {
          return convert<CtGrid>(g, in_range, what);
        }
      },
      std::move(any));
}

ProbGrid read_probability(const fs::path& path) {
  auto any = read_volume(path);
  auto* p = std::get_if<ProbGrid>(&any);
  require(p != nullptr, ErrorCode::UnsupportedFormat,
          path.string() + ": probability maps must be float32");
  p->validate_values();
  return std::move(*p);
}

MaskGrid read_mask(const fs::path& path) {
  auto any = read_volume(path);
  const std::string what = path.string() + " (mask)";
  return std::visit(
      [&](auto&& g) -> MaskGrid {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, MaskGrid>) {
          g.validate_values();
          return std::move(g);
        } else {
          return convert<MaskGrid>(g, [](double v) { return v == 0.0 || v == 1.0; }, what);
        }
      },
      std::move(any));
}

LabelGrid read_labels(const fs::path& path) {
  auto any = read_volume(path);
  const std::string what = path.string() + " (labels)";
  return std::visit(
      [&](auto&& g) -> LabelGrid {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, LabelGrid>) {
          return std::move(g);
        } else {
          return convert<LabelGrid>(
              g, [](double v) { return is_integral(v) && v >= 0.0 && v <= 65535.0; }, what);
        }
      },
      std::move(any));
}

template <class G>
void write_volume(const G& grid, const fs::path& path) {
  using T = typename G::value_type;
  unsigned char raw[kDataOffset] = {};
  put<std::int32_t>(raw, 0, 348);
  put<std::int16_t>(raw, 40, 3);
  for (int a = 0; a < 3; ++a) {
    require(grid.dims()[a] <= std::numeric_limits<std::int16_t>::max(), ErrorCode::InvalidArgument,
            "dimension too large for NIfTI-1");
    put<std::int16_t>(raw, 42 + 2 * a, static_cast<std::int16_t>(grid.dims()[a]));
  }
  for (int a = 4; a < 8; ++a) put<std::int16_t>(raw, 40 + 2 * a, 1);
  put<std::int16_t>(raw, 70, datatype_code<T>());
  put<std::int16_t>(raw, 72, static_cast<std::int16_t>(8 * sizeof(T)));
  put<float>(raw, 76, 1.0f);  // qfac
  for (int a = 0; a < 3; ++a) put<float>(raw, 80 + 4 * a, static_cast<float>(grid.spacing()[a]));
  put<float>(raw, 108, static_cast<float>(kDataOffset));
  put<float>(raw, 112, 1.0f);
  raw[123] = 2;  // mm
  std::memcpy(raw + 148, "lnkit", 5);
  put<std::int16_t>(raw, 252, 1);
  put<std::int16_t>(raw, 254, 1);
  for (int a = 0; a < 3; ++a) {
    put<float>(raw, 268 + 4 * a, static_cast<float>(grid.origin()[a]));
    put<float>(raw, 280 + 16 * a + 4 * a, static_cast<float>(grid.spacing()[a]));
    put<float>(raw, 280 + 16 * a + 12, static_cast<float>(grid.origin()[a]));
  }
  std::memcpy(raw + 344, "n+1\0", 4);
  write_bytes(path, raw, kDataOffset, grid.values().data(), grid.values().size_bytes());
}

template void write_volume<CtGrid>(const CtGrid&, const fs::path&);
template void write_volume<ProbGrid>(const ProbGrid&, const fs::path&);
template void write_volume<MaskGrid>(const MaskGrid&, const fs::path&);
template void write_volume<LabelGrid>(const LabelGrid&, const fs::path&);

void write_volume(const AnyVolume& volume, const fs::path& path) {
  std::visit([&](const auto& g) { write_volume(g, path); }, volume);
}

std::map<std::uint16_t, StationInfo> parse_station_table(const nlohmann::json& j) {
  std::map<std::uint16_t, StationInfo> table;
  try {
    for (const auto& entry : j.at("labels")) {
      const auto id = entry.at("id").get<std::int64_t>();
      require(id > 0 && id <= 65535, ErrorCode::Validation,
              "station entry id " + std::to_string(id) + " out of range");
      StationInfo info;
      info.label_id = static_cast<std::uint16_t>(id);
      for (const auto& s : entry.at("stations")) info.stations.insert(Station::parse(s.get<std::string>()));
      info.primary = Station::parse(entry.at("primary").get<std::string>());
      info.laterality = parse_laterality(entry.value("laterality", std::string("unspecified")));
      info.validate();
      require(table.emplace(info.label_id, info).second, ErrorCode::Validation,
              "duplicate station entry for label " + std::to_string(id));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, std::string("malformed station sidecar: ") + e.what());
  }
  return table;
}

nlohmann::json station_table_to_json(const std::map<std::uint16_t, StationInfo>& table) {
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& [id, info] : table) {
    nlohmann::json stations = nlohmann::json::array();
    for (const auto& s : info.stations) stations.push_back(std::string(s.code()));
    labels.push_back({{"id", id},
                      {"stations", stations},
                      {"primary", std::string(info.primary.code())},
                      {"laterality", std::string(to_string(info.laterality))}});
  }
  return {{"labels", labels}};
}

Annotation read_annotation(const fs::path& label_path, const fs::path& meta_path) {
  Annotation ann;
  ann.labels = read_labels(label_path);
  ann.stations = parse_station_table(read_json(meta_path));
  ann.validate();
  return ann;
}

void write_annotation(const Annotation& annotation, const fs::path& label_path,
                      const fs::path& meta_path) {
  annotation.validate();
  write_volume(annotation.labels, label_path);
  write_json(station_table_to_json(annotation.stations), meta_path);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::Io, "cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": invalid JSON: " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  write_text(j.dump(2) + "\n", path);
}

void write_text(const std::string& text, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  require(out.good(), ErrorCode::Io, "failed writing '" + path.string() + "'");
}

}  // namespace lnkit
