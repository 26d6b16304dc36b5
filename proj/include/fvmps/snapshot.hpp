#pragma once

#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fvmps/errors.hpp"
#include "fvmps/imps.hpp"
#include "fvmps/version.hpp"
#include "fvmps/window.hpp"

namespace fvmps {

using Json = nlohmann::json;

// Self-describing binary container: magic, JSON header (format tag, array
// index, user metadata), then raw little-endian payload blocks.
//
//   bytes 0..7   : "FVSNAP1\0"
//   bytes 8..15  : u64 header length
//   header JSON  : { "format_version", "meta", "arrays": [{name, kind, shape, offset, count}] }
//   payload      : doubles (kind "f64") or interleaved re,im pairs (kind "c128")
class Snapshot {
 public:
  Json meta;

  void put_real(const std::string& name, const std::vector<double>& v,
                std::vector<long> shape = {}) {
    if (shape.empty()) shape = {static_cast<long>(v.size())};
    real_[name] = {std::move(shape), v};
  }

  void put_complex(const std::string& name, const std::vector<cxd>& v,
                   std::vector<long> shape = {}) {
    if (shape.empty()) shape = {static_cast<long>(v.size())};
    complex_[name] = {std::move(shape), v};
  }

  bool has_real(const std::string& name) const { return real_.count(name) > 0; }
  bool has_complex(const std::string& name) const { return complex_.count(name) > 0; }

  const std::vector<double>& real(const std::string& name) const {
    require(has_real(name), ErrorKind::Io, "snapshot: missing real array " + name);
    return real_.at(name).second;
  }
  const std::vector<cxd>& complex_array(const std::string& name) const {
    require(has_complex(name), ErrorKind::Io, "snapshot: missing complex array " + name);
    return complex_.at(name).second;
  }
  std::vector<long> shape(const std::string& name) const {
    if (has_real(name)) return real_.at(name).first;
    require(has_complex(name), ErrorKind::Io, "snapshot: missing array " + name);
    return complex_.at(name).first;
  }

  void save(const std::string& path) const {
    Json header;
    header["format_version"] = kSnapshotFormatVersion;
    header["meta"] = meta;
    Json arrays = Json::array();
    uint64_t offset = 0;
    for (const auto& [name, arr] : real_) {
      arrays.push_back({{"name", name},
                        {"kind", "f64"},
                        {"shape", arr.first},
                        {"offset", offset},
                        {"count", arr.second.size()}});
      offset += arr.second.size() * sizeof(double);
    }
    for (const auto& [name, arr] : complex_) {
      arrays.push_back({{"name", name},
                        {"kind", "c128"},
                        {"shape", arr.first},
                        {"offset", offset},
                        {"count", arr.second.size()}});
      offset += arr.second.size() * sizeof(cxd);
    }
    header["arrays"] = arrays;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(f), ErrorKind::Io, "snapshot: cannot open " + path + " for writing");
    f.write("FVSNAP1\0", 8);
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), static_cast<long>(hs.size()));
    for (const auto& [name, arr] : real_)
      f.write(reinterpret_cast<const char*>(arr.second.data()),
              static_cast<long>(arr.second.size() * sizeof(double)));
    for (const auto& [name, arr] : complex_)
      f.write(reinterpret_cast<const char*>(arr.second.data()),
              static_cast<long>(arr.second.size() * sizeof(cxd)));
    require(static_cast<bool>(f), ErrorKind::Io, "snapshot: write failed for " + path);
  }

  static Snapshot load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorKind::Io, "snapshot: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    require(f && std::memcmp(magic, "FVSNAP1\0", 8) == 0, ErrorKind::Io,
            "snapshot: bad magic in " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<long>(hlen));
    require(static_cast<bool>(f), ErrorKind::Io, "snapshot: truncated header in " + path);
    Json header = Json::parse(hs);
    require(header.at("format_version").get<int>() == kSnapshotFormatVersion, ErrorKind::Io,
            "snapshot: unsupported format version");

    Snapshot out;
    out.meta = header.value("meta", Json::object());
    for (const auto& a : header.at("arrays")) {
      std::string name = a.at("name"), kind = a.at("kind");
      std::vector<long> shape = a.at("shape").get<std::vector<long>>();
      size_t count = a.at("count").get<size_t>();
      if (kind == "f64") {
        std::vector<double> v(count);
        f.read(reinterpret_cast<char*>(v.data()), static_cast<long>(count * sizeof(double)));
        out.real_[name] = {shape, std::move(v)};
      } else if (kind == "c128") {
        std::vector<cxd> v(count);
        f.read(reinterpret_cast<char*>(v.data()), static_cast<long>(count * sizeof(cxd)));
        out.complex_[name] = {shape, std::move(v)};
      } else {
        throw Error(ErrorKind::Io, "snapshot: unknown array kind " + kind);
      }
      require(static_cast<bool>(f), ErrorKind::Io, "snapshot: truncated payload in " + path);
    }
    return out;
  }

 private:
  std::map<std::string, std::pair<std::vector<long>, std::vector<double>>> real_;
  std::map<std::string, std::pair<std::vector<long>, std::vector<cxd>>> complex_;
};

namespace detail {

inline std::vector<cxd> site_flat(const Site& s) {
  std::vector<cxd> v;
  v.reserve(static_cast<size_t>(s.phys_dim() * s.rows() * s.cols()));
  for (const Mat& m : s.m)
    for (long j = 0; j < m.cols(); ++j)
      for (long i = 0; i < m.rows(); ++i) v.push_back(m(i, j));
  return v;
}

inline Site site_unflat(const std::vector<cxd>& v, long d, long rows, long cols) {
  Site s(d, rows, cols);
  size_t k = 0;
  for (long p = 0; p < d; ++p)
    for (long j = 0; j < cols; ++j)
      for (long i = 0; i < rows; ++i) s.m[static_cast<size_t>(p)](i, j) = v.at(k++);
  return s;
}

}  // namespace detail

inline void snapshot_put_uniform(Snapshot& snap, const std::string& prefix, const UniformImps& u) {
  snap.put_complex(prefix + ".AL", detail::site_flat(u.AL), {u.d(), u.D(), u.D()});
  snap.put_complex(prefix + ".AR", detail::site_flat(u.AR), {u.d(), u.D(), u.D()});
  std::vector<double> c(u.c.data(), u.c.data() + u.c.size());
  snap.put_real(prefix + ".c", c);
}

inline UniformImps snapshot_get_uniform(const Snapshot& snap, const std::string& prefix) {
  auto shp = snap.shape(prefix + ".AL");
  UniformImps u;
  u.AL = detail::site_unflat(snap.complex_array(prefix + ".AL"), shp[0], shp[1], shp[2]);
  u.AR = detail::site_unflat(snap.complex_array(prefix + ".AR"), shp[0], shp[1], shp[2]);
  const auto& c = snap.real(prefix + ".c");
  u.c = Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<long>(c.size()));
  return u;
}

inline void snapshot_put_window(Snapshot& snap, const WindowMps& s) {
  snapshot_put_uniform(snap, "left_bulk", s.left_bulk);
  snapshot_put_uniform(snap, "right_bulk", s.right_bulk);
  snap.meta["window_sites"] = s.n();
  for (long i = 1; i <= s.n(); ++i) {
    const Site& w = s.site(i);
    snap.put_complex("w" + std::to_string(i), detail::site_flat(w),
                     {w.phys_dim(), w.rows(), w.cols()});
  }
}

inline WindowMps snapshot_get_window(const Snapshot& snap) {
  WindowMps s;
  s.left_bulk = snapshot_get_uniform(snap, "left_bulk");
  s.right_bulk = snapshot_get_uniform(snap, "right_bulk");
  long n = snap.meta.at("window_sites").get<long>();
  for (long i = 1; i <= n; ++i) {
    std::string name = "w" + std::to_string(i);
    auto shp = snap.shape(name);
    s.w.push_back(detail::site_unflat(snap.complex_array(name), shp[0], shp[1], shp[2]));
  }
  s.check_bonds();
  return s;
}

}  // namespace fvmps
