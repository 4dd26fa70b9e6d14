#include "exr/volume/label_volume.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "exr/error.hpp"

namespace exr::volume {

namespace {

using nlohmann::json;

template <typename T, int N>
Eigen::Array<T, N, 1> read_triple(const json& header, const char* key) {
  auto it = header.find(key);
  if (it == header.end() || !it->is_array() || it->size() != 3) {
    throw Error(Errc::MalformedHeader, std::string("header field '") + key + "' must be a 3-array");
  }
  Eigen::Array<T, N, 1> out;
  for (int i = 0; i < 3; ++i) {
    const auto& v = (*it)[static_cast<std::size_t>(i)];
    if (!v.is_number()) throw Error(Errc::MalformedHeader, std::string("non-numeric ") + key);
    out[i] = v.get<T>();
  }
  return out;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

LabelVolume::LabelVolume(const Eigen::Array3i& d, const Eigen::Vector3d& s, const Eigen::Vector3d& o)
    : dims(d), spacing(s), origin(o) {
  if ((dims < 1).any()) throw Error(Errc::MalformedHeader, "dims must be >= 1");
  labels.assign(voxel_count(), 0);
}

void LabelVolume::validate() const {
  if ((dims < 1).any()) throw Error(Errc::MalformedHeader, "dims must be >= 1");
  if (!(spacing.array() > 0).all()) throw Error(Errc::MalformedHeader, "spacing must be > 0");
  if (labels.size() != voxel_count()) throw Error(Errc::SizeMismatch, "label count != nx*ny*nz");
}

LabelVolume load_label_volume(std::string_view header_json, std::string_view payload) {
  json header = json::parse(header_json, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw Error(Errc::MalformedHeader, "volume header is not a JSON object");
  }
  LabelVolume vol;
  vol.dims = read_triple<int, 3>(header, "dims");
  vol.spacing = read_triple<double, 3>(header, "spacing").matrix();
  vol.origin = read_triple<double, 3>(header, "origin").matrix();
  if ((vol.dims < 1).any()) throw Error(Errc::MalformedHeader, "dims must be >= 1");
  if (!(vol.spacing.array() > 0).all()) throw Error(Errc::MalformedHeader, "spacing must be > 0");

  auto dtype = header.find("dtype");
  if (dtype == header.end() || !dtype->is_string()) {
    throw Error(Errc::MalformedHeader, "header field 'dtype' missing");
  }
  const auto& name = dtype->get_ref<const std::string&>();
  const std::size_t n = vol.voxel_count();
  vol.labels.resize(n);
  if (name == "u8") {
    if (payload.size() != n) {
      throw Error(Errc::SizeMismatch, "payload has " + std::to_string(payload.size()) +
                                          " bytes, expected " + std::to_string(n));
    }
    for (std::size_t i = 0; i < n; ++i) vol.labels[i] = static_cast<unsigned char>(payload[i]);
  } else if (name == "u16") {
    if (payload.size() != 2 * n) {
      throw Error(Errc::SizeMismatch, "payload has " + std::to_string(payload.size()) +
                                          " bytes, expected " + std::to_string(2 * n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto lo = static_cast<unsigned char>(payload[2 * i]);
      const auto hi = static_cast<unsigned char>(payload[2 * i + 1]);
      vol.labels[i] = static_cast<Label>(lo | (hi << 8));
    }
  } else {
    throw Error(Errc::UnsupportedDtype, "unsupported dtype '" + name + "'");
  }
  return vol;
}

std::string volume_header_json(const LabelVolume& vol, Dtype dtype) {
  json header = {
      {"dims", {vol.dims.x(), vol.dims.y(), vol.dims.z()}},
      {"spacing", {vol.spacing.x(), vol.spacing.y(), vol.spacing.z()}},
      {"origin", {vol.origin.x(), vol.origin.y(), vol.origin.z()}},
      {"dtype", dtype == Dtype::U8 ? "u8" : "u16"},
  };
  return header.dump();
}

std::string volume_payload(const LabelVolume& vol, Dtype dtype) {
  std::string out;
  if (dtype == Dtype::U8) {
    out.reserve(vol.labels.size());
    for (Label l : vol.labels) {
      if (l > 0xFF) throw Error(Errc::UnsupportedDtype, "label does not fit in u8");
      out.push_back(static_cast<char>(l));
    }
  } else {
    out.reserve(2 * vol.labels.size());
    for (Label l : vol.labels) {
      out.push_back(static_cast<char>(l & 0xFF));
      out.push_back(static_cast<char>(l >> 8));
    }
  }
  return out;
}

std::filesystem::path payload_path_for(const std::filesystem::path& header_path) {
  auto p = header_path;
  p.replace_extension(".raw");
  return p;
}

LabelVolume read_label_volume(const std::filesystem::path& header_path) {
  return load_label_volume(slurp(header_path), slurp(payload_path_for(header_path)));
}

void write_label_volume(const std::filesystem::path& header_path, const LabelVolume& vol, Dtype dtype) {
  const auto write = [](const std::filesystem::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw Error(Errc::IoError, "cannot write " + p.string());
    }
  };
  write(header_path, volume_header_json(vol, dtype));
  write(payload_path_for(header_path), volume_payload(vol, dtype));
}

}  // namespace exr::volume
