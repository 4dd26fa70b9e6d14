#include "exr/upstream/blob_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <system_error>

#include "exr/error.hpp"

namespace exr::upstream {

namespace fs = std::filesystem;

LocalBlobStore::LocalBlobStore(fs::path root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw Error(Errc::IoError, "cannot create storage root " + root.string() + ": " + ec.message());
  root_ = fs::canonical(root, ec);
  if (ec) throw Error(Errc::IoError, "cannot resolve storage root " + root.string());
}

fs::path LocalBlobStore::resolve(std::string_view path) const {
  const auto reject = [&](const char* why) -> fs::path {
    throw Error(Errc::PathEscapesRoot, "storage path '" + std::string(path) + "' " + why);
  };
  if (path.empty()) return reject("is empty");
  if (path.find('\0') != std::string_view::npos) return reject("contains NUL");
  if (path.find('\\') != std::string_view::npos) return reject("contains a backslash");
  const fs::path rel(path);
  if (rel.is_absolute() || rel.has_root_name() || rel.has_root_directory()) return reject("is absolute");
  const fs::path norm = rel.lexically_normal();
  if (norm.empty() || norm == "." ) return reject("names the root");
  if (*norm.begin() == "..") return reject("escapes the root");
  const fs::path full = root_ / norm;
  // Symlinks inside the root could still point outside it.
  std::error_code ec;
  const fs::path real = fs::weakly_canonical(full, ec);
  if (!ec) {
    const auto rel_real = real.lexically_relative(root_);
    if (rel_real.empty() || *rel_real.begin() == "..") return reject("resolves outside the root");
  }
  return full;
}

std::string LocalBlobStore::get(std::string_view path) const {
  const auto full = resolve(path);
  std::error_code ec;
  if (!fs::is_regular_file(full, ec)) throw Error(Errc::NotFound, "no blob at '" + std::string(path) + "'");
  std::ifstream in(full, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read '" + std::string(path) + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void LocalBlobStore::put(std::string_view path, std::string_view bytes) {
  const auto full = resolve(path);
  std::error_code ec;
  fs::create_directories(full.parent_path(), ec);
  if (ec) throw Error(Errc::IoError, "cannot create directory for '" + std::string(path) + "'");
  // Write-then-rename so readers never observe a partial blob.
  auto tmp = full;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      throw Error(Errc::IoError, "cannot write '" + std::string(path) + "'");
    }
  }
  fs::rename(tmp, full, ec);
  if (ec) throw Error(Errc::IoError, "cannot commit '" + std::string(path) + "': " + ec.message());
}

bool LocalBlobStore::exists(std::string_view path) const {
  std::error_code ec;
  return fs::is_regular_file(resolve(path), ec);
}

std::vector<std::string> LocalBlobStore::list(std::string_view prefix) const {
  const fs::path dir = prefix.empty() ? root_ : resolve(prefix);
  std::vector<std::string> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (auto it = fs::recursive_directory_iterator(dir, ec); !ec && it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (it->is_regular_file() && it->path().extension() != ".partial") {
      out.push_back(it->path().lexically_relative(root_).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace exr::upstream
