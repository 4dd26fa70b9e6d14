#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace exr::upstream {

/// Unstructured storage addressed by relative, '/'-separated paths.
class BlobStore {
 public:
  virtual ~BlobStore() = default;

  /// Throws Error{NotFound | PathEscapesRoot | IoError}.
  virtual std::string get(std::string_view path) const = 0;
  /// Creates parent directories. Throws Error{PathEscapesRoot | IoError}.
  virtual void put(std::string_view path, std::string_view bytes) = 0;
  virtual bool exists(std::string_view path) const = 0;
  /// Relative paths of regular files under `prefix`, sorted.
  virtual std::vector<std::string> list(std::string_view prefix) const = 0;
};

/// Filesystem-backed store confined to one root directory.
class LocalBlobStore final : public BlobStore {
 public:
  /// Creates the root if it does not exist.
  explicit LocalBlobStore(std::filesystem::path root);

  std::string get(std::string_view path) const override;
  void put(std::string_view path, std::string_view bytes) override;
  bool exists(std::string_view path) const override;
  std::vector<std::string> list(std::string_view prefix) const override;

  const std::filesystem::path& root() const { return root_; }

  /// Maps a store path to a filesystem path under the root. Rejects absolute
  /// paths, empty paths, NUL bytes, and any path whose lexical normal form
  /// leaves the root. Throws Error{PathEscapesRoot}.
  std::filesystem::path resolve(std::string_view path) const;

 private:
  std::filesystem::path root_;
};

}  // namespace exr::upstream
