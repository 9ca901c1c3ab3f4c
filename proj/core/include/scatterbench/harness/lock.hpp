#pragma once

#include <filesystem>

namespace scatterbench::harness {

/// Exclusive claim on an output directory through a lock file created with O_EXCL
/// semantics. Throws IoError when another run holds the lock.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace scatterbench::harness
