#include "scatterbench/harness/lock.hpp"

#include <cstdio>
#include <system_error>

#include "scatterbench/errors.hpp"

namespace scatterbench::harness {

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".scatterbench.lock") {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) throw IoError("cannot lock " + dir.string() + " (is another run active? remove " + path_.string() + ")");
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

}  // namespace scatterbench::harness
