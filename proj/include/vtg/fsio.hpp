#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace vtg::fsio {

std::string read_file(const std::filesystem::path& path);
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes content to <path>.partial and renames it into place, so an
/// interrupted run never leaves a half-written file under the final name.
void atomic_write(const std::filesystem::path& path, std::string_view content);

/// Streaming variant of atomic_write for append-only record files. Lines go
/// to <path>.partial (flushed per line, so a running stream can be tailed);
/// commit() renames to the final name. Destruction without commit leaves the
/// .partial file behind.
class LineWriter {
 public:
  explicit LineWriter(std::filesystem::path target);
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;
  ~LineWriter();

  void write_line(std::string_view line);
  void commit();

 private:
  std::filesystem::path target_;
  std::ofstream out_;
  bool committed_ = false;
};

/// Mutual exclusion for a work directory, implemented as an atomically
/// created <dir>/.lock subdirectory. Throws if the directory is already
/// locked.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock();

 private:
  std::filesystem::path lock_path_;
};

}  // namespace vtg::fsio
