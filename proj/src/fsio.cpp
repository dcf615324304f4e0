#include "vtg/fsio.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace vtg::fsio {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("error reading file: " + path.string());
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (in.bad()) throw std::runtime_error("error reading file: " + path.string());
  return lines;
}

void atomic_write(const fs::path& path, std::string_view content) {
  const fs::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + partial.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("error writing file: " + partial.string());
  }
  fs::rename(partial, path);
}

LineWriter::LineWriter(fs::path target)
    : target_(std::move(target)),
      out_(target_.string() + ".partial", std::ios::binary | std::ios::trunc) {
  if (!out_)
    throw std::runtime_error("cannot open file for writing: " + target_.string() +
                             ".partial");
}

LineWriter::~LineWriter() = default;

void LineWriter::write_line(std::string_view line) {
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.put('\n');
  out_.flush();
  if (!out_)
    throw std::runtime_error("error writing file: " + target_.string() + ".partial");
}

void LineWriter::commit() {
  out_.close();
  if (out_.fail() && !committed_)
    throw std::runtime_error("error closing file: " + target_.string() + ".partial");
  fs::rename(target_.string() + ".partial", target_);
  committed_ = true;
}

DirLock::DirLock(const fs::path& dir) : lock_path_(dir / ".lock") {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::create_directory(lock_path_, ec)) {
    if (ec)
      throw std::runtime_error("cannot create lock " + lock_path_.string() + ": " +
                               ec.message());
    throw std::runtime_error("work directory is locked by another invocation: " +
                             lock_path_.string());
  }
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

}  // namespace vtg::fsio
