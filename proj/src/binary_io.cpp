#include "binary_io.hpp"

#include <fstream>
#include <sstream>

namespace gxc::detail {

std::pair<std::string_view, std::string_view> split_trailer(std::string_view file, const std::string& context) {
  if (file.size() < 8) throw Error(Errc::FormatError, context + ": file too short for trailer");
  ByteReader footer(file.substr(file.size() - 8), context);
  const std::uint64_t len = footer.u64();
  if (len > file.size() - 8) throw Error(Errc::FormatError, context + ": trailer length exceeds file");
  const std::size_t body_len = file.size() - 8 - static_cast<std::size_t>(len);
  return {file.substr(0, body_len), file.substr(body_len, static_cast<std::size_t>(len))};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::IoError, "read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(Errc::IoError, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoError, "rename to " + path.string() + " failed: " + ec.message());
}

}  // namespace gxc::detail
