#include "groundbank/binio.hpp"

#include <fstream>
#include <sstream>

#include "groundbank/errors.hpp"

namespace groundbank {

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw io_error("read failed: " + path);
    return ss.str();
}

void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open file for writing: " + path);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw io_error("write failed: " + path);
}

} // namespace groundbank
