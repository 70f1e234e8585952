#include "lsa/byte_io.hpp"

#include <fstream>
#include <iterator>

namespace lsa {

std::vector<char> read_file_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad())
        throw Error(ErrorCode::IoError, "read failed for " + path.string());
    return data;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const char> bytes)
{
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorCode::IoError, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error(ErrorCode::IoError, "write failed for " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "cannot move " + tmp.string() + " into place");
    }
}

void write_file_text(const std::filesystem::path& path, std::string_view text)
{
    write_file_bytes(path, std::span<const char>(text.data(), text.size()));
}

} // namespace lsa
