#include "lsa/manifest.hpp"

#include "lsa/byte_io.hpp"
#include "lsa/error.hpp"

#include <algorithm>
#include <sstream>

namespace lsa {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

bool valid_role(std::string_view role)
{
    if (role == "id_train" || role == "id_test")
        return true;
    for (std::string_view prefix : {"csid:", "near_ood:", "far_ood:"})
        if (role.starts_with(prefix) && role.size() > prefix.size() &&
            role.find_first_of(" ,\t", prefix.size()) == std::string_view::npos)
            return true;
    return false;
}

const ManifestEntry* Manifest::find(std::string_view role) const
{
    for (const auto& e : entries)
        if (e.role == role)
            return &e;
    return nullptr;
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const
{
    return e.path.is_absolute() ? e.path : base_dir / e.path;
}

std::vector<const ManifestEntry*> Manifest::with_prefix(std::string_view prefix) const
{
    std::vector<const ManifestEntry*> out;
    for (const auto& e : entries)
        if (e.role.starts_with(prefix))
            out.push_back(&e);
    return out;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir)
{
    Manifest m;
    m.base_dir = base_dir;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.resize(hash);
        const std::string body = trim(line);
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::ConfigInvalid,
                        "manifest line " + std::to_string(lineno) + " lacks '='");
        ManifestEntry e{trim(std::string_view(body).substr(0, eq)),
                        trim(std::string_view(body).substr(eq + 1))};
        if (!valid_role(e.role))
            throw Error(ErrorCode::ConfigInvalid, "manifest line " + std::to_string(lineno) +
                                                      ": unknown role '" + e.role + "'");
        if (e.path.empty())
            throw Error(ErrorCode::ConfigInvalid,
                        "manifest line " + std::to_string(lineno) + ": empty path");
        if (m.find(e.role))
            throw Error(ErrorCode::ConfigInvalid, "duplicate manifest role '" + e.role + "'");
        m.entries.push_back(std::move(e));
    }
    if (!m.find("id_train"))
        throw Error(ErrorCode::ConfigInvalid, "manifest has no id_train entry");
    return m;
}

Manifest read_manifest(const std::filesystem::path& path)
{
    const auto bytes = read_file_bytes(path);
    return parse_manifest(std::string_view(bytes.data(), bytes.size()), path.parent_path());
}

std::string format_manifest(const Manifest& m)
{
    std::ostringstream out;
    for (const auto& e : m.entries)
        out << e.role << " = " << e.path.generic_string() << '\n';
    return out.str();
}

} // namespace lsa
