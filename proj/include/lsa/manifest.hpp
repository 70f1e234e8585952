#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lsa {

struct ManifestEntry {
    std::string role;           // id_train, id_test, csid:<n>, near_ood:<n>, far_ood:<n>
    std::filesystem::path path; // as written; relative paths resolve against the manifest
};

/// Split roles mapped to EMB1 files. Text form is one "role = path" per
/// line; '#' starts a comment.
struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestEntry> entries;

    const ManifestEntry* find(std::string_view role) const;
    std::filesystem::path resolve(const ManifestEntry& e) const;
    /// Entries whose role starts with prefix, in file order.
    std::vector<const ManifestEntry*> with_prefix(std::string_view prefix) const;
};

bool valid_role(std::string_view role);

/// Throws ConfigInvalid on malformed lines, bad or duplicate roles, or a
/// missing id_train.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
Manifest read_manifest(const std::filesystem::path& path);
std::string format_manifest(const Manifest& m);

} // namespace lsa
