#include "moheat/service.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace moheat {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxEncodedStem = 200;

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

[[noreturn]] void io_error(const std::string& what, const fs::path& p) {
    throw ServiceError(500, "storage_error", what + " " + p.string() + ": " + std::strerror(errno));
}

void fsync_dir(const fs::path& dir) {
    const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

void write_all(int fd, const std::string& text, const fs::path& p) {
    std::size_t done = 0;
    while (done < text.size()) {
        const ssize_t n = ::write(fd, text.data() + done, text.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            io_error("write", p);
        }
        done += static_cast<std::size_t>(n);
    }
}

}  // namespace

std::string pattern_file_name(const std::string& name) {
    std::string stem;
    for (unsigned char c : name) {
        if (std::isalnum(c) || c == '_' || c == '-' || c >= 0x80) {
            stem += static_cast<char>(c);
        } else {
            char buf[4];
            std::snprintf(buf, sizeof buf, "%%%02X", c);
            stem += buf;
        }
    }
    if (stem.size() > kMaxEncodedStem) {
        // Cut on a UTF-8 boundary and disambiguate with a hash of the full name.
        std::size_t cut = kMaxEncodedStem - 20;
        while (cut > 0 && (static_cast<unsigned char>(stem[cut]) & 0xC0) == 0x80) --cut;
        char buf[20];
        std::snprintf(buf, sizeof buf, "~%016llx", static_cast<unsigned long long>(fnv1a(name)));
        stem = stem.substr(0, cut) + buf;
    }
    return stem + std::string(kLibraryExtension);
}

PatternStore::PatternStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path PatternStore::file_for(const std::string& name) const {
    return dir_ / pattern_file_name(name);
}

std::vector<std::string> PatternStore::load() {
    std::vector<std::string> skipped;
    entries_.clear();
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(dir_)) {
        const auto fname = de.path().filename().string();
        if (!de.is_regular_file() || fname.starts_with('.')) continue;  // temp files start with '.'
        if (!fname.ends_with(kLibraryExtension)) continue;
        files.push_back(de.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        try {
            auto lib = parse_pattern_library(ss.str());
            if (lib.patterns.size() != 1) {
                skipped.push_back(path.filename().string() + ": expected exactly one pattern");
                continue;
            }
            auto& [name, entry] = *lib.patterns.begin();
            if (file_for(name).filename() != path.filename()) {
                skipped.push_back(path.filename().string() + ": pattern \"" + name +
                                  "\" belongs in " + pattern_file_name(name));
                continue;
            }
            entries_[name] = entry;
        } catch (const LibraryError& e) {
            skipped.push_back(path.filename().string() + ": " + e.what());
        }
    }
    return skipped;
}

std::vector<std::string> PatternStore::names() const {
    std::vector<std::string> out;
    for (const auto& [name, _] : entries_) out.push_back(name);
    return out;
}

std::optional<LibraryEntry> PatternStore::get(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void PatternStore::put(const std::string& name, const LibraryEntry& entry) {
    PatternLibrary doc;
    doc.patterns[name] = entry;
    const std::string text = serialize_pattern_library(doc) + "\n";

    const fs::path target = file_for(name);
    std::string tmpl = (dir_ / ("." + target.filename().string() + ".XXXXXX")).string();
    const int fd = ::mkstemp(tmpl.data());
    if (fd < 0) io_error("create temp file in", dir_);
    const fs::path temp = tmpl;
    try {
        ::fchmod(fd, 0644);
        write_all(fd, text, temp);
        if (::fsync(fd) != 0) io_error("fsync", temp);
    } catch (...) {
        ::close(fd);
        ::unlink(temp.c_str());
        throw;
    }
    ::close(fd);
    if (before_rename) before_rename(temp, target);
    if (::rename(temp.c_str(), target.c_str()) != 0) {
        const int saved = errno;
        ::unlink(temp.c_str());
        errno = saved;
        io_error("rename", target);
    }
    fsync_dir(dir_);
    entries_[name] = entry;
}

bool PatternStore::remove(const std::string& name) {
    if (!entries_.contains(name)) return false;
    const fs::path target = file_for(name);
    if (::unlink(target.c_str()) != 0 && errno != ENOENT) io_error("unlink", target);
    fsync_dir(dir_);
    entries_.erase(name);
    return true;
}

PatternLibrary demo_library() {
    PatternLibrary lib;
    lib.patterns["snowy_mountains"] = {ColdLevelPattern{{4}, 6000, 1000},
                                       std::string("Chill of moving through snowy mountains"),
                                       std::string("#3b82f6")};
    lib.patterns["approaching_flames"] = {HotPattern{{0.9}, 5000, 2000},
                                          std::string("Localized warmth of approaching flames"),
                                          std::string("#ef4444")};
    DualPattern alt;
    alt.cold_intensity = {1.0};
    alt.cold_duration_ms = 2000;
    alt.hot_intensity = {0.8};
    alt.hot_duration_ms = 2000;
    alt.gap_ms = 500;
    alt.repeats = 3;
    alt.start_phase = Phase::cold;
    lib.patterns["alternating_cold_hot"] = {alt, std::string("Alternating cold and hot"),
                                            std::string("#a855f7")};
    return lib;
}

}  // namespace moheat
