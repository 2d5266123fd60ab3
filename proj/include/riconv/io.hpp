#pragma once

#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "riconv/point_cloud.hpp"

namespace riconv {

static_assert(sizeof(Vec3) == 24, "Vec3 must be three packed doubles for binary io");

enum class CloudFormat { xyz_text, off, internal_binary };

inline CloudFormat cloud_format_from_string(const std::string& s) {
    if (s == "xyz" || s == "xyz-text") return CloudFormat::xyz_text;
    if (s == "off") return CloudFormat::off;
    if (s == "ripc" || s == "internal-binary") return CloudFormat::internal_binary;
    throw std::invalid_argument("unknown point cloud format: " + s);
}

/// Guess the format from the file extension; falls back to xyz-text.
inline CloudFormat cloud_format_from_path(const std::string& path) {
    auto dot = path.rfind('.');
    std::string ext = (dot == std::string::npos) ? "" : path.substr(dot + 1);
    if (ext == "off" || ext == "OFF") return CloudFormat::off;
    if (ext == "ripc") return CloudFormat::internal_binary;
    return CloudFormat::xyz_text;
}

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& path, size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
    ParseError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what) {}
};

namespace detail {

inline bool blank_or_comment(const std::string& s) {
    for (char c : s) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

inline PointCloud load_xyz_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    PointCloud cloud;
    std::string line;
    size_t lineno = 0;
    int columns = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank_or_comment(line)) continue;
        std::istringstream ss(line);
        double v[6];
        int got = 0;
        while (got < 6 && (ss >> v[got])) ++got;
        std::string rest;
        if (ss >> rest) throw ParseError(path, lineno, "more than 6 columns");
        if (got != 3 && got != 6) throw ParseError(path, lineno, "expected 3 or 6 numeric columns");
        if (columns == 0) columns = got;
        if (got != columns) throw ParseError(path, lineno, "inconsistent column count");
        cloud.points.push_back({v[0], v[1], v[2]});
        if (got == 6) {
            Vec3 nrm{v[3], v[4], v[5]};
            if (norm(nrm) < 1e-12) throw ParseError(path, lineno, "zero-length normal");
            cloud.normals.push_back(normalized(nrm));
        }
    }
    if (cloud.points.empty()) throw ParseError(path, "empty vertex set");
    return cloud;
}

// OFF mesh: vertices only, faces ignored. Handles both "OFF\n n m k" and
// the single-line "OFF n m k" variant.
inline PointCloud load_off(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open file");
    std::string line;
    size_t lineno = 0;

    auto next_content_line = [&]() -> std::string {
        while (std::getline(in, line)) {
            ++lineno;
            if (!blank_or_comment(line)) return line;
        }
        throw ParseError(path, lineno, "unexpected end of file");
    };

    std::string header = next_content_line();
    size_t nv = 0;
    {
        std::istringstream ss(header);
        std::string magic;
        ss >> magic;
        if (magic != "OFF") throw ParseError(path, lineno, "missing OFF header");
        size_t nf = 0, ne = 0;
        if (!(ss >> nv)) {
            std::istringstream counts(next_content_line());
            if (!(counts >> nv >> nf >> ne)) throw ParseError(path, lineno, "bad count line");
        } else {
            ss >> nf >> ne;
        }
    }
    if (nv == 0) throw ParseError(path, lineno, "empty vertex set");

    PointCloud cloud;
    cloud.points.reserve(nv);
    for (size_t i = 0; i < nv; ++i) {
        std::istringstream ss(next_content_line());
        double x, y, z;
        if (!(ss >> x >> y >> z)) throw ParseError(path, lineno, "bad vertex line");
        cloud.points.push_back({x, y, z});
    }
    return cloud;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    // assumes a little-endian host, checked at startup by save_ripc
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

inline void require_little_endian() {
    const uint32_t probe = 1;
    if (*reinterpret_cast<const unsigned char*>(&probe) != 1)
        throw std::runtime_error("internal-binary format requires a little-endian host");
}

inline PointCloud load_ripc(const std::string& path) {
    require_little_endian();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RIPC", 4) != 0) throw ParseError(path, "bad magic (expected RIPC)");
    uint32_t version = read_le<uint32_t>(in);
    if (version != 1) throw ParseError(path, "unsupported version " + std::to_string(version));
    uint32_t n = read_le<uint32_t>(in);
    uint8_t has_normals = read_le<uint8_t>(in);
    if (!in) throw ParseError(path, "truncated header");
    if (n == 0) throw ParseError(path, "empty vertex set");

    PointCloud cloud;
    cloud.points.resize(n);
    in.read(reinterpret_cast<char*>(cloud.points.data()), std::streamsize(n) * 24);
    if (has_normals) {
        cloud.normals.resize(n);
        in.read(reinterpret_cast<char*>(cloud.normals.data()), std::streamsize(n) * 24);
    }
    if (!in) throw ParseError(path, "truncated payload at offset " + std::to_string(in.tellg()));
    return cloud;
}

}  // namespace detail

inline PointCloud load_point_cloud(const std::string& path, CloudFormat format) {
    switch (format) {
        case CloudFormat::xyz_text: return detail::load_xyz_text(path);
        case CloudFormat::off: return detail::load_off(path);
        case CloudFormat::internal_binary: return detail::load_ripc(path);
    }
    throw std::invalid_argument("load_point_cloud: bad format");
}

inline PointCloud load_point_cloud(const std::string& path) {
    return load_point_cloud(path, cloud_format_from_path(path));
}

/// header {magic "RIPC", version u32 = 1, N u32, has_normals u8}, then
/// N*3 float64 coordinates (+ N*3 float64 normals). Little-endian,
/// bit-exact round trip.
inline void save_ripc(const std::string& path, const PointCloud& cloud) {
    detail::require_little_endian();
    if (cloud.points.empty()) throw std::invalid_argument("save_ripc: empty cloud");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_ripc: cannot open " + path);
    out.write("RIPC", 4);
    detail::write_le<uint32_t>(out, 1);
    detail::write_le<uint32_t>(out, uint32_t(cloud.size()));
    detail::write_le<uint8_t>(out, cloud.has_normals() ? 1 : 0);
    out.write(reinterpret_cast<const char*>(cloud.points.data()), std::streamsize(cloud.size()) * 24);
    if (cloud.has_normals())
        out.write(reinterpret_cast<const char*>(cloud.normals.data()), std::streamsize(cloud.size()) * 24);
    if (!out) throw std::runtime_error("save_ripc: write failed for " + path);
}

inline void save_xyz_text(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_xyz_text: cannot open " + path);
    out.precision(17);
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.points[i];
        out << p.x << ' ' << p.y << ' ' << p.z;
        if (cloud.has_normals()) {
            const Vec3& n = cloud.normals[i];
            out << ' ' << n.x << ' ' << n.y << ' ' << n.z;
        }
        out << '\n';
    }
}

}  // namespace riconv
