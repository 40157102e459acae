#include "putf/io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "putf/error.hpp"

namespace putf {

PointCloud read_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;

        Vec3 p;
        const char* s = line.data();
        const char* end = line.data() + line.size();
        int field = 0;
        while (s < end && field < 4) {
            while (s < end && (*s == ' ' || *s == '\t')) ++s;
            if (s == end) break;
            if (field == 3) {
                ++field;  // extra content after three fields
                break;
            }
            double v = 0;
            auto [next, ec] = std::from_chars(s, end, v);
            if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t'))
                throw ParseError("xyz: malformed coordinate in '" + line + "'", line_no);
            if (!std::isfinite(v)) throw ParseError("xyz: non-finite coordinate", line_no);
            p[field++] = v;
            s = next;
        }
        if (field != 3) throw ParseError("xyz: expected exactly 3 fields", line_no);
        cloud.pts.push_back(p);
    }
    if (cloud.size() == 0) throw ParseError("xyz: no points in " + path, line_no);
    return cloud;
}

void write_xyz(const PointCloud& cloud, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: exact bytes, LF only
    if (!out) throw IoError("cannot write: " + path);
    char buf[128];
    for (const auto& p : cloud.pts) {
        char* cur = buf;
        for (int a = 0; a < 3; ++a) {
            if (a) *cur++ = ' ';
            auto [next, ec] = std::to_chars(cur, buf + sizeof(buf), p[a],
                                            std::chars_format::general, 9);
            if (ec != std::errc()) throw IoError("xyz: formatting failure");
            cur = next;
        }
        *cur++ = '\n';
        out.write(buf, cur - buf);
    }
    if (!out) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

std::string git_blob_sha1(const std::vector<std::uint8_t>& bytes) {
    const std::string header = "blob " + std::to_string(bytes.size());
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("sha1: context allocation failed");
    bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
              EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&  // includes '\0'
              EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
              EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw Error("sha1: digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

}  // namespace putf
