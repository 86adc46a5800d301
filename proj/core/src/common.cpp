#include "ljpcausal/common.hpp"

#include <cctype>
#include <cstdio>
#include <iostream>
#include <mutex>

namespace ljp {

std::string fnv1a_hex(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    return std::string(buf);
}

std::uint32_t derive_seed(std::uint32_t base, std::uint32_t stream) {
    std::uint64_t z = (static_cast<std::uint64_t>(base) << 32) | stream;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z = z ^ (z >> 31);
    return static_cast<std::uint32_t>(z ^ (z >> 32));
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        out.push_back(c < 0x80 ? static_cast<char>(std::tolower(c))
                               : static_cast<char>(c));
    }
    return out;
}

bool is_ascii_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
           (c >= 'A' && c <= 'Z');
}

namespace {
std::mutex g_warn_mutex;
std::function<void(const std::string&)> g_warn_handler;
}  // namespace

void log_warning(const std::string& msg) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    if (g_warn_handler) {
        g_warn_handler(msg);
    } else {
        std::cerr << "[warn] " << msg << "\n";
    }
}

void set_warning_handler(std::function<void(const std::string&)> handler) {
    std::lock_guard<std::mutex> lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

}  // namespace ljp
