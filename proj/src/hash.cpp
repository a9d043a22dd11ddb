#include "dbigan/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "dbigan/error.hpp"

namespace dbigan {

namespace {

using DigestCtx = std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)>;

DigestCtx new_ctx(const EVP_MD* md) {
    DigestCtx ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1) throw IoError("digest initialisation failed");
    return ctx;
}

std::string finish_hex(EVP_MD_CTX* ctx) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx, out.data(), &len) != 1) throw IoError("digest finalisation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string s;
    s.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        s.push_back(hex[out[i] >> 4]);
        s.push_back(hex[out[i] & 0xf]);
    }
    return s;
}

} // namespace

std::string sha256_hex(std::string_view bytes) {
    auto ctx = new_ctx(EVP_sha256());
    EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size());
    return finish_hex(ctx.get());
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for hashing");
    auto ctx = new_ctx(EVP_sha256());
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return finish_hex(ctx.get());
}

std::string git_blob_id(std::string_view content) {
    auto ctx = new_ctx(EVP_sha1());
    const std::string header = "blob " + std::to_string(content.size());
    EVP_DigestUpdate(ctx.get(), header.data(), header.size() + 1); // includes the NUL
    EVP_DigestUpdate(ctx.get(), content.data(), content.size());
    return finish_hex(ctx.get());
}

} // namespace dbigan
