// SPDX-License-Identifier: Apache-2.0

#include "fedforget/checksum.hpp"

#include "fedforget/errors.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <stdexcept>

namespace fedforget {

namespace {

void ensure_sodium() {
    static const int status = sodium_init();
    if (status < 0) throw std::runtime_error("libsodium failed to initialize");
}

std::string to_hex(const unsigned char* digest, std::size_t len) {
    std::string out(len * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), digest, len);
    out.pop_back();
    return out;
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    ensure_sodium();
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(digest, bytes.data(), bytes.size());
    return to_hex(digest, sizeof digest);
}

std::string sha256_hex(std::string_view text) {
    return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string content_checksum(std::string_view content) {
    ensure_sodium();
    const std::string header = "blob " + std::to_string(content.size());
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(header.data()), header.size() + 1);
    crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(content.data()), content.size());
    unsigned char digest[crypto_hash_sha256_BYTES];
    crypto_hash_sha256_final(&st, digest);
    return to_hex(digest, sizeof digest);
}

std::vector<std::uint8_t> to_le_bytes(std::span<const double> values) {
    std::vector<std::uint8_t> out(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
    }
    return out;
}

std::vector<double> from_le_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % 8 != 0) throw IntegrityError("float64 payload length is not a multiple of 8");
    std::vector<double> out(bytes.size() / 8);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::string params_checksum(const FlatParams& params) {
    const auto bytes = to_le_bytes(std::span(params.data(), static_cast<std::size_t>(params.size())));
    return sha256_hex(bytes).substr(0, 16);
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    ensure_sodium();
    const auto variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(std::strlen(out.c_str()));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    ensure_sodium();
    std::vector<std::uint8_t> out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                          sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size()) {
        throw IntegrityError("malformed base64 payload");
    }
    out.resize(len);
    return out;
}

}  // namespace fedforget
