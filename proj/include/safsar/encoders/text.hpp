#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace safsar {

struct TokenSequence {
    std::vector<std::size_t> ids;
    std::size_t length() const noexcept { return ids.size(); }
};

/// Dense token -> id map. Id 0 is UNK and id 1 is PAD.
class Vocabulary {
public:
    static constexpr std::size_t kUnk = 0;
    static constexpr std::size_t kPad = 1;
    static constexpr std::string_view kUnkToken = "<unk>";
    static constexpr std::string_view kPadToken = "<pad>";

    Vocabulary();

    /// Tokens of every text, in order of first appearance.
    static Vocabulary build(std::span<const std::string> corpus);

    /// Returns the id of `token`, adding it if absent.
    std::size_t add(const std::string& token);
    /// UNK for unknown tokens.
    std::size_t lookup(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::string& token(std::size_t id) const;
    std::size_t size() const noexcept { return tokens_.size(); }

    /// One token per line; line number is the id.
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> ids_;
};

/// Lowercases, splits on whitespace, and emits each punctuation character as its own token.
std::vector<std::string> split_words(std::string_view text);

/// Throws DomainError when the description holds no tokens.
TokenSequence tokenize(std::string_view description, const Vocabulary& vocab);

}  // namespace safsar
