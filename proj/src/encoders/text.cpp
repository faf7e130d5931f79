#include "safsar/encoders/text.hpp"

#include <cctype>
#include <fstream>

#include "safsar/errors.hpp"

namespace safsar {

Vocabulary::Vocabulary() {
    add(std::string(kUnkToken));
    add(std::string(kPadToken));
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
    Vocabulary vocab;
    for (const auto& text : corpus) {
        for (const auto& tok : split_words(text)) vocab.add(tok);
    }
    return vocab;
}

std::size_t Vocabulary::add(const std::string& token) {
    if (token.empty() || token.find('\n') != std::string::npos) {
        throw ContractError("vocabulary tokens must be non-empty single-line strings");
    }
    auto [it, inserted] = ids_.emplace(token, tokens_.size());
    if (inserted) tokens_.push_back(token);
    return it->second;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return ids_.contains(std::string(token));
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= tokens_.size()) throw ContractError("token id out of vocabulary range");
    return tokens_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open vocabulary file for writing: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw Error("failed writing vocabulary file: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open vocabulary file: " + path.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (lines.size() < 2 || lines[0] != kUnkToken || lines[1] != kPadToken) {
        throw ContractError("vocabulary file must start with " + std::string(kUnkToken) + " and " +
                            std::string(kPadToken) + ": " + path.string());
    }
    Vocabulary vocab;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        if (vocab.add(lines[i]) != i) {
            throw ContractError("duplicate token '" + lines[i] + "' in " + path.string());
        }
    }
    return vocab;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
    };
    for (char ch : text) {
        const auto u = static_cast<unsigned char>(ch);
        if (std::isspace(u)) {
            flush();
        } else if (u < 0x80 && std::ispunct(u)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            current.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    flush();
    return out;
}

TokenSequence tokenize(std::string_view description, const Vocabulary& vocab) {
    TokenSequence seq;
    for (const auto& tok : split_words(description)) seq.ids.push_back(vocab.lookup(tok));
    if (seq.ids.empty()) throw DomainError("description is empty after normalization");
    return seq;
}

}  // namespace safsar
