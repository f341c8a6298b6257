// SPDX-License-Identifier: Apache-2.0

#include "owlet/vocab.h"

#include <algorithm>
#include <fstream>
#include <map>

#include "owlet/errors.h"

namespace owlet {

namespace {

const char* kSpecialNames[4] = {"<pad>", "<s>", "</s>", "<image>"};

std::string escape_token(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20 || c >= 0x7F) {
                    static const char* hex = "0123456789abcdef";
                    out += "\\x";
                    out += hex[c >> 4];
                    out += hex[c & 0xF];
                } else {
                    out += static_cast<char>(c);
                }
        }
    }
    return out;
}

int hex_val(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::string unescape_token(const std::string& s, int line_no) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '\\') {
            out += s[i];
            continue;
        }
        if (i + 1 >= s.size())
            throw format_error("vocab: dangling escape on line " + std::to_string(line_no));
        const char c = s[++i];
        switch (c) {
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 'r': out += '\r'; break;
            case 't': out += '\t'; break;
            case 'x': {
                if (i + 2 >= s.size())
                    throw format_error("vocab: bad \\x escape on line " + std::to_string(line_no));
                const int hi = hex_val(s[i + 1]), lo = hex_val(s[i + 2]);
                if (hi < 0 || lo < 0)
                    throw format_error("vocab: bad \\x escape on line " + std::to_string(line_no));
                out += static_cast<char>((hi << 4) | lo);
                i += 2;
                break;
            }
            default:
                throw format_error("vocab: unknown escape on line " + std::to_string(line_no));
        }
    }
    return out;
}

}  // namespace

Vocabulary Vocabulary::byte_fallback() {
    Vocabulary v;
    for (const char* name : kSpecialNames) v.tokens_.emplace_back(name);
    for (int b = 0; b < 256; ++b) v.tokens_.push_back(std::string(1, static_cast<char>(b)));
    v.rebuild_index();
    return v;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw index_error("vocab: token id " + std::to_string(id) + " outside vocab of " +
                          std::to_string(size()));
    return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::append_token(std::string s) {
    const int id = size();
    tokens_.push_back(std::move(s));
    const std::string& t = tokens_.back();
    index_.emplace(t, id);
    max_token_len_ = std::max(max_token_len_, t.size());
}

void Vocabulary::rebuild_index() {
    index_.clear();
    max_token_len_ = 1;
    for (int id = kByteBase; id < size(); ++id) {
        // first writer wins so byte tokens keep priority over duplicates
        index_.emplace(tokens_[static_cast<size_t>(id)], id);
        max_token_len_ = std::max(max_token_len_, tokens_[static_cast<size_t>(id)].size());
    }
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    size_t i = 0;
    while (i < text.size()) {
        const size_t longest = std::min(max_token_len_, text.size() - i);
        int id = -1;
        size_t len = 1;
        for (size_t l = longest; l >= 1; --l) {
            auto it = index_.find(std::string(text.substr(i, l)));
            if (it != index_.end()) {
                id = it->second;
                len = l;
                break;
            }
        }
        if (id < 0) id = kByteBase + static_cast<unsigned char>(text[i]);
        out.push_back(id);
        i += len;
    }
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id >= 0 && id < kByteBase) continue;
        out += token(id);
    }
    return out;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write vocab file " + path);
    for (const auto& t : tokens_) out << escape_token(t) << "\n";
    if (!out) throw io_error("short write to " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open vocab file " + path);
    Vocabulary v;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        v.tokens_.push_back(unescape_token(line, line_no));
        ++line_no;
    }
    if (v.size() < kMinSize)
        throw format_error("vocab: file has " + std::to_string(v.size()) +
                           " tokens, need at least " + std::to_string(kMinSize));
    for (int i = 0; i < 4; ++i)
        if (v.tokens_[static_cast<size_t>(i)] != kSpecialNames[i])
            throw format_error("vocab: line " + std::to_string(i) + " must be " +
                               std::string(kSpecialNames[i]));
    for (int b = 0; b < 256; ++b)
        if (v.tokens_[static_cast<size_t>(kByteBase + b)] != std::string(1, static_cast<char>(b)))
            throw format_error("vocab: line " + std::to_string(kByteBase + b) +
                               " is not the expected byte token");
    v.rebuild_index();
    return v;
}

Vocabulary build_vocab(const std::string& corpus, int target_size) {
    if (corpus.empty()) throw data_error("build_vocab: empty corpus");
    if (target_size < Vocabulary::kMinSize)
        throw contract_error("build_vocab: target_size " + std::to_string(target_size) +
                             " below minimum " + std::to_string(Vocabulary::kMinSize));

    Vocabulary v = Vocabulary::byte_fallback();

    // Pieces are newline-separated so merges never span lines.
    std::vector<std::vector<int>> pieces;
    pieces.emplace_back();
    for (unsigned char c : corpus) {
        if (c == '\n') {
            if (!pieces.back().empty()) pieces.emplace_back();
        } else {
            pieces.back().push_back(Vocabulary::kByteBase + c);
        }
    }
    if (pieces.back().empty()) pieces.pop_back();

    while (v.size() < target_size) {
        std::map<std::pair<int, int>, int> counts;
        for (const auto& piece : pieces)
            for (size_t i = 0; i + 1 < piece.size(); ++i)
                ++counts[{piece[i], piece[i + 1]}];

        std::pair<int, int> best{-1, -1};
        int best_count = 1;  // a pair must occur at least twice to merge
        for (const auto& [pair, count] : counts) {
            if (count > best_count) {
                best = pair;
                best_count = count;
            }
        }
        if (best.first < 0) break;

        const int merged_id = v.size();
        v.append_token(v.token(best.first) + v.token(best.second));
        for (auto& piece : pieces) {
            size_t w = 0;
            for (size_t i = 0; i < piece.size();) {
                if (i + 1 < piece.size() && piece[i] == best.first && piece[i + 1] == best.second) {
                    piece[w++] = merged_id;
                    i += 2;
                } else {
                    piece[w++] = piece[i++];
                }
            }
            piece.resize(w);
        }
    }
    return v;
}

}  // namespace owlet
