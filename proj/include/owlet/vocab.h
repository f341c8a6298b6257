// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace owlet {

// Byte-fallback BPE vocabulary. Ids 0..3 are the reserved control tokens,
// ids 4..259 the 256 raw bytes, ids 260+ learned merges. encode() never
// emits a control id; those are inserted programmatically by the renderer.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kImage = 3;
    static constexpr int kByteBase = 4;
    static constexpr int kMinSize = 260;  // 4 specials + 256 bytes

    // Specials plus raw bytes, no merges.
    static Vocabulary byte_fallback();

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int id) const;

    // Greedy leftmost-longest match over the token set; byte fallback means
    // any byte string encodes. Control tokens are never produced.
    std::vector<int> encode(std::string_view text) const;

    // Concatenates token byte strings; control ids decode to nothing.
    std::string decode(const std::vector<int>& ids) const;

    // One token per line, id = line number. Nonprintable bytes are escaped
    // (\\, \n, \r, \t, \xHH) so the file stays line-delimited.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    friend Vocabulary build_vocab(const std::string& corpus, int target_size);
    void append_token(std::string s);
    void rebuild_index();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;  // non-special tokens only
    size_t max_token_len_ = 1;
};

// Deterministic greedy pair-merge BPE: repeatedly merge the most frequent
// adjacent pair (ties broken by lowest id pair) until target_size is reached
// or no pair occurs twice. Merges never cross newline boundaries.
Vocabulary build_vocab(const std::string& corpus, int target_size);

}  // namespace owlet
