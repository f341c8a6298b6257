// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <random>

#include "owlet/errors.h"
#include "owlet/vocab.h"

using namespace owlet;

TEST_CASE("build_vocab learns the most frequent pair first") {
    Vocabulary v = build_vocab("aaaa", 261);
    CHECK(v.size() == 261);
    CHECK(v.token(260) == "aa");
}

TEST_CASE("build_vocab contract errors") {
    CHECK_THROWS_AS((void)build_vocab("abc", 100), contract_error);
    CHECK_THROWS_AS((void)build_vocab("", 300), data_error);
}

TEST_CASE("encode/decode round-trips") {
    Vocabulary v = build_vocab("a red circle\na blue square\na red square", 280);
    const std::string s = "a red circle";
    CHECK(v.decode(v.encode(s)) == s);

    SUBCASE("random byte strings round-trip through byte fallback") {
        std::mt19937 rng(99);
        for (int trial = 0; trial < 1000; ++trial) {
            std::string text;
            const int len = 1 + static_cast<int>(rng() % 24);
            for (int i = 0; i < len; ++i) text += static_cast<char>(rng() % 256);
            CHECK(v.decode(v.encode(text)) == text);
        }
    }
}

TEST_CASE("encode never emits control ids") {
    Vocabulary v = Vocabulary::byte_fallback();
    for (int id : v.encode("<pad><s></s><image>")) CHECK(id >= Vocabulary::kByteBase);
}

TEST_CASE("vocab file round-trip preserves tokenization") {
    Vocabulary v = build_vocab("the owl saw the moon\nthe owl sat\n", 290);
    const char* path = "vocab_roundtrip_test.txt";
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    std::remove(path);

    CHECK(loaded.size() == v.size());
    std::mt19937 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        const int len = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < len; ++i) text += static_cast<char>(rng() % 256);
        CHECK(loaded.encode(text) == v.encode(text));
    }
    CHECK(loaded.encode("the owl") == v.encode("the owl"));
}
