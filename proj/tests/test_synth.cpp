// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "owlet/errors.h"
#include "owlet/manifest.h"
#include "owlet/synth.h"

using namespace owlet;
namespace fs = std::filesystem;

TEST_CASE("shapes dataset is deterministic by seed") {
    auto a = synth::synth_shapes_dataset(7, 1, 2);
    auto b = synth::synth_shapes_dataset(7, 1, 2);
    REQUIRE(a.size() == 1);
    CHECK(a[0].caption == b[0].caption);
    CHECK(a[0].image.inline_image->rgb == b[0].image.inline_image->rgb);
}

TEST_CASE("one-object caption follows the generator contract") {
    for (int i = 0; i < 50; ++i) {
        const synth::Scene s = synth::scene_for(3, static_cast<std::uint64_t>(i), 2, 1);
        const std::string cap = synth::caption_for(s);
        const std::string expected = std::string("a ") + synth::color_name(s.objects[0].color) +
                                     " " + synth::shape_name(s.objects[0].shape);
        CHECK(cap == expected);
    }
}

TEST_CASE("10k samples cover all nine color-shape pairs") {
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < 10000; ++i) {
        const synth::Scene s = synth::scene_for(11, static_cast<std::uint64_t>(i), 2);
        for (const auto& o : s.objects)
            seen.insert({static_cast<int>(o.color), static_cast<int>(o.shape)});
    }
    CHECK(seen.size() == 9);
}

TEST_CASE("caption is a pure function of the object list") {
    for (int i = 0; i < 200; ++i) {
        const synth::Scene s = synth::scene_for(5, static_cast<std::uint64_t>(i), 3);
        synth::Scene copy = s;  // regenerate from the metadata alone
        CHECK(synth::caption_for(copy) == synth::caption_for(s));
        const ImageTensor img1 = synth::render_scene(s, 32);
        const ImageTensor img2 = synth::render_scene(copy, 32);
        CHECK(img1.rgb == img2.rgb);
    }
}

TEST_CASE("grid precondition") {
    CHECK_THROWS_AS((void)synth::synth_shapes_dataset(1, 1, 4), contract_error);
    CHECK_THROWS_AS((void)synth::synth_shapes_dataset(1, 0, 2), contract_error);
}

TEST_CASE("instruction mix of 0.5 over 1000 gives exactly 500 text records") {
    auto records = synth::synth_instruction_dataset(9, 1000, 0.5, 2);
    int text = 0;
    for (const auto& r : records) text += r.modality == Modality::text_only ? 1 : 0;
    CHECK(text == 500);
}

TEST_CASE("every multimodal record carries an image and a grounded answer") {
    auto samples = synth::synth_instruction_samples(21, 100, 0.5, 2);
    int checked = 0;
    for (const auto& s : samples) {
        if (s.record.modality != Modality::multimodal) continue;
        REQUIRE(s.record.image.has_value());
        CHECK(s.record.image->inline_image.has_value());
        REQUIRE(s.has_scene);

        // Verify the answer against the scene the generator drew.
        const std::string& q = s.record.turns[0].text;
        const std::string& a = s.record.turns[1].text;
        const synth::SceneObject& o = s.scene.objects[0];
        if (q == "what is in the image?") {
            CHECK(a == synth::caption_for(s.scene));
        } else if (q.rfind("what color is the ", 0) == 0) {
            CHECK(a == synth::color_name(o.color));
        } else if (q.rfind("what shape is the ", 0) == 0) {
            CHECK(a == synth::shape_name(o.shape));
        } else if (q == "how many objects are in the image?") {
            CHECK(a == (s.scene.objects.size() == 1 ? "one" : "two"));
        } else {
            FAIL("unknown question template: ", q);
        }
        ++checked;
    }
    CHECK(checked >= 40);
}

TEST_CASE("ppm round-trip of synth images is lossless") {
    const synth::Scene s = synth::scene_for(13, 4, 2);
    const ImageTensor img = synth::render_scene(s, 32);
    const std::string path = "synth_roundtrip_test.ppm";
    write_ppm(path, img);
    const ImageTensor back = read_image(path);
    fs::remove(path);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("rfg round-trip is exact") {
    ImageTensor img{2, 3, std::vector<float>(18)};
    for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<float>(i) / 17.0f;
    const std::string path = "rfg_roundtrip_test.rfg";
    write_rfg(path, img);
    const ImageTensor back = read_image(path);
    fs::remove(path);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("manifest loading") {
    const fs::path dir = fs::temp_directory_path() / "owlet_manifest_test";
    fs::remove_all(dir);

    SUBCASE("valid caption manifest loads both records") {
        auto records = synth::synth_shapes_dataset(3, 2, 2);
        save_caption_manifest(dir.string(), "captions.jsonl", records);
        ManifestData data = load_manifest((dir / "captions.jsonl").string());
        CHECK(data.captions.size() == 2);
        CHECK(data.captions[0].caption == records[0].caption);
        CHECK(data.captions[0].image.inline_image->rgb == records[0].image.inline_image->rgb);
    }

    SUBCASE("missing caption field cites line 1") {
        fs::create_directories(dir);
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"image": "images/img_000000.ppm"})" << "\n";
        out.close();
        try {
            (void)load_manifest((dir / "bad.jsonl").string());
            FAIL("expected data_error");
        } catch (const data_error& e) {
            CHECK(std::string(e.what()).find("line 1") != std::string::npos);
        }
    }

    SUBCASE("non-alternating roles are rejected") {
        fs::create_directories(dir);
        std::ofstream out(dir / "roles.jsonl");
        out << R"({"turns": [{"role": "assistant", "text": "hi"}]})" << "\n";
        out.close();
        CHECK_THROWS_AS((void)load_manifest((dir / "roles.jsonl").string()), data_error);
    }

    SUBCASE("conversation manifest round-trips") {
        auto records = synth::synth_instruction_dataset(17, 6, 0.5, 2);
        save_conversation_manifest(dir.string(), "instr.jsonl", records);
        ManifestData data = load_manifest((dir / "instr.jsonl").string());
        REQUIRE(data.conversations.size() == 6);
        for (size_t i = 0; i < 6; ++i) {
            CHECK(data.conversations[i].turns.size() == records[i].turns.size());
            CHECK(data.conversations[i].modality == records[i].modality);
        }
    }

    fs::remove_all(dir);
}
