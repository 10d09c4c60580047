#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "cct/data_source.hpp"
#include "cct/rng.hpp"
#include "support/oracles.hpp"

using namespace cct;

namespace {

SyntheticSpecParams small_params() {
    SyntheticSpecParams p;
    p.n_concepts = 4;
    p.raw_img_dim = 32;
    p.raw_txt_dim = 32;
    p.clean_fraction = 0.3;
    p.distractor_fraction = 0.5;
    p.foreign_fraction = 0.2;
    p.noise_sigma = 0.1;
    return p;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("data_source");

TEST_CASE("generate_spec places well-separated unit directions") {
    const SyntheticCorpusSpec spec = generate_spec(5, small_params());
    REQUIRE(spec.image_concepts.size() == 4);
    for (std::size_t a = 0; a < 4; ++a) {
        CHECK(norm(spec.image_concepts[a]) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(norm(spec.text_concepts[a]) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t b = a + 1; b < 4; ++b) {
            CHECK(std::abs(dot(spec.image_concepts[a], spec.image_concepts[b])) < 0.5);
            CHECK(std::abs(dot(spec.text_concepts[a], spec.text_concepts[b])) < 0.5);
        }
    }
}

TEST_CASE("generate_spec is deterministic per seed") {
    const SyntheticCorpusSpec a = generate_spec(9, small_params());
    const SyntheticCorpusSpec b = generate_spec(9, small_params());
    CHECK(a.image_concepts == b.image_concepts);
    CHECK(a.text_concepts == b.text_concepts);
    CHECK(a.prompt_offsets == b.prompt_offsets);
    CHECK(a.foreign_basis == b.foreign_basis);
}

TEST_CASE("generate_spec validates fractions and feasibility") {
    SyntheticSpecParams bad = small_params();
    bad.foreign_fraction = 0.4;  // sums to 1.2
    CHECK_THROWS_AS(generate_spec(1, bad), ConfigError);

    SyntheticSpecParams ok = small_params();
    ok.clean_fraction = 0.2;
    ok.distractor_fraction = 0.5;
    ok.foreign_fraction = 0.3;
    CHECK_NOTHROW(generate_spec(1, ok));

    SyntheticSpecParams cramped = small_params();
    cramped.n_concepts = 40;
    cramped.raw_img_dim = 2;
    cramped.raw_txt_dim = 64;
    CHECK_THROWS_AS(generate_spec(1, cramped), ConfigError);
}

TEST_CASE("zero-noise clean records reproduce their concept directions") {
    SyntheticSpecParams p = small_params();
    p.clean_fraction = 1.0;
    p.distractor_fraction = 0.0;
    p.foreign_fraction = 0.0;
    p.noise_sigma = 0.0;
    const SyntheticCorpusSpec spec = generate_spec(13, p);
    for (std::int64_t id = 0; id < 50; ++id) {
        const PairRecord rec = synthetic_record(spec, id);
        REQUIRE(rec.diag_label.has_value());
        const auto c = static_cast<std::size_t>(*rec.diag_label);
        CHECK(rec.raw_txt == spec.text_concepts[c]);
        CHECK(rec.raw_img == spec.image_concepts[c]);
    }
}

TEST_CASE("category fractions are matched empirically") {
    const SyntheticCorpusSpec spec = generate_spec(17, small_params());
    std::size_t clean = 0, distractor = 0, foreign = 0;
    const std::size_t n = 10000;
    for (std::size_t id = 0; id < n; ++id) {
        const PairRecord rec = synthetic_record(spec, static_cast<std::int64_t>(id));
        if (*rec.diag_label >= 0) {
            ++clean;
        } else if (*rec.diag_label == kDistractorLabel) {
            ++distractor;
        } else {
            ++foreign;
        }
    }
    CHECK(std::abs(static_cast<double>(clean) / n - 0.3) < 0.02);
    CHECK(std::abs(static_cast<double>(distractor) / n - 0.5) < 0.02);
    CHECK(std::abs(static_cast<double>(foreign) / n - 0.2) < 0.02);
}

TEST_CASE("foreign texts are orthogonal to every concept at zero noise") {
    SyntheticSpecParams p = small_params();
    p.clean_fraction = 0.0;
    p.distractor_fraction = 0.0;
    p.foreign_fraction = 1.0;
    p.noise_sigma = 0.0;
    const SyntheticCorpusSpec spec = generate_spec(19, p);
    for (std::int64_t id = 0; id < 100; ++id) {
        const PairRecord rec = synthetic_record(spec, id);
        CHECK(*rec.diag_label == kForeignLabel);
        for (const Vector& v : spec.text_concepts) {
            const double cos = dot(rec.raw_txt, v) / norm(rec.raw_txt);
            CHECK(std::abs(cos) < 0.05);
        }
    }
}

TEST_CASE("distractor text magnitude scales with the spec knob") {
    SyntheticSpecParams p = small_params();
    p.clean_fraction = 0.0;
    p.distractor_fraction = 1.0;
    p.foreign_fraction = 0.0;
    p.noise_sigma = 0.0;
    p.distractor_txt_scale = 1000.0;
    const SyntheticCorpusSpec spec = generate_spec(23, p);
    const PairRecord rec = synthetic_record(spec, 0);
    CHECK(norm(rec.raw_txt) == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("streams with the same seed emit the same ids and strip labels") {
    const SyntheticCorpusSpec spec = generate_spec(29, small_params());
    Stream a = Stream::synthetic(spec);
    Stream b = Stream::synthetic(spec);
    const auto batch_a = a.next_raw_batch(16);
    const auto batch_b = b.next_raw_batch(16);
    REQUIRE(batch_a.size() == 16);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(batch_a[i].id == batch_b[i].id);
        CHECK(batch_a[i].raw_txt == batch_b[i].raw_txt);
        CHECK_FALSE(batch_a[i].diag_label.has_value());
    }
    CHECK(a.raw_seen() == 16);

    // text view shares the cursor and fetch rebuilds identical records
    Stream c = Stream::synthetic(spec);
    const TextBatch view = c.next_text_batch(16);
    CHECK(view.ids == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
    const auto fetched = c.fetch_records(view.ids);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(fetched[i].raw_img == batch_a[i].raw_img);
        CHECK_FALSE(fetched[i].diag_label.has_value());
    }
    CHECK(c.diagnostic_label(0).has_value());
}

TEST_CASE("jsonl round-trip is value-exact") {
    const SyntheticCorpusSpec spec = generate_spec(31, small_params());
    std::vector<PairRecord> records;
    for (std::int64_t id = 0; id < 100; ++id) records.push_back(synthetic_record(spec, id));

    const std::string path = temp_path("cct_roundtrip.jsonl");
    write_jsonl(path, records);
    Stream stream = read_stream(path, 1);

    for (const PairRecord& rec : records) {
        const auto fetched = stream.fetch_records(std::vector<std::int64_t>{rec.id});
        CHECK(fetched[0].raw_img == rec.raw_img);
        CHECK(fetched[0].raw_txt == rec.raw_txt);
        CHECK(stream.diagnostic_label(rec.id) == rec.diag_label);
    }
    std::filesystem::remove(path);
}

TEST_CASE("malformed and empty jsonl sources are rejected") {
    const std::string path = temp_path("cct_malformed.jsonl");
    {
        std::ofstream out(path);
        out << "{\n";
    }
    try {
        read_stream(path, 1);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 1);
    }

    {
        std::ofstream out(path, std::ios::trunc);
    }
    CHECK_THROWS_AS(read_stream(path, 1), EmptySourceError);
    std::filesystem::remove(path);
}

TEST_CASE("cyclic reads reshuffle per epoch") {
    const SyntheticCorpusSpec spec = generate_spec(37, small_params());
    std::vector<PairRecord> records;
    for (std::int64_t id = 0; id < 7; ++id) records.push_back(synthetic_record(spec, id));
    const std::string path = temp_path("cct_cyclic.jsonl");
    write_jsonl(path, records);

    Stream stream = read_stream(path, 99);
    std::vector<std::vector<std::int64_t>> epochs;
    for (int e = 0; e < 3; ++e) {
        std::vector<std::int64_t> ids;
        for (const PairRecord& r : stream.next_raw_batch(7)) ids.push_back(r.id);
        epochs.push_back(ids);
    }
    CHECK(stream.epochs_completed() == 2);

    const std::vector<std::int64_t> expected{0, 1, 2, 3, 4, 5, 6};
    for (auto epoch : epochs) {
        std::sort(epoch.begin(), epoch.end());
        CHECK(epoch == expected);  // each epoch is a permutation of the ids
    }
    CHECK(epochs[0] != epochs[1]);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
