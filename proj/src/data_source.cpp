#include "cct/data_source.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cct/rng.hpp"

namespace cct {

namespace {

Vector random_unit_vector(std::size_t dim, Rng& rng) {
    Vector v(dim);
    double n = 0.0;
    do {
        for (double& x : v) x = rng.next_gaussian();
        n = norm(v);
    } while (n < 1e-12);
    for (double& x : v) x /= n;
    return v;
}

// unit vectors with pairwise |cos| < 0.5, rejection-sampled
std::vector<Vector> sample_concept_directions(std::size_t k, std::size_t dim, Rng& rng) {
    std::vector<Vector> dirs;
    dirs.reserve(k);
    std::size_t attempts = 0;
    while (dirs.size() < k) {
        if (++attempts > 10000) {
            throw ConfigError("generate_spec: could not place " + std::to_string(k) +
                              " directions with pairwise |cos| < 0.5 in dimension " +
                              std::to_string(dim));
        }
        Vector cand = random_unit_vector(dim, rng);
        bool ok = true;
        for (const Vector& d : dirs) {
            if (std::abs(dot(cand, d)) >= 0.5) {
                ok = false;
                break;
            }
        }
        if (ok) dirs.push_back(std::move(cand));
    }
    return dirs;
}

// orthonormal basis of the complement of span{dirs} via Gram-Schmidt over
// random seeds
std::vector<Vector> complement_basis(const std::vector<Vector>& dirs, std::size_t dim,
                                     std::size_t count, Rng& rng) {
    std::vector<Vector> basis;
    std::vector<Vector> span = dirs;  // orthogonalized copy of the concept span
    std::vector<Vector> ortho_span;
    for (const Vector& d : span) {
        Vector w = d;
        for (const Vector& q : ortho_span) {
            const double c = dot(w, q);
            for (std::size_t i = 0; i < dim; ++i) w[i] -= c * q[i];
        }
        const double n = norm(w);
        if (n > 1e-10) {
            for (double& x : w) x /= n;
            ortho_span.push_back(std::move(w));
        }
    }
    std::size_t attempts = 0;
    while (basis.size() < count) {
        if (++attempts > 10000) {
            throw ConfigError("generate_spec: text dimension too small for a foreign subspace");
        }
        Vector w = random_unit_vector(dim, rng);
        for (const Vector& q : ortho_span) {
            const double c = dot(w, q);
            for (std::size_t i = 0; i < dim; ++i) w[i] -= c * q[i];
        }
        for (const Vector& q : basis) {
            const double c = dot(w, q);
            for (std::size_t i = 0; i < dim; ++i) w[i] -= c * q[i];
        }
        const double n = norm(w);
        if (n > 1e-6) {
            for (double& x : w) x /= n;
            basis.push_back(std::move(w));
        }
    }
    return basis;
}

nlohmann::json record_to_json(const PairRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["img"] = r.raw_img;
    j["txt"] = r.raw_txt;
    if (r.diag_label) {
        j["label"] = *r.diag_label;
    } else {
        j["label"] = nullptr;
    }
    return j;
}

PairRecord record_from_json(const nlohmann::json& j, long line) {
    PairRecord r;
    try {
        r.id = j.at("id").get<std::int64_t>();
        r.raw_img = j.at("img").get<Vector>();
        r.raw_txt = j.at("txt").get<Vector>();
        if (j.contains("label") && !j.at("label").is_null()) {
            r.diag_label = j.at("label").get<std::int32_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("jsonl record: ") + e.what(), line);
    }
    check_finite(r.raw_img, "jsonl img");
    check_finite(r.raw_txt, "jsonl txt");
    return r;
}

PairRecord strip(PairRecord r) {
    r.diag_label.reset();
    return r;
}

}  // namespace

SyntheticCorpusSpec generate_spec(std::uint64_t seed, const SyntheticSpecParams& params) {
    if (params.n_concepts < 2) throw ConfigError("generate_spec: need at least 2 concepts");
    if (params.clean_fraction < 0.0 || params.distractor_fraction < 0.0 ||
        params.foreign_fraction < 0.0) {
        throw ConfigError("generate_spec: fractions must be nonnegative");
    }
    const double sum =
        params.clean_fraction + params.distractor_fraction + params.foreign_fraction;
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ConfigError("generate_spec: fractions must sum to 1, got " + std::to_string(sum));
    }
    if (params.prompts_per_concept == 0) {
        throw ConfigError("generate_spec: prompts_per_concept must be >= 1");
    }

    Rng rng(seed, /*stream=*/0x73706563ULL);
    SyntheticCorpusSpec spec;
    spec.n_concepts = params.n_concepts;
    spec.raw_img_dim = params.raw_img_dim;
    spec.raw_txt_dim = params.raw_txt_dim;
    spec.clean_fraction = params.clean_fraction;
    spec.distractor_fraction = params.distractor_fraction;
    spec.foreign_fraction = params.foreign_fraction;
    spec.noise_sigma = params.noise_sigma;
    spec.distractor_txt_scale = params.distractor_txt_scale;
    spec.stream_seed = seed;

    spec.image_concepts = sample_concept_directions(params.n_concepts, params.raw_img_dim, rng);
    spec.text_concepts = sample_concept_directions(params.n_concepts, params.raw_txt_dim, rng);

    spec.prompt_offsets.resize(params.n_concepts);
    for (std::size_t c = 0; c < params.n_concepts; ++c) {
        auto& offsets = spec.prompt_offsets[c];
        offsets.emplace_back(params.raw_txt_dim, 0.0);  // first prompt is the bare direction
        for (std::size_t p = 1; p < params.prompts_per_concept; ++p) {
            Vector off(params.raw_txt_dim);
            for (double& x : off) x = params.prompt_sigma * rng.next_gaussian();
            offsets.push_back(std::move(off));
        }
    }

    if (params.foreign_fraction > 0.0) {
        if (params.raw_txt_dim <= params.n_concepts) {
            throw ConfigError(
                "generate_spec: foreign fraction requires raw_txt_dim > n_concepts");
        }
        const std::size_t basis_size =
            std::min<std::size_t>(params.raw_txt_dim - params.n_concepts, 8);
        spec.foreign_basis =
            complement_basis(spec.text_concepts, params.raw_txt_dim, basis_size, rng);
    }
    return spec;
}

PairRecord synthetic_record(const SyntheticCorpusSpec& spec, std::int64_t id) {
    Rng rng(spec.stream_seed, 0x7265636fULL + static_cast<std::uint64_t>(id));
    PairRecord rec;
    rec.id = id;
    rec.raw_img.assign(spec.raw_img_dim, 0.0);
    rec.raw_txt.assign(spec.raw_txt_dim, 0.0);

    const double u = rng.next_double();
    if (u < spec.clean_fraction) {
        const std::size_t c = rng.next_index(spec.n_concepts);
        rec.diag_label = static_cast<std::int32_t>(c);
        rec.raw_img = spec.image_concepts[c];
        rec.raw_txt = spec.text_concepts[c];
    } else if (u < spec.clean_fraction + spec.distractor_fraction) {
        rec.diag_label = kDistractorLabel;
        rec.raw_img = random_unit_vector(spec.raw_img_dim, rng);
        Vector txt_dir = random_unit_vector(spec.raw_txt_dim, rng);
        for (std::size_t i = 0; i < spec.raw_txt_dim; ++i) {
            rec.raw_txt[i] = spec.distractor_txt_scale * txt_dir[i];
        }
    } else {
        rec.diag_label = kForeignLabel;
        rec.raw_img = random_unit_vector(spec.raw_img_dim, rng);
        Vector coeffs(spec.foreign_basis.size());
        double cn = 0.0;
        for (double& x : coeffs) {
            x = rng.next_gaussian();
            cn += x * x;
        }
        cn = std::sqrt(std::max(cn, 1e-24));
        for (std::size_t b = 0; b < spec.foreign_basis.size(); ++b) {
            for (std::size_t i = 0; i < spec.raw_txt_dim; ++i) {
                rec.raw_txt[i] += (coeffs[b] / cn) * spec.foreign_basis[b][i];
            }
        }
    }
    for (double& x : rec.raw_img) x += spec.noise_sigma * rng.next_gaussian();
    for (double& x : rec.raw_txt) x += spec.noise_sigma * rng.next_gaussian();
    return rec;
}

Stream Stream::synthetic(SyntheticCorpusSpec spec) {
    Stream s;
    s.spec_ = std::move(spec);
    return s;
}

Stream Stream::from_jsonl(const std::string& path, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw IoError("read_stream: cannot open " + path);

    Stream s;
    s.seed_ = seed;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("jsonl: invalid JSON", line_no);
        s.file_records_.push_back(record_from_json(j, line_no));
    }
    if (s.file_records_.empty()) throw EmptySourceError("read_stream: " + path + " is empty");
    for (std::size_t i = 0; i < s.file_records_.size(); ++i) {
        s.index_by_id_[s.file_records_[i].id] = i;
    }
    s.reshuffle();
    return s;
}

void Stream::reshuffle() {
    order_.resize(file_records_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(seed_, 0x65706f6368ULL + epochs_);
    // Fisher-Yates with the portable uniform draw
    for (std::size_t i = order_.size(); i > 1; --i) {
        const std::size_t j = rng.next_index(i);
        std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
}

PairRecord Stream::record_at_cursor() {
    if (spec_) {
        PairRecord r = synthetic_record(*spec_, cursor_);
        ++cursor_;
        return r;
    }
    if (pos_ >= order_.size()) {
        ++epochs_;
        reshuffle();
    }
    return file_records_[order_[pos_++]];
}

std::vector<PairRecord> Stream::next_raw_batch(std::size_t n) {
    if (n == 0) throw ConfigError("next_raw_batch: n must be >= 1");
    std::vector<PairRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(strip(record_at_cursor()));
    raw_seen_ += static_cast<std::int64_t>(n);
    return out;
}

TextBatch Stream::next_text_batch(std::size_t n) {
    if (n == 0) throw ConfigError("next_text_batch: n must be >= 1");
    TextBatch batch;
    batch.ids.reserve(n);
    std::size_t txt_dim = 0;
    std::vector<double> data;
    for (std::size_t i = 0; i < n; ++i) {
        PairRecord r = record_at_cursor();
        if (i == 0) {
            txt_dim = r.raw_txt.size();
            data.reserve(n * txt_dim);
        }
        if (r.raw_txt.size() != txt_dim) {
            throw ShapeError("next_text_batch: inconsistent text dimension in source");
        }
        batch.ids.push_back(r.id);
        data.insert(data.end(), r.raw_txt.begin(), r.raw_txt.end());
    }
    raw_seen_ += static_cast<std::int64_t>(n);
    batch.texts = Matrix(n, txt_dim, std::move(data));
    return batch;
}

std::vector<PairRecord> Stream::fetch_records(std::span<const std::int64_t> ids) const {
    std::vector<PairRecord> out;
    out.reserve(ids.size());
    for (std::int64_t id : ids) {
        if (spec_) {
            out.push_back(strip(synthetic_record(*spec_, id)));
        } else {
            auto it = index_by_id_.find(id);
            if (it == index_by_id_.end()) {
                throw ConfigError("fetch_records: unknown id " + std::to_string(id));
            }
            out.push_back(strip(file_records_[it->second]));
        }
    }
    return out;
}

std::optional<std::int32_t> Stream::diagnostic_label(std::int64_t id) const {
    if (spec_) return synthetic_record(*spec_, id).diag_label;
    auto it = index_by_id_.find(id);
    if (it == index_by_id_.end()) return std::nullopt;
    return file_records_[it->second].diag_label;
}

void write_jsonl(const std::string& path, std::span<const PairRecord> records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("write_jsonl: cannot open " + path + " for writing");
    for (const PairRecord& r : records) {
        out << record_to_json(r).dump() << '\n';
    }
    if (!out) throw IoError("write_jsonl: write failed for " + path);
}

Stream read_stream(const std::string& path, std::uint64_t seed) {
    return Stream::from_jsonl(path, seed);
}

}  // namespace cct
