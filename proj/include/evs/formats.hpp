#pragma once

// Persistence for logits (EVSL1 binary), vocabularies (one token per line),
// verbalizers and search configs (JSON).
//
// EVSL1 layout:
//   "EVSL1\n"                      6 bytes
//   header_len                     u64 little-endian
//   header                         UTF-8 JSON, header_len bytes
//   payload                        f32 little-endian, row-major [num_instances x vocab_size]

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evs/errors.hpp"
#include "evs/evolution.hpp"
#include "evs/types.hpp"

namespace evs {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kLogitMagic{"EVSL1\n", 6};
inline constexpr std::uint64_t kDefaultPayloadCap = std::uint64_t{8} << 30;

struct ReadOptions {
    std::uint64_t payload_cap = kDefaultPayloadCap;
    std::uint64_t header_cap = std::uint64_t{1} << 30;
    double row_sum_tolerance = kRowSumTolerance;
};

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
    return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

/// Reads up to n bytes; returns how many arrived.
inline std::uint64_t read_some(std::istream& in, char* dst, std::uint64_t n) {
    in.read(dst, static_cast<std::streamsize>(n));
    return static_cast<std::uint64_t>(in.gcount());
}

inline std::uint64_t header_count(const json& header, const char* key) {
    auto it = header.find(key);
    if (it == header.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw HeaderError(std::string("header field '") + key + "' must be a non-negative integer");
    }
    return it->get<std::uint64_t>();
}

inline void expect_literal(const json& header, const char* key, const char* literal) {
    auto it = header.find(key);
    if (it == header.end() || !it->is_string() || it->get<std::string>() != literal) {
        throw HeaderError(std::string("header field '") + key + "' must be \"" + literal + "\"");
    }
}

} // namespace detail

/// Serializes `logits`; returns the number of bytes written.
inline std::uint64_t write_logits(const LogitSet& logits, std::ostream& sink) {
    json header;
    header["num_instances"] = logits.num_instances();
    header["vocab_size"] = logits.vocab_size();
    header["num_labels"] = logits.num_labels;
    header["labels"] = logits.labels;
    header["dtype"] = "f32";
    header["layout"] = "row-major";
    const std::string header_text = header.dump();

    std::string head(kLogitMagic);
    detail::put_u64_le(head, header_text.size());
    head += header_text;

    std::string payload;
    payload.reserve(logits.probs.size() * 4);
    for (float f : logits.probs.data()) detail::put_u32_le(payload, std::bit_cast<std::uint32_t>(f));

    sink.write(head.data(), static_cast<std::streamsize>(head.size()));
    sink.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    sink.flush();
    if (!sink) throw IoError("failed writing logits");
    return head.size() + payload.size();
}

/// Parses and validates an EVSL1 stream.
inline LogitSet read_logits(std::istream& source, const ReadOptions& options = {}) {
    std::array<char, 6> magic{};
    const auto got = detail::read_some(source, magic.data(), magic.size());
    if (std::memcmp(magic.data(), kLogitMagic.data(), got) != 0 || got == 0) throw BadMagicError();
    if (got < magic.size()) throw TruncatedError("magic", magic.size(), got);

    std::array<unsigned char, 8> len_bytes{};
    const auto len_got = detail::read_some(source, reinterpret_cast<char*>(len_bytes.data()), 8);
    if (len_got < 8) throw TruncatedError("header length", 8, len_got);
    const std::uint64_t header_len = detail::get_u64_le(len_bytes.data());
    if (header_len > options.header_cap) {
        throw PayloadCapError("header length " + std::to_string(header_len) + " exceeds cap " +
                              std::to_string(options.header_cap));
    }

    std::string header_text(header_len, '\0');
    const auto header_got = detail::read_some(source, header_text.data(), header_len);
    if (header_got < header_len) throw TruncatedError("header", header_len, header_got);

    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::parse_error& e) {
        throw HeaderError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw HeaderError("header must be a JSON object");
    const std::uint64_t n = detail::header_count(header, "num_instances");
    const std::uint64_t v = detail::header_count(header, "vocab_size");
    const std::uint64_t num_labels = detail::header_count(header, "num_labels");
    detail::expect_literal(header, "dtype", "f32");
    detail::expect_literal(header, "layout", "row-major");
    auto labels_it = header.find("labels");
    if (labels_it == header.end() || !labels_it->is_array()) throw HeaderError("header field 'labels' must be an array");
    if (labels_it->size() != n) throw LabelCountError(labels_it->size(), n);

    std::vector<std::size_t> labels;
    labels.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = (*labels_it)[i];
        if (!l.is_number_integer()) throw HeaderError("label " + std::to_string(i) + " is not an integer");
        const auto value = l.get<std::int64_t>();
        if (value < 0 || static_cast<std::uint64_t>(value) >= num_labels) {
            throw LabelRangeError(i, value, num_labels);
        }
        labels.push_back(static_cast<std::size_t>(value));
    }

    if (v != 0 && n > std::numeric_limits<std::uint64_t>::max() / v / 4) {
        throw PayloadCapError("payload size overflows 64 bits");
    }
    const std::uint64_t payload_len = n * v * 4;
    if (payload_len > options.payload_cap) {
        throw PayloadCapError("payload of " + std::to_string(payload_len) + " bytes exceeds cap " +
                              std::to_string(options.payload_cap));
    }
    std::vector<unsigned char> payload(payload_len);
    const auto payload_got = detail::read_some(source, reinterpret_cast<char*>(payload.data()), payload_len);
    if (payload_got < payload_len) throw TruncatedError("payload", payload_len, payload_got);

    std::vector<float> values(n * v);
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = std::bit_cast<float>(detail::get_u32_le(payload.data() + 4 * i));
    }

    LogitSet out{static_cast<std::size_t>(num_labels), Matrix<float>(n, v, std::move(values)), std::move(labels)};
    out.validate(options.row_sum_tolerance);
    return out;
}

inline std::uint64_t write_logits_file(const LogitSet& logits, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    return write_logits(logits, out);
}

inline LogitSet read_logits_file(const std::filesystem::path& path, const ReadOptions& options = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_logits(in, options);
}

// ---- vocabulary ----------------------------------------------------------

inline Vocabulary read_vocab(std::istream& source) {
    Vocabulary vocab;
    std::string line;
    while (std::getline(source, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        vocab.tokens.push_back(std::move(line));
        line.clear();
    }
    if (vocab.tokens.empty()) throw ValidationError("vocabulary file is empty");
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
        if (vocab.tokens[i].empty()) throw ValidationError("vocabulary line " + std::to_string(i + 1) + " is empty");
    }
    return vocab;
}

inline void write_vocab(const Vocabulary& vocab, std::ostream& sink) {
    for (const auto& t : vocab.tokens) sink << t << '\n';
    if (!sink) throw IoError("failed writing vocabulary");
}

inline Vocabulary read_vocab_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_vocab(in);
}

inline void write_vocab_file(const Vocabulary& vocab, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_vocab(vocab, out);
}

// ---- config --------------------------------------------------------------

inline json config_to_json(const EvolutionConfig& c) {
    json j;
    j["population_size"] = c.population_size;
    j["max_iterations"] = c.max_iterations;
    j["crossover_prob"] = c.crossover_prob;
    j["mutation_prob"] = c.mutation_prob;
    j["n_candidates"] = c.n_candidates;
    j["n_label_words"] = c.n_label_words;
    j["seed"] = c.seed;
    j["mutation_strategy"] = to_string(c.mutation_strategy);
    return j;
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline EvolutionConfig config_from_json(const json& j, EvolutionConfig base = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    auto count = [](const json& v, const std::string& key) -> std::size_t {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            throw ConfigError("config field '" + key + "' must be a non-negative integer");
        }
        return v.get<std::size_t>();
    };
    auto real = [](const json& v, const std::string& key) -> double {
        if (!v.is_number()) throw ConfigError("config field '" + key + "' must be a number");
        return v.get<double>();
    };
    for (const auto& [key, value] : j.items()) {
        if (key == "population_size") base.population_size = count(value, key);
        else if (key == "max_iterations") base.max_iterations = count(value, key);
        else if (key == "crossover_prob") base.crossover_prob = real(value, key);
        else if (key == "mutation_prob") base.mutation_prob = real(value, key);
        else if (key == "n_candidates") base.n_candidates = count(value, key);
        else if (key == "n_label_words") base.n_label_words = count(value, key);
        else if (key == "seed") base.seed = static_cast<std::uint64_t>(count(value, key));
        else if (key == "mutation_strategy") {
            if (!value.is_string()) throw ConfigError("config field 'mutation_strategy' must be a string");
            base.mutation_strategy = parse_mutation_strategy(value.get<std::string>());
        } else {
            throw ConfigError("unknown config field '" + key + "'");
        }
    }
    return base;
}

inline EvolutionConfig read_config_file(const std::filesystem::path& path, EvolutionConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j, base);
}

// ---- verbalizer ----------------------------------------------------------

/// A verbalizer plus the provenance written alongside it.
struct VerbalizerDocument {
    Verbalizer verbalizer;
    double fitness = 0.0;
    json config = json::object();
    std::uint64_t seed = 0;
};

inline json verbalizer_to_json(const Verbalizer& v) {
    json labels = json::array();
    for (std::size_t l = 0; l < v.labels.size(); ++l) {
        json words = json::array();
        json ids = json::array();
        for (const auto& w : v.labels[l]) {
            words.push_back(w.token);
            ids.push_back(w.vocab_id);
        }
        json entry;
        entry["label"] = l;
        entry["words"] = std::move(words);
        entry["vocab_ids"] = std::move(ids);
        labels.push_back(std::move(entry));
    }
    return labels;
}

inline json document_to_json(const VerbalizerDocument& doc) {
    json j;
    j["labels"] = verbalizer_to_json(doc.verbalizer);
    j["fitness"] = doc.fitness;
    j["config"] = doc.config;
    j["seed"] = doc.seed;
    return j;
}

inline Verbalizer verbalizer_from_json(const json& labels) {
    if (!labels.is_array()) throw ValidationError("verbalizer 'labels' must be an array");
    Verbalizer v;
    v.labels.resize(labels.size());
    std::vector<bool> filled(labels.size(), false);
    for (const auto& entry : labels) {
        try {
            const auto label = entry.at("label").get<std::size_t>();
            const auto& words = entry.at("words");
            const auto& ids = entry.at("vocab_ids");
            if (label >= labels.size() || filled[label]) {
                throw ValidationError("verbalizer label index " + std::to_string(label) + " is out of range or repeated");
            }
            if (!words.is_array() || !ids.is_array() || words.size() != ids.size()) {
                throw ValidationError("verbalizer label " + std::to_string(label) +
                                      " has mismatched 'words' and 'vocab_ids'");
            }
            for (std::size_t k = 0; k < ids.size(); ++k) {
                v.labels[label].push_back({ids[k].get<std::size_t>(), words[k].get<std::string>()});
            }
            filled[label] = true;
        } catch (const json::exception& e) {
            throw ValidationError(std::string("malformed verbalizer entry: ") + e.what());
        }
    }
    return v;
}

inline void write_verbalizer(const VerbalizerDocument& doc, std::ostream& sink) {
    sink << document_to_json(doc).dump(2) << '\n';
    if (!sink) throw IoError("failed writing verbalizer");
}

inline VerbalizerDocument read_verbalizer(std::istream& source) {
    json j;
    try {
        j = json::parse(source);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("verbalizer is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("labels")) throw ValidationError("verbalizer JSON must have a 'labels' array");
    VerbalizerDocument doc;
    doc.verbalizer = verbalizer_from_json(j["labels"]);
    try {
        if (j.contains("fitness")) doc.fitness = j["fitness"].get<double>();
        if (j.contains("config")) doc.config = j["config"];
        if (j.contains("seed")) doc.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed verbalizer metadata: ") + e.what());
    }
    return doc;
}

inline void write_verbalizer_file(const VerbalizerDocument& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_verbalizer(doc, out);
}

inline VerbalizerDocument read_verbalizer_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_verbalizer(in);
}

} // namespace evs
