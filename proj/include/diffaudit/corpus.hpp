#pragma once

#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "diffaudit/error.hpp"
#include "diffaudit/hashing.hpp"
#include "diffaudit/io.hpp"
#include "diffaudit/templates.hpp"

namespace diffaudit::corpus {

enum class SourceDataset { persona, truthfulqa, bold, custom };

inline std::string_view to_string(SourceDataset d) {
    switch (d) {
    case SourceDataset::persona: return "persona";
    case SourceDataset::truthfulqa: return "truthfulqa";
    case SourceDataset::bold: return "bold";
    case SourceDataset::custom: return "custom";
    }
    return "custom";
}

inline SourceDataset dataset_from_string(std::string_view s) {
    for (auto d : {SourceDataset::persona, SourceDataset::truthfulqa, SourceDataset::bold, SourceDataset::custom})
        if (to_string(d) == s) return d;
    fail(ErrorKind::config, "unknown source dataset: " + std::string(s));
}

struct PromptRecord {
    std::string prompt_id;
    SourceDataset source_dataset = SourceDataset::custom;
    std::string raw_text;
    std::optional<std::string> category;
    std::string formatted_text;

    friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

struct PromptBank {
    std::string bank_id;
    SourceDataset dataset = SourceDataset::custom;
    std::vector<PromptRecord> records;
    bool has_predefined_categories = false;

    const PromptRecord& at(const std::string& id) const {
        for (const auto& r : records)
            if (r.prompt_id == id) return r;
        fail(ErrorKind::inconsistency, "unknown prompt_id " + id + " in bank " + bank_id);
    }
};

inline std::string format_prompt(std::string_view raw_text, SourceDataset dataset) {
    if (raw_text.empty()) fail(ErrorKind::invalid_input, "format_prompt: empty raw_text");
    std::string s;
    switch (dataset) {
    case SourceDataset::persona:
        s += templates::persona_prefix;
        s += raw_text;
        s += templates::persona_suffix;
        break;
    case SourceDataset::truthfulqa:
        s += templates::truthfulqa_prefix;
        s += raw_text;
        s += templates::truthfulqa_suffix;
        break;
    case SourceDataset::bold:
        s += templates::bold_prefix;
        s += raw_text;
        break;
    case SourceDataset::custom: s = std::string(raw_text); break;
    }
    return s;
}

/// "<dataset>-<row, 6 digits>-<first 8 hex of sha256(raw_text)>"
inline std::string make_prompt_id(SourceDataset d, std::size_t row, std::string_view raw_text) {
    char idx[32];
    std::snprintf(idx, sizeof idx, "%06zu", row);
    return std::string(to_string(d)) + "-" + idx + "-" + sha256_hex(raw_text).substr(0, 8);
}

enum class InputFormat { automatic, jsonl, csv, tsv };

struct ParseSpec {
    std::string text_field = "text";
    std::optional<std::string> category_field;
    InputFormat format = InputFormat::automatic;
};

/// RFC 4180 style table parsing: quoted fields, doubled quotes, embedded delimiters and newlines.
inline std::vector<std::vector<std::string>> parse_delimited(std::string_view data, char delim) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const char c = data[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < data.size() && data[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && field.empty() && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == delim) {
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            field_started = false;
            if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
            row.clear();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) fail(ErrorKind::invalid_input, "unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace detail {

struct RawRow {
    std::string text;
    std::optional<std::string> category;
};

inline InputFormat detect_format(const fs::path& path, InputFormat f) {
    if (f != InputFormat::automatic) return f;
    const auto ext = path.extension().string();
    if (ext == ".csv") return InputFormat::csv;
    if (ext == ".tsv" || ext == ".tab") return InputFormat::tsv;
    return InputFormat::jsonl;
}

inline std::string field_as_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

} // namespace detail

inline PromptBank load_bank(const fs::path& path, SourceDataset dataset, const ParseSpec& spec,
                            std::string bank_id = {}) {
    if (!fs::exists(path)) fail(ErrorKind::io, "input file not found: " + path.string());
    const std::string data = read_file(path);
    std::vector<detail::RawRow> rows;

    const auto fmt = detail::detect_format(path, spec.format);
    if (fmt == InputFormat::jsonl) {
        for (const auto& obj : read_jsonl(path)) {
            if (!obj.is_object() || !obj.contains(spec.text_field))
                fail(ErrorKind::invalid_input, "missing field '" + spec.text_field + "' in " + path.string());
            detail::RawRow r{detail::field_as_string(obj[spec.text_field]), std::nullopt};
            if (spec.category_field) {
                if (!obj.contains(*spec.category_field))
                    fail(ErrorKind::invalid_input,
                         "missing field '" + *spec.category_field + "' in " + path.string());
                r.category = detail::field_as_string(obj[*spec.category_field]);
            }
            rows.push_back(std::move(r));
        }
    } else {
        auto table = parse_delimited(data, fmt == InputFormat::csv ? ',' : '\t');
        if (table.empty()) fail(ErrorKind::invalid_input, "empty table: " + path.string());
        const auto& header = table.front();
        auto column = [&](const std::string& name) -> std::size_t {
            for (std::size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return i;
            fail(ErrorKind::invalid_input, "missing field '" + name + "' in " + path.string());
        };
        const std::size_t tcol = column(spec.text_field);
        std::optional<std::size_t> ccol;
        if (spec.category_field) ccol = column(*spec.category_field);
        for (std::size_t i = 1; i < table.size(); ++i) {
            const auto& row = table[i];
            if (row.size() != header.size())
                fail(ErrorKind::invalid_input, path.string() + ": row " + std::to_string(i) + " has " +
                                                   std::to_string(row.size()) + " fields, header has " +
                                                   std::to_string(header.size()));
            rows.push_back({row[tcol], ccol ? std::optional<std::string>(row[*ccol]) : std::nullopt});
        }
    }

    PromptBank bank;
    bank.dataset = dataset;
    bank.bank_id = bank_id.empty() ? std::string(to_string(dataset)) : std::move(bank_id);
    std::set<std::string> seen;
    bool all_categories = !rows.empty();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        PromptRecord rec;
        rec.source_dataset = dataset;
        rec.raw_text = rows[i].text;
        rec.category = rows[i].category;
        if (rec.category && rec.category->empty()) rec.category.reset();
        if (!rec.category) all_categories = false;
        rec.prompt_id = make_prompt_id(dataset, i, rec.raw_text);
        if (rec.raw_text.empty())
            fail(ErrorKind::invalid_input, path.string() + ": row " + std::to_string(i) + " has empty text");
        rec.formatted_text = format_prompt(rec.raw_text, dataset);
        if (!seen.insert(rec.prompt_id).second)
            fail(ErrorKind::invalid_input, "duplicate prompt_id " + rec.prompt_id);
        bank.records.push_back(std::move(rec));
    }
    bank.has_predefined_categories = all_categories;
    return bank;
}

// Bank file: one JSON object per record.

inline json to_json(const PromptRecord& r, const std::string& bank_id) {
    json j = {{"bank_id", bank_id},
              {"prompt_id", r.prompt_id},
              {"source_dataset", std::string(to_string(r.source_dataset))},
              {"raw_text", r.raw_text},
              {"formatted_text", r.formatted_text}};
    if (r.category) j["category"] = *r.category;
    return j;
}

inline std::string serialize_bank(const PromptBank& bank) {
    std::vector<json> rows;
    for (const auto& r : bank.records) rows.push_back(to_json(r, bank.bank_id));
    return to_jsonl(rows);
}

inline void write_bank(const fs::path& path, const PromptBank& bank) { write_file(path, serialize_bank(bank)); }

inline PromptBank read_bank(const fs::path& path) {
    PromptBank bank;
    bool all_categories = true;
    std::set<std::string> seen;
    for (const auto& j : read_jsonl(path)) {
        PromptRecord r;
        r.prompt_id = j.at("prompt_id").get<std::string>();
        r.source_dataset = dataset_from_string(j.at("source_dataset").get<std::string>());
        r.raw_text = j.at("raw_text").get<std::string>();
        r.formatted_text = j.at("formatted_text").get<std::string>();
        if (j.contains("category")) r.category = j["category"].get<std::string>();
        else all_categories = false;
        if (bank.records.empty()) {
            bank.bank_id = j.at("bank_id").get<std::string>();
            bank.dataset = r.source_dataset;
        }
        if (r.formatted_text != format_prompt(r.raw_text, r.source_dataset))
            fail(ErrorKind::inconsistency, "formatted_text does not match template for " + r.prompt_id);
        if (!seen.insert(r.prompt_id).second) fail(ErrorKind::invalid_input, "duplicate prompt_id " + r.prompt_id);
        bank.records.push_back(std::move(r));
    }
    bank.has_predefined_categories = all_categories && !bank.records.empty();
    return bank;
}

} // namespace diffaudit::corpus
