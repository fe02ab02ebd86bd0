#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffaudit/cluster/kmeans.hpp"
#include "diffaudit/corpus.hpp"
#include "diffaudit/llmclient.hpp"
#include "diffaudit/parallel.hpp"
#include "diffaudit/templates.hpp"

namespace diffaudit::cluster {

struct EmbeddingVector {
    std::string prompt_id;
    std::vector<double> values;
};

/// Embeds a list of texts with the instruction-prefixed request. `ids` label errors.
inline std::vector<std::vector<double>> embed_texts(const std::vector<std::string>& texts,
                                                    const std::vector<std::string>& ids, llm::LlmClient& client,
                                                    std::size_t threads = 8) {
    auto out = parallel_map<std::vector<double>>(texts.size(), threads, [&](std::size_t i) {
        try {
            return client.embed(llm::Role::embedder, templates::embedding_request(texts[i])).values;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::replay_miss) throw;
            fail(ErrorKind::stage, "embedding failed for " + ids[i] + ": " + e.what());
        }
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].empty()) fail(ErrorKind::inconsistency, "empty embedding for " + ids[i]);
        if (out[i].size() != out.front().size())
            fail(ErrorKind::inconsistency, "embedding dimension mismatch: " + ids[i] + " has " +
                                               std::to_string(out[i].size()) + ", " + ids.front() + " has " +
                                               std::to_string(out.front().size()));
        for (double v : out[i])
            if (!std::isfinite(v)) fail(ErrorKind::inconsistency, "non-finite embedding for " + ids[i]);
    }
    return out;
}

inline std::vector<EmbeddingVector> embed_prompts(const corpus::PromptBank& bank, llm::LlmClient& client,
                                                  std::size_t threads = 8) {
    if (bank.records.empty()) fail(ErrorKind::invalid_input, "embed_prompts: empty bank");
    std::vector<std::string> texts, ids;
    for (const auto& r : bank.records) {
        texts.push_back(r.formatted_text);
        ids.push_back(r.prompt_id);
    }
    auto vecs = embed_texts(texts, ids, client, threads);
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < vecs.size(); ++i) out.push_back({ids[i], std::move(vecs[i])});
    return out;
}

/// Rows of the result are the L2-normalized vectors.
inline Eigen::MatrixXd normalized_matrix(const std::vector<std::vector<double>>& vecs) {
    if (vecs.empty()) return {};
    Eigen::MatrixXd x(static_cast<Eigen::Index>(vecs.size()), static_cast<Eigen::Index>(vecs.front().size()));
    for (std::size_t i = 0; i < vecs.size(); ++i) {
        if (vecs[i].size() != vecs.front().size()) fail(ErrorKind::inconsistency, "embedding dimension mismatch");
        for (std::size_t j = 0; j < vecs[i].size(); ++j)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vecs[i][j];
        const double norm = x.row(static_cast<Eigen::Index>(i)).norm();
        if (norm > 0.0) x.row(static_cast<Eigen::Index>(i)) /= norm;
    }
    return x;
}

enum class ContextMode { predefined, clustered };

struct ContextSet {
    std::map<std::string, std::vector<std::string>> contexts;
    ContextMode mode = ContextMode::predefined;
    int p = 0;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : contexts) out.push_back(k);
        return out;
    }
};

inline std::string cluster_label(int index, int p) {
    int width = 2;
    for (int v = p - 1; v >= 100; v /= 10) ++width;
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%0*d", width, index);
    return buf;
}

/// Predefined mode groups by category. Clustered mode runs k-means on the
/// normalized embeddings; cluster labels are renumbered by first appearance in bank order.
inline ContextSet build_contexts(const corpus::PromptBank& bank, const std::vector<EmbeddingVector>* embeddings,
                                 ContextMode mode, int p, std::uint64_t seed) {
    ContextSet out;
    out.mode = mode;
    if (bank.records.empty()) fail(ErrorKind::invalid_input, "build_contexts: empty bank");
    if (mode == ContextMode::predefined) {
        if (!bank.has_predefined_categories)
            fail(ErrorKind::invalid_input, "predefined contexts requested but bank " + bank.bank_id +
                                               " lacks categories");
        for (const auto& r : bank.records) out.contexts[*r.category].push_back(r.prompt_id);
        out.p = static_cast<int>(out.contexts.size());
        return out;
    }
    if (p < 1) fail(ErrorKind::invalid_input, "clustered contexts need p >= 1, got " + std::to_string(p));
    if (!embeddings) fail(ErrorKind::invalid_input, "clustered contexts need embeddings");
    if (embeddings->size() != bank.records.size())
        fail(ErrorKind::inconsistency, "embedding count does not match bank size");
    std::vector<std::vector<double>> vecs;
    for (std::size_t i = 0; i < bank.records.size(); ++i) {
        if ((*embeddings)[i].prompt_id != bank.records[i].prompt_id)
            fail(ErrorKind::inconsistency, "embedding order does not match bank at " + bank.records[i].prompt_id);
        vecs.push_back((*embeddings)[i].values);
    }
    const auto res = kmeans(normalized_matrix(vecs), p, seed);
    std::map<int, int> relabel;
    for (std::size_t i = 0; i < res.labels.size(); ++i) {
        auto [it, fresh] = relabel.try_emplace(res.labels[i], static_cast<int>(relabel.size()));
        out.contexts[cluster_label(it->second, p)].push_back(bank.records[i].prompt_id);
    }
    out.p = p;
    for (const auto& [k, v] : out.contexts)
        if (v.empty()) fail(ErrorKind::stage, "empty context " + k);
    if (static_cast<int>(out.contexts.size()) != p) fail(ErrorKind::stage, "k-means produced an empty cluster");
    return out;
}

inline json to_json(const ContextSet& cs) {
    json j = {{"mode", cs.mode == ContextMode::predefined ? "predefined" : "clustered"}, {"p", cs.p}};
    j["contexts"] = json::object();
    for (const auto& [k, v] : cs.contexts) j["contexts"][k] = v;
    return j;
}

inline ContextSet context_set_from_json(const json& j) {
    ContextSet cs;
    cs.mode = j.at("mode").get<std::string>() == "predefined" ? ContextMode::predefined : ContextMode::clustered;
    cs.p = j.at("p").get<int>();
    for (auto it = j.at("contexts").begin(); it != j.at("contexts").end(); ++it)
        cs.contexts[it.key()] = it.value().get<std::vector<std::string>>();
    return cs;
}

inline json to_json(const EmbeddingVector& e) { return {{"prompt_id", e.prompt_id}, {"values", e.values}}; }

inline EmbeddingVector embedding_from_json(const json& j) {
    return {j.at("prompt_id").get<std::string>(), j.at("values").get<std::vector<double>>()};
}

} // namespace diffaudit::cluster
