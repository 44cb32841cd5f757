#include "ttarl/sceneworld.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ttarl/errors.hpp"

namespace ttarl::world {

using nlohmann::json;

namespace vocab {

namespace {
const std::vector<std::string>& table() {
    static const std::vector<std::string> words = {
        "<pad>", "<bos>", "<eos>",
        // object nouns
        "cup", "plate", "fork", "knife", "dog", "cat", "ball", "book", "chair", "table",
        "lamp", "vase",
        // synonyms, aligned with the nouns above
        "mug", "dish", "spork", "blade", "puppy", "kitten", "orb", "novel", "seat", "desk",
        "lantern", "urn",
        // attributes
        "red", "blue", "green", "small", "big", "shiny",
        // relations
        "left_of", "right_of", "above", "below",
        // function and filler words
        "a", ".", "describe", "this", "image", "the", "is", "and", "there", "on", "an",
        "of", "in", "near", "with", "by", "at", "it", "under", "over"};
    return words;
}
} // namespace

int size() { return static_cast<int>(table().size()); }

const std::string& token_str(int id) {
    if (id < 0 || id >= size()) throw LookupError("token id " + std::to_string(id));
    return table()[static_cast<size_t>(id)];
}

int token_id(const std::string& word) {
    const auto& words = table();
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == word) return static_cast<int>(i);
    throw LookupError("unknown word '" + word + "'");
}

int contradicted(int relation_token) {
    switch (relation_token) {
    case kRelLeftOf: return kRelRightOf;
    case kRelRightOf: return kRelLeftOf;
    case kRelAbove: return kRelBelow;
    case kRelBelow: return kRelAbove;
    default: throw LookupError("not a relation token: " + std::to_string(relation_token));
    }
}

const std::vector<int>& prompt_tokens() {
    static const std::vector<int> prompt = {token_id("describe"), token_id("this"),
                                            token_id("image")};
    return prompt;
}

const std::unordered_map<int, int>& default_synonym_table() {
    static const std::unordered_map<int, int> t = [] {
        std::unordered_map<int, int> m;
        for (int k = 0; k < kNumObjects; ++k) {
            m[noun_of(k)] = k;
            m[synonym_of(k)] = k;
        }
        return m;
    }();
    return t;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string out;
    for (int t : tokens) {
        if (!out.empty()) out += ' ';
        out += token_str(t);
    }
    return out;
}

} // namespace vocab

std::set<int> Scene::gt_objects() const {
    std::set<int> ids;
    for (const auto& o : objects) ids.insert(o.object_id);
    return ids;
}

namespace {

void validate_config(const CorpusConfig& c) {
    if (c.grid_size < 1) throw ConfigError("corpus.grid_size must be >= 1");
    if (c.max_objects < 1 || c.max_objects > c.grid_size * c.grid_size)
        throw ConfigError("corpus.max_objects out of range for the grid");
    if (c.max_objects > vocab::kNumObjects)
        throw ConfigError("corpus.max_objects exceeds the object vocabulary");
    if (c.d_vis < c.min_d_vis())
        throw ConfigError("corpus.d_vis must be at least " + std::to_string(c.min_d_vis()));
    if (c.max_caption_len < 3 * c.max_objects + 2)
        throw ConfigError("corpus.max_caption_len too small for max_objects clauses");
    for (const auto& p : c.cooccurrence_pairs) {
        if (p.a < 0 || p.a >= vocab::kNumObjects || p.b < 0 || p.b >= vocab::kNumObjects ||
            p.a == p.b)
            throw ConfigError("corpus.cooccurrence_pairs contains an invalid pair");
        if (p.strength < 0.0 || p.strength > 1.0)
            throw ConfigError("corpus.cooccurrence_pairs strength must lie in [0,1]");
    }
}

} // namespace

Scene generate_scene(const CorpusConfig& config, Rng& rng) {
    validate_config(config);
    const int k = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(config.max_objects)));

    std::vector<int> ids;
    for (int attempt = 0;; ++attempt) {
        if (attempt > 100000)
            throw ContractError("bias configuration leaves no admissible scenes");
        ids = rng.sample_distinct(vocab::kNumObjects, k);
        if (config.shift) break; // independent sampling, bias rules off
        bool rejected = false;
        for (const auto& p : config.cooccurrence_pairs) {
            const bool has_a = std::find(ids.begin(), ids.end(), p.a) != ids.end();
            const bool has_b = std::find(ids.begin(), ids.end(), p.b) != ids.end();
            if (has_a != has_b && rng.bernoulli(p.strength)) {
                rejected = true;
                break;
            }
        }
        if (!rejected) break;
    }

    const std::vector<int> cells =
        rng.sample_distinct(config.grid_size * config.grid_size, k);
    Scene scene;
    for (int i = 0; i < k; ++i) {
        Scene::Obj o;
        o.object_id = ids[static_cast<size_t>(i)];
        o.attribute_id = static_cast<int>(rng.below(vocab::kNumAttributes));
        o.row = cells[static_cast<size_t>(i)] / config.grid_size;
        o.col = cells[static_cast<size_t>(i)] % config.grid_size;
        scene.objects.push_back(o);
    }
    std::sort(scene.objects.begin(), scene.objects.end(), [&](const auto& x, const auto& y) {
        return x.row != y.row ? x.row < y.row : x.col < y.col;
    });
    return scene;
}

SceneEncoding render(const Scene& scene, const CorpusConfig& config) {
    validate_config(config);
    const int g = config.grid_size;
    Tensor feats = Tensor::zeros({g * g, config.d_vis});
    for (const auto& o : scene.objects) {
        const int cell = o.row * g + o.col;
        feats.at(cell, o.object_id) = 1.0;
        feats.at(cell, vocab::kNumObjects + o.attribute_id) = 1.0;
        feats.at(cell, vocab::kNumObjects + vocab::kNumAttributes + o.row) = 1.0;
        feats.at(cell, vocab::kNumObjects + vocab::kNumAttributes + g + o.col) = 1.0;
    }
    return SceneEncoding{std::move(feats)};
}

namespace {

struct AdjacentPair {
    int i, j; // indices into scene.objects, i < j (row-major earlier first)
};

std::vector<AdjacentPair> adjacent_pairs(const Scene& scene) {
    std::vector<AdjacentPair> pairs;
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i)
        for (int j = i + 1; j < static_cast<int>(scene.objects.size()); ++j) {
            const auto& a = scene.objects[static_cast<size_t>(i)];
            const auto& b = scene.objects[static_cast<size_t>(j)];
            const int dr = std::abs(a.row - b.row), dc = std::abs(a.col - b.col);
            if (dr + dc == 1) pairs.push_back({i, j});
        }
    return pairs;
}

} // namespace

std::vector<int> caption_of(const Scene& scene, const CorpusConfig& config) {
    validate_config(config);
    if (scene.objects.empty()) throw ContractError("caption of an empty scene");
    std::vector<int> toks;
    for (const auto& o : scene.objects) {
        toks.push_back(vocab::kWordA);
        toks.push_back(vocab::attr_token(o.attribute_id));
        toks.push_back(vocab::noun_of(o.object_id));
    }
    // Relation clauses for adjacent pairs, as many as fit before ". <eos>".
    // Clause direction alternates deterministically with the object ids so
    // both members of each relation word pair occur in the corpus.
    for (const auto& p : adjacent_pairs(scene)) {
        if (static_cast<int>(toks.size()) + 3 > config.max_caption_len - 2) break;
        const auto& a = scene.objects[static_cast<size_t>(p.i)];
        const auto& b = scene.objects[static_cast<size_t>(p.j)];
        int rel; // relation of a (row-major earlier) with respect to b
        if (a.row == b.row) rel = vocab::kRelLeftOf;
        else rel = vocab::kRelAbove;
        if ((a.object_id + b.object_id) % 2 == 0) {
            toks.push_back(vocab::noun_of(a.object_id));
            toks.push_back(rel);
            toks.push_back(vocab::noun_of(b.object_id));
        } else {
            toks.push_back(vocab::noun_of(b.object_id));
            toks.push_back(vocab::contradicted(rel));
            toks.push_back(vocab::noun_of(a.object_id));
        }
    }
    toks.push_back(vocab::kWordPeriod);
    toks.push_back(vocab::kEos);
    return toks;
}

CaptionSample corrupt_caption(const Scene& scene, const std::vector<int>& caption,
                              const std::string& kind, Rng& rng) {
    CaptionSample out;
    out.tokens = caption;
    out.positive = false;
    out.corruption_kind = kind;

    std::vector<size_t> slots;
    if (kind == "object") {
        for (size_t i = 0; i < caption.size(); ++i)
            if (vocab::is_noun(caption[i])) slots.push_back(i);
        if (slots.empty()) throw CorruptionImpossible("caption mentions no objects");
        const std::set<int> present = scene.gt_objects();
        std::vector<int> absent;
        for (int k = 0; k < vocab::kNumObjects; ++k)
            if (!present.count(k)) absent.push_back(k);
        if (absent.empty()) throw CorruptionImpossible("every object is present");
        const size_t pos = slots[rng.below(slots.size())];
        out.tokens[pos] = vocab::noun_of(absent[rng.below(absent.size())]);
    } else if (kind == "attribute") {
        for (size_t i = 0; i < caption.size(); ++i)
            if (vocab::is_attr(caption[i])) slots.push_back(i);
        if (slots.empty()) throw CorruptionImpossible("caption mentions no attributes");
        const size_t pos = slots[rng.below(slots.size())];
        const int old_attr = caption[pos] - vocab::kAttrBase;
        const int new_attr =
            (old_attr + 1 + static_cast<int>(rng.below(vocab::kNumAttributes - 1))) %
            vocab::kNumAttributes;
        out.tokens[pos] = vocab::attr_token(new_attr);
    } else if (kind == "relation") {
        for (size_t i = 0; i < caption.size(); ++i)
            if (vocab::is_relation(caption[i])) slots.push_back(i);
        if (slots.empty()) throw CorruptionImpossible("caption states no relations");
        const size_t pos = slots[rng.below(slots.size())];
        out.tokens[pos] = vocab::contradicted(caption[pos]);
    } else {
        throw ContractError("unknown corruption kind '" + kind + "'");
    }
    return out;
}

Corpus make_corpus(const CorpusConfig& config) {
    validate_config(config);
    if (config.n_samples < 0) throw ConfigError("corpus.n_samples must be non-negative");
    Corpus corpus;
    corpus.config = config;
    Rng rng(Rng::derive(config.seed, config.shift ? "corpus.shifted" : "corpus.unshifted"));
    corpus.entries.reserve(static_cast<size_t>(config.n_samples));
    static const std::array<const char*, 3> kinds = {"object", "attribute", "relation"};
    for (int i = 0; i < config.n_samples; ++i) {
        CorpusEntry entry;
        std::vector<int> caption;
        for (;;) {
            entry.scene = generate_scene(config, rng);
            caption = caption_of(entry.scene, config);
            // Every entry must support all corruption kinds, which requires
            // a relation clause in the caption.
            if (std::any_of(caption.begin(), caption.end(),
                            [](int t) { return vocab::is_relation(t); }))
                break;
        }
        entry.positive = CaptionSample{caption, true, "none"};
        for (const char* kind : kinds)
            entry.negatives.push_back(corrupt_caption(entry.scene, caption, kind, rng));
        corpus.entries.push_back(std::move(entry));
    }
    return corpus;
}

uint64_t encoding_digest(const SceneEncoding& enc) { return enc.grid_features.digest(); }

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json caption_record(int entry_idx, const Scene& scene, const std::string& digest,
                    const CaptionSample& s) {
    json rec;
    rec["entry"] = entry_idx;
    json objs = json::array();
    for (const auto& o : scene.objects)
        objs.push_back({o.object_id, o.attribute_id, o.row, o.col});
    rec["scene"] = {{"objects", objs}};
    rec["encoding_digest"] = digest;
    rec["tokens"] = s.tokens;
    rec["label"] = s.positive ? "positive" : "negative";
    rec["corruption_kind"] = s.corruption_kind;
    return rec;
}

} // namespace

void write_corpus(std::ostream& os, const Corpus& corpus) {
    for (size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& e = corpus.entries[i];
        const std::string digest = hex64(encoding_digest(render(e.scene, corpus.config)));
        os << caption_record(static_cast<int>(i), e.scene, digest, e.positive).dump() << "\n";
        for (const auto& n : e.negatives)
            os << caption_record(static_cast<int>(i), e.scene, digest, n).dump() << "\n";
    }
}

void write_corpus_file(const std::string& path, const Corpus& corpus) {
    std::ofstream os(path);
    if (!os) throw IntegrityError("cannot open '" + path + "' for writing");
    write_corpus(os, corpus);
}

Corpus read_corpus(std::istream& is, const CorpusConfig& config) {
    Corpus corpus;
    corpus.config = config;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw IntegrityError("corpus line " + std::to_string(lineno) + ": " + e.what());
        }
        const int entry_idx = rec.at("entry").get<int>();
        if (entry_idx < 0 || entry_idx > static_cast<int>(corpus.entries.size()))
            throw IntegrityError("corpus line " + std::to_string(lineno) +
                                 ": entries out of order");
        if (entry_idx == static_cast<int>(corpus.entries.size())) {
            CorpusEntry e;
            for (const auto& o : rec.at("scene").at("objects"))
                e.scene.objects.push_back(
                    {o.at(0).get<int>(), o.at(1).get<int>(), o.at(2).get<int>(),
                     o.at(3).get<int>()});
            const std::string want = hex64(encoding_digest(render(e.scene, config)));
            if (rec.at("encoding_digest").get<std::string>() != want)
                throw IntegrityError("corpus line " + std::to_string(lineno) +
                                     ": encoding digest mismatch");
            corpus.entries.push_back(std::move(e));
        }
        CaptionSample s;
        s.tokens = rec.at("tokens").get<std::vector<int>>();
        s.positive = rec.at("label").get<std::string>() == "positive";
        s.corruption_kind = rec.at("corruption_kind").get<std::string>();
        auto& entry = corpus.entries[static_cast<size_t>(entry_idx)];
        if (s.positive)
            entry.positive = std::move(s);
        else
            entry.negatives.push_back(std::move(s));
    }
    return corpus;
}

Corpus read_corpus_file(const std::string& path, const CorpusConfig& config) {
    std::ifstream is(path);
    if (!is) throw IntegrityError("cannot open corpus file '" + path + "'");
    return read_corpus(is, config);
}

void write_synonyms_file(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IntegrityError("cannot open '" + path + "' for writing");
    json table;
    for (int k = 0; k < vocab::kNumObjects; ++k) {
        table[vocab::token_str(vocab::noun_of(k))] = vocab::token_str(vocab::noun_of(k));
        table[vocab::token_str(vocab::synonym_of(k))] = vocab::token_str(vocab::noun_of(k));
    }
    os << table.dump(2) << "\n";
}

std::set<int> hallucination_prone_objects(const CorpusConfig& config) {
    std::set<int> out;
    for (const auto& p : config.cooccurrence_pairs) {
        out.insert(p.a);
        out.insert(p.b);
    }
    return out;
}

} // namespace ttarl::world
