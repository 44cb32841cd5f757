#pragma once

#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "ttarl/rng.hpp"
#include "ttarl/tensor.hpp"

namespace ttarl::world {

// ---------------------------------------------------------------------------
// Closed vocabulary
// ---------------------------------------------------------------------------

namespace vocab {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kNumObjects = 12;
inline constexpr int kNumAttributes = 6;
inline constexpr int kNumRelations = 4;
inline constexpr int kNounBase = 3;                              // 12 object nouns
inline constexpr int kSynonymBase = kNounBase + kNumObjects;     // 12 synonyms
inline constexpr int kAttrBase = kSynonymBase + kNumObjects;     // 6 attributes
inline constexpr int kRelBase = kAttrBase + kNumAttributes;      // 4 relations
inline constexpr int kRelLeftOf = kRelBase + 0;
inline constexpr int kRelRightOf = kRelBase + 1;
inline constexpr int kRelAbove = kRelBase + 2;
inline constexpr int kRelBelow = kRelBase + 3;
inline constexpr int kWordA = kRelBase + kNumRelations;
inline constexpr int kWordPeriod = kWordA + 1;

int size();
const std::string& token_str(int id);
int token_id(const std::string& word); // throws LookupError for unknown words

inline int noun_of(int object_id) { return kNounBase + object_id; }
inline int synonym_of(int object_id) { return kSynonymBase + object_id; }
inline int attr_token(int attribute_id) { return kAttrBase + attribute_id; }
inline bool is_noun(int id) { return id >= kNounBase && id < kSynonymBase; }
inline bool is_synonym(int id) { return id >= kSynonymBase && id < kAttrBase; }
inline bool is_attr(int id) { return id >= kAttrBase && id < kRelBase; }
inline bool is_relation(int id) { return id >= kRelBase && id < kRelBase + kNumRelations; }
int contradicted(int relation_token);

// Token ids of the fixed prompt "describe this image".
const std::vector<int>& prompt_tokens();

// token id -> object id, covering canonical nouns and their synonyms.
const std::unordered_map<int, int>& default_synonym_table();

std::string detokenize(const std::vector<int>& tokens);

} // namespace vocab

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

struct Scene {
    struct Obj {
        int object_id;    // 0..11
        int attribute_id; // 0..5
        int row;
        int col;
        bool operator==(const Obj&) const = default;
    };
    // Always kept in row-major cell order; ids are distinct within a scene.
    std::vector<Obj> objects;

    std::set<int> gt_objects() const;
    bool operator==(const Scene&) const = default;
};

struct SceneEncoding {
    Tensor grid_features; // one row per cell; empty cells are zero rows
};

struct BiasPair {
    int a = 0;
    int b = 0;
    double strength = 1.0;
};

struct CorpusConfig {
    int n_samples = 0;
    std::vector<BiasPair> cooccurrence_pairs;
    bool shift = false;
    uint64_t seed = 0;
    // World geometry. Feature rows are
    // [object one-hot | attribute one-hot | row one-hot | col one-hot | pad].
    int grid_size = 4;
    int max_objects = 4;
    int d_vis = 32;
    int max_caption_len = 16;

    int min_d_vis() const {
        return vocab::kNumObjects + vocab::kNumAttributes + 2 * grid_size;
    }
};

struct CaptionLabel {
    enum Value { Positive, Negative };
};

struct CaptionSample {
    std::vector<int> tokens; // ends with <eos>, length <= max_caption_len
    bool positive = true;
    // none | object | attribute | relation
    std::string corruption_kind = "none";
};

Scene generate_scene(const CorpusConfig& config, Rng& rng);
SceneEncoding render(const Scene& scene, const CorpusConfig& config);

// Templated ground-truth caption: one "a <attr> <noun>" clause per object in
// row-major order, relation clauses for grid-adjacent pairs while they fit
// the length budget, then "." and <eos>. Mentions exactly the scene objects.
std::vector<int> caption_of(const Scene& scene, const CorpusConfig& config);

CaptionSample corrupt_caption(const Scene& scene, const std::vector<int>& caption,
                              const std::string& kind, Rng& rng);

struct CorpusEntry {
    Scene scene;
    CaptionSample positive;
    std::vector<CaptionSample> negatives; // object, attribute, relation
};

struct Corpus {
    CorpusConfig config;
    std::vector<CorpusEntry> entries;
};

// Reproducible dataset: every entry carries one positive and one negative
// per corruption kind, so scenes are resampled until all kinds apply.
Corpus make_corpus(const CorpusConfig& config);

// One caption record per line (positive first, then the three negatives).
void write_corpus(std::ostream& os, const Corpus& corpus);
void write_corpus_file(const std::string& path, const Corpus& corpus);
Corpus read_corpus(std::istream& is, const CorpusConfig& config);
Corpus read_corpus_file(const std::string& path, const CorpusConfig& config);

void write_synonyms_file(const std::string& path);

// Objects the biased pretraining distribution primes the captioner to
// hallucinate: all members of the configured co-occurrence pairs.
std::set<int> hallucination_prone_objects(const CorpusConfig& config);

uint64_t encoding_digest(const SceneEncoding& enc);

} // namespace ttarl::world
