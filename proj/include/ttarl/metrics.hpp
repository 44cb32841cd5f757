#pragma once

#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace ttarl::metrics {

// token id -> object id, covering canonical nouns and registered synonyms.
using SynonymTable = std::unordered_map<int, int>;

struct Annotation {
    std::set<int> gt_objects;    // ground-truth objects present in the image
    std::set<int> hallu_prone;   // objects the captioner is primed to hallucinate
};

struct SampleScores {
    double chair = 0.0;
    double cover = 0.0;
    double hal = 0.0; // 0 or 1
    double cog = 0.0;
    std::set<int> extracted;
};

std::set<int> extract_objects(const std::vector<int>& caption, const SynonymTable& table);

// 1 - |r ∩ a| / |r|; 0 for an empty mention set.
double chair(const std::set<int>& r_obj, const std::set<int>& a_obj);
// |r ∩ a| / |a|; a_obj must be non-empty.
double cover(const std::set<int>& r_obj, const std::set<int>& a_obj);
// 1 when chair is non-zero.
double hal(double chair_value);
// |r ∩ h| / |r|; 0 for an empty mention set.
double cog(const std::set<int>& r_obj, const std::set<int>& h_obj);

SampleScores score_sample(const std::vector<int>& caption, const Annotation& ann,
                          const SynonymTable& table);

struct Aggregate {
    // Means over samples, presented x100 rounded to one decimal.
    double chair = 0.0;
    double cover = 0.0;
    double hal = 0.0;
    double cog = 0.0;
    int n_samples = 0;
};

// Presentation rule used throughout reports: mean x100, one decimal.
double present(double mean_value);

Aggregate aggregate(const std::vector<SampleScores>& samples);

SynonymTable load_synonyms_file(const std::string& path);

} // namespace ttarl::metrics
