#include "ttarl/metrics.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ttarl/errors.hpp"
#include "ttarl/sceneworld.hpp"

namespace ttarl::metrics {

namespace {
size_t intersection_size(const std::set<int>& a, const std::set<int>& b) {
    size_t n = 0;
    for (int v : a) n += b.count(v);
    return n;
}
} // namespace

std::set<int> extract_objects(const std::vector<int>& caption, const SynonymTable& table) {
    std::set<int> out;
    for (int tok : caption) {
        auto it = table.find(tok);
        if (it != table.end()) out.insert(it->second);
    }
    return out;
}

double chair(const std::set<int>& r_obj, const std::set<int>& a_obj) {
    if (r_obj.empty()) return 0.0;
    return 1.0 - static_cast<double>(intersection_size(r_obj, a_obj)) /
                     static_cast<double>(r_obj.size());
}

double cover(const std::set<int>& r_obj, const std::set<int>& a_obj) {
    if (a_obj.empty()) throw ContractError("cover with empty ground-truth object set");
    return static_cast<double>(intersection_size(r_obj, a_obj)) /
           static_cast<double>(a_obj.size());
}

double hal(double chair_value) {
    if (chair_value < 0.0 || chair_value > 1.0)
        throw ContractError("hal input outside [0,1]");
    return chair_value != 0.0 ? 1.0 : 0.0;
}

double cog(const std::set<int>& r_obj, const std::set<int>& h_obj) {
    if (r_obj.empty()) return 0.0;
    return static_cast<double>(intersection_size(r_obj, h_obj)) /
           static_cast<double>(r_obj.size());
}

SampleScores score_sample(const std::vector<int>& caption, const Annotation& ann,
                          const SynonymTable& table) {
    SampleScores s;
    s.extracted = extract_objects(caption, table);
    s.chair = chair(s.extracted, ann.gt_objects);
    s.cover = cover(s.extracted, ann.gt_objects);
    s.hal = hal(s.chair);
    s.cog = cog(s.extracted, ann.hallu_prone);
    return s;
}

double present(double mean_value) { return std::round(mean_value * 1000.0) / 10.0; }

Aggregate aggregate(const std::vector<SampleScores>& samples) {
    if (samples.empty()) throw ContractError("aggregate of an empty sample list");
    Aggregate a;
    a.n_samples = static_cast<int>(samples.size());
    double c = 0, v = 0, h = 0, g = 0;
    for (const auto& s : samples) {
        c += s.chair;
        v += s.cover;
        h += s.hal;
        g += s.cog;
    }
    const double n = static_cast<double>(samples.size());
    a.chair = present(c / n);
    a.cover = present(v / n);
    a.hal = present(h / n);
    a.cog = present(g / n);
    return a;
}

SynonymTable load_synonyms_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IntegrityError("cannot open synonym table '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("synonym table '" + path + "': " + e.what());
    }
    SynonymTable table;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const int tok = world::vocab::token_id(it.key());
        const int noun = world::vocab::token_id(it.value().get<std::string>());
        if (!world::vocab::is_noun(noun))
            throw IntegrityError("synonym target '" + it.value().get<std::string>() +
                                 "' is not an object noun");
        table[tok] = noun - world::vocab::kNounBase;
    }
    return table;
}

} // namespace ttarl::metrics
