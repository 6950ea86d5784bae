#include "dsc/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dsc/errors.hpp"
#include "dsc/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dsc {

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw IngestError("unknown split label '" + s + "' (expected train/val/test)");
}

const Dataset* Corpus::find(const std::string& dataset_id) const {
    for (const auto& d : datasets) {
        if (d.dataset_id == dataset_id) return &d;
    }
    return nullptr;
}

std::vector<std::string> Corpus::dataset_ids() const {
    std::vector<std::string> ids;
    ids.reserve(datasets.size());
    for (const auto& d : datasets) ids.push_back(d.dataset_id);
    return ids;
}

void SplitSpec::validate() const {
    const double sum = train_fraction + val_fraction + test_fraction;
    if (std::abs(sum - 1.0) > 1e-9) {
        std::ostringstream os;
        os << "split fractions must sum to 1, got " << sum;
        throw ConfigError(os.str());
    }
    for (double f : {train_fraction, val_fraction, test_fraction}) {
        if (!(f > 0.0 && f < 1.0)) throw ConfigError("each split fraction must be in (0, 1)");
    }
}

bool operator==(const Sample& a, const Sample& b) {
    return a.file_id == b.file_id && a.features == b.features && a.mos == b.mos &&
           a.votes == b.votes && a.condition_id == b.condition_id;
}

bool operator==(const Dataset& a, const Dataset& b) {
    return a.dataset_id == b.dataset_id && a.samples == b.samples &&
           a.curated_split == b.curated_split;
}

bool operator==(const Corpus& a, const Corpus& b) {
    return a.feature_dim == b.feature_dim && a.datasets == b.datasets;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        throw IngestError(where + ": cannot parse number '" + s + "'");
    }
    return v;
}

long parse_long(const std::string& s, const std::string& where) {
    long v = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || ptr != end) {
        throw IngestError(where + ": cannot parse integer '" + s + "'");
    }
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string csv_header(size_t dim) {
    std::string h = "file_id,mos,votes,condition_id";
    for (size_t i = 0; i < dim; ++i) h += ",f" + std::to_string(i);
    return h;
}

Dataset load_dataset_csv(const fs::path& path, const std::string& dataset_id, size_t dim) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open dataset file '" + path.string() + "'");

    Dataset ds;
    ds.dataset_id = dataset_id;

    std::string line;
    if (!std::getline(in, line)) throw IngestError(path.string() + ": empty file");
    {
        // tolerate a BOM and trailing CR in the header line
        if (line.size() >= 3 && line.compare(0, 3, "\xef\xbb\xbf") == 0) line.erase(0, 3);
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line != csv_header(dim)) {
            throw IngestError(path.string() + ": bad header, expected '" + csv_header(dim) + "'");
        }
    }

    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::string where = path.string() + " row " + std::to_string(row);
        const auto fields = split_line(line);
        if (fields.size() != 4 + dim) {
            std::ostringstream os;
            os << where << ": expected " << (4 + dim) << " columns, got " << fields.size();
            throw IngestError(os.str());
        }
        Sample s;
        s.file_id = fields[0];
        s.mos = parse_double(fields[1], where);
        s.votes = static_cast<int>(parse_long(fields[2], where));
        if (!fields[3].empty()) s.condition_id = fields[3];
        s.features.reserve(dim);
        for (size_t i = 0; i < dim; ++i) s.features.push_back(parse_double(fields[4 + i], where));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::map<std::string, Split> load_curated_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open curated split file '" + path.string() + "'");

    std::map<std::string, Split> out;
    std::string line;
    if (!std::getline(in, line)) throw IngestError(path.string() + ": empty file");
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "file_id,split") {
        throw IngestError(path.string() + ": bad header, expected 'file_id,split'");
    }
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != 2) {
            throw IngestError(path.string() + " row " + std::to_string(row) + ": expected 2 columns");
        }
        if (out.count(fields[0])) {
            throw IngestError(path.string() + " row " + std::to_string(row) + ": duplicate file_id '" +
                              fields[0] + "'");
        }
        out.emplace(fields[0], parse_split(fields[1]));
    }
    return out;
}

void validate_dataset(const Dataset& ds, size_t dim) {
    if (ds.dataset_id.empty()) throw ValidationError("dataset with empty id");
    std::set<std::string> seen;
    for (const auto& s : ds.samples) {
        const std::string where = "dataset '" + ds.dataset_id + "' file '" + s.file_id + "'";
        if (!seen.insert(s.file_id).second) {
            throw ValidationError(where + ": duplicate file_id");
        }
        if (s.features.size() != dim) {
            std::ostringstream os;
            os << where << ": feature length " << s.features.size() << " != corpus feature_dim "
               << dim;
            throw ValidationError(os.str());
        }
        for (double f : s.features) {
            if (!std::isfinite(f)) throw ValidationError(where + ": non-finite feature value");
        }
        if (!std::isfinite(s.mos)) throw ValidationError(where + ": non-finite mos");
        if (s.mos < 1.0 || s.mos > 5.0) {
            std::ostringstream os;
            os << where << ": mos " << s.mos << " outside [1.0, 5.0]";
            throw ValidationError(os.str());
        }
        if (s.votes < 1) {
            std::ostringstream os;
            os << where << ": votes " << s.votes << " must be >= 1";
            throw ValidationError(os.str());
        }
    }
    if (ds.curated_split) {
        for (const auto& [fid, split] : *ds.curated_split) {
            (void)split;
            if (!seen.count(fid)) {
                throw ValidationError("dataset '" + ds.dataset_id + "': curated split references unknown file_id '" +
                                      fid + "'");
            }
        }
        for (const auto& s : ds.samples) {
            if (!ds.curated_split->count(s.file_id)) {
                throw ValidationError("dataset '" + ds.dataset_id + "': curated split missing file_id '" +
                                      s.file_id + "'");
            }
        }
    }
}

}  // namespace

void validate_corpus(const Corpus& corpus) {
    if (corpus.feature_dim == 0) throw ValidationError("corpus feature_dim must be positive");
    std::set<std::string> ids;
    for (const auto& ds : corpus.datasets) {
        if (!ids.insert(ds.dataset_id).second) {
            throw ValidationError("duplicate dataset_id '" + ds.dataset_id + "'");
        }
        validate_dataset(ds, corpus.feature_dim);
    }
}

Corpus load_corpus(const std::string& dir) {
    const fs::path root(dir);
    const fs::path manifest_path = root / "corpus.json";
    std::ifstream in(manifest_path);
    if (!in) throw IngestError("cannot open corpus manifest '" + manifest_path.string() + "'");

    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IngestError(manifest_path.string() + ": " + e.what());
    }

    Corpus corpus;
    if (!manifest.contains("feature_dim") || !manifest["feature_dim"].is_number_unsigned()) {
        throw IngestError(manifest_path.string() + ": missing or invalid 'feature_dim'");
    }
    corpus.feature_dim = manifest["feature_dim"].get<size_t>();
    if (!manifest.contains("datasets") || !manifest["datasets"].is_array()) {
        throw IngestError(manifest_path.string() + ": missing 'datasets' array");
    }

    for (const auto& entry : manifest["datasets"]) {
        if (!entry.contains("id") || !entry.contains("file")) {
            throw IngestError(manifest_path.string() + ": dataset entry needs 'id' and 'file'");
        }
        const std::string id = entry["id"].get<std::string>();
        Dataset ds = load_dataset_csv(root / entry["file"].get<std::string>(), id,
                                      corpus.feature_dim);
        if (entry.contains("curated_split_file") && !entry["curated_split_file"].is_null()) {
            ds.curated_split = load_curated_csv(root / entry["curated_split_file"].get<std::string>());
        }
        corpus.datasets.push_back(std::move(ds));
    }

    validate_corpus(corpus);
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
    validate_corpus(corpus);
    const fs::path root(dir);
    fs::create_directories(root);

    json manifest;
    manifest["feature_dim"] = corpus.feature_dim;
    manifest["datasets"] = json::array();

    for (const auto& ds : corpus.datasets) {
        const std::string csv_name = ds.dataset_id + ".csv";
        json entry;
        entry["id"] = ds.dataset_id;
        entry["file"] = csv_name;

        std::ofstream out(root / csv_name, std::ios::binary);
        if (!out) throw Error("cannot write '" + (root / csv_name).string() + "'");
        out << csv_header(corpus.feature_dim) << "\n";
        for (const auto& s : ds.samples) {
            out << s.file_id << ',' << format_double(s.mos) << ',' << s.votes << ','
                << (s.condition_id ? *s.condition_id : "");
            for (double f : s.features) out << ',' << format_double(f);
            out << "\n";
        }

        if (ds.curated_split) {
            const std::string split_name_file = ds.dataset_id + "_split.csv";
            entry["curated_split_file"] = split_name_file;
            std::ofstream sout(root / split_name_file, std::ios::binary);
            if (!sout) throw Error("cannot write '" + (root / split_name_file).string() + "'");
            sout << "file_id,split\n";
            for (const auto& [fid, split] : *ds.curated_split) {
                sout << fid << ',' << split_name(split) << "\n";
            }
        }
        manifest["datasets"].push_back(entry);
    }

    std::ofstream mout(root / "corpus.json", std::ios::binary);
    if (!mout) throw Error("cannot write '" + (root / "corpus.json").string() + "'");
    mout << manifest.dump(2) << "\n";
}

namespace {

// Largest-remainder apportionment of n into three parts matching the fractions.
std::array<size_t, 3> apportion(size_t n, const SplitSpec& spec) {
    const double fr[3] = {spec.train_fraction, spec.val_fraction, spec.test_fraction};
    std::array<size_t, 3> counts{};
    double rem[3];
    size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double target = fr[i] * static_cast<double>(n);
        counts[i] = static_cast<size_t>(std::floor(target));
        rem[i] = target - std::floor(target);
        assigned += counts[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i) {
            if (rem[i] > rem[best]) best = i;
        }
        ++counts[best];
        rem[best] = -1.0;
        ++assigned;
    }
    return counts;
}

}  // namespace

SplitResult split_dataset(const Dataset& dataset, const SplitSpec& spec) {
    spec.validate();
    if (dataset.samples.size() < 10) {
        std::ostringstream os;
        os << "dataset '" << dataset.dataset_id << "' has " << dataset.samples.size()
           << " samples; splitting requires at least 10";
        throw PreconditionError(os.str());
    }

    SplitResult result;

    if (spec.honor_curated && dataset.curated_split) {
        for (const auto& [fid, split] : *dataset.curated_split) {
            const bool known = std::any_of(dataset.samples.begin(), dataset.samples.end(),
                                           [&](const Sample& s) { return s.file_id == fid; });
            if (!known) {
                throw ValidationError("dataset '" + dataset.dataset_id +
                                      "': curated split references unknown file_id '" + fid + "'");
            }
        }
        for (const auto& s : dataset.samples) {
            auto it = dataset.curated_split->find(s.file_id);
            if (it == dataset.curated_split->end()) {
                throw ValidationError("dataset '" + dataset.dataset_id +
                                      "': curated split missing file_id '" + s.file_id + "'");
            }
            switch (it->second) {
                case Split::Train: result.train.push_back(s); break;
                case Split::Val: result.val.push_back(s); break;
                case Split::Test: result.test.push_back(s); break;
            }
        }
    } else {
        // Order files by a stable hash of (seed, dataset_id, file_id), then cut
        // at the cumulative fractions. Independent of input sample order.
        struct Keyed {
            uint64_t key;
            const Sample* sample;
        };
        std::vector<Keyed> keyed;
        keyed.reserve(dataset.samples.size());
        for (const auto& s : dataset.samples) {
            keyed.push_back({stable_hash(spec.seed, dataset.dataset_id, s.file_id), &s});
        }
        std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
            if (a.key != b.key) return a.key < b.key;
            return a.sample->file_id < b.sample->file_id;
        });

        const auto counts = apportion(keyed.size(), spec);
        size_t i = 0;
        for (; i < counts[0]; ++i) result.train.push_back(*keyed[i].sample);
        for (; i < counts[0] + counts[1]; ++i) result.val.push_back(*keyed[i].sample);
        for (; i < keyed.size(); ++i) result.test.push_back(*keyed[i].sample);
    }

    if (result.train.empty()) {
        throw ValidationError("dataset '" + dataset.dataset_id +
                              "': split produced an unusable (empty) training set");
    }
    if (result.test.empty()) {
        throw ValidationError("dataset '" + dataset.dataset_id +
                              "': split produced an empty test set");
    }
    return result;
}

}  // namespace dsc
