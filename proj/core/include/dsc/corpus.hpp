#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dsc {

enum class Split { Train, Val, Test };

std::string split_name(Split s);
Split parse_split(const std::string& s);

// One rated file: a fixed-length feature vector plus its mean opinion score.
struct Sample {
    std::string file_id;
    std::vector<double> features;
    double mos = 0.0;  // in [1, 5]
    int votes = 1;     // vote count behind the mean
    std::optional<std::string> condition_id;
};

struct Dataset {
    std::string dataset_id;
    std::vector<Sample> samples;
    std::optional<std::map<std::string, Split>> curated_split;  // file_id -> split
};

struct Corpus {
    std::vector<Dataset> datasets;
    size_t feature_dim = 0;

    const Dataset* find(const std::string& dataset_id) const;
    std::vector<std::string> dataset_ids() const;
};

// Split request. Assignment is a deterministic function of
// (seed, dataset_id, file_ids): files are ordered by a stable hash and cut at
// the cumulative fractions, so the split is stable under sample reordering.
struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    uint64_t seed = 0;
    bool honor_curated = true;

    void validate() const;  // throws ConfigError
};

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

// Checks all type invariants (bounds, uniqueness, dimensions, curated split
// coverage); throws ValidationError naming the offending record.
void validate_corpus(const Corpus& corpus);

// Reads the on-disk layout: corpus.json manifest plus one CSV per dataset.
Corpus load_corpus(const std::string& dir);

// Writes the same layout. load(save(c)) == c.
void save_corpus(const Corpus& corpus, const std::string& dir);

// Deterministic train/val/test partition. Requires >= 10 samples. Realized
// sizes are within one sample of the requested fractions. Raises
// ValidationError when the resulting training set is empty.
SplitResult split_dataset(const Dataset& dataset, const SplitSpec& spec);

bool operator==(const Sample& a, const Sample& b);
bool operator==(const Dataset& a, const Dataset& b);
bool operator==(const Corpus& a, const Corpus& b);

}  // namespace dsc
