#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccnet/features.hpp"
#include "ccnet/nn.hpp"
#include "ccnet/rng.hpp"

namespace ccnet {

// ---------------------------------------------------------------------------
// Tokenization and captions

// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

inline constexpr const char* kCaptionSeparator = "<and>";

// Join 1..2 token sequences with the reserved separator token.
std::vector<std::string> merge_captions(const std::vector<std::vector<std::string>>& captions);

// ---------------------------------------------------------------------------
// Triplets

struct TripletRecord {
    std::string ref_id;
    std::string trg_id;
    std::vector<std::vector<std::string>> captions;  // 1..2 token sequences
    std::string category;
};

std::vector<TripletRecord> load_triplets(const std::string& path);
void save_triplets(const std::vector<TripletRecord>& records, const std::string& path);

// ---------------------------------------------------------------------------
// Word vectors

class WordVectorTable {
public:
    enum class OovPolicy { kZeroVector, kError };

    WordVectorTable() = default;
    explicit WordVectorTable(std::int64_t dim, OovPolicy policy = OovPolicy::kZeroVector)
        : dim_(dim), policy_(policy) {}

    static WordVectorTable load(const std::string& path);
    void save(const std::string& path) const;

    void add(const std::string& token, std::vector<double> vec);
    bool contains(const std::string& token) const { return vectors_.count(token) > 0; }
    // Out-of-vocabulary lookups follow the policy: zero vector or error.
    std::vector<double> lookup(const std::string& token) const;

    std::int64_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    OovPolicy policy() const { return policy_; }

private:
    std::int64_t dim_ = 0;
    OovPolicy policy_ = OovPolicy::kZeroVector;
    std::map<std::string, std::vector<double>> vectors_;
};

// ---------------------------------------------------------------------------
// Feature store

struct FeatureStoreHeader {
    std::int64_t height = 7;
    std::int64_t width = 7;
    std::int64_t channels = 0;
    std::int64_t intermediate_dim = 0;

    std::int64_t values_per_image() const {
        return height * width * channels + intermediate_dim;
    }
};

// Per-image spatial map (H x W x C) plus intermediate vector (C_i), stored
// as 32-bit little-endian floats: `index.json` + `features.bin` in one
// directory. An optional category map rides along in the index.
class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(FeatureStoreHeader header) : header_(header) {}

    static FeatureStore load(const std::string& dir);
    void save(const std::string& dir) const;

    void add(const std::string& id, const std::vector<float>& spatial,
             const std::vector<float>& intermediate, const std::string& category = "");

    const FeatureStoreHeader& header() const { return header_; }
    bool has(const std::string& id) const { return offsets_.count(id) > 0; }
    std::size_t size() const { return offsets_.size(); }
    std::vector<std::string> ids() const;

    std::vector<double> spatial(const std::string& id) const;
    std::vector<double> intermediate(const std::string& id) const;
    // Category label, or "all" when the store carries no category map.
    std::string category(const std::string& id) const;

    PooledImage pooled(const std::string& id) const;

    const std::vector<float>& raw_data() const { return data_; }

private:
    std::size_t entry_offset(const std::string& id) const;

    FeatureStoreHeader header_;
    std::map<std::string, std::int64_t> offsets_;  // id -> byte offset
    std::map<std::string, std::string> categories_;
    std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct OptimizerSnapshot {
    std::uint64_t step = 0;
    std::uint64_t epoch = 0;
    double learning_rate = 0.0;
    // Adam first/second moments per learnable parameter name.
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> moments;
};

struct CheckpointTensor {
    std::vector<std::int64_t> shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::map<std::string, CheckpointTensor> tensors;  // name-sorted
    std::optional<OptimizerSnapshot> optimizer;
};

void save_checkpoint(const ModelParams& params, const std::string& path,
                     const OptimizerSnapshot* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

// Apply checkpoint values onto an existing registry (shapes must match).
void apply_checkpoint(const Checkpoint& ckpt, ModelParams& params);

// ---------------------------------------------------------------------------
// Synthetic dataset

struct SyntheticSpec {
    std::int64_t attributes = 4;      // A
    std::int64_t values = 6;          // V
    std::int64_t images = 1296;       // N; must equal V^A
    std::int64_t train_triplets = 2000;
    std::int64_t eval_triplets = 500;
    double noise = 0.05;
    std::uint64_t seed = 1;
    std::int64_t channels = 32;          // C
    std::int64_t intermediate_dim = 32;  // C_i
    std::int64_t word_dim = 300;
};

SyntheticSpec parse_synthetic_spec(const std::string& path);

// The generative codebook: which spatial region and channel block each
// attribute writes to, and the fixed pattern vector for every value.
struct SyntheticCodebook {
    std::int64_t block_width = 0;                          // channels per attribute
    std::vector<SliceRegion> regions;                      // per attribute
    std::vector<std::vector<std::vector<double>>> patterns;  // [a][v] -> unit vector (block)
    std::vector<std::vector<double>> inter_patterns;         // [v] -> unit vector (C_i)
    std::vector<std::string> attr_names;
    std::vector<std::string> category_names;

    std::string value_token(std::int64_t attr, std::int64_t value) const;
    // Reverse lookup; returns false when the token names no value.
    bool parse_value_token(const std::string& token, std::int64_t* attr,
                           std::int64_t* value) const;
};

SyntheticCodebook make_codebook(const SyntheticSpec& spec);

struct SyntheticData {
    FeatureStore store;
    std::vector<TripletRecord> train;
    std::vector<TripletRecord> eval;
    WordVectorTable words;
};

// Image index <-> attribute vector mapping (mixed-radix, exhaustive).
std::vector<std::int64_t> decode_attributes(std::int64_t index, const SyntheticSpec& spec);
std::int64_t encode_attributes(const std::vector<std::int64_t>& attrs, const SyntheticSpec& spec);
std::string synthetic_image_id(std::int64_t index, const SyntheticSpec& spec);
std::string synthetic_category(const std::vector<std::int64_t>& attrs, const SyntheticSpec& spec,
                               const SyntheticCodebook& codebook);

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Generate and persist: index.json + features.bin + train.jsonl +
// val.jsonl + words.txt under `dir`.
void write_synthetic(const SyntheticSpec& spec, const std::string& dir);

}  // namespace ccnet
