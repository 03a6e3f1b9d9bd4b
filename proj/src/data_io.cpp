#include "ccnet/data_io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ccnet {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

// ---------------------------------------------------------------------------
// Tokenization and captions

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            flush();
        } else if (std::isalnum(ch)) {
            current.push_back(static_cast<char>(std::tolower(ch)));
        }
        // punctuation is dropped
    }
    flush();
    return tokens;
}

std::vector<std::string> merge_captions(const std::vector<std::vector<std::string>>& captions) {
    if (captions.empty() || captions.size() > 2) {
        throw ContractError("merge_captions: expected 1..2 caption sequences, got " +
                            std::to_string(captions.size()));
    }
    std::vector<std::string> merged = captions[0];
    if (captions.size() == 2) {
        merged.push_back(kCaptionSeparator);
        merged.insert(merged.end(), captions[1].begin(), captions[1].end());
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Triplets

static std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::vector<TripletRecord> load_triplets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("triplets: cannot open '" + path + "'");
    std::vector<TripletRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError("triplets: parse error at line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        if (!j.is_object() || !j.contains("ref_id") || !j.contains("trg_id") ||
            !j.contains("captions") || !j.contains("category") || !j["ref_id"].is_string() ||
            !j["trg_id"].is_string() || !j["captions"].is_array() || !j["category"].is_string()) {
            throw FormatError("triplets: malformed record at line " + std::to_string(line_no));
        }
        TripletRecord rec;
        rec.ref_id = j["ref_id"].get<std::string>();
        rec.trg_id = j["trg_id"].get<std::string>();
        rec.category = j["category"].get<std::string>();
        for (const auto& cap : j["captions"]) {
            if (!cap.is_string()) {
                throw FormatError("triplets: non-string caption at line " +
                                  std::to_string(line_no));
            }
            rec.captions.push_back(tokenize(cap.get<std::string>()));
        }
        if (rec.captions.empty() || rec.captions.size() > 2) {
            throw DataError("triplets: record at line " + std::to_string(line_no) +
                            " must carry 1..2 captions");
        }
        for (const auto& cap : rec.captions) {
            if (cap.empty()) {
                throw DataError("triplets: empty caption after tokenization at line " +
                                std::to_string(line_no));
            }
        }
        if (rec.ref_id == rec.trg_id) {
            throw DataError("triplets: ref_id equals trg_id ('" + rec.ref_id + "') at line " +
                            std::to_string(line_no));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

void save_triplets(const std::vector<TripletRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("triplets: cannot write '" + path + "'");
    for (const auto& rec : records) {
        json j;
        j["ref_id"] = rec.ref_id;
        j["trg_id"] = rec.trg_id;
        json caps = json::array();
        for (const auto& cap : rec.captions) caps.push_back(join_tokens(cap));
        j["captions"] = caps;
        j["category"] = rec.category;
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Word vectors

WordVectorTable WordVectorTable::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("word vectors: cannot open '" + path + "'");
    WordVectorTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        std::vector<double> vec;
        double v;
        while (ss >> v) vec.push_back(v);
        if (token.empty() || vec.empty()) {
            throw FormatError("word vectors: malformed line " + std::to_string(line_no));
        }
        if (table.dim_ == 0) table.dim_ = static_cast<std::int64_t>(vec.size());
        if (static_cast<std::int64_t>(vec.size()) != table.dim_) {
            throw FormatError("word vectors: line " + std::to_string(line_no) + " has " +
                              std::to_string(vec.size()) + " values, expected " +
                              std::to_string(table.dim_));
        }
        table.vectors_[token] = std::move(vec);
    }
    return table;
}

void WordVectorTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("word vectors: cannot write '" + path + "'");
    out.precision(17);
    for (const auto& [token, vec] : vectors_) {
        out << token;
        for (double v : vec) out << ' ' << v;
        out << '\n';
    }
}

void WordVectorTable::add(const std::string& token, std::vector<double> vec) {
    if (dim_ == 0) dim_ = static_cast<std::int64_t>(vec.size());
    if (static_cast<std::int64_t>(vec.size()) != dim_) {
        throw ShapeError("word vectors: vector for '" + token + "' has " +
                         std::to_string(vec.size()) + " values, expected " + std::to_string(dim_));
    }
    vectors_[token] = std::move(vec);
}

std::vector<double> WordVectorTable::lookup(const std::string& token) const {
    auto it = vectors_.find(token);
    if (it != vectors_.end()) return it->second;
    if (policy_ == OovPolicy::kError) {
        throw DataError("word vectors: out-of-vocabulary token '" + token + "'");
    }
    return std::vector<double>(static_cast<std::size_t>(dim_), 0.0);
}

// ---------------------------------------------------------------------------
// Feature store

std::vector<std::string> FeatureStore::ids() const {
    std::vector<std::string> out;
    out.reserve(offsets_.size());
    for (const auto& [id, off] : offsets_) out.push_back(id);
    return out;
}

void FeatureStore::add(const std::string& id, const std::vector<float>& spatial,
                       const std::vector<float>& intermediate, const std::string& category) {
    const std::int64_t map_len = header_.height * header_.width * header_.channels;
    if (static_cast<std::int64_t>(spatial.size()) != map_len ||
        static_cast<std::int64_t>(intermediate.size()) != header_.intermediate_dim) {
        throw ShapeError("feature store: wrong feature sizes for id '" + id + "'");
    }
    if (offsets_.count(id)) throw DataError("feature store: duplicate id '" + id + "'");
    offsets_[id] = static_cast<std::int64_t>(data_.size() * sizeof(float));
    data_.insert(data_.end(), spatial.begin(), spatial.end());
    data_.insert(data_.end(), intermediate.begin(), intermediate.end());
    if (!category.empty()) categories_[id] = category;
}

std::size_t FeatureStore::entry_offset(const std::string& id) const {
    auto it = offsets_.find(id);
    if (it == offsets_.end()) {
        throw DataError("feature store: unknown id '" + id + "'");
    }
    return static_cast<std::size_t>(it->second) / sizeof(float);
}

std::vector<double> FeatureStore::spatial(const std::string& id) const {
    const std::size_t off = entry_offset(id);
    const std::size_t len =
        static_cast<std::size_t>(header_.height * header_.width * header_.channels);
    std::vector<double> out(len);
    for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<double>(data_[off + i]);
    return out;
}

std::vector<double> FeatureStore::intermediate(const std::string& id) const {
    const std::size_t off =
        entry_offset(id) +
        static_cast<std::size_t>(header_.height * header_.width * header_.channels);
    std::vector<double> out(static_cast<std::size_t>(header_.intermediate_dim));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(data_[off + i]);
    return out;
}

std::string FeatureStore::category(const std::string& id) const {
    if (!offsets_.count(id)) throw DataError("feature store: unknown id '" + id + "'");
    auto it = categories_.find(id);
    return it == categories_.end() ? std::string("all") : it->second;
}

PooledImage FeatureStore::pooled(const std::string& id) const {
    return pool_image(spatial(id), intermediate(id), header_.height, header_.width,
                      header_.channels, default_slice_regions());
}

FeatureStore FeatureStore::load(const std::string& dir) {
    const fs::path index_path = fs::path(dir) / "index.json";
    const fs::path data_path = fs::path(dir) / "features.bin";
    std::ifstream index_in(index_path);
    if (!index_in) throw DataError("feature store: cannot open '" + index_path.string() + "'");
    json j;
    try {
        index_in >> j;
    } catch (const json::exception& e) {
        throw FormatError("feature store: bad index: " + std::string(e.what()));
    }
    FeatureStore store;
    try {
        store.header_.height = j.at("height").get<std::int64_t>();
        store.header_.width = j.at("width").get<std::int64_t>();
        store.header_.channels = j.at("channels").get<std::int64_t>();
        store.header_.intermediate_dim = j.at("intermediate_dim").get<std::int64_t>();
        for (const auto& [id, off] : j.at("offsets").items()) {
            store.offsets_[id] = off.get<std::int64_t>();
        }
        if (j.contains("categories")) {
            for (const auto& [id, cat] : j["categories"].items()) {
                store.categories_[id] = cat.get<std::string>();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError("feature store: bad index: " + std::string(e.what()));
    }

    std::ifstream data_in(data_path, std::ios::binary | std::ios::ate);
    if (!data_in) throw DataError("feature store: cannot open '" + data_path.string() + "'");
    const std::int64_t bytes = static_cast<std::int64_t>(data_in.tellg());
    data_in.seekg(0);
    const std::int64_t entry_bytes =
        store.header_.values_per_image() * static_cast<std::int64_t>(sizeof(float));
    const std::int64_t expected =
        entry_bytes * static_cast<std::int64_t>(store.offsets_.size());
    if (bytes != expected) {
        throw FormatError("feature store: size mismatch, features.bin has " +
                          std::to_string(bytes) + " bytes, index implies " +
                          std::to_string(expected));
    }
    for (const auto& [id, off] : store.offsets_) {
        if (off < 0 || off % static_cast<std::int64_t>(sizeof(float)) != 0 ||
            off + entry_bytes > bytes) {
            throw FormatError("feature store: offset of id '" + id + "' out of range");
        }
    }
    store.data_.resize(static_cast<std::size_t>(bytes) / sizeof(float));
    data_in.read(reinterpret_cast<char*>(store.data_.data()), bytes);
    if (!data_in) throw FormatError("feature store: failed reading features.bin");
    return store;
}

void FeatureStore::save(const std::string& dir) const {
    fs::create_directories(dir);
    json j;
    j["height"] = header_.height;
    j["width"] = header_.width;
    j["channels"] = header_.channels;
    j["intermediate_dim"] = header_.intermediate_dim;
    json offs = json::object();
    for (const auto& [id, off] : offsets_) offs[id] = off;
    j["offsets"] = offs;
    if (!categories_.empty()) {
        json cats = json::object();
        for (const auto& [id, cat] : categories_) cats[id] = cat;
        j["categories"] = cats;
    }
    std::ofstream index_out(fs::path(dir) / "index.json", std::ios::binary);
    if (!index_out) throw DataError("feature store: cannot write index.json in '" + dir + "'");
    index_out << j.dump(2) << "\n";

    std::ofstream data_out(fs::path(dir) / "features.bin", std::ios::binary);
    if (!data_out) throw DataError("feature store: cannot write features.bin in '" + dir + "'");
    data_out.write(reinterpret_cast<const char*>(data_.data()),
                   static_cast<std::streamsize>(data_.size() * sizeof(float)));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'C', 'C', 'N', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

void read_bytes(std::istream& in, void* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw FormatError("checkpoint: truncated file");
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    read_bytes(in, &v, sizeof(T));
    return v;
}

std::string read_string(std::istream& in) {
    const std::uint32_t len = read_pod<std::uint32_t>(in);
    std::string s(len, '\0');
    if (len > 0) read_bytes(in, s.data(), len);
    return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path,
                     const OptimizerSnapshot* optimizer) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
    write_bytes(out, kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, entry] : params.entries()) {
        write_string(out, name);
        const auto& t = entry.tensor;
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
        for (std::int64_t d : t->shape) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        for (double v : t->value) write_pod<float>(out, static_cast<float>(v));
    }
    if (optimizer == nullptr) {
        write_pod<std::uint8_t>(out, 0);
        return;
    }
    write_pod<std::uint8_t>(out, 1);
    write_pod<std::uint64_t>(out, optimizer->step);
    write_pod<std::uint64_t>(out, optimizer->epoch);
    write_pod<double>(out, optimizer->learning_rate);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(optimizer->moments.size()));
    for (const auto& [name, mv] : optimizer->moments) {
        write_string(out, name);
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(mv.first.size()));
        write_bytes(out, mv.first.data(), mv.first.size() * sizeof(float));
        write_bytes(out, mv.second.data(), mv.second.size() * sizeof(float));
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    read_bytes(in, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic bytes in '" + path + "'");
    }
    const std::uint32_t version = read_pod<std::uint32_t>(in);
    if (version != kVersion) {
        throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint32_t count = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(in);
        CheckpointTensor t;
        const std::uint32_t rank = read_pod<std::uint32_t>(in);
        std::int64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const std::uint32_t d = read_pod<std::uint32_t>(in);
            t.shape.push_back(static_cast<std::int64_t>(d));
            n *= d;
        }
        t.values.resize(static_cast<std::size_t>(n));
        if (n > 0) read_bytes(in, t.values.data(), static_cast<std::size_t>(n) * sizeof(float));
        if (!ckpt.tensors.emplace(name, std::move(t)).second) {
            throw DataError("checkpoint: duplicate parameter name '" + name + "'");
        }
    }
    const std::uint8_t flag = read_pod<std::uint8_t>(in);
    if (flag == 1) {
        OptimizerSnapshot opt;
        opt.step = read_pod<std::uint64_t>(in);
        opt.epoch = read_pod<std::uint64_t>(in);
        opt.learning_rate = read_pod<double>(in);
        const std::uint32_t n_moments = read_pod<std::uint32_t>(in);
        for (std::uint32_t i = 0; i < n_moments; ++i) {
            const std::string name = read_string(in);
            const std::uint64_t n = read_pod<std::uint64_t>(in);
            std::vector<float> m(n), v(n);
            if (n > 0) {
                read_bytes(in, m.data(), n * sizeof(float));
                read_bytes(in, v.data(), n * sizeof(float));
            }
            opt.moments[name] = {std::move(m), std::move(v)};
        }
        ckpt.optimizer = std::move(opt);
    } else if (flag != 0) {
        throw FormatError("checkpoint: bad optimizer-state flag byte");
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, ModelParams& params) {
    if (ckpt.tensors.size() != params.size()) {
        throw DataError("checkpoint: parameter count mismatch, file has " +
                        std::to_string(ckpt.tensors.size()) + ", model expects " +
                        std::to_string(params.size()));
    }
    for (const auto& [name, entry] : params.entries()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            throw DataError("checkpoint: missing parameter '" + name + "'");
        }
        if (it->second.shape != entry.tensor->shape) {
            throw DataError("checkpoint: shape mismatch for '" + name + "': file " +
                            shape_to_string(it->second.shape) + ", model " +
                            entry.tensor->shape_str());
        }
        for (std::size_t i = 0; i < entry.tensor->value.size(); ++i) {
            entry.tensor->value[i] = static_cast<double>(it->second.values[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic dataset

namespace {

constexpr std::uint64_t kStreamPatterns = 1;
constexpr std::uint64_t kStreamInterPatterns = 2;
constexpr std::uint64_t kStreamNoise = 3;
constexpr std::uint64_t kStreamWords = 4;
constexpr std::uint64_t kStreamTrainTriplets = 5;
constexpr std::uint64_t kStreamEvalTriplets = 6;

const char* kAttrNames[6] = {"style", "color", "sleeve", "hem", "trim", "fabric"};
const char* kCategoryNames[3] = {"dress", "shirt", "toptee"};

std::vector<double> unit_vector(std::int64_t dim, Rng& rng) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        v.assign(v.size(), 0.0);
        v[0] = 1.0;
        return v;
    }
    for (double& x : v) x /= norm;
    return v;
}

std::int64_t checked_combinations(const SyntheticSpec& spec) {
    std::int64_t total = 1;
    for (std::int64_t a = 0; a < spec.attributes; ++a) {
        total *= spec.values;
        if (total > (std::int64_t{1} << 40)) {
            throw DataError("synthetic: V^A too large");
        }
    }
    return total;
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.attributes < 1 || spec.attributes > 1 + kNumSlices) {
        throw DataError("synthetic: attribute count must lie in [1, " +
                        std::to_string(1 + kNumSlices) + "], got " +
                        std::to_string(spec.attributes));
    }
    if (spec.values < 2) throw DataError("synthetic: need at least 2 values per attribute");
    if (spec.channels < spec.attributes) {
        throw DataError("synthetic: channels must be >= attributes");
    }
    if (spec.intermediate_dim < 1) throw DataError("synthetic: intermediate_dim must be >= 1");
    if (spec.word_dim < 1) throw DataError("synthetic: word_dim must be >= 1");
    if (spec.noise < 0.0) throw DataError("synthetic: noise amplitude must be >= 0");
    const std::int64_t combos = checked_combinations(spec);
    if (spec.images < combos) {
        throw DataError("synthetic: infeasible spec, " + std::to_string(spec.images) +
                        " images cannot cover " + std::to_string(combos) +
                        " attribute combinations");
    }
    if (spec.images > combos) {
        throw DataError("synthetic: " + std::to_string(spec.images) + " images exceed the " +
                        std::to_string(combos) +
                        " distinct attribute combinations (targets must stay unique)");
    }
}

}  // namespace

std::vector<std::int64_t> decode_attributes(std::int64_t index, const SyntheticSpec& spec) {
    std::vector<std::int64_t> attrs(static_cast<std::size_t>(spec.attributes));
    for (std::int64_t a = spec.attributes - 1; a >= 0; --a) {
        attrs[static_cast<std::size_t>(a)] = index % spec.values;
        index /= spec.values;
    }
    return attrs;
}

std::int64_t encode_attributes(const std::vector<std::int64_t>& attrs, const SyntheticSpec& spec) {
    std::int64_t index = 0;
    for (std::int64_t v : attrs) index = index * spec.values + v;
    return index;
}

std::string synthetic_image_id(std::int64_t index, const SyntheticSpec& spec) {
    std::string digits = std::to_string(index);
    const std::size_t width = std::to_string(spec.images - 1).size();
    while (digits.size() < width) digits.insert(digits.begin(), '0');
    return "img" + digits;
}

std::string SyntheticCodebook::value_token(std::int64_t attr, std::int64_t value) const {
    return attr_names[static_cast<std::size_t>(attr)] + std::to_string(value);
}

bool SyntheticCodebook::parse_value_token(const std::string& token, std::int64_t* attr,
                                          std::int64_t* value) const {
    for (std::size_t a = 0; a < attr_names.size(); ++a) {
        const std::string& name = attr_names[a];
        if (token.size() <= name.size() || token.compare(0, name.size(), name) != 0) continue;
        const std::string suffix = token.substr(name.size());
        if (suffix.find_first_not_of("0123456789") != std::string::npos) continue;
        const std::int64_t v = std::stoll(suffix);
        if (v >= static_cast<std::int64_t>(patterns[a].size())) return false;
        *attr = static_cast<std::int64_t>(a);
        *value = v;
        return true;
    }
    return false;
}

std::string synthetic_category(const std::vector<std::int64_t>& attrs, const SyntheticSpec& spec,
                               const SyntheticCodebook& codebook) {
    const std::int64_t buckets = static_cast<std::int64_t>(codebook.category_names.size());
    const std::int64_t bucket = attrs[0] * buckets / spec.values;
    return codebook.category_names[static_cast<std::size_t>(bucket)];
}

SyntheticCodebook make_codebook(const SyntheticSpec& spec) {
    validate_spec(spec);
    SyntheticCodebook cb;
    cb.block_width = spec.channels / spec.attributes;
    const auto slices = default_slice_regions();
    for (std::int64_t a = 0; a < spec.attributes; ++a) {
        cb.attr_names.push_back(kAttrNames[a]);
        // Attribute 0 is the global style: whole map plus the intermediate
        // vector. The rest land in distinct slice windows.
        cb.regions.push_back(a == 0 ? SliceRegion{0, 7, 0, 7}
                                    : slices[static_cast<std::size_t>(a - 1)]);
        std::vector<std::vector<double>> value_patterns;
        for (std::int64_t v = 0; v < spec.values; ++v) {
            Rng rng(derive_seed(spec.seed, kStreamPatterns, a * spec.values + v));
            value_patterns.push_back(unit_vector(cb.block_width, rng));
        }
        cb.patterns.push_back(std::move(value_patterns));
    }
    for (std::int64_t v = 0; v < spec.values; ++v) {
        Rng rng(derive_seed(spec.seed, kStreamInterPatterns, v));
        cb.inter_patterns.push_back(unit_vector(spec.intermediate_dim, rng));
    }
    const std::int64_t buckets = std::min<std::int64_t>(3, spec.values);
    for (std::int64_t b = 0; b < buckets; ++b) cb.category_names.push_back(kCategoryNames[b]);
    return cb;
}

namespace {

std::vector<TripletRecord> generate_split(const SyntheticSpec& spec, const SyntheticCodebook& cb,
                                          std::int64_t count, std::uint64_t stream) {
    Rng rng(derive_seed(spec.seed, stream));
    std::vector<TripletRecord> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::int64_t t = 0; t < count; ++t) {
        const std::int64_t ref_idx = static_cast<std::int64_t>(rng.bounded(spec.images));
        std::vector<std::int64_t> attrs = decode_attributes(ref_idx, spec);
        const std::int64_t flips = 1 + static_cast<std::int64_t>(rng.bounded(2));
        std::vector<std::int64_t> chosen;
        chosen.push_back(static_cast<std::int64_t>(rng.bounded(spec.attributes)));
        if (flips == 2 && spec.attributes > 1) {
            std::int64_t second = static_cast<std::int64_t>(rng.bounded(spec.attributes - 1));
            if (second >= chosen[0]) ++second;
            chosen.push_back(second);
            if (chosen[0] > chosen[1]) std::swap(chosen[0], chosen[1]);
        }
        TripletRecord rec;
        for (std::int64_t a : chosen) {
            const std::int64_t old = attrs[static_cast<std::size_t>(a)];
            const std::int64_t next =
                (old + 1 + static_cast<std::int64_t>(rng.bounded(spec.values - 1))) % spec.values;
            attrs[static_cast<std::size_t>(a)] = next;
            rec.captions.push_back({"is", cb.value_token(a, next)});
        }
        const std::int64_t trg_idx = encode_attributes(attrs, spec);
        rec.ref_id = synthetic_image_id(ref_idx, spec);
        rec.trg_id = synthetic_image_id(trg_idx, spec);
        rec.category = synthetic_category(attrs, spec, cb);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
    const SyntheticCodebook cb = make_codebook(spec);
    SyntheticData data;
    FeatureStoreHeader header;
    header.height = 7;
    header.width = 7;
    header.channels = spec.channels;
    header.intermediate_dim = spec.intermediate_dim;
    data.store = FeatureStore(header);

    const std::int64_t map_len = header.height * header.width * header.channels;
    for (std::int64_t i = 0; i < spec.images; ++i) {
        const std::vector<std::int64_t> attrs = decode_attributes(i, spec);
        Rng rng(derive_seed(spec.seed, kStreamNoise, static_cast<std::uint64_t>(i)));
        std::vector<double> map(static_cast<std::size_t>(map_len));
        for (double& v : map) v = rng.uniform(-spec.noise, spec.noise);
        for (std::int64_t a = 0; a < spec.attributes; ++a) {
            const SliceRegion& region = cb.regions[static_cast<std::size_t>(a)];
            const std::vector<double>& pattern =
                cb.patterns[static_cast<std::size_t>(a)][static_cast<std::size_t>(
                    attrs[static_cast<std::size_t>(a)])];
            const std::int64_t block0 = a * cb.block_width;
            for (std::int64_t r = region.row0; r < region.row1; ++r) {
                for (std::int64_t c = region.col0; c < region.col1; ++c) {
                    double* cell = map.data() + (r * header.width + c) * header.channels;
                    for (std::int64_t k = 0; k < cb.block_width; ++k) {
                        cell[block0 + k] += pattern[static_cast<std::size_t>(k)];
                    }
                }
            }
        }
        std::vector<double> inter(static_cast<std::size_t>(header.intermediate_dim));
        const std::vector<double>& style =
            cb.inter_patterns[static_cast<std::size_t>(attrs[0])];
        for (std::size_t k = 0; k < inter.size(); ++k) {
            inter[k] = rng.uniform(-spec.noise, spec.noise) + style[k];
        }
        std::vector<float> map_f(map.begin(), map.end());
        std::vector<float> inter_f(inter.begin(), inter.end());
        data.store.add(synthetic_image_id(i, spec), map_f, inter_f,
                       synthetic_category(attrs, spec, cb));
    }

    data.train = generate_split(spec, cb, spec.train_triplets, kStreamTrainTriplets);
    data.eval = generate_split(spec, cb, spec.eval_triplets, kStreamEvalTriplets);

    data.words = WordVectorTable(spec.word_dim);
    std::vector<std::string> vocab;
    for (std::int64_t a = 0; a < spec.attributes; ++a) {
        for (std::int64_t v = 0; v < spec.values; ++v) vocab.push_back(cb.value_token(a, v));
    }
    vocab.push_back("is");
    vocab.push_back(kCaptionSeparator);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        Rng rng(derive_seed(spec.seed, kStreamWords, i));
        data.words.add(vocab[i], unit_vector(spec.word_dim, rng));
    }
    return data;
}

void write_synthetic(const SyntheticSpec& spec, const std::string& dir) {
    const SyntheticData data = generate_synthetic(spec);
    fs::create_directories(dir);
    data.store.save(dir);
    save_triplets(data.train, (fs::path(dir) / "train.jsonl").string());
    save_triplets(data.eval, (fs::path(dir) / "val.jsonl").string());
    data.words.save((fs::path(dir) / "words.txt").string());
}

SyntheticSpec parse_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("synthetic spec: cannot open '" + path + "'");
    SyntheticSpec spec;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key.empty()) continue;
        std::string eq;
        ss >> eq;
        std::string value;
        if (eq == "=") {
            ss >> value;
        } else {
            value = eq;
        }
        if (value.empty()) {
            throw FormatError("synthetic spec: missing value at line " + std::to_string(line_no));
        }
        try {
            if (key == "attributes") {
                spec.attributes = std::stoll(value);
            } else if (key == "values") {
                spec.values = std::stoll(value);
            } else if (key == "images") {
                spec.images = std::stoll(value);
            } else if (key == "train_triplets") {
                spec.train_triplets = std::stoll(value);
            } else if (key == "eval_triplets") {
                spec.eval_triplets = std::stoll(value);
            } else if (key == "noise") {
                spec.noise = std::stod(value);
            } else if (key == "seed") {
                spec.seed = std::stoull(value);
            } else if (key == "channels") {
                spec.channels = std::stoll(value);
            } else if (key == "intermediate_dim") {
                spec.intermediate_dim = std::stoll(value);
            } else if (key == "word_dim") {
                spec.word_dim = std::stoll(value);
            } else {
                throw FormatError("synthetic spec: unknown key '" + key + "' at line " +
                                  std::to_string(line_no));
            }
        } catch (const std::invalid_argument&) {
            throw FormatError("synthetic spec: bad value for '" + key + "' at line " +
                              std::to_string(line_no));
        }
    }
    return spec;
}

}  // namespace ccnet
