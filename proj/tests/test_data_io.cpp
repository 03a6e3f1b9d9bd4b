#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ccnet/data_io.hpp"
#include "test_util.hpp"

using namespace ccnet;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("ccnet_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

SyntheticSpec tiny_spec() {
    SyntheticSpec spec;
    spec.attributes = 3;
    spec.values = 3;
    spec.images = 27;
    spec.train_triplets = 64;
    spec.eval_triplets = 64;
    spec.noise = 0.0;
    spec.seed = 7;
    spec.channels = 12;
    spec.intermediate_dim = 8;
    spec.word_dim = 16;
    return spec;
}

// Independent generative-mapping oracle: decode attribute vectors straight
// from the stored features, apply the caption's flips, and name the target.
std::vector<std::int64_t> oracle_decode(const FeatureStore& store, const std::string& id,
                                        const SyntheticSpec& spec, const SyntheticCodebook& cb) {
    const auto spatial = store.spatial(id);
    const auto inter = store.intermediate(id);
    std::vector<std::int64_t> attrs(static_cast<std::size_t>(spec.attributes));
    // Attribute 0 from the intermediate vector.
    double best = -1e300;
    for (std::int64_t v = 0; v < spec.values; ++v) {
        double dot = 0.0;
        for (std::size_t k = 0; k < inter.size(); ++k)
            dot += inter[k] * cb.inter_patterns[static_cast<std::size_t>(v)][k];
        if (dot > best) {
            best = dot;
            attrs[0] = v;
        }
    }
    for (std::int64_t a = 1; a < spec.attributes; ++a) {
        const auto pooled =
            region_pool(spatial, 7, 7, spec.channels, cb.regions[static_cast<std::size_t>(a)]);
        best = -1e300;
        for (std::int64_t v = 0; v < spec.values; ++v) {
            const auto& pattern =
                cb.patterns[static_cast<std::size_t>(a)][static_cast<std::size_t>(v)];
            double dot = 0.0;
            for (std::int64_t k = 0; k < cb.block_width; ++k)
                dot += pooled[static_cast<std::size_t>(a * cb.block_width + k)] *
                       pattern[static_cast<std::size_t>(k)];
            if (dot > best) {
                best = dot;
                attrs[static_cast<std::size_t>(a)] = v;
            }
        }
    }
    return attrs;
}

double oracle_recall_at_1(const SyntheticData& data, const SyntheticSpec& spec,
                          const SyntheticCodebook& cb) {
    std::size_t hits = 0;
    for (const auto& rec : data.eval) {
        auto attrs = oracle_decode(data.store, rec.ref_id, spec, cb);
        for (const auto& token : merge_captions(rec.captions)) {
            std::int64_t a, v;
            if (cb.parse_value_token(token, &a, &v)) attrs[static_cast<std::size_t>(a)] = v;
        }
        const std::string predicted = synthetic_image_id(encode_attributes(attrs, spec), spec);
        if (predicted == rec.trg_id) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.eval.size());
}

}  // namespace

TEST_CASE("tokenize lowercases, strips punctuation, splits on whitespace") {
    auto tokens = tokenize("Is  Yellow, with short-sleeves!");
    REQUIRE(tokens.size() == 4);
    CHECK(tokens[0] == "is");
    CHECK(tokens[1] == "yellow");
    CHECK(tokens[2] == "with");
    CHECK(tokens[3] == "shortsleeves");
}

TEST_CASE("merge_captions joins with the reserved separator") {
    auto one = merge_captions({{"is", "red"}});
    CHECK(one == std::vector<std::string>{"is", "red"});

    auto two = merge_captions({{"is", "red"}, {"longer"}});
    CHECK(two == std::vector<std::string>{"is", "red", "<and>", "longer"});

    CHECK_THROWS_AS(merge_captions({}), ContractError);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> a(1 + rng.bounded(5), "x");
        std::vector<std::string> b(1 + rng.bounded(5), "y");
        CHECK(merge_captions({a, b}).size() == a.size() + b.size() + 1);
    }
}

TEST_CASE("feature store entry arithmetic and round trip") {
    FeatureStoreHeader header{7, 7, 4, 4};
    CHECK(header.values_per_image() * 4 == 800);

    Rng rng(11);
    FeatureStore store(header);
    std::vector<float> map(7 * 7 * 4), inter(4);
    for (int i = 0; i < 3; ++i) {
        for (auto& v : map) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : inter) v = static_cast<float>(rng.uniform(-1, 1));
        store.add("img" + std::to_string(i), map, inter, "dress");
    }
    const std::string dir = temp_dir("store_roundtrip");
    store.save(dir);
    CHECK(fs::file_size(fs::path(dir) / "features.bin") == 3 * 800);

    FeatureStore loaded = FeatureStore::load(dir);
    CHECK(loaded.size() == 3);
    CHECK(loaded.header().channels == 4);
    CHECK(loaded.raw_data() == store.raw_data());
    CHECK(loaded.category("img0") == "dress");

    CHECK_THROWS_AS(loaded.spatial("x999"), DataError);
}

TEST_CASE("feature store detects truncation") {
    FeatureStoreHeader header{7, 7, 2, 2};
    FeatureStore store(header);
    std::vector<float> map(7 * 7 * 2, 1.0f), inter(2, 1.0f);
    store.add("img0", map, inter);
    const std::string dir = temp_dir("store_truncated");
    store.save(dir);
    std::string bytes = read_file((fs::path(dir) / "features.bin").string());
    bytes.resize(bytes.size() - 8);
    write_file((fs::path(dir) / "features.bin").string(), bytes);
    CHECK_THROWS_AS(FeatureStore::load(dir), FormatError);
}

TEST_CASE("triplet parsing") {
    const std::string dir = temp_dir("triplets");
    const std::string path = dir + "/t.jsonl";
    write_file(path,
               R"({"captions":["is yellow","has short sleeves"],"category":"dress","ref_id":"a","trg_id":"b"})"
               "\n");
    auto records = load_triplets(path);
    REQUIRE(records.size() == 1);
    CHECK(records[0].captions.size() == 2);
    CHECK(records[0].captions[0] == std::vector<std::string>{"is", "yellow"});
    CHECK(records[0].captions[1] == std::vector<std::string>{"has", "short", "sleeves"});

    SUBCASE("ref equal to trg is rejected") {
        write_file(path,
                   R"({"captions":["is red"],"category":"dress","ref_id":"a","trg_id":"a"})"
                   "\n");
        CHECK_THROWS_AS(load_triplets(path), DataError);
    }
    SUBCASE("malformed json reports the line number") {
        write_file(path,
                   R"({"captions":["is red"],"category":"dress","ref_id":"a","trg_id":"b"})"
                   "\nnot json at all\n");
        try {
            load_triplets(path);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        }
    }
}

TEST_CASE("triplet save/load round trip preserves order and count") {
    SyntheticSpec spec = tiny_spec();
    spec.train_triplets = 64;
    auto data = generate_synthetic(spec);
    const std::string dir = temp_dir("triplet_roundtrip");
    save_triplets(data.train, dir + "/train.jsonl");
    auto loaded = load_triplets(dir + "/train.jsonl");
    REQUIRE(loaded.size() == data.train.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].ref_id == data.train[i].ref_id);
        CHECK(loaded[i].trg_id == data.train[i].trg_id);
        CHECK(loaded[i].captions == data.train[i].captions);
        CHECK(loaded[i].category == data.train[i].category);
    }
}

TEST_CASE("word vector table") {
    WordVectorTable table(4);
    table.add("red", {1, 2, 3, 4});
    CHECK(table.lookup("red") == std::vector<double>{1, 2, 3, 4});
    CHECK(table.lookup("oov") == std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(table.add("bad", {1, 2}), ShapeError);

    const std::string dir = temp_dir("words");
    table.save(dir + "/words.txt");
    auto loaded = WordVectorTable::load(dir + "/words.txt");
    CHECK(loaded.dim() == 4);
    CHECK(loaded.lookup("red") == std::vector<double>{1, 2, 3, 4});

    WordVectorTable strict(4, WordVectorTable::OovPolicy::kError);
    CHECK_THROWS_AS(strict.lookup("oov"), DataError);
}

TEST_CASE("checkpoint round trip is bit exact at 32-bit precision") {
    Rng rng(13);
    ModelParams params;
    params.add("a.weight", ccnet_test::random_tensor({3, 4}, rng, true));
    params.add("a.bias", ccnet_test::random_tensor({7}, rng, true));
    params.add("conv.kernel", ccnet_test::random_tensor({2, 2, 3}, rng, true));
    params.add("bn.running_var", ccnet_test::random_tensor({5}, rng, false, 0.5, 2.0), false);

    const std::string dir = temp_dir("checkpoint");
    const std::string path = dir + "/model.ckpt";
    save_checkpoint(params, path);

    Checkpoint ckpt = load_checkpoint(path);
    REQUIRE(ckpt.tensors.size() == params.size());
    CHECK(!ckpt.optimizer.has_value());
    for (const auto& [name, entry] : params.entries()) {
        const auto& t = ckpt.tensors.at(name);
        REQUIRE(t.shape == entry.tensor->shape);
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            CHECK(t.values[i] == static_cast<float>(entry.tensor->value[i]));
        }
    }

    // Write -> read -> write reproduces the same bytes.
    ModelParams params2;
    for (const auto& [name, entry] : params.entries()) {
        params2.add(name, Tensor::zeros(entry.tensor->shape), entry.learnable);
    }
    apply_checkpoint(ckpt, params2);
    save_checkpoint(params2, dir + "/model2.ckpt");
    CHECK(read_file(path) == read_file(dir + "/model2.ckpt"));
}

TEST_CASE("checkpoint optimizer block round trips") {
    Rng rng(17);
    ModelParams params;
    params.add("w", ccnet_test::random_tensor({2, 2}, rng, true));
    OptimizerSnapshot opt;
    opt.step = 42;
    opt.epoch = 3;
    opt.learning_rate = 9.5e-5;
    opt.moments["w"] = {{1.f, 2.f, 3.f, 4.f}, {5.f, 6.f, 7.f, 8.f}};

    const std::string dir = temp_dir("checkpoint_opt");
    save_checkpoint(params, dir + "/m.ckpt", &opt);
    Checkpoint ckpt = load_checkpoint(dir + "/m.ckpt");
    REQUIRE(ckpt.optimizer.has_value());
    CHECK(ckpt.optimizer->step == 42);
    CHECK(ckpt.optimizer->epoch == 3);
    CHECK(ckpt.optimizer->learning_rate == 9.5e-5);
    CHECK(ckpt.optimizer->moments.at("w").first == std::vector<float>{1, 2, 3, 4});
    CHECK(ckpt.optimizer->moments.at("w").second == std::vector<float>{5, 6, 7, 8});
}

TEST_CASE("checkpoint format errors") {
    const std::string dir = temp_dir("checkpoint_bad");
    write_file(dir + "/bad.ckpt", std::string("XXXX") + std::string(16, '\0'));
    CHECK_THROWS_AS(load_checkpoint(dir + "/bad.ckpt"), FormatError);

    ModelParams empty;
    save_checkpoint(empty, dir + "/empty.ckpt");
    Checkpoint ckpt = load_checkpoint(dir + "/empty.ckpt");
    CHECK(ckpt.tensors.empty());
    // magic + version + count + flag byte
    CHECK(fs::file_size(dir + "/empty.ckpt") == 4 + 4 + 4 + 1);

    ModelParams params;
    params.add("x", Tensor::zeros({2}));
    CHECK_THROWS_AS(params.add("x", Tensor::zeros({2})), DataError);
}

TEST_CASE("synthetic generation is deterministic byte for byte") {
    SyntheticSpec spec = tiny_spec();
    const std::string dir1 = temp_dir("synth_a");
    const std::string dir2 = temp_dir("synth_b");
    write_synthetic(spec, dir1);
    write_synthetic(spec, dir2);
    for (const char* name : {"index.json", "features.bin", "train.jsonl", "val.jsonl",
                             "words.txt"}) {
        CHECK(read_file(dir1 + "/" + name) == read_file(dir2 + "/" + name));
    }
}

TEST_CASE("synthetic triplet counts match the spec") {
    SyntheticSpec spec = tiny_spec();
    spec.train_triplets = 100;
    spec.eval_triplets = 33;
    auto data = generate_synthetic(spec);
    CHECK(data.train.size() == 100);
    CHECK(data.eval.size() == 33);
    CHECK(data.store.size() == 27);
    for (const auto& rec : data.train) {
        CHECK(rec.ref_id != rec.trg_id);
        CHECK(data.store.has(rec.ref_id));
        CHECK(data.store.has(rec.trg_id));
        CHECK(rec.captions.size() >= 1);
        CHECK(rec.captions.size() <= 2);
    }
}

TEST_CASE("synthetic spec feasibility") {
    SyntheticSpec spec = tiny_spec();
    spec.images = 20;  // < 3^3
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
    spec.images = 30;  // > 3^3
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
}

TEST_CASE("attribute-decoding oracle solves the noiseless eval split") {
    SyntheticSpec spec = tiny_spec();
    auto data = generate_synthetic(spec);
    auto cb = make_codebook(spec);
    CHECK(oracle_recall_at_1(data, spec, cb) == 1.0);
}

TEST_CASE("attribute-decoding oracle stays above 0.99 at noise 0.1") {
    SyntheticSpec spec = tiny_spec();
    spec.noise = 0.1;
    spec.eval_triplets = 200;
    auto data = generate_synthetic(spec);
    auto cb = make_codebook(spec);
    CHECK(oracle_recall_at_1(data, spec, cb) >= 0.99);
}

TEST_CASE("synthetic spec file parsing") {
    const std::string dir = temp_dir("specfile");
    write_file(dir + "/spec.txt",
               "attributes = 3\nvalues = 3\nimages = 27\n# comment\n"
               "train_triplets 10\neval_triplets 5\nnoise = 0.05\nseed = 9\n"
               "channels = 12\nintermediate_dim = 8\nword_dim = 16\n");
    SyntheticSpec spec = parse_synthetic_spec(dir + "/spec.txt");
    CHECK(spec.attributes == 3);
    CHECK(spec.train_triplets == 10);
    CHECK(spec.noise == 0.05);
    CHECK(spec.seed == 9);

    write_file(dir + "/bad.txt", "nonsense = 1\n");
    CHECK_THROWS_AS(parse_synthetic_spec(dir + "/bad.txt"), FormatError);
}
