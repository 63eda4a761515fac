// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracle.hpp"
#include "prospector/fingerprint.hpp"
#include "prospector/native_format.hpp"
#include "support.hpp"

namespace prospector {
namespace {

using testing::chain;
using testing::dense_node;

ModelGraph load_fixture(const std::string& name) {
    return load_native(read_file(testing::fixture_dir() / "models" / name));
}

/// Dense 10x10 layers without bias; layer i draws its weights from seeds[i].
ModelGraph stack(const std::vector<std::uint64_t>& seeds, std::string id) {
    std::vector<LayerNode> nodes;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto n = dense_node(static_cast<NodeId>(i), "fc" + std::to_string(i), 10, 10, false);
        n.weights[0] = testing::f32_weight({10, 10}, WeightRole::Kernel, seeds[i]);
        nodes.push_back(std::move(n));
    }
    auto g = chain(std::move(nodes), {1, 10});
    g.model_id = std::move(id);
    return g;
}

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no Error thrown";
    return ErrorCode::InvalidArgument;
}

TEST(Fingerprint, IgnoresModelIdAndMetadata) {
    auto a = stack({1, 2, 3}, "a");
    auto b = a;
    b.model_id = "b";
    b.metadata["origin"] = "elsewhere";
    EXPECT_EQ(fingerprint(a).whole_digest, fingerprint(b).whole_digest);
    EXPECT_EQ(fingerprint(a).layers, fingerprint(b).layers);
    EXPECT_EQ(fingerprint(a).total_params(), 300);
}

TEST(Fingerprint, StructureAndWeightsChangeDigest) {
    const auto base = fingerprint(stack({1, 2, 3}, "a")).whole_digest;
    auto renamed = stack({1, 2, 3}, "a");
    renamed.nodes[1].name = "other";
    EXPECT_NE(fingerprint(renamed).whole_digest, base);
    auto attr = stack({1, 2, 3}, "a");
    attr.nodes[0].attrs["units"] = std::int64_t{10};
    attr.nodes[0].attrs["keep_dims"] = std::int64_t{0};
    EXPECT_NE(fingerprint(attr).whole_digest, base);
    auto flipped = stack({1, 2, 3}, "a");
    flipped.nodes[2].weights[0].data[0] ^= 1;
    EXPECT_NE(fingerprint(flipped).whole_digest, base);
}

TEST(Compare, DuplicateFixtureFiles) {
    const auto a = fingerprint(load_fixture("finetune_base.json"));
    const auto r = compare(a, a);
    EXPECT_EQ(r.verdict, SharingVerdict::Duplicate);
    EXPECT_EQ(r.shared_param_fraction_a, 1.0);
}

TEST(Compare, FineTuneFixtureSharesExactlyFourFifths) {
    const auto base = fingerprint(load_fixture("finetune_base.json"));
    const auto tuned = fingerprint(load_fixture("finetune_tuned.json"));
    const auto r = compare(base, tuned);
    EXPECT_EQ(r.verdict, SharingVerdict::FineTuned);
    EXPECT_EQ(r.shared_params, 400);
    EXPECT_EQ(r.shared_param_fraction_a, 0.8);
    EXPECT_EQ(r.shared_param_fraction_b, 0.8);
    EXPECT_EQ(r.differing_layer_count, 1);
    EXPECT_EQ(compare(tuned, base).verdict, SharingVerdict::FineTuned);
}

TEST(Compare, RelatedAndUnrelated) {
    const auto a = fingerprint(stack({1, 2, 3, 4, 5}, "a"));
    // Three differing layers is still a fine-tune.
    const auto three = compare(a, fingerprint(stack({1, 2, 13, 14, 15}, "b3")));
    EXPECT_EQ(three.differing_layer_count, 3);
    EXPECT_EQ(three.verdict, SharingVerdict::FineTuned);
    EXPECT_DOUBLE_EQ(three.shared_param_fraction_a, 0.4);
    // One of five layers shared: 20% with four differing layers.
    const auto related = compare(a, fingerprint(stack({1, 12, 13, 14, 15}, "b")));
    EXPECT_EQ(related.differing_layer_count, 4);
    EXPECT_EQ(related.verdict, SharingVerdict::Related);
    EXPECT_DOUBLE_EQ(related.shared_param_fraction_a, 0.2);

    const auto c = fingerprint(stack({21, 22, 23, 24, 25}, "c"));
    EXPECT_EQ(compare(a, c).verdict, SharingVerdict::Unrelated);
    EXPECT_EQ(compare(a, c).shared_params, 0);
}

TEST(Compare, LayersMatchAtMostOnce) {
    // a repeats one layer; b holds it once.
    const auto a = fingerprint(stack({1, 1, 2, 3, 4, 5, 6}, "a"));
    const auto b = fingerprint(stack({1, 7, 8, 9, 10, 11, 12}, "b"));
    EXPECT_EQ(compare(a, b).shared_params, 100);
}

TEST(Compare, FractionsBoundedAndSymmetric) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint64_t> sa, sb;
        for (int k = 0; k < 6; ++k) {
            sa.push_back(rng() % 8);
            sb.push_back(rng() % 8);
        }
        const auto a = fingerprint(stack(sa, "a"));
        const auto b = fingerprint(stack(sb, "b"));
        const auto ab = compare(a, b);
        const auto ba = compare(b, a);
        EXPECT_EQ(ab.shared_params, ba.shared_params);
        EXPECT_EQ(ab.shared_param_fraction_a, ba.shared_param_fraction_b);
        EXPECT_GE(ab.shared_param_fraction_a, 0.0);
        EXPECT_LE(ab.shared_param_fraction_a, 1.0);
    }
}

TEST(Uniqueness, DuplicatePairCollapsesByOne) {
    const auto base = fingerprint(load_fixture("finetune_base.json"));
    auto copy = base;
    copy.model_id = "finetune-base-copy";
    const auto tuned = fingerprint(load_fixture("finetune_tuned.json"));
    const auto without = corpus_uniqueness({base, tuned});
    const auto with = corpus_uniqueness({base, copy, tuned});
    EXPECT_EQ(without.unique_count, 2);
    EXPECT_EQ(with.total_models, 3);
    EXPECT_EQ(with.unique_count, without.unique_count);
    EXPECT_EQ(with.clusters.at(base.whole_digest),
              (std::vector<std::string>{"finetune-base", "finetune-base-copy"}));
    EXPECT_EQ(with.fine_tuned_count, 2);
    EXPECT_EQ(with.shared_20_count, 2);
    EXPECT_DOUBLE_EQ(with.fine_tuned_fraction, 1.0);
}

TEST(Uniqueness, OrderInvariant) {
    std::mt19937_64 rng(6);
    std::vector<FingerprintRecord> records;
    for (int i = 0; i < 12; ++i) {
        std::vector<std::uint64_t> seeds;
        for (int k = 0; k < 4; ++k) seeds.push_back(rng() % 6);
        records.push_back(fingerprint(stack(seeds, "m" + std::to_string(i))));
    }
    const auto ref = corpus_uniqueness(records);
    for (int round = 0; round < 20; ++round) {
        std::shuffle(records.begin(), records.end(), rng);
        const auto r = corpus_uniqueness(records);
        EXPECT_EQ(r.unique_count, ref.unique_count);
        EXPECT_EQ(r.clusters, ref.clusters);
        EXPECT_EQ(r.shared_20_count, ref.shared_20_count);
        EXPECT_EQ(r.fine_tuned_count, ref.fine_tuned_count);
    }
    EXPECT_LE(ref.unique_count, ref.total_models);
}

TEST(Uniqueness, EmptyInput) {
    const auto r = corpus_uniqueness({});
    EXPECT_EQ(r.total_models, 0);
    EXPECT_EQ(r.unique_count, 0);
    EXPECT_EQ(r.shared_20_fraction, 0.0);
}

TEST(Sparsity, FixtureHas315Zeros) {
    EXPECT_EQ(weight_sparsity(load_fixture("sparsity_315.json"), 1e-9), 0.315);
}

TEST(Sparsity, EpsilonAndIntegerWeights) {
    auto g = chain({dense_node(0, "fc", 2, 2, false)}, {1, 2});
    g.nodes[0].weights[0].data = testing::f32_bytes({0.0f, 1e-10f, -0.5f, 2e-9f});
    EXPECT_EQ(weight_sparsity(g, 1e-9), 0.5);
    EXPECT_EQ(weight_sparsity(g, 0.0), 0.25);
    EXPECT_EQ(weight_sparsity(g, 1.0), 1.0);

    g.nodes[0].weights[0].dtype = DType::I8;
    g.nodes[0].weights[0].data = {0, 1, 0, 255};
    EXPECT_EQ(weight_sparsity(g), 0.5);

    EXPECT_EQ(code_of([&] { weight_sparsity(g, -1.0); }), ErrorCode::InvalidArgument);
    const auto empty = chain({testing::simple_node(0, "relu", OpKind::Activation)}, {1, 2});
    EXPECT_EQ(code_of([&] { weight_sparsity(empty); }), ErrorCode::NoWeights);
}

}  // namespace
}  // namespace prospector
