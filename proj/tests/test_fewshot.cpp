#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/fewshot.hpp"

using namespace tl;
using tl::test::random_tensor;

namespace {

struct Instance {
  SupportSet support;
  Tensor queries;
};

Instance random_instance(Rng& rng, std::size_t classes, std::size_t k, std::size_t d,
                         std::size_t m) {
  std::vector<int> ids(classes);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<Tensor> blocks;
  for (std::size_t c = 0; c < classes; ++c) blocks.push_back(random_tensor({k, d}, rng));
  return {SupportSet(ids, std::move(blocks)), random_tensor({m, d}, rng)};
}

std::vector<int> labels_of(const std::vector<Prediction>& ps) {
  std::vector<int> out;
  for (const Prediction& p : ps) out.push_back(p.label);
  return out;
}

}  // namespace

TEST_CASE("support set invariants") {
  CHECK_THROWS_AS(SupportSet({0, 0}, {Tensor(Shape{1, 2}), Tensor(Shape{1, 2})}), SupportError);
  CHECK_THROWS_AS(SupportSet({0, 1}, {Tensor(Shape{1, 2}), Tensor(Shape{2, 2})}), SupportError);
  CHECK_THROWS_AS(SupportSet({0, 1}, {Tensor(Shape{1, 2}), Tensor(Shape{1, 3})}), SupportError);
  CHECK_THROWS_AS(SupportSet({0}, {}), SupportError);
}

TEST_CASE("build_support") {
  const Tensor emb(Shape{4, 2}, {0, 0, 1, 1, 2, 2, 3, 3});
  const std::vector<int> labels{0, 0, 1, 1};
  Rng rng(1);
  const SupportSplit s = build_support(emb, labels, 1, rng);
  CHECK(s.support.k() == 1);
  CHECK(s.support.classes() == std::vector<int>{0, 1});
  CHECK(s.support_indices.size() == 2);
  CHECK(s.query_indices.size() == 2);
  std::vector<std::size_t> all = s.support_indices;
  all.insert(all.end(), s.query_indices.begin(), s.query_indices.end());
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3});
  for (std::size_t q : s.query_indices) {
    CHECK(std::count(s.support_indices.begin(), s.support_indices.end(), q) == 0);
  }

  Rng a(7), b(7);
  const SupportSplit x = build_support(emb, labels, 1, a);
  const SupportSplit y = build_support(emb, labels, 1, b);
  CHECK(x.support_indices == y.support_indices);
  CHECK(x.query_indices == y.query_indices);

  bool named = false;
  try {
    build_support(emb, labels, 2, rng);
  } catch (const SupportError& e) {
    named = std::string(e.what()).find("class 0") != std::string::npos;
  }
  CHECK(named);
}

TEST_CASE("build_support draws uniformly") {
  std::vector<int> labels(10, 0);
  const Tensor emb(Shape{10, 1});
  Rng rng(2);
  std::vector<int> hits(10, 0);
  for (int t = 0; t < 5000; ++t) {
    for (std::size_t i : build_support(emb, labels, 3, rng).support_indices) ++hits[i];
  }
  for (int h : hits) CHECK(std::abs(h - 1500) < 150);
}

TEST_CASE("classify examples") {
  const SupportSet two({0, 1}, {Tensor(Shape{1, 2}, {0, 0}), Tensor(Shape{1, 2}, {10, 0})});
  const std::vector<double> q{1, 0};
  const Prediction p = classify(q, two);
  CHECK(p.label == 0);
  CHECK(p.scores == std::vector<double>{1.0, 81.0});

  const std::vector<double> mid{5, 0};
  CHECK(classify(mid, two).label == 0);
  const SupportSet swapped({3, 1}, {Tensor(Shape{1, 2}, {0, 0}), Tensor(Shape{1, 2}, {10, 0})});
  CHECK(classify(mid, swapped).label == 1);

  Rng rng(3);
  Instance inst = random_instance(rng, 4, 3, 5, 1);
  const auto ex = inst.support.exemplars(2).data().subspan(5, 5);
  const Prediction hit = classify(ex, inst.support);
  CHECK(hit.label == 2);
  CHECK(hit.scores[2] == 0.0);

  const std::vector<double> wrong{1, 2, 3};
  CHECK_THROWS_AS(classify(wrong, two), DimensionError);
}

TEST_CASE("mean aggregation") {
  const SupportSet s({0, 1}, {Tensor(Shape{2, 1}, {0, 10}), Tensor(Shape{2, 1}, {4, 4})});
  const std::vector<double> q{1};
  CHECK(classify(q, s, Aggregation::Min).label == 0);
  CHECK(classify(q, s, Aggregation::Mean).label == 1);
  CHECK(classify(q, s, Aggregation::Mean).scores == std::vector<double>{41.0, 9.0});
}

TEST_CASE("classify_batch matches the per-query loop") {
  Rng rng(4);
  Instance inst = random_instance(rng, 5, 3, 8, 100);
  const auto batch = classify_batch(inst.queries, inst.support);
  REQUIRE(batch.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) {
    const Prediction p = classify(inst.queries.data().subspan(i * 8, 8), inst.support);
    CHECK(batch[i].label == p.label);
    CHECK(batch[i].scores == p.scores);
  }
  Tensor one(Shape{1, 8}, std::vector<double>(inst.queries.data().begin(), inst.queries.data().begin() + 8));
  CHECK(classify_batch(one, inst.support)[0].label == batch[0].label);

  std::vector<std::size_t> perm(100);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  Tensor shuffled(Shape{100, 8});
  for (std::size_t i = 0; i < 100; ++i) {
    std::copy_n(inst.queries.data().begin() + perm[i] * 8, 8, shuffled.data().begin() + i * 8);
  }
  const auto sb = classify_batch(shuffled, inst.support);
  for (std::size_t i = 0; i < 100; ++i) CHECK(sb[i].label == batch[perm[i]].label);
}

TEST_CASE("k-shot rule properties on randomized instances") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t classes = 2 + rng.below(4), k = 1 + rng.below(4), d = 2 + rng.below(6);
    Instance inst = random_instance(rng, classes, k, d, 5);
    const auto base = classify_batch(inst.queries, inst.support);

    // Strictly increasing transform of scores keeps the argmin.
    for (const Prediction& p : base) {
      std::vector<double> t;
      for (double s : p.scores) t.push_back(2.0 * s + 1.0);
      const auto best = std::min_element(t.begin(), t.end()) - t.begin();
      CHECK(inst.support.classes()[static_cast<std::size_t>(best)] == p.label);
    }

    // Common translation.
    std::vector<double> shift(d);
    for (double& v : shift) v = rng.uniform(-5.0, 5.0);
    const auto moved = [&](const Tensor& t) {
      Tensor out = t;
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] += shift[i % d];
      return out;
    };
    std::vector<Tensor> mb;
    for (std::size_t c = 0; c < classes; ++c) mb.push_back(moved(inst.support.exemplars(c)));
    const SupportSet ms(inst.support.classes(), mb);
    CHECK(labels_of(classify_batch(moved(inst.queries), ms)) == labels_of(base));

    // Duplicating the first exemplar of every class.
    std::vector<Tensor> db;
    for (std::size_t c = 0; c < classes; ++c) {
      const Tensor& e = inst.support.exemplars(c);
      std::vector<double> v(e.data().begin(), e.data().end());
      v.insert(v.end(), e.data().begin(), e.data().begin() + static_cast<std::ptrdiff_t>(d));
      db.push_back(Tensor(Shape{k + 1, d}, v));
    }
    const SupportSet ds(inst.support.classes(), db);
    CHECK(labels_of(classify_batch(inst.queries, ds)) == labels_of(base));

    // Exact match goes to the exemplar's class.
    const std::size_t c = rng.below(classes), e = rng.below(k);
    const auto ex = inst.support.exemplars(c).data().subspan(e * d, d);
    CHECK(classify(ex, inst.support).label == inst.support.classes()[c]);
  }
}
