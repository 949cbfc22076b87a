#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/eval.hpp"

using namespace tl;

namespace {

struct Brute {
  std::vector<double> precision, recall, f1;
  double macro_p = 0, macro_r = 0, macro_f = 0, accuracy = 0;
};

Brute brute_metrics(const std::vector<int>& t, const std::vector<int>& p, int classes) {
  Brute b;
  int included = 0;
  long correct = 0;
  for (std::size_t i = 0; i < t.size(); ++i) correct += t[i] == p[i];
  for (int c = 0; c < classes; ++c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == c && p[i] == c) ++tp;
      if (t[i] != c && p[i] == c) ++fp;
      if (t[i] == c && p[i] != c) ++fn;
    }
    const double prec = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double rec = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double f = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    b.precision.push_back(prec);
    b.recall.push_back(rec);
    b.f1.push_back(f);
    if (tp + fp + fn > 0) {
      b.macro_p += prec;
      b.macro_r += rec;
      b.macro_f += f;
      ++included;
    }
  }
  b.macro_p /= included;
  b.macro_r /= included;
  b.macro_f /= included;
  b.accuracy = static_cast<double>(correct) / static_cast<double>(t.size());
  return b;
}

}  // namespace

TEST_CASE("confusion") {
  const std::vector<int> t{0, 1, 2}, perfect{0, 1, 2};
  const ConfusionMatrix cm = confusion(t, perfect, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(cm.at(i, j) == (i == j ? 1u : 0u));
  }
  const std::vector<int> a{0, 1}, b{1, 0};
  const ConfusionMatrix anti = confusion(a, b, 2);
  CHECK(anti.at(0, 1) == 1);
  CHECK(anti.at(1, 0) == 1);
  CHECK(anti.trace() == 0);
  const std::vector<int> bad{0, 3};
  CHECK_THROWS_AS(confusion(a, bad, 3), LabelError);
  const std::vector<int> neg{-1, 0};
  CHECK_THROWS_AS(confusion(neg, a, 3), LabelError);
  const std::vector<int> shorter{0};
  CHECK_THROWS_AS(confusion(a, shorter, 2), DimensionError);

  Rng rng(1);
  std::vector<int> rt, rp;
  for (int i = 0; i < 200; ++i) {
    rt.push_back(static_cast<int>(rng.below(4)));
    rp.push_back(static_cast<int>(rng.below(4)));
  }
  const ConfusionMatrix rc = confusion(rt, rp, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      std::uint64_t n = 0;
      for (std::size_t s = 0; s < rt.size(); ++s) n += rt[s] == i && rp[s] == j;
      CHECK(rc.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) == n);
    }
  }
  CHECK(rc.total() == 200);
}

TEST_CASE("metrics examples") {
  ConfusionMatrix bin(2);
  bin.at(1, 1) = 9;  // TP for class 1
  bin.at(0, 1) = 1;  // FP
  bin.at(1, 0) = 1;  // FN
  bin.at(0, 0) = 89; // TN
  const Metrics m = metrics(bin);
  CHECK(m.per_class[1].precision == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(m.per_class[1].recall == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(m.per_class[1].f1 == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(m.accuracy == 0.98);
  CHECK(m.accuracy == (9.0 + 89.0) / (9.0 + 89.0 + 1.0 + 1.0));

  ConfusionMatrix diag(3);
  for (std::size_t i = 0; i < 3; ++i) diag.at(i, i) = 5;
  const Metrics d = metrics(diag);
  CHECK(d.accuracy == 1.0);
  CHECK(d.macro_precision == 1.0);
  CHECK(d.macro_recall == 1.0);
  CHECK(d.macro_f1 == 1.0);

  ConfusionMatrix absent(3);
  absent.at(0, 0) = 4;
  absent.at(1, 1) = 2;
  absent.at(1, 0) = 2;
  const Metrics ab = metrics(absent);
  CHECK(ab.per_class[2].precision_undefined);
  CHECK(ab.per_class[2].recall_undefined);
  CHECK_FALSE(ab.per_class[2].in_macro);
  CHECK(ab.per_class[2].precision == 0.0);
  CHECK(ab.macro_recall == doctest::Approx((1.0 + 0.5) / 2.0));

  CHECK_THROWS_AS(metrics(ConfusionMatrix(2)), ContractViolation);
}

TEST_CASE("metrics equal a brute-force implementation on random label vectors") {
  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 2 + static_cast<int>(rng.below(5));
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> t, p;
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
      p.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
    }
    const Metrics m = metrics(confusion(t, p, static_cast<std::size_t>(classes)));
    const Brute b = brute_metrics(t, p, classes);
    for (int c = 0; c < classes; ++c) {
      CHECK(m.per_class[static_cast<std::size_t>(c)].precision == b.precision[static_cast<std::size_t>(c)]);
      CHECK(m.per_class[static_cast<std::size_t>(c)].recall == b.recall[static_cast<std::size_t>(c)]);
      CHECK(m.per_class[static_cast<std::size_t>(c)].f1 == b.f1[static_cast<std::size_t>(c)]);
    }
    CHECK(m.macro_precision == b.macro_p);
    CHECK(m.macro_recall == b.macro_r);
    CHECK(m.macro_f1 == b.macro_f);
    CHECK(m.accuracy == b.accuracy);
  }
}

TEST_CASE("summary statistics") {
  const std::vector<double> one{0.7};
  CHECK(summarize(one).std == 0.0);
  const std::vector<double> same{0.5, 0.5, 0.5};
  CHECK(summarize(same).std == 0.0);
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(summarize(v).mean == 2.5);
  CHECK(summarize(v).std == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
}

namespace {

struct Clusters {
  Tensor emb;
  std::vector<int> labels;
};

Clusters separated_clusters(Rng& rng, std::size_t classes, std::size_t per_class, std::size_t d) {
  Clusters c{Tensor(Shape{classes * per_class, d}), {}};
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t row = k * per_class + i;
      for (std::size_t j = 0; j < d; ++j) c.emb[row * d + j] = (j == k ? 100.0 : 0.0) + rng.uniform(-1, 1);
      c.labels.push_back(static_cast<int>(k));
    }
  }
  return c;
}

}  // namespace

TEST_CASE("k sweep") {
  Rng rng(3);
  const Clusters c = separated_clusters(rng, 4, 12, 6);
  // Brute force: every within-class distance is below every cross-class one.
  double max_in = 0, min_out = 1e300;
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    for (std::size_t j = i + 1; j < c.labels.size(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 6; ++k) s += std::pow(c.emb[i * 6 + k] - c.emb[j * 6 + k], 2);
      (c.labels[i] == c.labels[j] ? max_in : min_out) =
          c.labels[i] == c.labels[j] ? std::max(max_in, s) : std::min(min_out, s);
    }
  }
  REQUIRE(max_in < min_out);

  SweepOptions opt;
  const auto reports = k_sweep(c.emb, c.labels, opt, Rng(5));
  REQUIRE(reports.size() == 5);
  for (const EvalReport& r : reports) {
    CHECK(r.repeats == 5);
    CHECK(r.runs.size() == 5);
    CHECK(r.accuracy.mean == 1.0);
    CHECK(r.accuracy.std == 0.0);
    CHECK(r.macro_f1.mean == 1.0);
  }
  CHECK(reports[3].k == 7);

  SweepOptions one = opt;
  one.repeats = 1;
  one.ks = {3};
  Rng noisy(6);
  Clusters mixed = c;
  for (double& v : mixed.emb.data()) v = noisy.normal();
  const auto single = k_sweep(mixed.emb, mixed.labels, one, Rng(1));
  CHECK(single[0].accuracy.std == 0.0);
  CHECK(single[0].macro_precision.std == 0.0);

  const auto a = k_sweep(mixed.emb, mixed.labels, opt, Rng(9));
  const auto b = k_sweep(mixed.emb, mixed.labels, opt, Rng(9));
  CHECK(report_csv(a) == report_csv(b));
  for (const EvalReport& r : a) {
    CHECK(r.accuracy.std > 0.0);
    CHECK(r.accuracy.mean >= 0.0);
    CHECK(r.accuracy.mean <= 1.0);
  }

  SweepOptions big = opt;
  big.ks = {12};
  CHECK_THROWS_AS(k_sweep(c.emb, c.labels, big, Rng(1)), SupportError);
}

TEST_CASE("one k of a sweep equals a single-k evaluation") {
  Rng rng(4);
  Clusters c = separated_clusters(rng, 3, 15, 4);
  for (double& v : c.emb.data()) v = rng.normal();
  SweepOptions all;
  SweepOptions only;
  only.ks = {7};
  const auto sweep = k_sweep(c.emb, c.labels, all, Rng(2));
  const auto seven = k_sweep(c.emb, c.labels, only, Rng(2));
  CHECK(report_csv(std::span(&sweep[3], 1)) == report_csv(seven));
}

TEST_CASE("report formats") {
  Rng rng(5);
  const Clusters c = separated_clusters(rng, 5, 12, 6);
  SweepOptions opt;
  opt.ks = {1, 3};
  opt.repeats = 3;
  opt.unseen_class = 4;
  const auto reports = k_sweep(c.emb, c.labels, opt, Rng(1));
  CHECK(reports[0].held_in_accuracy.has_value());
  CHECK(reports[0].per_class.size() == 5);
  const std::string csv = report_csv(reports);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == kReportCsvHeader);
  std::size_t rows = 0, repeat_accuracy_rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
    if (line.find(",accuracy,all,") != std::string::npos && line.find(",mean,") == std::string::npos &&
        line.find(",std,") == std::string::npos) {
      ++repeat_accuracy_rows;
    }
  }
  // Per repeat: 5 classes x 3 + 3 macro + accuracy + held-in = 20 rows; plus mean and std.
  CHECK(rows == 2 * (3 + 2) * 20);
  CHECK(repeat_accuracy_rows == 6);
  const std::string table = format_sweep_table(reports, "triplet");
  CHECK(table.find("k = 1") != std::string::npos);
  CHECK(table.find("1.000 ± 0.000") != std::string::npos);
  CHECK(format_class_table(reports[1]).find("4 (unseen)") != std::string::npos);

  const std::vector<ModelScores> rows_cmp{{"alex-lite", 0.9, 0.8, 0.7, 0.6},
                                          {"Siamese-alex-lite", 0.5, 0.4, 0.3, 0.2}};
  const std::string cmp = format_comparison_table(rows_cmp);
  CHECK(cmp.find("Accuracy") != std::string::npos);
  CHECK(cmp.find("Siamese-alex-lite") != std::string::npos);
  CHECK(comparison_csv(rows_cmp).rfind("model,metric,value\nalex-lite,accuracy,0.90000000000000002\n", 0) == 0);
}
