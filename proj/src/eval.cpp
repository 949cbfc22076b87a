#include "tripletlens/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "tripletlens/error.hpp"

namespace tl {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string cell(const Summary& s) { return fmt3(s.mean) + " ± " + fmt3(s.std); }

std::string pad(const std::string& s, std::size_t width) {
  // Counts UTF-8 code points so "±" occupies one column.
  std::size_t cols = 0;
  for (unsigned char c : s) cols += (c & 0xC0) != 0x80;
  return cols >= width ? s : s + std::string(width - cols, ' ');
}

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::size_t classes)
    : classes_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ContractViolation("confusion matrix needs at least one class");
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
  if (truth >= classes_ || predicted >= classes_) throw IndexError("confusion cell out of range");
  return counts_[truth * classes_ + predicted];
}

std::uint64_t& ConfusionMatrix::at(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) throw IndexError("confusion cell out of range");
  return counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (std::uint64_t c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += counts_[i * classes_ + i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t t = 0;
  for (std::size_t j = 0; j < classes_; ++j) t += at(truth, j);
  return t;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += at(i, predicted);
  return t;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes) {
  if (truth.size() != predicted.size()) {
    throw DimensionError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                         std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm(classes);
  const auto check = [&](int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw LabelError("label " + std::to_string(label) + " outside 0.." +
                       std::to_string(classes - 1));
    }
    return static_cast<std::size_t>(label);
  };
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.at(check(truth[i]), check(predicted[i]));
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ContractViolation("metrics of an empty confusion matrix");
  Metrics m;
  std::size_t included = 0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    const std::uint64_t tp = cm.at(c, c);
    ClassMetrics k;
    k.precision = ratio(tp, cm.column_sum(c), k.precision_undefined);
    k.recall = ratio(tp, cm.row_sum(c), k.recall_undefined);
    const double pr = k.precision + k.recall;
    k.f1 = pr > 0.0 ? 2.0 * k.precision * k.recall / pr : 0.0;
    k.in_macro = !(k.precision_undefined && k.recall_undefined);
    if (k.in_macro) {
      m.macro_precision += k.precision;
      m.macro_recall += k.recall;
      m.macro_f1 += k.f1;
      ++included;
    }
    m.per_class.push_back(k);
  }
  // total > 0 guarantees at least one class is true somewhere.
  m.macro_precision /= static_cast<double>(included);
  m.macro_recall /= static_cast<double>(included);
  m.macro_f1 /= static_cast<double>(included);
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

const ClassSummary& EvalReport::class_summary(int class_id) const {
  for (const ClassSummary& c : per_class) {
    if (c.class_id == class_id) return c;
  }
  throw LabelError("report has no class " + std::to_string(class_id));
}

namespace {

void finalize(EvalReport& r) {
  const auto collect = [&](auto get) {
    std::vector<double> v;
    for (const Metrics& m : r.runs) v.push_back(get(m));
    return summarize(v);
  };
  r.macro_precision = collect([](const Metrics& m) { return m.macro_precision; });
  r.macro_recall = collect([](const Metrics& m) { return m.macro_recall; });
  r.macro_f1 = collect([](const Metrics& m) { return m.macro_f1; });
  r.accuracy = collect([](const Metrics& m) { return m.accuracy; });
  if (r.unseen_class) r.held_in_accuracy = summarize(r.held_in_accuracy_runs);
  r.per_class.clear();
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    ClassSummary cs;
    cs.class_id = r.classes[c];
    cs.precision = collect([c](const Metrics& m) { return m.per_class[c].precision; });
    cs.recall = collect([c](const Metrics& m) { return m.per_class[c].recall; });
    cs.f1 = collect([c](const Metrics& m) { return m.per_class[c].f1; });
    r.per_class.push_back(cs);
  }
}

}  // namespace

std::vector<EvalReport> k_sweep(const Tensor& embeddings, std::span<const int> labels,
                                const SweepOptions& options, const Rng& rng) {
  if (options.ks.empty()) throw ConfigError("k sweep needs at least one k");
  if (options.repeats == 0) throw ConfigError("repeats must be positive");
  expect_rank(embeddings, 2, "k_sweep embeddings");
  if (labels.size() != embeddings.dim(0)) {
    throw DimensionError("k_sweep: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(embeddings.dim(0)) + " embeddings");
  }
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  const std::size_t kmax = *std::max_element(options.ks.begin(), options.ks.end());
  for (const auto& [cls, n] : counts) {
    if (n <= kmax) {
      throw SupportError("class " + std::to_string(cls) + " has " + std::to_string(n) +
                         " samples; k=" + std::to_string(kmax) + " needs at least " +
                         std::to_string(kmax + 1));
    }
  }
  std::vector<int> classes;
  std::map<int, int> index_of;
  for (const auto& [cls, n] : counts) {
    index_of[cls] = static_cast<int>(classes.size());
    classes.push_back(cls);
  }
  if (options.unseen_class && !counts.count(*options.unseen_class)) {
    throw ProtocolError("unseen class " + std::to_string(*options.unseen_class) +
                        " has no samples");
  }

  const std::size_t d = embeddings.dim(1);
  std::vector<EvalReport> reports;
  for (std::size_t k : options.ks) {
    EvalReport report;
    report.k = k;
    report.repeats = options.repeats;
    report.classes = classes;
    report.unseen_class = options.unseen_class;
    for (std::size_t r = 0; r < options.repeats; ++r) {
      Rng stream = rng.split("support", (static_cast<std::uint64_t>(k) << 32) | r);
      SupportSplit split = build_support(embeddings, labels, k, stream);
      Tensor queries(Shape{split.query_indices.size(), d});
      for (std::size_t q = 0; q < split.query_indices.size(); ++q) {
        const std::size_t src = split.query_indices[q];
        std::copy_n(embeddings.data().begin() + static_cast<std::ptrdiff_t>(src * d), d,
                    queries.data().begin() + static_cast<std::ptrdiff_t>(q * d));
      }
      const std::vector<Prediction> preds =
          classify_batch(queries, split.support, options.aggregation);
      std::vector<int> truth, predicted;
      std::uint64_t held_in = 0, held_in_correct = 0;
      for (std::size_t q = 0; q < preds.size(); ++q) {
        const int t = labels[split.query_indices[q]];
        truth.push_back(index_of.at(t));
        predicted.push_back(index_of.at(preds[q].label));
        if (options.unseen_class && t != *options.unseen_class) {
          ++held_in;
          held_in_correct += preds[q].label == t;
        }
      }
      report.runs.push_back(metrics(confusion(truth, predicted, classes.size())));
      if (options.unseen_class) {
        report.held_in_accuracy_runs.push_back(
            held_in ? static_cast<double>(held_in_correct) / static_cast<double>(held_in) : 0.0);
      }
    }
    finalize(report);
    reports.push_back(std::move(report));
  }
  return reports;
}

EvalReport unseen_class_eval(const Checkpoint& checkpoint, const Dataset& dataset, std::size_t k,
                             std::size_t repeats, const Rng& rng, int unseen_class) {
  const auto& trained = checkpoint.meta.trained_classes;
  if (std::find(trained.begin(), trained.end(), unseen_class) != trained.end()) {
    throw ProtocolError("class " + std::to_string(unseen_class) +
                        " was present during training; it cannot be evaluated as unseen");
  }
  if (checkpoint.meta.mode != TrainMode::Triplet) {
    throw ProtocolError("unseen-class evaluation needs a triplet checkpoint");
  }
  const Dataset test = dataset.subset(Split::Test);
  const auto& labels = test.labels;
  if (std::find(labels.begin(), labels.end(), unseen_class) == labels.end()) {
    throw ProtocolError("test split has no samples of unseen class " +
                        std::to_string(unseen_class));
  }
  const Tensor emb = checkpoint.net.embed(test.all_images());
  SweepOptions options;
  options.ks = {k};
  options.repeats = repeats;
  options.unseen_class = unseen_class;
  return k_sweep(emb, labels, options, rng).front();
}

std::string report_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << kReportCsvHeader << '\n';
  for (const EvalReport& r : reports) {
    const std::string k = std::to_string(r.k);
    const auto row = [&](const std::string& repeat, const char* metric, const std::string& cls,
                         double v) {
      out << k << ',' << repeat << ',' << metric << ',' << cls << ',' << fmt17(v) << '\n';
    };
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
      const Metrics& m = r.runs[i];
      const std::string rep = std::to_string(i);
      for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const std::string cls = std::to_string(r.classes[c]);
        row(rep, "precision", cls, m.per_class[c].precision);
        row(rep, "recall", cls, m.per_class[c].recall);
        row(rep, "f1", cls, m.per_class[c].f1);
      }
      row(rep, "precision", "macro", m.macro_precision);
      row(rep, "recall", "macro", m.macro_recall);
      row(rep, "f1", "macro", m.macro_f1);
      row(rep, "accuracy", "all", m.accuracy);
      if (r.unseen_class) row(rep, "held_in_accuracy", "held_in", r.held_in_accuracy_runs[i]);
    }
    for (const char* stat : {"mean", "std"}) {
      const bool mean = std::string(stat) == "mean";
      const auto pick = [mean](const Summary& s) { return mean ? s.mean : s.std; };
      for (const ClassSummary& c : r.per_class) {
        const std::string cls = std::to_string(c.class_id);
        row(stat, "precision", cls, pick(c.precision));
        row(stat, "recall", cls, pick(c.recall));
        row(stat, "f1", cls, pick(c.f1));
      }
      row(stat, "precision", "macro", pick(r.macro_precision));
      row(stat, "recall", "macro", pick(r.macro_recall));
      row(stat, "f1", "macro", pick(r.macro_f1));
      row(stat, "accuracy", "all", pick(r.accuracy));
      if (r.held_in_accuracy) row(stat, "held_in_accuracy", "held_in", pick(*r.held_in_accuracy));
    }
  }
  return out.str();
}

std::string format_sweep_table(std::span<const EvalReport> reports, const std::string& model) {
  const std::size_t w0 = std::max<std::size_t>(model.size(), 5) + 2;
  const std::size_t w1 = 18, wc = 16;
  std::ostringstream out;
  out << pad("Model", w0) << pad("Metrics", w1);
  for (const EvalReport& r : reports) out << pad("k = " + std::to_string(r.k), wc);
  out << '\n';
  const bool any_held_in =
      std::any_of(reports.begin(), reports.end(),
                  [](const EvalReport& r) { return r.held_in_accuracy.has_value(); });
  struct Line {
    const char* name;
    Summary EvalReport::*field;
  };
  const Line lines[] = {{"Precision", &EvalReport::macro_precision},
                        {"Recall", &EvalReport::macro_recall},
                        {"F-score", &EvalReport::macro_f1},
                        {"Accuracy", &EvalReport::accuracy}};
  bool first = true;
  for (const Line& line : lines) {
    out << pad(first ? model : "", w0) << pad(line.name, w1);
    for (const EvalReport& r : reports) out << pad(cell(r.*(line.field)), wc);
    out << '\n';
    first = false;
  }
  if (any_held_in) {
    out << pad("", w0) << pad("Held-in accuracy", w1);
    for (const EvalReport& r : reports) {
      out << pad(r.held_in_accuracy ? cell(*r.held_in_accuracy) : "-", wc);
    }
    out << '\n';
  }
  return out.str();
}

std::string format_class_table(const EvalReport& report) {
  std::ostringstream out;
  out << "k = " << report.k << ", repeats = " << report.repeats << '\n';
  out << pad("Class", 12) << pad("Precision", 16) << pad("Recall", 16) << pad("F-score", 16)
      << '\n';
  for (const ClassSummary& c : report.per_class) {
    std::string name = std::to_string(c.class_id);
    if (report.unseen_class && *report.unseen_class == c.class_id) name += " (unseen)";
    out << pad(name, 12) << pad(cell(c.precision), 16) << pad(cell(c.recall), 16)
        << pad(cell(c.f1), 16) << '\n';
  }
  return out.str();
}

ModelScores scores_from(const std::string& model, const Metrics& m) {
  return ModelScores{model, m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1};
}

ModelScores scores_from(const std::string& model, const EvalReport& report) {
  return ModelScores{model, report.accuracy.mean, report.macro_precision.mean,
                     report.macro_recall.mean, report.macro_f1.mean};
}

std::string format_comparison_table(std::span<const ModelScores> rows) {
  std::size_t w0 = 7;
  for (const ModelScores& r : rows) w0 = std::max(w0, r.model.size() + 2);
  std::ostringstream out;
  out << "Comparison of models performance with baseline classifier\n";
  out << pad("Model", w0) << pad("Accuracy", 11) << pad("Precision", 11) << pad("Recall", 11)
      << "F-score\n";
  for (const ModelScores& r : rows) {
    out << pad(r.model, w0) << pad(fmt3(r.accuracy), 11) << pad(fmt3(r.precision), 11)
        << pad(fmt3(r.recall), 11) << fmt3(r.f1) << '\n';
  }
  return out.str();
}

std::string comparison_csv(std::span<const ModelScores> rows) {
  std::ostringstream out;
  out << "model,metric,value\n";
  for (const ModelScores& r : rows) {
    out << r.model << ",accuracy," << fmt17(r.accuracy) << '\n';
    out << r.model << ",precision," << fmt17(r.precision) << '\n';
    out << r.model << ",recall," << fmt17(r.recall) << '\n';
    out << r.model << ",f1," << fmt17(r.f1) << '\n';
  }
  return out.str();
}

}  // namespace tl
