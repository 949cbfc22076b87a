#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tripletlens/checkpoint.hpp"
#include "tripletlens/dataset.hpp"
#include "tripletlens/fewshot.hpp"
#include "tripletlens/rng.hpp"
#include "tripletlens/tensor.hpp"

namespace tl {

/// C x C counts; rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return classes_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const;
  std::uint64_t& at(std::size_t truth, std::size_t predicted);
  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t column_sum(std::size_t predicted) const;

 private:
  std::size_t classes_;
  std::vector<std::uint64_t> counts_;
};

/// Throws DimensionError on a length mismatch, LabelError for a label outside 0..C-1.
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> predicted,
                          std::size_t classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // never predicted: TP + FP == 0
  bool recall_undefined = false;     // never true: TP + FN == 0
  /// False when the class is both never true and never predicted.
  bool in_macro = true;
};

struct Metrics {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// One-vs-rest precision, recall and F1 per class, unweighted macro means, and
/// accuracy = trace / total. Empty denominators give 0 and set a flag.
/// Throws ContractViolation for an empty matrix.
Metrics metrics(const ConfusionMatrix& cm);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample std, n - 1 denominator; 0 for a single repeat
};

Summary summarize(std::span<const double> values);

struct ClassSummary {
  int class_id = 0;
  Summary precision, recall, f1;
};

/// Results of `repeats` support redraws at one k.
struct EvalReport {
  std::size_t k = 0;
  std::size_t repeats = 0;
  std::vector<int> classes;
  std::optional<int> unseen_class;

  std::vector<Metrics> runs;
  /// Correct held-in queries over all held-in queries, per run. Only filled
  /// when unseen_class is set.
  std::vector<double> held_in_accuracy_runs;

  Summary macro_precision, macro_recall, macro_f1, accuracy;
  std::optional<Summary> held_in_accuracy;
  std::vector<ClassSummary> per_class;

  const ClassSummary& class_summary(int class_id) const;
};

struct SweepOptions {
  std::vector<std::size_t> ks{1, 3, 5, 7, 9};
  std::size_t repeats = 5;
  Aggregation aggregation = Aggregation::Min;
  std::optional<int> unseen_class;
};

/// For each k, `repeats` independent support draws; the rest of each class is
/// classified. Repeat r at k uses the sub-stream ("support", k * 2^32 + r) of
/// `rng`, so repeats are independent of execution order. Throws SupportError
/// if a class has <= max(ks) samples.
std::vector<EvalReport> k_sweep(const Tensor& embeddings, std::span<const int> labels,
                                const SweepOptions& options, const Rng& rng);

/// Embeds the Test split of a dataset with a triplet checkpoint and evaluates at
/// one k, flagging `unseen_class`. Throws ProtocolError if that class is among
/// the checkpoint's trained classes or absent from the test split.
EvalReport unseen_class_eval(const Checkpoint& checkpoint, const Dataset& dataset, std::size_t k,
                             std::size_t repeats, const Rng& rng, int unseen_class = 4);

/// `k,repeat,metric,class,value` rows: every repeat, then `mean` and `std`.
/// Metrics are precision, recall, f1 per class and `macro`, accuracy under
/// class `all`, and held_in_accuracy under `held_in` when an unseen class is set.
std::string report_csv(std::span<const EvalReport> reports);
inline constexpr const char* kReportCsvHeader = "k,repeat,metric,class,value";

/// Metrics x k grid with `mean ± std` cells.
std::string format_sweep_table(std::span<const EvalReport> reports, const std::string& model);

/// Per-class breakdown of one report.
std::string format_class_table(const EvalReport& report);

struct ModelScores {
  std::string model;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ModelScores scores_from(const std::string& model, const Metrics& m);
ModelScores scores_from(const std::string& model, const EvalReport& report);

/// Model rows with Accuracy, Precision, Recall and F-score columns.
std::string format_comparison_table(std::span<const ModelScores> rows);
/// `model,metric,value` rows.
std::string comparison_csv(std::span<const ModelScores> rows);

}  // namespace tl
