#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "tripletlens/augment.hpp"
#include "tripletlens/checkpoint.hpp"
#include "tripletlens/datagen.hpp"
#include "tripletlens/dataset.hpp"
#include "tripletlens/embedding_store.hpp"
#include "tripletlens/error.hpp"
#include "tripletlens/eval.hpp"
#include "tripletlens/png_io.hpp"
#include "tripletlens/trainer.hpp"

namespace fs = std::filesystem;

namespace tl::cli {

namespace {

using ConfigMap = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// key=value lines; '#' starts a comment.
ConfigMap read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  ConfigMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::optional<std::string> find_config_arg(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

/// Config values become option defaults, so explicit flags still win.
void apply_config(CLI::App& app, const ConfigMap& config) {
  for (const auto& [key, value] : config) {
    bool used = false;
    for (CLI::App* sub : app.get_subcommands({})) {
      if (CLI::Option* opt = sub->get_option_no_throw("--" + key)) {
        try {
          opt->default_val(value);
        } catch (const CLI::Error& e) {
          throw ConfigError("config key " + key + ": " + e.what());
        }
        used = true;
      }
    }
    if (!used) throw ConfigError("unknown config key: " + key);
  }
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / kManifestFile : data;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

void ensure_parent(const fs::path& out) {
  const fs::path parent = out.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec || !fs::is_directory(parent)) {
    throw ConfigError("cannot create output directory " + parent.string());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("failed writing " + path.string());
}

std::optional<Split> parse_split_filter(const std::string& text) {
  if (text == "all") return std::nullopt;
  return parse_split(text);
}

Dataset select(const Dataset& data, const std::optional<Split>& split) {
  return split ? data.subset(*split) : data;
}

struct Labelled {
  Tensor embeddings;
  std::vector<int> labels;
};

Labelled load_labelled(const fs::path& path) {
  require_file(path, "embedding store");
  const std::vector<EmbeddingRecord> records = read_embeddings(path);
  Labelled out{stack_embeddings(records), {}};
  for (const EmbeddingRecord& r : records) {
    if (!r.label) throw LoadError("embedding " + r.id + " has no label; evaluation needs labels");
    out.labels.push_back(*r.label);
  }
  return out;
}

Aggregation parse_aggregation(const std::string& s) {
  if (s == "min") return Aggregation::Min;
  if (s == "mean") return Aggregation::Mean;
  throw ConfigError("unknown aggregation: " + s + " (expected min|mean)");
}

Mining parse_mining(const std::string& s) {
  if (s == "random") return Mining::Random;
  if (s == "semi-hard") return Mining::SemiHard;
  throw ConfigError("unknown mining strategy: " + s + " (expected random|semi-hard)");
}

void check_format(const std::string& format) {
  if (format != "table" && format != "csv") {
    throw ConfigError("unknown format: " + format + " (expected table|csv)");
  }
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string out;
  std::size_t n_per_class = kDefaultPerClass;
  std::size_t size = kDefaultImageSize;
  std::uint64_t seed = 0;
  bool unseen_protocol = false;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.n_per_class == 0) throw ConfigError("--n-per-class must be positive");
  if (a.size < 32) throw ConfigError("--size must be at least 32");
  const fs::path dir(a.out);
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw ConfigError("output path exists and is not a directory: " + dir.string());
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + a.out);
  {
    const fs::path probe = dir / ".write-probe";
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory is not writable: " + a.out);
    f.close();
    fs::remove(probe, ec);
  }
  const DatasetManifest m = generate_dataset(dir, a.n_per_class, a.size, a.seed, a.unseen_protocol);
  out << "wrote " << m.records.size() << " frames and " << (dir / kManifestFile).string() << '\n';
  return kExitOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string mode = "triplet";
  std::string arch = "alex-lite";
  std::size_t epochs = 50;
  double lr = TrainConfig{}.learning_rate;
  double momentum = 0.9;
  double margin = Margin::kDefault;
  std::size_t batch_size = 32;
  std::string mining = "random";
  bool no_augment = false;
  bool arbitrary_rotation = false;
  bool normalize = false;
  std::size_t embedding_dim = kDefaultEmbeddingDim;
  std::uint64_t seed = 0;
  std::string out;
  std::string log;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  cfg.mode = parse_train_mode(a.mode);
  cfg.preset = a.arch;
  cfg.epochs = a.epochs;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.margin = Margin(a.margin);
  cfg.batch_size = a.batch_size;
  cfg.mining = parse_mining(a.mining);
  cfg.augment = !a.no_augment;
  cfg.augment_options.arbitrary_rotation = a.arbitrary_rotation;
  cfg.normalize_embeddings = a.normalize;
  cfg.embedding_dim = a.embedding_dim;
  cfg.seed = a.seed;
  cfg.validate();
  make_preset(cfg.preset);  // rejects unknown architectures before loading data
  const fs::path manifest = manifest_path(a.data);
  require_file(manifest, "manifest");
  const fs::path ckpt_path(a.out);
  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.csv") : fs::path(a.log);
  ensure_parent(ckpt_path);
  ensure_parent(log_path);

  const Dataset data = load_dataset(manifest);
  const EpochCallback report = [&](const EpochStats& s) {
    if (a.quiet) return;
    char line[128];
    std::snprintf(line, sizeof line, "epoch %zu/%zu loss %.6f (%.1fs)\n", s.epoch, cfg.epochs,
                  s.mean_loss, s.seconds);
    err << line << std::flush;
  };
  TrainResult result = cfg.mode == TrainMode::Triplet ? train(data, cfg, report)
                                                      : train_classifier(data, cfg, report);
  save_checkpoint(result.checkpoint, ckpt_path);
  result.log.checkpoint = ckpt_path;
  result.log.write_csv(log_path);
  out << "saved " << ckpt_path.string() << " (" << to_string(cfg.mode) << ", " << cfg.preset
      << ", " << result.checkpoint.net.parameter_count() << " parameters); log "
      << log_path.string() << '\n';
  return kExitOk;
}

// ---- embed ------------------------------------------------------------------

struct EmbedArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string out;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const std::optional<Split> split = parse_split_filter(a.split);
  require_file(a.checkpoint, "checkpoint");
  const fs::path manifest = manifest_path(a.data);
  require_file(manifest, "manifest");
  ensure_parent(a.out);
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset data = select(load_dataset(manifest), split);
  if (data.size() == 0) throw LoadError("no frames in split " + a.split);
  const Tensor emb = ckpt.net.embed(data.all_images());
  const std::size_t d = emb.dim(1);
  std::vector<EmbeddingRecord> records;
  records.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto row = emb.data().subspan(i * d, d);
    records.push_back({data.ids[i], data.labels[i], std::vector<double>(row.begin(), row.end())});
  }
  write_embeddings(a.out, records);
  out << "wrote " << records.size() << " embeddings of dim " << d << " to " << a.out << '\n';
  return kExitOk;
}

// ---- eval / sweep-k ---------------------------------------------------------

struct SweepArgs {
  std::string embeddings;
  std::vector<std::size_t> ks{1, 3, 5, 7, 9};
  std::size_t k = 7;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::optional<int> unseen_class;
  std::string aggregation = "min";
  std::string csv;
  std::string format = "table";
  std::string model = "triplet";
};

int run_sweep(const SweepArgs& a, const std::vector<std::size_t>& ks, bool class_table,
              std::ostream& out) {
  check_format(a.format);
  if (a.repeats == 0) throw ConfigError("--repeats must be positive");
  if (ks.empty() || std::find(ks.begin(), ks.end(), 0u) != ks.end()) {
    throw ConfigError("k values must be positive");
  }
  SweepOptions opt;
  opt.ks = ks;
  opt.repeats = a.repeats;
  opt.aggregation = parse_aggregation(a.aggregation);
  opt.unseen_class = a.unseen_class;
  const Labelled data = load_labelled(a.embeddings);
  const std::vector<EvalReport> reports = k_sweep(data.embeddings, data.labels, opt, Rng(a.seed));
  const std::string csv = report_csv(reports);
  if (!a.csv.empty()) write_text(a.csv, csv);
  if (a.format == "csv") {
    out << csv;
  } else {
    out << "Comparison of Model performance based on k-shots\n"
        << format_sweep_table(reports, a.model);
    if (class_table) out << '\n' << format_class_table(reports.front());
  }
  return kExitOk;
}

// ---- query ------------------------------------------------------------------

struct QueryArgs {
  std::string checkpoint;
  std::string template_image;
  std::string data;
  std::size_t top = 10;
  std::string split = "all";
};

int cmd_query(const QueryArgs& a, std::ostream& out) {
  if (a.top == 0) throw ConfigError("--top must be positive");
  const std::optional<Split> split = parse_split_filter(a.split);
  require_file(a.checkpoint, "checkpoint");
  require_file(a.template_image, "template image");
  const fs::path manifest = manifest_path(a.data);
  require_file(manifest, "manifest");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const std::size_t s = ckpt.net.input_size();
  Tensor tmpl = read_png(a.template_image);
  if (tmpl.dim(1) != s || tmpl.dim(2) != s) tmpl = resize_bilinear(tmpl, s, s);
  const Tensor q = ckpt.net.embed(Tensor(Shape{1, 3, s, s}, std::vector<double>(
                                                                   tmpl.data().begin(), tmpl.data().end())));
  const Dataset data = select(load_dataset(manifest), split);
  if (data.size() == 0) throw LoadError("no frames in split " + a.split);
  const Tensor emb = ckpt.net.embed(data.all_images());
  const std::size_t d = emb.dim(1);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = emb[i * d + j] - q[j];
      dist += diff * diff;
    }
    ranked.emplace_back(dist, i);
  }
  std::sort(ranked.begin(), ranked.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first < y.first;
    return data.ids[x.second] < data.ids[y.second];
  });
  out << "rank,id,label,distance\n";
  char buf[40];
  for (std::size_t r = 0; r < std::min(a.top, ranked.size()); ++r) {
    const std::size_t i = ranked[r].second;
    std::snprintf(buf, sizeof buf, "%.17g", ranked[r].first);
    out << r + 1 << ',' << data.ids[i] << ',' << data.labels[i] << ',' << buf << '\n';
  }
  return kExitOk;
}

// ---- compare ----------------------------------------------------------------

struct CompareArgs {
  std::string classifier;
  std::string triplet;
  std::string data;
  std::size_t k = 7;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  if (a.k == 0 || a.repeats == 0) throw ConfigError("--k and --repeats must be positive");
  require_file(a.classifier, "classifier checkpoint");
  require_file(a.triplet, "triplet checkpoint");
  const fs::path manifest = manifest_path(a.data);
  require_file(manifest, "manifest");
  const Checkpoint cls = load_checkpoint(a.classifier);
  const Checkpoint tri = load_checkpoint(a.triplet);
  if (cls.meta.mode != TrainMode::Classifier) throw ConfigError("--classifier is not a classifier checkpoint");
  if (tri.meta.mode != TrainMode::Triplet) throw ConfigError("--triplet is not a triplet checkpoint");
  const Dataset test = load_dataset(manifest).subset(Split::Test);

  // Classifier: test frames of the classes it was trained on.
  std::vector<std::size_t> held;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& tc = cls.meta.trained_classes;
    if (std::find(tc.begin(), tc.end(), test.labels[i]) != tc.end()) held.push_back(i);
  }
  if (held.empty()) throw LoadError("test split has no frames of the classifier's classes");
  std::vector<int> truth;
  for (std::size_t i : held) truth.push_back(test.labels[i]);
  const std::vector<int> pred = predict_classes(cls.net, test.batch(held));
  const Metrics cm = metrics(confusion(truth, pred, cls.net.output_dim()));

  // Triplet: k-shot over the whole test split.
  SweepOptions opt;
  opt.ks = {a.k};
  opt.repeats = a.repeats;
  const Tensor emb = tri.net.embed(test.all_images());
  const EvalReport report = k_sweep(emb, test.labels, opt, Rng(a.seed)).front();

  const std::vector<ModelScores> rows{scores_from(cls.net.preset().name, cm),
                                      scores_from("Siamese-" + tri.net.preset().name, report)};
  if (!a.csv.empty()) write_text(a.csv, comparison_csv(rows));
  out << format_comparison_table(rows);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot lesion recognition with triplet embeddings"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  app.add_option("--config", config_file, "key=value file; explicit flags take precedence");

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--n-per-class", gen.n_per_class, "Frames per class")->capture_default_str();
  g->add_option("--size", gen.size, "Frame side in pixels")->capture_default_str();
  g->add_option("--seed", gen.seed, "Master seed")->capture_default_str();
  g->add_flag("--unseen-protocol", gen.unseen_protocol, "Keep class 4 out of the train split");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a triplet or classifier network");
  t->add_option("--data", tr.data, "Manifest or dataset directory")->required();
  t->add_option("--mode", tr.mode, "triplet|classifier")->capture_default_str();
  t->add_option("--arch", tr.arch, "alex-lite|vgg-lite|res-lite")->capture_default_str();
  t->add_option("--epochs", tr.epochs)->capture_default_str();
  t->add_option("--lr", tr.lr)->capture_default_str();
  t->add_option("--momentum", tr.momentum)->capture_default_str();
  t->add_option("--margin", tr.margin)->capture_default_str();
  t->add_option("--batch-size", tr.batch_size)->capture_default_str();
  t->add_option("--mining", tr.mining, "random|semi-hard")->capture_default_str();
  t->add_flag("--no-augment", tr.no_augment, "Disable flips and rotations");
  t->add_flag("--arbitrary-rotation", tr.arbitrary_rotation, "Rotate by any angle, not only quarter turns");
  t->add_flag("--normalize", tr.normalize, "L2-normalize embeddings");
  t->add_option("--embedding-dim", tr.embedding_dim)->capture_default_str();
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--log", tr.log, "Epoch log CSV (default <out>.log.csv)");
  t->add_flag("--quiet", tr.quiet, "No per-epoch lines");

  EmbedArgs em;
  auto* e = app.add_subcommand("embed", "Write embeddings of a split as JSON lines");
  e->add_option("--checkpoint", em.checkpoint)->required();
  e->add_option("--data", em.data, "Manifest or dataset directory")->required();
  e->add_option("--split", em.split, "train|test|all")->capture_default_str();
  e->add_option("--out", em.out, "JSON-lines output")->required();

  SweepArgs ev;
  auto* v = app.add_subcommand("eval", "k-shot evaluation at one k");
  SweepArgs sw;
  auto* s = app.add_subcommand("sweep-k", "k-shot evaluation over several k");
  for (auto [sub, a] : {std::pair{v, &ev}, std::pair{s, &sw}}) {
    sub->add_option("--embeddings", a->embeddings, "JSON-lines embedding store")->required();
    sub->add_option("--repeats", a->repeats, "Support redraws per k")->capture_default_str();
    sub->add_option("--seed", a->seed)->capture_default_str();
    sub->add_option("--unseen-class", a->unseen_class, "Class held out of training");
    sub->add_option("--aggregation", a->aggregation, "min|mean")->capture_default_str();
    sub->add_option("--csv", a->csv, "Write the report CSV here");
    sub->add_option("--format", a->format, "Standard output: table|csv")->capture_default_str();
    sub->add_option("--model", a->model, "Model name in the table")->capture_default_str();
  }
  v->add_option("--k", ev.k)->capture_default_str();
  s->add_option("--ks", sw.ks)->delimiter(',')->capture_default_str();

  QueryArgs qu;
  auto* q = app.add_subcommand("query", "Rank frames by distance to a template image");
  q->add_option("--checkpoint", qu.checkpoint)->required();
  q->add_option("--template", qu.template_image, "PNG image")->required();
  q->add_option("--data", qu.data, "Manifest or dataset directory")->required();
  q->add_option("--top", qu.top)->capture_default_str();
  q->add_option("--split", qu.split, "train|test|all")->capture_default_str();

  CompareArgs co;
  auto* c = app.add_subcommand("compare", "Classifier baseline vs triplet k-shot");
  c->add_option("--classifier", co.classifier, "Classifier checkpoint")->required();
  c->add_option("--triplet", co.triplet, "Triplet checkpoint")->required();
  c->add_option("--data", co.data, "Manifest or dataset directory")->required();
  c->add_option("--k", co.k)->capture_default_str();
  c->add_option("--repeats", co.repeats)->capture_default_str();
  c->add_option("--seed", co.seed)->capture_default_str();
  c->add_option("--csv", co.csv, "Write model,metric,value rows here");

  try {
    if (const auto cf = find_config_arg(args)) apply_config(app, read_config(*cf));
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::ParseError& pe) {
    app.exit(pe, out, err);
    return kExitUsage;
  } catch (const ConfigError& ce) {
    err << "error: " << ce.what() << '\n';
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen_data(gen, out);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (e->parsed()) return cmd_embed(em, out);
    if (v->parsed()) return run_sweep(ev, {ev.k}, true, out);
    if (s->parsed()) return run_sweep(sw, sw.ks, false, out);
    if (q->parsed()) return cmd_query(qu, out);
    if (c->parsed()) return cmd_compare(co, out);
  } catch (const ConfigError& x) {
    err << "error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const SupportError& x) {
    err << "support error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const ProtocolError& x) {
    err << "protocol error: " << x.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tl::cli
