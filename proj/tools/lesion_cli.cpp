// lesion: ontology checks, label mining, synthetic data, training and
// evaluation from one binary.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lesion/config.hpp"
#include "lesion/error.hpp"
#include "lesion/experiment.hpp"
#include "lesion/hash.hpp"
#include "lesion/preprocess.hpp"
#include "lesion/synth.hpp"
#include "lesion/textmine.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lesion;

namespace {

struct Globals {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  unsigned threads = 0;  // 0: take the config value
};

KeyValues load_kv(const Globals& g) {
  KeyValues kv;
  for (const auto& c : g.configs) kv.load_file(c);
  for (const auto& s : g.sets) kv.set_override(s);
  if (g.threads) kv.set("threads", std::to_string(g.threads));
  return kv;
}

void require(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config key ") + key + " is required");
  if (!fs::exists(p)) throw DataError(std::string(key) + ": " + p.string() + " does not exist");
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

// Records the configuration, seeds and content hashes of everything read and
// written, so the run can be repeated and checked byte for byte.
class Manifest {
 public:
  explicit Manifest(std::string command) { doc_["command"] = std::move(command); }

  void config(const RunConfig& c) {
    doc_["config"] = c.to_text();
    doc_["seeds"] = {{"split", c.split_seed}, {"synth", c.synth.seed}, {"init", c.init_seed}, {"train", c.schedule.seed}};
  }
  void input(const fs::path& p) {
    if (!p.empty() && fs::exists(p)) doc_["inputs"][p.string()] = git_blob_hash_file(p);
  }
  void output(const fs::path& p) { doc_["outputs"][p.filename().string()] = git_blob_hash_file(p); }
  void note(const std::string& key, json value) { doc_[key] = std::move(value); }

  void write(const fs::path& dir) {
    auto out = open_out(dir / "manifest.json");
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

fs::path sidecar(fs::path p) {
  p.replace_extension(".json");
  return p;
}

// Patches from a patch file, or cut from the referenced volumes. In the
// latter case bbox_mm is rewritten into the patch pixel frame.
PatchStore patches_for(std::vector<LesionRecord>& records, const fs::path& patch_file, const fs::path& corpus,
                       Manifest& m) {
  if (!patch_file.empty()) {
    require(patch_file, "patches");
    auto store = load_patches(patch_file);
    if (store.size() != records.size()) {
      throw DataError(patch_file.string() + " holds " + std::to_string(store.size()) + " patches for " +
                      std::to_string(records.size()) + " records");
    }
    m.input(patch_file);
    m.input(sidecar(patch_file));
    return store;
  }
  PatchStore store;
  std::map<fs::path, Volume> cache;
  for (auto& r : records) {
    if (!r.volume_ref) throw DataError("record " + r.lesion_id + " has no volume_ref and no patch file is configured");
    fs::path ref(*r.volume_ref);
    if (ref.is_relative()) ref = corpus.parent_path() / ref;
    auto it = cache.find(ref);
    if (it == cache.end()) {
      it = cache.emplace(ref, resample_inplane(load_volume(ref))).first;
      m.input(ref);
      m.input(sidecar(ref));
    }
    const auto planes = extract_slices(it->second, r.slice_mm);
    Patch p = crop_patch(planes, r.bbox_mm.center_x(), r.bbox_mm.center_y(), r.bbox_mm);
    normalize_intensity(p);
    store.push_back(p.pixels);
    r.bbox_mm = p.lesion_bbox_px;
  }
  return store;
}

std::vector<LesionRecord> read_corpus(const fs::path& p, const char* key, Manifest& m) {
  require(p, key);
  m.input(p);
  return read_records(p);
}

Ontology read_lexicon(const fs::path& p, Manifest& m) {
  require(p, "lexicon");
  m.input(p);
  return load_ontology(p);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

// ---- subcommands ----

int cmd_ontology_validate(const std::string& path) {
  const Ontology o = load_ontology(path);
  std::map<Category, std::size_t> counts;
  for (const auto& l : o.labels()) ++counts[l.category];
  std::cout << "K=" << o.size() << ", 0 errors\n";
  for (auto c : {Category::body_part, Category::finding_type, Category::attribute}) {
    std::cout << to_string(c) << ": " << counts[c] << '\n';
  }
  std::cout << "depth: " << o.depth() << '\n';
  return 0;
}

int cmd_mine(const Globals& g, std::string corpus, std::string lexicon, const std::string& out_path) {
  const RunConfig c = RunConfig::from(load_kv(g));
  const fs::path corpus_path = corpus.empty() ? c.train_corpus : fs::path(corpus);
  const fs::path lexicon_path = lexicon.empty() ? c.lexicon : fs::path(lexicon);
  Manifest m("mine");
  const Ontology o = read_lexicon(lexicon_path, m);
  const auto records = read_corpus(corpus_path, "corpus", m);
  const Corpus mined = build_corpus(records, o, c.threads);
  if (out_path.empty()) {
    write_mined(std::cout, mined, o);
  } else {
    {
      auto out = open_out(out_path);
      write_mined(out, mined, o);
    }
    std::cerr << "mined " << mined.size() << " records into " << out_path << '\n';
  }
  return 0;
}

int cmd_synth(const Globals& g, const fs::path& dir) {
  const RunConfig c = RunConfig::from(load_kv(g));
  fs::create_directories(dir);
  const SynthCorpus s = synth_generate(c.synth);
  Manifest m("synth");
  m.config(c);
  {
    auto out = open_out(dir / "lexicon.tsv");
    write_ontology(out, s.ontology);
  }
  write_records(dir / "train.jsonl", s.train);
  write_records(dir / "test.jsonl", s.test);
  save_patches(dir / "train_patches.f32", s.train_patches);
  save_patches(dir / "test_patches.f32", s.test_patches);
  {
    auto out = open_out(dir / "data.cfg");
    out << "# generated by lesion synth\n"
        << "lexicon = lexicon.tsv\n"
        << "train_corpus = train.jsonl\n"
        << "test_corpus = test.jsonl\n"
        << "train_patches = train_patches.f32\n"
        << "test_patches = test_patches.f32\n";
  }
  for (const char* f : {"lexicon.tsv", "train.jsonl", "test.jsonl", "train_patches.f32", "train_patches.json",
                        "test_patches.f32", "test_patches.json", "data.cfg"}) {
    m.output(dir / f);
  }
  m.note("stats", {{"leaves", s.stats.leaves},
                   {"dropped", s.stats.dropped},
                   {"replaced", s.stats.replaced},
                   {"spurious", s.stats.spurious}});
  m.write(dir);
  std::cout << "labels: " << s.ontology.size() << "\ntrain: " << s.train.size() << "\ntest: " << s.test.size()
            << "\ndropped leaf mentions: " << fmt(s.stats.dropped_fraction()) << '\n';
  return 0;
}

int cmd_split(const Globals& g, std::string corpus, const std::string& patches, const fs::path& dir) {
  const RunConfig c = RunConfig::from(load_kv(g));
  const fs::path corpus_path = corpus.empty() ? c.train_corpus : fs::path(corpus);
  Manifest m("dataset split");
  m.config(c);
  const Ontology o = read_lexicon(c.lexicon, m);
  const auto records = read_corpus(corpus_path, "corpus", m);
  PatchStore store;
  if (!patches.empty()) {
    store = load_patches(patches);
    m.input(patches);
    if (store.size() != records.size()) throw DataError("patch count does not match the corpus");
  }
  const Corpus mined = build_corpus(records, o, c.threads);
  const Split split = patient_split(mined, c.split_test_fraction, c.split_seed);
  fs::create_directories(dir);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index[records[i].lesion_id] = i;
  auto write_side = [&](const Corpus& side, const std::string& name) {
    std::vector<LesionRecord> rs;
    PatchStore ps;
    for (const auto& e : side) {
      rs.push_back(e.record);
      if (store.size()) ps.push_back(store.patch(index.at(e.record.lesion_id)));
    }
    write_records(dir / (name + ".jsonl"), rs);
    m.output(dir / (name + ".jsonl"));
    if (store.size()) {
      save_patches(dir / (name + "_patches.f32"), ps);
      m.output(dir / (name + "_patches.f32"));
    }
  };
  write_side(split.train, "train");
  write_side(split.test, "test");
  m.write(dir);
  std::cout << "train: " << split.train.size() << "\ntest: " << split.test.size() << '\n';
  return 0;
}

int cmd_train(const Globals& g, const fs::path& dir, bool zero) {
  const RunConfig c = RunConfig::from(load_kv(g));
  Manifest m("train");
  m.config(c);
  const Ontology o = read_lexicon(c.lexicon, m);
  auto train_records = read_corpus(c.train_corpus, "train_corpus", m);
  auto test_records = read_corpus(c.test_corpus, "test_corpus", m);
  const PatchStore patches = patches_for(train_records, c.train_patches, c.train_corpus, m);
  const Prepared p = prepare(o, train_records, patches, test_records, c.eval, c.threads);
  const NetworkConfig net = network_for(c.network, p);
  net.validate();

  fs::create_directories(dir);
  std::vector<std::string> labels;
  for (LabelId id : p.selection.kept) labels.push_back(o.label(id).name);
  {
    auto out = open_out(dir / "labels.txt");
    for (const auto& l : labels) out << l << '\n';
  }

  Parameters<float> params = init_parameters<float>(net, c.init_seed);
  if (zero) {
    params.fill(0.0f);
  } else {
    auto result = train<float>(p.samples, net, std::move(params), c.loss, p.weights, c.schedule,
                               [](const EpochMetrics& e) {
                                 std::cerr << "epoch " << e.epoch << " lr " << e.lr << " loss " << fmt(e.mean_loss)
                                           << '\n';
                               });
    params = std::move(result.params);
    auto steps = open_out(dir / "train_loss.csv");
    steps << "step,epoch,lr,loss\n";
    for (const auto& s : result.steps) steps << s.step << ',' << s.epoch << ',' << fmt(s.lr) << ',' << fmt(s.loss) << '\n';
    steps.close();
    auto epochs = open_out(dir / "epochs.csv");
    epochs << "epoch,lr,mean_loss\n";
    for (const auto& e : result.epochs) epochs << e.epoch << ',' << fmt(e.lr) << ',' << fmt(e.mean_loss) << '\n';
    epochs.close();
    m.output(dir / "train_loss.csv");
    m.output(dir / "epochs.csv");
  }
  save_checkpoint(dir / "model", net, params, labels);
  {
    auto out = open_out(dir / "run.cfg");
    out << c.to_text();
  }
  for (const char* f : {"model.bin", "model.json", "labels.txt", "run.cfg"}) m.output(dir / f);
  m.note("labels", labels);
  m.write(dir);
  std::cout << "trained on " << p.samples.size() << " lesions, " << labels.size() << " labels\n";
  return 0;
}

struct Loaded {
  Ontology o;
  Checkpoint ck;
  std::vector<LesionRecord> records;
  PatchStore patches;
  std::vector<LabelId> label_ids;  // checkpoint column -> ontology id
};

Loaded load_for_scoring(const RunConfig& c, const fs::path& model, Manifest& m) {
  Loaded l;
  l.o = read_lexicon(c.lexicon, m);
  const fs::path bin = fs::path(model.string() + ".bin"), meta = fs::path(model.string() + ".json");
  if (!fs::exists(bin) || !fs::exists(meta)) throw DataError("checkpoint " + model.string() + " not found");
  m.input(bin);
  m.input(meta);
  l.ck = load_checkpoint(model);
  for (const auto& name : l.ck.labels) {
    const auto id = l.o.find(name);
    if (!id) throw DataError("checkpoint label \"" + name + "\" is not in the lexicon");
    l.label_ids.push_back(*id);
  }
  l.records = read_corpus(c.test_corpus, "test_corpus", m);
  l.patches = patches_for(l.records, c.test_patches, c.test_corpus, m);
  return l;
}

// Rows of the test label matrix restricted to the checkpoint columns.
std::vector<std::vector<std::uint8_t>> reference_labels(const Loaded& l, const EvalOptions& opts, unsigned threads) {
  const Corpus mined = build_corpus(l.records, l.o, threads);
  std::vector<std::vector<std::uint8_t>> rows;
  for (const auto& e : mined) {
    LabelVector full = e.labels;
    if (opts.use_truth) {
      if (auto t = truth_vector(e.record, l.o)) full = std::move(*t);
    }
    std::vector<std::uint8_t> row;
    for (LabelId id : l.label_ids) row.push_back(full.at(id));
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_eval(const Globals& g, const fs::path& model, const fs::path& dir, const std::string& method, bool roc) {
  const RunConfig c = RunConfig::from(load_kv(g));
  Manifest m("eval");
  m.config(c);
  Loaded l = load_for_scoring(c, model, m);
  const Network<float> net(l.ck.config);
  const auto scores = score_all(net, l.ck.params, l.records, l.patches, c.threads);
  const auto labels = reference_labels(l, c.eval, c.threads);
  const CategoryReport r = evaluate(scores, labels, l.label_ids, l.o, c.threads);

  fs::create_directories(dir);
  {
    auto out = open_out(dir / "per_label_auc.csv");
    write_label_csv(out, r);
  }
  {
    auto out = open_out(dir / "summary.csv");
    write_summary_csv(out, r, method);
  }
  m.output(dir / "per_label_auc.csv");
  m.output(dir / "summary.csv");
  if (roc) {
    fs::create_directories(dir / "roc");
    for (std::size_t col = 0; col < l.label_ids.size(); ++col) {
      std::vector<double> s;
      std::vector<std::uint8_t> y;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        s.push_back(scores[i][col]);
        y.push_back(labels[i][col]);
      }
      std::size_t pos = 0;
      for (auto v : y) pos += v;
      if (pos == 0 || pos == y.size()) continue;
      auto out = open_out(dir / "roc" / ("label_" + std::to_string(l.label_ids[col]) + ".csv"));
      write_roc_csv(out, roc_points(s, y));
    }
  }
  m.write(dir);
  std::cout << "overall AUC " << fmt(r.overall.mean) << " +- " << fmt(r.overall.std) << " over " << r.overall.count
            << " labels (" << r.skipped.size() << " skipped)\n";
  return 0;
}

int cmd_predict(const Globals& g, const fs::path& model, const std::vector<std::string>& ids, std::size_t limit) {
  const RunConfig c = RunConfig::from(load_kv(g));
  Manifest m("predict");
  Loaded l = load_for_scoring(c, model, m);
  const Network<float> net(l.ck.config);
  const auto labels = reference_labels(l, c.eval, c.threads);

  std::vector<std::size_t> rows;
  if (ids.empty()) {
    for (std::size_t i = 0; i < std::min(limit, l.records.size()); ++i) rows.push_back(i);
  } else {
    for (const auto& id : ids) {
      std::size_t i = 0;
      while (i < l.records.size() && l.records[i].lesion_id != id) ++i;
      if (i == l.records.size()) throw DataError("lesion " + id + " is not in the test corpus");
      rows.push_back(i);
    }
  }
  for (std::size_t i : rows) {
    const auto& r = l.records[i];
    const std::span<const float> view[] = {l.patches.patch(i)};
    const Box box[] = {r.bbox_mm};
    const auto scores = predict_scores(net, l.ck.params, view, box, 1).front();
    std::vector<std::size_t> truth;
    for (std::size_t col = 0; col < labels[i].size(); ++col) {
      if (labels[i][col]) truth.push_back(col);
    }
    const std::size_t k = std::min(c.eval.k, scores.size());
    const auto top = predict_topk(scores, k);
    const auto rep = topk_report(scores, truth, k);
    std::cout << r.lesion_id << '\t' << r.sentence.text << '\n';
    for (std::size_t col : top) {
      const bool tp = std::find(truth.begin(), truth.end(), col) != truth.end();
      std::cout << "  " << (tp ? "TP" : "FP") << '\t' << fmt(scores[col]) << '\t' << l.ck.labels[col] << '\n';
    }
    for (std::size_t col : rep.fn) std::cout << "  FN\t" << fmt(scores[col]) << '\t' << l.ck.labels[col] << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lesion annotation: label mining, training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.configs, "key = value config file (repeatable, later files win)");
  app.add_option("-s,--set", g.sets, "override one key: key=value (repeatable)");
  app.add_option("-j,--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);

  auto* ontology = app.add_subcommand("ontology", "lexicon tools")->require_subcommand(1);
  std::string lexicon_path;
  auto* validate = ontology->add_subcommand("validate", "load a lexicon and report its shape");
  validate->add_option("lexicon", lexicon_path, "lexicon TSV")->required();

  std::string corpus, lexicon, out_file;
  auto* mine = app.add_subcommand("mine", "mine label sets from report sentences (JSONL)");
  mine->add_option("--corpus", corpus, "records JSONL (default: train_corpus)");
  mine->add_option("--lexicon", lexicon, "lexicon TSV (default: lexicon)");
  mine->add_option("-o,--out", out_file, "output file (default: stdout)");

  std::string out_dir;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with known truth");
  synth->add_option("-o,--out", out_dir, "output directory")->required();

  auto* dataset = app.add_subcommand("dataset", "corpus tools")->require_subcommand(1);
  std::string split_patches;
  auto* split = dataset->add_subcommand("split", "patient-disjoint train/test split");
  split->add_option("--corpus", corpus, "records JSONL (default: train_corpus)");
  split->add_option("--patches", split_patches, "patch file aligned with the corpus");
  split->add_option("-o,--out", out_dir, "output directory")->required();

  bool zero = false;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  train_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  train_cmd->add_flag("--zero", zero, "write an all-zero checkpoint without training");

  std::string model, method = "model";
  bool roc = false;
  auto* eval_cmd = app.add_subcommand("eval", "per-label AUC on the test corpus");
  eval_cmd->add_option("-m,--model", model, "checkpoint stem (model.bin / model.json without extension)")->required();
  eval_cmd->add_option("-o,--out", out_dir, "output directory")->required();
  eval_cmd->add_option("--method", method, "name for the summary row");
  eval_cmd->add_flag("--roc", roc, "also write ROC points per label");

  std::vector<std::string> ids;
  std::size_t limit = 5;
  auto* predict = app.add_subcommand("predict", "top-k labels for test lesions");
  predict->add_option("-m,--model", model, "checkpoint stem")->required();
  predict->add_option("--lesion", ids, "lesion id (repeatable)");
  predict->add_option("-n,--limit", limit, "lesions to show when no id is given");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (validate->parsed()) return cmd_ontology_validate(lexicon_path);
    if (mine->parsed()) return cmd_mine(g, corpus, lexicon, out_file);
    if (synth->parsed()) return cmd_synth(g, out_dir);
    if (split->parsed()) return cmd_split(g, corpus, split_patches, out_dir);
    if (train_cmd->parsed()) return cmd_train(g, out_dir, zero);
    if (eval_cmd->parsed()) return cmd_eval(g, model, out_dir, method, roc);
    if (predict->parsed()) return cmd_predict(g, model, ids, limit);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingError& e) {
    std::cerr << "training failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
