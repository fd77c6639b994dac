#include "lesion/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "lesion/error.hpp"
#include "lesion/preprocess.hpp"
#include "lesion/rng.hpp"

namespace lesion {

namespace {

enum class Role { region, organ, subpart, group, coarse_type, specific_type, attribute };

struct VocabEntry {
  const char* name;
  Category category;
  Role role;
  std::vector<const char*> synonyms;
  std::vector<const char*> parents;  // first parent is the sampling parent
  double weight;                     // sibling weight, or probability for attributes
  double stop = 0.0;                 // organs: weight of "no sub-part"
  int group = 0;                     // mutually exclusive attribute group
};

constexpr auto BP = Category::body_part;
constexpr auto FT = Category::finding_type;
constexpr auto AT = Category::attribute;

// Ordered by how common a label is; every parent precedes its children.
const std::vector<VocabEntry>& vocabulary() {
  static const std::vector<VocabEntry> v = {
      {"chest", BP, Role::region, {"thoracic"}, {}, 0.45},
      {"abdomen", BP, Role::region, {"abdominal"}, {}, 0.40},
      {"nodule", FT, Role::coarse_type, {}, {}, 0.50},
      {"mass", FT, Role::coarse_type, {}, {}, 0.35},
      {"lung", BP, Role::organ, {"pulmonary"}, {"chest"}, 0.60, 0.25},
      {"liver", BP, Role::organ, {"hepatic"}, {"abdomen"}, 0.35, 0.30},
      {"hypoattenuation", AT, Role::attribute, {"hypodense", "low attenuation", "hypoattenuating"}, {}, 0.35, 0, 1},
      {"pelvis", BP, Role::region, {"pelvic"}, {}, 0.15},
      {"lung nodule", FT, Role::specific_type, {"pulmonary nodule"}, {"lung", "nodule"}, 1.0},
      {"lymph node", BP, Role::group, {}, {}, 0.0},
      {"mediastinum", BP, Role::organ, {"mediastinal"}, {"chest"}, 0.30, 0.3},
      {"kidney", BP, Role::organ, {"renal"}, {"abdomen"}, 0.20, 0.3},
      {"large", AT, Role::attribute, {"enlarged"}, {}, 0.15, 0, 2},
      {"cyst", FT, Role::coarse_type, {}, {}, 0.11},
      {"liver mass", FT, Role::specific_type, {"hepatic mass"}, {"liver", "mass"}, 1.0},
      {"right upper lobe", BP, Role::subpart, {}, {"lung"}, 0.30},
      {"right lower lobe", BP, Role::subpart, {}, {"lung"}, 0.25},
      {"left upper lobe", BP, Role::subpart, {}, {"lung"}, 0.20},
      {"left lower lobe", BP, Role::subpart, {}, {"lung"}, 0.15},
      {"mediastinum lymph node", BP, Role::subpart, {"mediastinal lymph node"}, {"mediastinum", "lymph node"}, 1.0},
      {"spiculated", AT, Role::attribute, {"spiculation"}, {}, 0.085},
      {"adrenal gland", BP, Role::organ, {"adrenal"}, {"abdomen"}, 0.085, 0.3},
      {"small", AT, Role::attribute, {"tiny"}, {}, 0.10, 0, 2},
      {"calcified", AT, Role::attribute, {"calcification"}, {}, 0.045},
      {"retroperitoneum", BP, Role::organ, {"retroperitoneal"}, {"abdomen"}, 0.15, 0.2},
      {"retroperitoneum lymph node", BP, Role::subpart, {"retroperitoneal lymph node"},
       {"retroperitoneum", "lymph node"}, 1.0},
      {"pelvic lymph node", BP, Role::organ, {}, {"pelvis", "lymph node"}, 0.60, 0.9},
      {"liver cyst", FT, Role::specific_type, {"hepatic cyst"}, {"liver", "cyst"}, 1.0},
      {"kidney cyst", FT, Role::specific_type, {"renal cyst"}, {"kidney", "cyst"}, 1.0},
      {"hyperattenuation", AT, Role::attribute, {"hyperdense", "high attenuation"}, {}, 0.085, 0, 1},
      {"lung mass", FT, Role::specific_type, {"pulmonary mass"}, {"lung", "mass"}, 1.0},
      {"ground-glass opacity", FT, Role::specific_type, {"ggo"}, {"lung"}, 0.11},
      {"left adrenal gland", BP, Role::subpart, {}, {"adrenal gland"}, 0.6},
      {"right adrenal gland", BP, Role::subpart, {}, {"adrenal gland"}, 0.4},
      {"heterogeneous", AT, Role::attribute, {"heterogeneously"}, {}, 0.065},
      {"well-defined", AT, Role::attribute, {"well circumscribed"}, {}, 0.065},
      {"right hepatic lobe", BP, Role::subpart, {"right lobe of the liver"}, {"liver"}, 0.7},
      {"left hepatic lobe", BP, Role::subpart, {"left lobe of the liver"}, {"liver"}, 0.3},
      {"pancreas", BP, Role::organ, {"pancreatic"}, {"abdomen"}, 0.07, 1.0},
      {"internal iliac lymph node", BP, Role::subpart, {}, {"pelvic lymph node"}, 1.0},
      {"lobulated", AT, Role::attribute, {"lobular"}, {}, 0.055},
      {"adrenal nodule", FT, Role::specific_type, {}, {"adrenal gland", "nodule"}, 1.0},
      {"right kidney", BP, Role::subpart, {"right renal"}, {"kidney"}, 0.5},
      {"left kidney", BP, Role::subpart, {"left renal"}, {"kidney"}, 0.5},
      {"spleen", BP, Role::organ, {"splenic"}, {"abdomen"}, 0.08, 1.0},
      {"bladder", BP, Role::organ, {"urinary bladder"}, {"pelvis"}, 0.40, 1.0},
      {"pleura", BP, Role::organ, {"pleural"}, {"chest"}, 0.10, 1.0},
      {"right middle lobe", BP, Role::subpart, {}, {"lung"}, 0.10},
      {"enhancing", AT, Role::attribute, {"enhancement"}, {}, 0.04},
  };
  return v;
}

int vocab_index(const char* name) {
  const auto& v = vocabulary();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::string_view(v[i].name) == name) return static_cast<int>(i);
  }
  return -1;
}

// Vocabulary indices kept for a given label count, in ontology id order.
std::vector<int> select_vocabulary(std::size_t n_labels) {
  const auto& v = vocabulary();
  std::vector<int> kept;
  std::vector<bool> in(v.size(), false);
  for (std::size_t i = 0; i < v.size() && kept.size() < n_labels; ++i) {
    bool ok = true;
    for (const char* p : v[i].parents) ok = ok && in[static_cast<std::size_t>(vocab_index(p))];
    if (!ok) continue;
    in[i] = true;
    kept.push_back(static_cast<int>(i));
  }
  return kept;
}

struct Lexicon {
  Ontology ontology;
  std::vector<int> vocab;        // ontology id -> vocab index
  std::vector<int> id_of_vocab;  // vocab index -> ontology id or -1
};

Lexicon make_lexicon(std::size_t n_labels) {
  Lexicon lex;
  lex.vocab = select_vocabulary(n_labels);
  lex.id_of_vocab.assign(vocabulary().size(), -1);
  std::vector<Ontology::Entry> entries;
  for (std::size_t id = 0; id < lex.vocab.size(); ++id) {
    const auto& e = vocabulary()[static_cast<std::size_t>(lex.vocab[id])];
    lex.id_of_vocab[static_cast<std::size_t>(lex.vocab[id])] = static_cast<int>(id);
    Ontology::Entry entry;
    entry.name = e.name;
    entry.category = e.category;
    for (const char* s : e.synonyms) entry.synonyms.emplace_back(s);
    for (const char* p : e.parents) entry.parents.emplace_back(p);
    entries.push_back(std::move(entry));
  }
  lex.ontology = Ontology::build(std::move(entries));
  return lex;
}

// What the generator drew for one lesion; vocab indices, -1 when absent.
struct Draw {
  int region = -1, organ = -1, subpart = -1;
  int coarse = -1, specific = -1;
  bool ggo = false;
  std::vector<int> attributes;
  // Rank of each choice among its selected siblings (rendering keys).
  std::size_t region_rank = 0, organ_rank = 0, organ_count = 1, subpart_rank = 0, subpart_count = 1;

  bool has(const char* name) const {
    const int idx = vocab_index(name);
    return std::find(attributes.begin(), attributes.end(), idx) != attributes.end();
  }
};

struct Sampler {
  const Lexicon& lex;

  bool selected(int vocab) const { return vocab >= 0 && lex.id_of_vocab[static_cast<std::size_t>(vocab)] >= 0; }

  // Selected entries with the given role whose first parent is `parent` (or none).
  std::vector<int> children(Role role, int parent) const {
    std::vector<int> out;
    const auto& v = vocabulary();
    for (int idx : lex.vocab) {
      const auto& e = v[static_cast<std::size_t>(idx)];
      if (e.role != role) continue;
      const int first = e.parents.empty() ? -1 : vocab_index(e.parents[0]);
      if (first == parent) out.push_back(idx);
    }
    return out;
  }

  int pick(const std::vector<int>& options, Rng& rng, double stop_weight, std::size_t* rank) const {
    std::vector<double> w;
    for (int idx : options) w.push_back(vocabulary()[static_cast<std::size_t>(idx)].weight);
    w.push_back(stop_weight);
    const std::size_t k = rng.categorical(w);
    if (k == options.size()) return -1;
    if (rank) *rank = k;
    return options[k];
  }

  Draw draw(Rng& rng) const {
    const auto& v = vocabulary();
    Draw d;
    const auto regions = children(Role::region, -1);
    d.region = pick(regions, rng, 0.0, &d.region_rank);

    const auto organs = children(Role::organ, d.region);
    d.organ_count = std::max<std::size_t>(1, organs.size());
    if (!organs.empty()) d.organ = pick(organs, rng, 0.0, &d.organ_rank);

    if (d.organ >= 0) {
      const auto subs = children(Role::subpart, d.organ);
      d.subpart_count = std::max<std::size_t>(1, subs.size() + 1);
      if (!subs.empty()) {
        d.subpart = pick(subs, rng, v[static_cast<std::size_t>(d.organ)].stop, &d.subpart_rank);
        if (d.subpart >= 0) ++d.subpart_rank;  // rank 0 means "no sub-part"
      }
    }

    const std::string organ = d.organ >= 0 ? v[static_cast<std::size_t>(d.organ)].name : "";
    const int ggo = vocab_index("ground-glass opacity");
    if (organ == "lung" && selected(ggo) && rng.bernoulli(v[static_cast<std::size_t>(ggo)].weight)) {
      d.ggo = true;
      d.specific = ggo;
    } else {
      std::vector<int> coarse;
      for (int idx : children(Role::coarse_type, -1)) {
        const bool cyst_ok = organ == "liver" || organ == "kidney" || organ == "pancreas" || organ == "spleen";
        if (std::string_view(v[static_cast<std::size_t>(idx)].name) == "cyst" && !cyst_ok) continue;
        coarse.push_back(idx);
      }
      d.coarse = pick(coarse, rng, 0.0, nullptr);
      // The organ-specific finding type is implied by organ + coarse type.
      for (int idx : lex.vocab) {
        const auto& e = v[static_cast<std::size_t>(idx)];
        if (e.role != Role::specific_type || e.parents.size() != 2) continue;
        if (vocab_index(e.parents[0]) == d.organ && vocab_index(e.parents[1]) == d.coarse) d.specific = idx;
      }
    }

    const std::string coarse_name = d.coarse >= 0 ? v[static_cast<std::size_t>(d.coarse)].name : "";
    std::vector<int> group_members[3];
    for (int idx : lex.vocab) {
      const auto& e = v[static_cast<std::size_t>(idx)];
      if (e.role != Role::attribute) continue;
      const std::string_view name = e.name;
      if (name == "spiculated" && coarse_name != "nodule" && coarse_name != "mass") continue;
      if (name == "lobulated" && coarse_name != "mass") continue;
      if (e.group == 0) {
        if (rng.bernoulli(e.weight)) d.attributes.push_back(idx);
      } else {
        group_members[e.group].push_back(idx);
      }
    }
    for (int g = 1; g <= 2; ++g) {
      if (group_members[g].empty()) continue;
      double total = 0.0;
      for (int idx : group_members[g]) total += v[static_cast<std::size_t>(idx)].weight;
      const int a = pick(group_members[g], rng, 1.0 - total, nullptr);
      if (a >= 0) d.attributes.push_back(a);
    }
    std::sort(d.attributes.begin(), d.attributes.end());
    return d;
  }
};

LabelSet drawn_labels(const Draw& d, const Lexicon& lex) {
  LabelSet s;
  auto add = [&](int vocab) {
    if (vocab >= 0 && lex.id_of_vocab[static_cast<std::size_t>(vocab)] >= 0) {
      s.insert(static_cast<LabelId>(lex.id_of_vocab[static_cast<std::size_t>(vocab)]));
    }
  };
  add(d.region);
  add(d.organ);
  add(d.subpart);
  add(d.coarse);
  add(d.specific);
  for (int a : d.attributes) add(a);
  return lex.ontology.expand(s);
}

// Truth members without a child in the truth set.
std::vector<LabelId> leaves_of(const LabelSet& truth, const Ontology& o) {
  LabelSet non_leaf;
  for (LabelId id : truth) {
    for (LabelId p : o.label(id).parents) non_leaf.insert(p);
  }
  std::vector<LabelId> out;
  for (LabelId id : truth) {
    if (!non_leaf.count(id)) out.push_back(id);
  }
  return out;
}

std::string surface_term(const LabelDef& def, Rng& rng) {
  if (def.synonyms.empty() || rng.bernoulli(0.6)) return def.name;
  return def.synonyms[rng.below(def.synonyms.size())];
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
  return out;
}

std::string capitalise(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string render_sentence(const LabelSet& truth, const Ontology& o, const SynthConfig& cfg, Rng& rng,
                            SynthStats& stats) {
  std::vector<std::string> mods, heads, bodies;
  for (LabelId leaf : leaves_of(truth, o)) {
    const LabelDef& def = o.label(leaf);
    ++stats.leaves;
    const double u = rng.uniform();
    const LabelDef* said = &def;
    if (u >= 1.0 - cfg.missing_rate) {
      ++stats.dropped;
      // Half of the dropped mentions fall back to a coarser parent term.
      if (u < 1.0 - cfg.missing_rate / 2.0 && !def.parents.empty()) {
        ++stats.replaced;
        said = &o.label(def.parents[rng.below(def.parents.size())]);
      } else {
        said = nullptr;
      }
    }
    if (!said) continue;
    auto term = surface_term(*said, rng);
    switch (said->category) {
      case Category::attribute:
        mods.push_back(std::move(term));
        break;
      case Category::finding_type:
        heads.push_back(std::move(term));
        break;
      case Category::body_part:
        bodies.push_back(std::move(term));
        break;
    }
  }

  const std::string mod = join(mods, " and ");
  const std::string head = heads.empty() ? std::string("lesion") : join(heads, " and ");
  const std::string where = bodies.empty() ? std::string() : " in the " + join(bodies, " and the ");
  char size_text[32];
  std::snprintf(size_text, sizeof size_text, "%.1f", rng.uniform(0.5, 6.0));

  std::string s;
  switch (rng.below(3)) {
    case 0:
      s = (mod.empty() ? "" : mod + " ") + head + where + ", measuring " + size_text + " cm";
      break;
    case 1:
      s = head + where + (mod.empty() ? "" : ", " + mod);
      break;
    default:
      s = "there is a " + (mod.empty() ? "" : mod + " ") + head + where;
      break;
  }
  if (rng.bernoulli(cfg.spurious_rate)) {
    std::vector<LabelId> others;
    for (const auto& def : o.labels()) {
      if (!truth.count(def.id)) others.push_back(def.id);
    }
    if (!others.empty()) {
      ++stats.spurious;
      s += ", with " + surface_term(o.label(others[rng.below(others.size())]), rng) + " nearby";
    }
  }
  return capitalise(s) + " (BOOKMARK).";
}

double smoothstep_inside(double signed_dist, double width) { return 1.0 / (1.0 + std::exp(-signed_dist / width)); }

// Renders three slices (z = -2, 0, +2 mm) in HU, then normalises.
Box render_patch(const Draw& d, Rng& rng, std::span<float> out) {
  const auto& v = vocabulary();
  auto name_of = [&](int idx) { return idx >= 0 ? std::string_view(v[static_cast<std::size_t>(idx)].name) : std::string_view(); };
  const std::string_view coarse = name_of(d.coarse);

  static constexpr double kRegionHu[] = {-650.0, 30.0, 350.0};
  const double background = kRegionHu[std::min<std::size_t>(d.region_rank, 2)];
  const double texture_amp = d.organ >= 0 ? 300.0 : 0.0;
  const double theta = std::numbers::pi * static_cast<double>(d.organ_rank) / static_cast<double>(d.organ_count);
  const double period = 9.0;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const bool landmark = d.subpart >= 0;
  const double phi = 2.0 * std::numbers::pi * static_cast<double>(d.subpart_rank) /
                     static_cast<double>(std::max<std::size_t>(d.subpart_count, 2));
  const double lx = 60.0 + 38.0 * std::cos(phi), ly = 60.0 + 38.0 * std::sin(phi);

  double radius = 6.0, delta = 500.0, edge = 1.5;
  if (coarse == "mass") radius = 13.0;
  if (coarse == "cyst") {
    radius = 9.0;
    delta = -300.0;
    edge = 0.7;
  }
  if (d.ggo) {
    radius = 11.0;
    delta = 300.0;
    edge = 4.0;
  }
  if (d.has("large")) radius *= 1.7;
  if (d.has("small")) radius *= 0.6;
  if (d.has("hypoattenuation")) delta = -350.0;
  if (d.has("hyperattenuation")) delta = 1000.0;
  if (d.has("well-defined")) edge = 0.4;
  radius *= rng.uniform(0.85, 1.15);
  const bool lobulated = d.has("lobulated"), spiculated = d.has("spiculated");
  const bool heterogeneous = d.has("heterogeneous"), enhancing = d.has("enhancing");
  const bool calcified = d.has("calcified");
  const double lobe_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double spike_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  const double cx = 60.0 + rng.uniform(-4.0, 4.0), cy = 60.0 + rng.uniform(-4.0, 4.0);
  const double calc_r = rng.uniform(0.0, 0.4) * radius, calc_a = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double calc_x = cx + calc_r * std::cos(calc_a), calc_y = cy + calc_r * std::sin(calc_a);

  for (std::size_t c = 0; c < kPatchChannels; ++c) {
    const double dz = (static_cast<double>(c) - 1.0) * kSliceIntervalMm;
    const double zr = std::max(radius, 3.0);
    const double r_slice = radius * std::sqrt(std::max(0.05, 1.0 - (dz * dz) / (zr * zr)));
    for (std::size_t y = 0; y < kPatchSize; ++y) {
      for (std::size_t x = 0; x < kPatchSize; ++x) {
        const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
        double hu = background +
                    texture_amp * std::cos(2.0 * std::numbers::pi / period * (px * std::cos(theta) + py * std::sin(theta)) + phase + 0.3 * dz);
        if (landmark) {
          const double ld = std::hypot(px - lx, py - ly);
          hu += 800.0 * smoothstep_inside(7.0 - ld, 1.0);
        }
        const double ddx = px - cx, ddy = py - cy;
        const double dist = std::hypot(ddx, ddy);
        const double ang = std::atan2(ddy, ddx);
        double r_boundary = r_slice;
        if (lobulated) r_boundary *= 1.0 + 0.25 * std::cos(3.0 * ang + lobe_phase);
        if (spiculated) r_boundary *= 1.0 + 0.7 * std::pow(std::max(0.0, std::cos(7.0 * ang + spike_phase)), 6.0);
        const double inside = smoothstep_inside(r_boundary - dist, edge);
        double lesion = delta;
        if (heterogeneous) lesion += 300.0 * rng.normal();
        if (enhancing) lesion += 700.0 * std::exp(-std::pow((dist - r_boundary) / 1.5, 2.0));
        hu += inside * lesion;
        if (calcified && c == 1) hu += 1500.0 * smoothstep_inside(2.2 - std::hypot(px - calc_x, py - calc_y), 0.5);
        hu += 40.0 * rng.normal();
        out[(c * kPatchSize + y) * kPatchSize + x] = normalize_hu(static_cast<float>(hu));
      }
    }
  }
  const double extent = radius * (spiculated ? 1.5 : lobulated ? 1.25 : 1.0) + 1.0;
  const double size = static_cast<double>(kPatchSize);
  return {std::clamp(cx - extent, 0.0, size - 1.0), std::clamp(cy - extent, 0.0, size - 1.0),
          std::clamp(cx + extent, 1.0, size), std::clamp(cy + extent, 1.0, size)};
}

}  // namespace

void SynthConfig::validate() const {
  if (n_labels < 8 || n_labels > vocabulary().size()) {
    throw ConfigError("synth.n_labels must lie in [8, " + std::to_string(vocabulary().size()) + "]");
  }
  if (n_train == 0 || n_test == 0) throw ConfigError("synth.n_train and synth.n_test must be positive");
  if (!(missing_rate >= 0 && missing_rate <= 1)) throw ConfigError("synth.missing_rate must lie in [0, 1]");
  if (!(spurious_rate >= 0 && spurious_rate <= 1)) throw ConfigError("synth.spurious_rate must lie in [0, 1]");
}

std::size_t synth_vocabulary_size() { return vocabulary().size(); }

Ontology synth_ontology(std::size_t n_labels) { return make_lexicon(n_labels).ontology; }

SynthCorpus synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  Lexicon lex = make_lexicon(cfg.n_labels);
  const Sampler sampler{lex};
  SynthCorpus out{lex.ontology, {}, {}, {}, {}, {}};

  Rng patients(derive_seed(cfg.seed, 0));
  std::size_t patient_no = 0, lesion_no = 0;
  auto generate = [&](std::size_t count, std::vector<LesionRecord>& records, PatchStore& patches) {
    patches = PatchStore(count);
    std::size_t remaining_for_patient = 0;
    char id[32];
    for (std::size_t i = 0; i < count; ++i) {
      if (remaining_for_patient == 0) {
        ++patient_no;
        remaining_for_patient = 1 + patients.below(3);
      }
      --remaining_for_patient;
      ++lesion_no;
      Rng rng(derive_seed(cfg.seed, lesion_no));
      const Draw d = sampler.draw(rng);
      const LabelSet truth = drawn_labels(d, lex);

      LesionRecord r;
      std::snprintf(id, sizeof id, "L%06zu", lesion_no);
      r.lesion_id = id;
      std::snprintf(id, sizeof id, "P%05zu", patient_no);
      r.patient_id = id;
      r.sentence = Sentence::from_text(render_sentence(truth, lex.ontology, cfg, rng, out.stats));
      r.bbox_mm = render_patch(d, rng, patches.patch(i));
      r.slice_mm = 0.0;
      std::vector<std::string> names;
      for (LabelId t : truth) names.push_back(lex.ontology.label(t).name);
      r.truth_labels = std::move(names);
      records.push_back(std::move(r));
    }
  };
  generate(cfg.n_train, out.train, out.train_patches);
  // Test patients start fresh so the two sides never share a patient.
  generate(cfg.n_test, out.test, out.test_patches);
  return out;
}

}  // namespace lesion
