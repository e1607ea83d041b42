#include "cia/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "cia/errors.hpp"
#include "cia/ppm.hpp"
#include "cia/prng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cia {

namespace {

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void expect_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) {
      if (it.key() == a) { ok = true; break; }
    }
    if (!ok) {
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
    }
  }
}

ModelRole parse_role(const std::string& s) {
  if (s == "attacked") return ModelRole::Attacked;
  if (s == "holdout") return ModelRole::Holdout;
  throw std::invalid_argument("config: model role must be 'attacked' or 'holdout', got '" + s + "'");
}

ModelDefense parse_model_defense(const std::string& s) {
  if (s == "none") return ModelDefense::None;
  if (s == "smoothing") return ModelDefense::Smoothing;
  if (s == "jpeg_approx") return ModelDefense::JpegApprox;
  throw std::invalid_argument("config: model defense must be none|smoothing|jpeg_approx, got '" + s + "'");
}

Squash parse_squash(const std::string& s) {
  if (s == "tanh") return Squash::Tanh;
  if (s == "sigmoid") return Squash::Sigmoid2;
  if (s == "sin") return Squash::Sin;
  throw std::invalid_argument("config: squash must be tanh|sigmoid|sin, got '" + s + "'");
}

Composition parse_composition(const std::string& s) {
  if (s == "single") return Composition::Single;
  if (s == "ensemble") return Composition::Ensemble;
  if (s == "hybrid") return Composition::Hybrid;
  if (s == "ensemble_hybrid") return Composition::EnsembleHybrid;
  throw std::invalid_argument(
      "config: composition must be single|ensemble|hybrid|ensemble_hybrid, got '" + s + "'");
}

std::vector<const LoadedModel*> attacked_models(const std::vector<LoadedModel>& models) {
  std::vector<const LoadedModel*> out;
  for (const auto& m : models) {
    if (m.entry.role == ModelRole::Attacked) out.push_back(&m);
  }
  return out;
}

/// The attack objective the config describes, pointing into `models`.
ObjectiveSpec build_objective(const ExperimentConfig& config,
                              const std::vector<LoadedModel>& models) {
  ObjectiveSpec obj;
  obj.composition = config.attack.composition;
  const auto attacked = attacked_models(models);
  auto plain_term = [](const LoadedModel* m, float w) {
    return ObjectiveTerm{&m->plain, false, w};
  };
  auto fronted_term = [](const LoadedModel* m, float w) {
    if (!m->fronted) {
      throw std::invalid_argument("config: model '" + m->entry.name + "' needs a defense for this composition");
    }
    return ObjectiveTerm{&*m->fronted, true, w};
  };
  switch (config.attack.composition) {
    case Composition::Single:
    case Composition::Ensemble:
      for (const LoadedModel* m : attacked) {
        if (m->fronted) obj.terms.push_back(fronted_term(m, m->entry.weight));
        else obj.terms.push_back(plain_term(m, m->entry.weight));
      }
      break;
    case Composition::Hybrid:
    case Composition::EnsembleHybrid:
      for (const LoadedModel* m : attacked) {
        obj.terms.push_back(plain_term(m, config.attack.hybrid_a * m->entry.weight));
        obj.terms.push_back(fronted_term(m, config.attack.hybrid_b * m->entry.weight));
      }
      break;
  }
  obj.validate();
  return obj;
}

}  // namespace

std::string EvalDefense::label() const {
  switch (kind) {
    case Kind::None: return "none";
    case Kind::Smoothing: return "smoothing";
    case Kind::JpegApprox: return "jpeg_approx";
    case Kind::JpegCodec: return "jpeg:" + std::to_string(quality);
  }
  return "?";
}

EvalDefense EvalDefense::parse(const std::string& text) {
  EvalDefense d;
  if (text == "none") { d.kind = Kind::None; return d; }
  if (text == "smoothing") { d.kind = Kind::Smoothing; return d; }
  if (text == "jpeg_approx") { d.kind = Kind::JpegApprox; return d; }
  if (text.rfind("jpeg:", 0) == 0) {
    d.kind = Kind::JpegCodec;
    try {
      size_t used = 0;
      d.quality = std::stoi(text.substr(5), &used);
      if (used != text.size() - 5) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw std::invalid_argument("config: bad jpeg quality in '" + text + "'");
    }
    if (d.quality < 1 || d.quality > 100) {
      throw std::invalid_argument("config: jpeg quality must be 1..100");
    }
    return d;
  }
  throw std::invalid_argument("config: unknown eval defense '" + text +
                              "' (expected none|smoothing|jpeg_approx|jpeg:<Q>)");
}

Tensor EvalDefense::apply(const Tensor& image) const {
  switch (kind) {
    case Kind::None: return image;
    case Kind::Smoothing: return mean_filter(image, SmoothingSpec{});
    case Kind::JpegApprox: return jpeg_approx(image, JpegApproxSpec{});
    case Kind::JpegCodec: return jpeg_encode_decode(image, JpegCodecSpec{quality});
  }
  throw std::invalid_argument("unknown eval defense kind");
}

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) throw std::invalid_argument("config: dataset path is required");
  if (samples < 0) throw std::invalid_argument("config: samples must be >= 0");
  if (delta_int < 0 || delta_int > 255) throw std::invalid_argument("config: delta_int must be 0..255");
  if (models.empty()) throw std::invalid_argument("config: at least one model is required");
  std::set<std::string> names;
  int attacked = 0, fronted_attacked = 0;
  for (const auto& m : models) {
    if (m.name.empty()) throw std::invalid_argument("config: model names must be nonempty");
    if (m.name == "vote") throw std::invalid_argument("config: model name 'vote' is reserved");
    if (!names.insert(m.name).second) {
      throw std::invalid_argument("config: duplicate model name '" + m.name + "'");
    }
    if (m.path.empty()) throw std::invalid_argument("config: model path is required");
    if (!(m.weight > 0.0f)) throw std::invalid_argument("config: model weights must be positive");
    if (m.role == ModelRole::Attacked) {
      ++attacked;
      if (m.defense != ModelDefense::None) ++fronted_attacked;
    }
  }
  if (attacked == 0) throw std::invalid_argument("config: at least one model must be attacked");
  switch (attack.composition) {
    case Composition::Single:
      if (attacked != 1) throw std::invalid_argument("config: single composition attacks exactly one model");
      break;
    case Composition::Ensemble:
      break;
    case Composition::Hybrid:
      if (attacked != 1) throw std::invalid_argument("config: hybrid composition attacks exactly one model");
      if (fronted_attacked != 1) throw std::invalid_argument("config: hybrid needs a defense on the attacked model");
      break;
    case Composition::EnsembleHybrid:
      if (fronted_attacked != attacked) {
        throw std::invalid_argument("config: ensemble_hybrid needs a defense on every attacked model");
      }
      break;
  }
  if (attack.iterations < 1) throw std::invalid_argument("config: iterations must be >= 1");
  if (!(attack.adam.lr > 0.0f)) throw std::invalid_argument("config: learning rate must be positive");
  if (attack.adam.beta1 < 0.0f || attack.adam.beta1 >= 1.0f ||
      attack.adam.beta2 < 0.0f || attack.adam.beta2 >= 1.0f) {
    throw std::invalid_argument("config: adam betas must be in [0,1)");
  }
  if (!(attack.adam.eps > 0.0f)) throw std::invalid_argument("config: adam epsilon must be positive");
  if (!(attack.hybrid_a > 0.0f) || !(attack.hybrid_b > 0.0f)) {
    throw std::invalid_argument("config: hybrid weights must be positive");
  }
  if (eval_defenses.empty()) throw std::invalid_argument("config: eval_defenses must be nonempty");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: JSON parse failed: ") + e.what());
  }
  try {
    expect_keys(j, {"seed", "dataset", "samples", "delta_int", "models", "attack",
                    "eval_defenses", "out_dir", "save_images"}, "the top level");
    ExperimentConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    c.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("samples")) c.samples = j.at("samples").get<int>();
    if (j.contains("delta_int")) c.delta_int = j.at("delta_int").get<int>();

    for (const auto& jm : j.at("models")) {
      expect_keys(jm, {"name", "path", "role", "defense", "weight"}, "a model entry");
      ModelEntry m;
      m.name = jm.at("name").get<std::string>();
      m.path = jm.at("path").get<std::string>();
      if (jm.contains("role")) m.role = parse_role(jm.at("role").get<std::string>());
      if (jm.contains("defense")) m.defense = parse_model_defense(jm.at("defense").get<std::string>());
      if (jm.contains("weight")) m.weight = jm.at("weight").get<float>();
      c.models.push_back(std::move(m));
    }

    if (j.contains("attack")) {
      const auto& ja = j.at("attack");
      expect_keys(ja, {"mode", "iterations", "learning_rate", "beta1", "beta2", "epsilon",
                       "squash", "composition", "hybrid_a", "hybrid_b", "target_policy"},
                  "the attack section");
      if (ja.contains("mode")) {
        const std::string mode = ja.at("mode").get<std::string>();
        if (mode == "targeted") c.attack.targeted = true;
        else if (mode == "untargeted") c.attack.targeted = false;
        else throw std::invalid_argument("config: attack mode must be targeted|untargeted");
      }
      if (ja.contains("iterations")) c.attack.iterations = ja.at("iterations").get<int>();
      if (ja.contains("learning_rate")) c.attack.adam.lr = ja.at("learning_rate").get<float>();
      if (ja.contains("beta1")) c.attack.adam.beta1 = ja.at("beta1").get<float>();
      if (ja.contains("beta2")) c.attack.adam.beta2 = ja.at("beta2").get<float>();
      if (ja.contains("epsilon")) c.attack.adam.eps = ja.at("epsilon").get<float>();
      if (ja.contains("squash")) c.attack.squash = parse_squash(ja.at("squash").get<std::string>());
      if (ja.contains("composition")) {
        c.attack.composition = parse_composition(ja.at("composition").get<std::string>());
      }
      if (ja.contains("hybrid_a")) c.attack.hybrid_a = ja.at("hybrid_a").get<float>();
      if (ja.contains("hybrid_b")) c.attack.hybrid_b = ja.at("hybrid_b").get<float>();
      if (ja.contains("target_policy")) {
        const std::string p = ja.at("target_policy").get<std::string>();
        if (p != "seeded_random_excluding_true") {
          throw std::invalid_argument("config: unknown target policy '" + p + "'");
        }
      }
    }

    if (j.contains("eval_defenses")) {
      c.eval_defenses.clear();
      for (const auto& jd : j.at("eval_defenses")) {
        c.eval_defenses.push_back(EvalDefense::parse(jd.get<std::string>()));
      }
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("save_images")) c.save_images = j.at("save_images").get<bool>();

    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

int pick_target(uint64_t seed, uint64_t sample_index, int true_class, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("pick_target: needs at least two classes");
  if (true_class < 0 || true_class >= num_classes) {
    throw std::invalid_argument("pick_target: true class out of range");
  }
  SplitMix64 rng(substream_seed(substream_seed(seed, 0x7A46E7), sample_index));
  const int t = static_cast<int>(rng.below(static_cast<uint64_t>(num_classes - 1)));
  return t + (t >= true_class ? 1 : 0);
}

int majority_vote(const std::vector<int>& predictions, const std::vector<Tensor>* probs) {
  if (predictions.empty()) throw std::invalid_argument("majority_vote: no predictions");
  if (probs && probs->size() != predictions.size()) {
    throw std::invalid_argument("majority_vote: probs/predictions length mismatch");
  }
  int max_class = 0;
  for (int p : predictions) {
    if (p < 0) throw std::invalid_argument("majority_vote: negative class index");
    max_class = std::max(max_class, p);
  }
  std::vector<int> counts(static_cast<size_t>(max_class) + 1, 0);
  for (int p : predictions) ++counts[static_cast<size_t>(p)];
  const int top = *std::max_element(counts.begin(), counts.end());

  int best = -1;
  double best_prob = -1.0;
  for (int cls = 0; cls <= max_class; ++cls) {
    if (counts[static_cast<size_t>(cls)] != top) continue;
    if (!probs) return cls;  // lowest tied index wins without probabilities
    double mean = 0.0;
    for (const Tensor& p : *probs) mean += cls < p.size() ? p[cls] : 0.0;
    mean /= static_cast<double>(probs->size());
    if (mean > best_prob) {
      best_prob = mean;
      best = cls;
    }
  }
  return best;
}

std::vector<LoadedModel> load_models(const ExperimentConfig& config) {
  std::vector<LoadedModel> out;
  out.reserve(config.models.size());
  for (const auto& entry : config.models) {
    LoadedModel m{entry, load_network(entry.path), std::nullopt};
    switch (entry.defense) {
      case ModelDefense::None: break;
      case ModelDefense::Smoothing:
        m.fronted = m.plain.prepend(defense_as_layers(SmoothingSpec{}));
        break;
      case ModelDefense::JpegApprox:
        m.fronted = m.plain.prepend(defense_as_layers(JpegApproxSpec{}));
        break;
    }
    if (!out.empty() && (m.plain.input_shape() != out[0].plain.input_shape() ||
                         m.plain.num_classes() != out[0].plain.num_classes())) {
      throw std::invalid_argument("config: all models must share input shape and classes");
    }
    out.push_back(std::move(m));
  }
  return out;
}

CampaignResult run_attack_campaign(const ExperimentConfig& config, const Dataset& ds,
                                   const std::vector<LoadedModel>& models) {
  config.validate();
  const int total = static_cast<int>(ds.test.images.size());
  const int n = config.samples;  // zero samples is a legal (empty) campaign
  if (n > total) throw std::invalid_argument("config: more samples requested than the test split has");

  const ObjectiveSpec objective = build_objective(config, models);

  AttackConfig base;
  base.iterations = config.attack.iterations;
  base.adam = config.attack.adam;
  base.squash = config.attack.squash;
  base.budget = PerturbationBudget::uniform(
      {ds.height, ds.width, ds.channels}, static_cast<float>(config.delta_int) / 255.0f);

  CampaignResult out;
  out.sample_indices.resize(n);
  out.true_labels.resize(n);
  out.target_labels.resize(n);
  out.originals.resize(n);
  out.adversarials.resize(n);

  // Per-sample jobs are independent (networks are immutable, crafting is a
  // pure function of its inputs), so they fan out over a small worker pool;
  // every result lands in its own slot, keeping reports byte-identical no
  // matter how many workers run.
  const int workers = std::max(1, std::min({n, 8,
      static_cast<int>(std::thread::hardware_concurrency())}));
  std::atomic<int> cursor{0};
  std::vector<std::exception_ptr> failures(static_cast<size_t>(workers));
  auto job = [&](int w) {
    try {
      for (int i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) {
        const Tensor& x = ds.test.images[static_cast<size_t>(i)];
        const int truth = ds.test.labels[static_cast<size_t>(i)];
        AttackConfig ac = base;
        ac.mode.true_class = truth;
        ac.mode.targeted = config.attack.targeted;
        int target = -1;
        if (config.attack.targeted) {
          target = pick_target(config.seed, static_cast<uint64_t>(i), truth,
                               models[0].plain.num_classes());
          ac.mode.target_class = target;
        }
        AttackResult res = craft(x, ac, objective);
        out.sample_indices[static_cast<size_t>(i)] = i;
        out.true_labels[static_cast<size_t>(i)] = truth;
        out.target_labels[static_cast<size_t>(i)] = target;
        out.originals[static_cast<size_t>(i)] = x;
        out.adversarials[static_cast<size_t>(i)] = quantize_roundtrip(res.adversarial);
      }
    } catch (...) {
      failures[static_cast<size_t>(w)] = std::current_exception();
    }
  };
  if (workers <= 1) {
    job(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(job, w);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  return out;
}

std::vector<MetricRow> evaluate_campaign(const ExperimentConfig& config,
                                         const std::vector<LoadedModel>& models,
                                         const CampaignResult& campaign) {
  const size_t n = campaign.adversarials.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty campaign");
  if (campaign.originals.size() != n || campaign.true_labels.size() != n ||
      campaign.target_labels.size() != n) {
    throw std::invalid_argument("evaluate: campaign fields disagree in length");
  }

  // the emitted-image contract: nothing to measure if the budget was broken
  for (size_t i = 0; i < n; ++i) {
    if (max_byte_deviation(campaign.originals[i], campaign.adversarials[i]) > config.delta_int) {
      throw std::logic_error("evaluate: adversarial exceeds the 8-bit deviation budget");
    }
  }

  const bool targeted = config.attack.targeted;
  std::vector<MetricRow> rows;
  for (const EvalDefense& defense : config.eval_defenses) {
    const std::string label = defense.label();
    const size_t nm = models.size();
    std::vector<long> clean_hits(nm, 0), succ(nm, 0), mis(nm, 0);
    long vote_clean = 0, vote_succ = 0, vote_mis = 0;

    for (size_t i = 0; i < n; ++i) {
      const Tensor adv = defense.apply(campaign.adversarials[i]);
      const Tensor orig = defense.apply(campaign.originals[i]);
      const int truth = campaign.true_labels[i];
      const int target = campaign.target_labels[i];

      std::vector<int> preds_adv(nm), preds_orig(nm);
      std::vector<Tensor> probs_adv(nm), probs_orig(nm);
      for (size_t m = 0; m < nm; ++m) {
        ClassifierOutput oa = models[m].plain.forward(adv);
        ClassifierOutput oo = models[m].plain.forward(orig);
        preds_adv[m] = oa.predicted_class;
        preds_orig[m] = oo.predicted_class;
        probs_adv[m] = std::move(oa.probs);
        probs_orig[m] = std::move(oo.probs);
        if (preds_orig[m] == truth) ++clean_hits[m];
        if (targeted && preds_adv[m] == target) ++succ[m];
        if (preds_adv[m] != truth) ++mis[m];
      }
      if (majority_vote(preds_orig, &probs_orig) == truth) ++vote_clean;
      const int vote = majority_vote(preds_adv, &probs_adv);
      if (targeted && vote == target) ++vote_succ;
      if (vote != truth) ++vote_mis;
    }

    const double dn = static_cast<double>(n);
    const long ln = static_cast<long>(n);
    for (size_t m = 0; m < nm; ++m) {
      const std::string& name = models[m].entry.name;
      rows.push_back({name, label, config.delta_int, "clean_accuracy", clean_hits[m] / dn, ln});
      if (targeted) {
        rows.push_back({name, label, config.delta_int, "targeted_success", succ[m] / dn, ln});
      }
      rows.push_back({name, label, config.delta_int, "misclassification", mis[m] / dn, ln});
      if (models[m].entry.role == ModelRole::Holdout) {
        rows.push_back({name, label, config.delta_int, "is_holdout", 1.0, ln});
      }
    }
    rows.push_back({"vote", label, config.delta_int, "clean_accuracy", vote_clean / dn, ln});
    if (targeted) {
      rows.push_back({"vote", label, config.delta_int, "targeted_success", vote_succ / dn, ln});
    }
    rows.push_back({"vote", label, config.delta_int, "misclassification", vote_mis / dn, ln});
  }
  return rows;
}

std::string render_csv(const std::vector<MetricRow>& rows) {
  std::string out = "model,defense,delta_int,metric,value,n\n";
  for (const auto& r : rows) {
    out += r.model;
    out += ',';
    out += r.defense;
    out += ',';
    out += std::to_string(r.delta_int);
    out += ',';
    out += r.metric;
    out += ',';
    out += format_value(r.value);
    out += ',';
    out += std::to_string(r.n);
    out += '\n';
  }
  return out;
}

std::string render_table(const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line) || line != "model,defense,delta_int,metric,value,n") {
    throw std::invalid_argument("report: unexpected CSV header");
  }
  struct Cell { std::string model, defense, metric, value; std::string delta, n; };
  std::vector<Cell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') { f.push_back(cur); cur.clear(); }
      else cur += ch;
    }
    f.push_back(cur);
    if (f.size() != 6) throw std::invalid_argument("report: malformed CSV row: " + line);
    cells.push_back({f[0], f[1], f[3], f[4], f[2], f[5]});
  }
  if (cells.empty()) return "(empty report)\n";

  std::vector<std::string> defenses, metrics, modelnames;
  auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& c : cells) {
    remember(defenses, c.defense);
    remember(metrics, c.metric);
    remember(modelnames, c.model);
  }

  std::ostringstream out;
  for (const auto& d : defenses) {
    std::string delta, n;
    for (const auto& c : cells) {
      if (c.defense == d) { delta = c.delta; n = c.n; break; }
    }
    out << "defense: " << d << "  (delta_int=" << delta << ", n=" << n << ")\n";
    size_t name_w = 5;
    for (const auto& m : modelnames) name_w = std::max(name_w, m.size());
    out << "  " << std::left << std::setw(static_cast<int>(name_w) + 2) << "model";
    for (const auto& met : metrics) out << std::setw(static_cast<int>(met.size()) + 2) << met;
    out << "\n";
    for (const auto& m : modelnames) {
      out << "  " << std::setw(static_cast<int>(name_w) + 2) << m;
      for (const auto& met : metrics) {
        std::string v = "-";
        for (const auto& c : cells) {
          if (c.defense == d && c.model == m && c.metric == met) { v = c.value; break; }
        }
        out << std::setw(static_cast<int>(met.size()) + 2) << v;
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

namespace {

std::string sample_filename(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05d.ppm", prefix, i);
  return buf;
}

}  // namespace

void save_campaign(const ExperimentConfig& config, const CampaignResult& campaign) {
  if (config.out_dir.empty()) throw std::invalid_argument("save_campaign: out_dir is not set");
  fs::create_directories(config.out_dir);
  json manifest;
  manifest["seed"] = config.seed;
  manifest["delta_int"] = config.delta_int;
  manifest["targeted"] = config.attack.targeted;
  manifest["samples"] = json::array();
  for (size_t i = 0; i < campaign.adversarials.size(); ++i) {
    const std::string orig_name = sample_filename("orig", static_cast<int>(i));
    const std::string adv_name = sample_filename("adv", static_cast<int>(i));
    write_ppm((fs::path(config.out_dir) / orig_name).string(), campaign.originals[i]);
    write_ppm((fs::path(config.out_dir) / adv_name).string(), campaign.adversarials[i]);
    manifest["samples"].push_back({{"index", campaign.sample_indices[i]},
                                   {"true", campaign.true_labels[i]},
                                   {"target", campaign.target_labels[i]},
                                   {"orig", orig_name},
                                   {"adv", adv_name}});
  }
  std::ofstream out(fs::path(config.out_dir) / "manifest.json", std::ios::binary);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

CampaignResult load_campaign(const ExperimentConfig& config) {
  if (config.out_dir.empty()) throw std::invalid_argument("load_campaign: out_dir is not set");
  std::ifstream in(fs::path(config.out_dir) / "manifest.json", std::ios::binary);
  if (!in) {
    throw FormatError(FormatError::Kind::Io,
                      "no manifest.json in " + config.out_dir + " (run the attack first)");
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::BadValue, std::string("manifest: ") + e.what());
  }
  CampaignResult out;
  try {
    if (manifest.at("delta_int").get<int>() != config.delta_int) {
      throw std::invalid_argument("manifest delta_int does not match the config");
    }
    if (manifest.at("targeted").get<bool>() != config.attack.targeted) {
      throw std::invalid_argument("manifest attack mode does not match the config");
    }
    for (const auto& js : manifest.at("samples")) {
      out.sample_indices.push_back(js.at("index").get<int>());
      out.true_labels.push_back(js.at("true").get<int>());
      out.target_labels.push_back(js.at("target").get<int>());
      out.originals.push_back(read_ppm((fs::path(config.out_dir) / js.at("orig").get<std::string>()).string()));
      out.adversarials.push_back(read_ppm((fs::path(config.out_dir) / js.at("adv").get<std::string>()).string()));
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::BadValue, std::string("manifest: ") + e.what());
  }
  if (out.adversarials.empty()) throw FormatError(FormatError::Kind::BadValue, "manifest: no samples");
  return out;
}

ExperimentOutput run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Dataset ds = load_dataset(config.dataset_path);
  const std::vector<LoadedModel> models = load_models(config);
  const CampaignResult campaign = run_attack_campaign(config, ds, models);
  if (!config.out_dir.empty() && config.save_images) save_campaign(config, campaign);
  ExperimentOutput out;
  // zero requested samples: nothing to score, the report is just the header
  if (!campaign.adversarials.empty()) out.rows = evaluate_campaign(config, models, campaign);
  out.csv = render_csv(out.rows);
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    std::ofstream f(fs::path(config.out_dir) / "report.csv", std::ios::binary);
    if (!f) throw FormatError(FormatError::Kind::Io, "cannot write report.csv");
    f << out.csv;
  }
  return out;
}

}  // namespace cia
