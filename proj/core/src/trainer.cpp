#include "vlbias/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"
#include "vlbias/errors.hpp"
#include "vlbias/leb1.hpp"
#include "vlbias/rng.hpp"
#include "vlbias/similarity.hpp"

namespace vlbias {

using json = nlohmann::ordered_json;

namespace {
// stream tags for seed derivation
constexpr std::uint64_t kEpochShuffleTag = 0xE50C;
constexpr std::uint64_t kPairingTag = 0xCF01;
constexpr std::uint64_t kBetaTag = 0xBE7A;
}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (queue_size == 0) throw ConfigError("queue_size must be positive");
  if (batch_size > queue_size)
    throw ConfigError("batch_size " + std::to_string(batch_size) + " exceeds queue_size " +
                      std::to_string(queue_size));
  if (steps > 0 && steps * batch_size < queue_size)
    throw ConfigError("steps * batch_size must cover the queue (warm-up feasibility)");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
}

std::vector<MatchedPair> match_pairs(const LabeledEmbeddingSet& text_set,
                                     const LabeledEmbeddingSet& image_set) {
  if (text_set.dim() != image_set.dim())
    throw DimError("text and image sets have different dimensions");

  auto key_of = [](const SampleLabel& label) {
    std::string key = label.concept_name;
    for (const auto& [axis, value] : label.attributes) key += "\x1f" + axis + "=" + value;
    return key;
  };

  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> texts, images;
  for (std::size_t i : text_set.indices_of_modality(Modality::text))
    texts[key_of(text_set.row(i).label)].push_back({text_set.row(i).label.id, i});
  for (std::size_t i : image_set.indices_of_modality(Modality::image))
    images[key_of(image_set.row(i).label)].push_back({image_set.row(i).label.id, i});
  if (texts.empty()) throw PairingError("no text rows to pair");
  if (images.empty()) throw PairingError("no image rows to pair");

  std::vector<MatchedPair> pairs;
  for (auto& [key, t_rows] : texts) {
    auto it = images.find(key);
    if (it == images.end() || it->second.size() != t_rows.size())
      throw PairingError("text/image groups do not match for key '" + key + "'");
    std::sort(t_rows.begin(), t_rows.end());
    std::sort(it->second.begin(), it->second.end());
    for (std::size_t r = 0; r < t_rows.size(); ++r)
      pairs.push_back({t_rows[r].second, it->second[r].second});
  }
  if (images.size() != texts.size())
    throw PairingError("image set has groups absent from the text set");
  return pairs;
}

namespace {

struct Cursor {
  std::uint64_t epoch = 0;
  std::uint64_t pos = 0;
  std::vector<std::size_t> order;  // permutation of pair indices for `epoch`
  std::map<std::string, std::string> pairing;  // counterfactual map for `epoch`
};

void start_epoch(Cursor& cur, std::uint64_t epoch, std::size_t pair_count,
                 const LabeledEmbeddingSet& text_set, const TrainConfig& cfg) {
  cur.epoch = epoch;
  cur.pos = 0;
  cur.order.resize(pair_count);
  for (std::size_t i = 0; i < pair_count; ++i) cur.order[i] = i;
  Rng rng(mix_seed(cfg.seed, kEpochShuffleTag, epoch));
  rng.shuffle(cur.order);
  if (!cfg.axes.empty())
    cur.pairing = pair_counterfactuals(text_set, cfg.axes, mix_seed(cfg.seed, kPairingTag, epoch));
}

// next batch of pair indices; drops epoch remainders smaller than a batch
std::vector<std::size_t> next_batch(Cursor& cur, const LabeledEmbeddingSet& text_set,
                                    const TrainConfig& cfg, std::size_t pair_count) {
  if (cur.pos + cfg.batch_size > cur.order.size())
    start_epoch(cur, cur.epoch + 1, pair_count, text_set, cfg);
  std::vector<std::size_t> batch(cur.order.begin() + static_cast<long>(cur.pos),
                                 cur.order.begin() + static_cast<long>(cur.pos + cfg.batch_size));
  cur.pos += cfg.batch_size;
  return batch;
}

void adam_step(BAParams& params, AdamState& adam, double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  adam.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.t));
  const std::size_t n = params.param_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = params.grad(i);
    adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * g;
    adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * g * g;
    const double mhat = adam.m[i] / c1;
    const double vhat = adam.v[i] / c2;
    params.param(i) -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

TrainResult run_loop(const LabeledEmbeddingSet& text_set, const LabeledEmbeddingSet& image_set,
                     TrainState state) {
  const TrainConfig& cfg = state.cfg;
  cfg.validate();
  const auto pairs = match_pairs(text_set, image_set);
  if (pairs.size() < cfg.batch_size)
    throw ConfigError("dataset has fewer matched pairs than one batch");

  // text id -> pair, for counterfactual image lookups and queue rehydration
  std::map<std::string, std::size_t> pair_by_text_id;
  for (std::size_t p = 0; p < pairs.size(); ++p)
    pair_by_text_id[text_set.row(pairs[p].text_index).label.id] = p;

  EmbeddingQueue queue_text(cfg.queue_size), queue_image(cfg.queue_size);
  for (const std::string& id : state.queue_text_ids)
    queue_text.push({{id, text_set.by_id(id).values}});
  for (const std::string& id : state.queue_image_ids)
    queue_image.push({{id, image_set.by_id(id).values}});

  Cursor cur;
  start_epoch(cur, state.epoch, pairs.size(), text_set, cfg);
  cur.pos = state.cursor;

  const SimilarityConfig simcfg{cfg.temperature};
  const LossWeights weights{cfg.alpha};

  auto push_batch = [&](const std::vector<std::size_t>& batch) {
    std::vector<std::pair<std::string, Vec>> t_entries, v_entries;
    t_entries.reserve(batch.size());
    v_entries.reserve(batch.size());
    for (std::size_t p : batch) {
      const LabeledRow& t = text_set.row(pairs[p].text_index);
      const LabeledRow& v = image_set.row(pairs[p].image_index);
      t_entries.push_back({t.label.id, t.values});
      v_entries.push_back({v.label.id, v.values});
    }
    queue_text.push(t_entries);
    queue_image.push(v_entries);
  };

  // warm-up: prefill with frozen embeddings, no gradient steps
  while (!queue_text.full() || !queue_image.full())
    push_batch(next_batch(cur, text_set, cfg, pairs.size()));

  std::vector<LossRecord> history;
  history.reserve(cfg.steps > state.step ? cfg.steps - state.step : 0);

  while (state.step < cfg.steps) {
    const auto batch = next_batch(cur, text_set, cfg, pairs.size());

    LossBatch lb;
    lb.text.reserve(batch.size());
    lb.image.reserve(batch.size());
    lb.text_cf.reserve(batch.size());
    lb.beta.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const LabeledRow& t = text_set.row(pairs[batch[i]].text_index);
      const LabeledRow& v = image_set.row(pairs[batch[i]].image_index);
      lb.text.push_back(t.values);
      lb.image.push_back(v.values);
      if (!cfg.axes.empty()) {
        auto it = cur.pairing.find(t.label.id);
        if (it == cur.pairing.end())
          throw PairingError("no counterfactual for " + t.label.id);
        lb.text_cf.push_back(text_set.by_id(it->second).values);
      } else {
        lb.text_cf.push_back(t.values);  // degenerate: counterfactual == original
      }
      lb.beta.push_back(bernoulli_draw(mix_seed(cfg.seed, kBetaTag), state.step, i) ? 1 : 0);
    }

    state.params.zero_grads();
    const LossTerms terms =
        evaluate_losses(lb, state.params, queue_text, queue_image, simcfg, weights, true);
    adam_step(state.params, state.adam, cfg.learning_rate);

    push_batch(batch);
    history.push_back({state.step, terms.l_ba, terms.l_cd(), terms.total(weights)});
    state.step += 1;
  }

  state.epoch = cur.epoch;
  state.cursor = cur.pos;
  state.queue_text_ids = queue_text.ids();
  state.queue_image_ids = queue_image.ids();

  TrainResult result;
  result.params = state.params;
  result.history = std::move(history);
  result.state = std::move(state);
  return result;
}

}  // namespace

TrainResult train(const LabeledEmbeddingSet& text_set, const LabeledEmbeddingSet& image_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  TrainState state;
  state.cfg = cfg;
  state.params = BAParams::zero_init(text_set.dim(), cfg.seed);
  state.adam.m.assign(state.params.param_count(), 0.0);
  state.adam.v.assign(state.params.param_count(), 0.0);
  return run_loop(text_set, image_set, std::move(state));
}

TrainResult resume_train(const LabeledEmbeddingSet& text_set,
                         const LabeledEmbeddingSet& image_set, TrainState state) {
  if (state.params.dim != text_set.dim())
    throw DimError("state dim does not match dataset dim");
  return run_loop(text_set, image_set, std::move(state));
}

namespace {

MatrixF64 blob_of(const Vec& v) {
  MatrixF64 m;
  m.rows = 1;
  m.dim = static_cast<std::uint32_t>(v.size());
  m.data = v;
  return m;
}

Vec blob_read(std::istream& is, std::size_t expect, const char* what) {
  MatrixF64 m = read_leb8(is);
  if (m.data.size() != expect)
    throw ConsistencyError(std::string("state blob ") + what + " has wrong size");
  return std::move(m.data);
}

}  // namespace

void save_train_state(const TrainState& state, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open state file for writing: " + path.string());

  json header;
  header["dim"] = state.params.dim;
  header["step"] = state.step;
  header["epoch"] = state.epoch;
  header["cursor"] = state.cursor;
  header["adam_t"] = state.adam.t;
  header["queue_text_ids"] = state.queue_text_ids;
  header["queue_image_ids"] = state.queue_image_ids;
  json jcfg;
  jcfg["batch_size"] = state.cfg.batch_size;
  jcfg["queue_size"] = state.cfg.queue_size;
  jcfg["alpha"] = state.cfg.alpha;
  jcfg["temperature"] = state.cfg.temperature;
  jcfg["learning_rate"] = state.cfg.learning_rate;
  jcfg["steps"] = state.cfg.steps;
  jcfg["seed"] = state.cfg.seed;
  jcfg["axes"] = state.cfg.axes;
  header["config"] = jcfg;
  os << header.dump() << "\n";

  write_leb8(os, blob_of(state.params.w1));
  write_leb8(os, blob_of(state.params.b1));
  write_leb8(os, blob_of(state.params.w2));
  write_leb8(os, blob_of(state.params.b2));
  write_leb8(os, blob_of(state.adam.m));
  write_leb8(os, blob_of(state.adam.v));
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

TrainState load_train_state(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open state file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError("state file missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError("state header is not valid JSON: " + std::string(e.what()));
  }

  TrainState state;
  const std::size_t dim = header.at("dim").get<std::size_t>();
  state.step = header.at("step").get<std::uint64_t>();
  state.epoch = header.at("epoch").get<std::uint64_t>();
  state.cursor = header.at("cursor").get<std::uint64_t>();
  state.adam.t = header.at("adam_t").get<std::uint64_t>();
  state.queue_text_ids = header.at("queue_text_ids").get<std::vector<std::string>>();
  state.queue_image_ids = header.at("queue_image_ids").get<std::vector<std::string>>();
  const json& jcfg = header.at("config");
  state.cfg.batch_size = jcfg.at("batch_size").get<std::size_t>();
  state.cfg.queue_size = jcfg.at("queue_size").get<std::size_t>();
  state.cfg.alpha = jcfg.at("alpha").get<double>();
  state.cfg.temperature = jcfg.at("temperature").get<double>();
  state.cfg.learning_rate = jcfg.at("learning_rate").get<double>();
  state.cfg.steps = jcfg.at("steps").get<std::uint64_t>();
  state.cfg.seed = jcfg.at("seed").get<std::uint64_t>();
  state.cfg.axes = jcfg.at("axes").get<std::vector<std::string>>();

  state.params.dim = dim;
  state.params.w1 = blob_read(is, dim * dim, "W1");
  state.params.b1 = blob_read(is, dim, "b1");
  state.params.w2 = blob_read(is, dim * dim, "W2");
  state.params.b2 = blob_read(is, dim, "b2");
  state.params.zero_grads();
  state.adam.m = blob_read(is, state.params.param_count(), "adam.m");
  state.adam.v = blob_read(is, state.params.param_count(), "adam.v");
  return state;
}

void write_loss_history_csv(const std::vector<LossRecord>& history,
                            const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open loss history for writing: " + path.string());
  os << "step,l_ba,l_cd,l_total\n";
  char buf[128];
  for (const LossRecord& r : history) {
    std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step), r.l_ba, r.l_cd, r.l_total);
    os << buf;
  }
  os.flush();
  if (!os) throw IoError("write failed: " + path.string());
}

LabeledEmbeddingSet apply_debias(const LabeledEmbeddingSet& set, const BAParams& params) {
  if (set.dim() != params.dim)
    throw DimError("set dim " + std::to_string(set.dim()) + " != net dim " +
                   std::to_string(params.dim));
  std::vector<LabeledRow> rows;
  rows.reserve(set.size());
  for (const LabeledRow& r : set.rows()) {
    BiasDecomposition d = decompose(r.values, params);
    rows.push_back({r.label, std::move(d.neutral)});
  }
  return LabeledEmbeddingSet(set.dim(), std::move(rows), set.attribute_vocab());
}

}  // namespace vlbias
