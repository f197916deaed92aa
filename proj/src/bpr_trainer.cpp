#include "mcne/bpr_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "mcne/evaluator.hpp"
#include "mcne/mask_layer.hpp"
#include "mcne/variants.hpp"

namespace mcne {

void TrainConfig::validate() const {
  if (dims.empty()) throw ConfigError("dims must not be empty");
  for (int d : dims) {
    if (d <= 0) throw ConfigError("dims must be positive");
  }
  if (fanouts.size() + 1 != dims.size()) {
    throw ConfigError("fanouts must have one entry per layer (dims has " + std::to_string(dims.size()) +
                      " entries, fanouts " + std::to_string(fanouts.size()) + ")");
  }
  for (int f : fanouts) {
    if (f <= 0) throw ConfigError("fanouts must be positive");
  }
  if (attention_hidden <= 0) throw ConfigError("attention_hidden must be positive");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (negatives <= 0) throw ConfigError("negatives must be positive");
  if (lambda < 0) throw ConfigError("lambda must be non-negative");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
  if (positives_per_user <= 0) throw ConfigError("positives_per_user must be positive");
  if (eval_negatives <= 0) throw ConfigError("eval_negatives must be positive");
  parse_variant(variant);
}

// ---------------------------------------------------------------------------
// InteractionIndex

InteractionIndex::InteractionIndex(std::size_t num_nodes, std::vector<int> num_items)
    : num_nodes_(num_nodes), num_items_(std::move(num_items)) {
  train_.assign(num_items_.size(), std::vector<std::vector<ItemId>>(num_nodes));
  all_.assign(num_items_.size(), std::vector<std::vector<ItemId>>(num_nodes));
  folds_.resize(num_items_.size());
}

InteractionIndex::InteractionIndex(std::size_t num_nodes, const BehaviorRecords& records,
                                   const DatasetSplit& split)
    : InteractionIndex(num_nodes, [&] {
        std::vector<int> m;
        for (const auto& cat : records.categories) m.push_back(static_cast<int>(cat.num_items()));
        return m;
      }()) {
  if (split.categories.size() != records.categories.size()) {
    throw DataError("split has " + std::to_string(split.categories.size()) + " categories, records have " +
                    std::to_string(records.categories.size()));
  }
  for (std::size_t c = 0; c < split.categories.size(); ++c) set_category(static_cast<int>(c), split.categories[c]);
}

void InteractionIndex::set_category(int category, const CategorySplit& split) {
  auto& train = train_[category];
  auto& all = all_[category];
  for (auto& v : train) v.clear();
  for (auto& v : all) v.clear();
  for (Fold f : {Fold::train, Fold::validation, Fold::test}) {
    for (const auto& it : split.fold(f)) {
      if (it.user < 0 || static_cast<std::size_t>(it.user) >= num_nodes_ || it.item < 0 ||
          it.item >= num_items_[category]) {
        throw DataError("interaction (" + std::to_string(it.user) + ", " + std::to_string(it.item) +
                        ") is out of range for category " + std::to_string(category));
      }
      all[it.user].push_back(it.item);
      if (f == Fold::train) train[it.user].push_back(it.item);
    }
  }
  for (auto& v : train) std::sort(v.begin(), v.end());
  for (auto& v : all) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  folds_[category] = split;
}

bool InteractionIndex::interacted(int category, NodeId user, ItemId item) const {
  const auto& v = all_[category][user];
  return std::binary_search(v.begin(), v.end(), item);
}

// ---------------------------------------------------------------------------
// Triplets and loss

std::vector<BprTriplet> sample_triplets(const InteractionIndex& index, int category,
                                        std::span<const NodeId> users, int negatives, Rng& rng,
                                        int positives) {
  std::vector<BprTriplet> out;
  const int m = index.num_items(category);
  std::uniform_int_distribution<ItemId> any_item(0, m - 1);
  for (NodeId u : users) {
    const auto& train = index.train_items(category, u);
    if (train.empty()) continue;
    const auto& seen = index.all_items(category, u);
    if (static_cast<int>(seen.size()) >= m) {
      warn("user " + std::to_string(u) + " interacted with every item of category " +
           std::to_string(category) + "; no negatives to sample");
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
    for (int p = 0; p < positives; ++p) {
      const ItemId pos = train[pick(rng)];
      for (int n = 0; n < negatives; ++n) {
        ItemId neg;
        do {
          neg = any_item(rng);
        } while (std::binary_search(seen.begin(), seen.end(), neg));
        out.push_back({u, pos, neg, category});
      }
    }
  }
  return out;
}

BprLoss bpr_loss(const Vector& user, const Vector& positive, const Vector& negative) {
  const double diff = user.dot(positive) - user.dot(negative);
  BprLoss r;
  // -ln sigmoid(diff) = softplus(-diff)
  r.loss = diff > 0 ? std::log1p(std::exp(-diff)) : -diff + std::log1p(std::exp(diff));
  // s = sigmoid(-diff)
  const double s = diff > 0 ? std::exp(-diff) / (1.0 + std::exp(-diff)) : 1.0 / (1.0 + std::exp(diff));
  r.d_user = -s * (positive - negative);
  r.d_positive = -s * user;
  r.d_negative = s * user;
  return r;
}

ObjectiveValue evaluate_objective(const ModelParams& params, const SampledNeighborhood& hood,
                                  const std::vector<BprTriplet>& triplets,
                                  const std::vector<int>& loss_categories, double lambda,
                                  const TrainableSet& trainable, ParamSet* grads) {
  const auto& cfg = params.config;
  const auto& P = params.tensors;
  const int K = cfg.num_layers();
  const int C = cfg.num_categories();
  if (loss_categories.empty()) throw ConfigError("no loss categories");

  ForwardResult fwd = forward_batch(params, hood);
  const BinaryMask& last = fwd.cache.masks.back();
  const auto& targets = hood.nodes[0];
  std::unordered_map<NodeId, Eigen::Index> row_of;
  for (std::size_t r = 0; r < targets.size(); ++r) row_of.emplace(targets[r], static_cast<Eigen::Index>(r));

  ObjectiveValue value;
  value.category_loss.assign(static_cast<std::size_t>(C), 0.0);
  value.triplets.assign(static_cast<std::size_t>(C), 0);
  for (const auto& t : triplets) ++value.triplets[t.category];

  const bool want_grads = grads != nullptr;
  ParamSet scratch;
  Matrix d_out;
  if (want_grads) {
    scratch = P.zeros_like();
    d_out = Matrix::Zero(fwd.output.rows(), fwd.output.cols());
  }

  const double task_weight = 1.0 / static_cast<double>(loss_categories.size());
  std::vector<char> is_loss(static_cast<std::size_t>(C), 0);
  for (int c : loss_categories) is_loss[c] = 1;

  std::vector<std::unordered_set<ItemId>> touched_items(static_cast<std::size_t>(C));
  for (const auto& t : triplets) {
    if (!is_loss[t.category]) continue;
    const auto n_c = static_cast<double>(value.triplets[t.category]);
    const double w = task_weight / n_c;
    auto row = row_of.find(t.user);
    if (row == row_of.end()) throw ConfigError("triplet user " + std::to_string(t.user) + " is not a batch target");
    const auto& mask_row = last.row(t.category);
    const Vector u = fwd.output.row(row->second).cwiseProduct(mask_row).transpose();
    const auto& items = P.items[t.category];
    const BprLoss l = bpr_loss(u, items.row(t.positive).transpose(), items.row(t.negative).transpose());
    value.category_loss[t.category] += l.loss / n_c;
    value.total += w * l.loss;
    touched_items[t.category].insert(t.positive);
    touched_items[t.category].insert(t.negative);
    if (!want_grads) continue;
    d_out.row(row->second) += w * l.d_user.transpose().cwiseProduct(mask_row);
    scratch.masks[K].row(t.category) += w * l.d_user.transpose().cwiseProduct(fwd.output.row(row->second));
    scratch.items[t.category].row(t.positive) += w * l.d_positive.transpose();
    scratch.items[t.category].row(t.negative) += w * l.d_negative.transpose();
  }

  // L2 on the trainable, batch-touched tensors (masks and biases excluded).
  double reg = 0.0;
  if (lambda > 0) {
    auto add_rows = [&](const Matrix& m, Matrix* g, const std::string& name, const auto& rows) {
      if (!trainable.tensor_trainable(name)) return;
      for (auto r : rows) {
        if (!trainable.row_trainable(name, r)) continue;
        reg += m.row(r).squaredNorm();
        if (g) g->row(r) += 2.0 * lambda * m.row(r);
      }
    };
    std::unordered_set<NodeId> nodes;
    for (const auto& level : hood.nodes) nodes.insert(level.begin(), level.end());
    std::vector<NodeId> node_list(nodes.begin(), nodes.end());
    std::sort(node_list.begin(), node_list.end());
    add_rows(P.base, want_grads ? &scratch.base : nullptr, "base", node_list);
    for (int c = 0; c < C; ++c) {
      if (touched_items[c].empty()) continue;
      std::vector<ItemId> rows(touched_items[c].begin(), touched_items[c].end());
      std::sort(rows.begin(), rows.end());
      add_rows(P.items[c], want_grads ? &scratch.items[c] : nullptr, "items." + std::to_string(c), rows);
    }
    auto add_whole = [&](const auto& m, auto* g, const std::string& name) {
      if (!trainable.tensor_trainable(name)) return;
      reg += m.squaredNorm();
      if (g) *g += 2.0 * lambda * m;
    };
    for (int k = 0; k < K; ++k) {
      const auto s = std::to_string(k);
      add_whole(P.dense_w[k], want_grads ? &scratch.dense_w[k] : nullptr, "dense_w." + s);
      if (cfg.attention == AttentionMode::learned) {
        add_whole(P.att_w[k], want_grads ? &scratch.att_w[k] : nullptr, "att_w." + s);
        add_whole(P.att_h[k], want_grads ? &scratch.att_h[k] : nullptr, "att_h." + s);
      }
    }
  }
  value.regularization = lambda * reg;
  value.total += value.regularization;

  if (want_grads) {
    backward_batch(params, hood, fwd.cache, d_out, scratch);
    accumulate_trainable(*grads, scratch, trainable);
  }
  return value;
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(ModelParams params, const SocialGraph& graph, const InteractionIndex& index,
                 TrainConfig config, TrainableSet trainable, std::vector<int> loss_categories)
    : params_(std::move(params)),
      graph_(&graph),
      index_(&index),
      config_(std::move(config)),
      trainable_(std::move(trainable)),
      loss_categories_(std::move(loss_categories)),
      adam_(params_.tensors, AdamHyper{config_.learning_rate}),
      grads_(params_.tensors.zeros_like()) {
  if (static_cast<int>(index.num_categories()) != params_.config.num_categories()) {
    throw ConfigError("interaction index and model disagree on the number of categories");
  }
  if (static_cast<int>(graph.num_nodes()) != params_.config.num_nodes) {
    throw ConfigError("graph and model disagree on the number of nodes");
  }
}

StepResult Trainer::step(std::span<const NodeId> users, Rng& rng) {
  std::vector<BprTriplet> triplets;
  for (int c : loss_categories_) {
    auto t = sample_triplets(*index_, c, users, config_.negatives, rng, config_.positives_per_user);
    triplets.insert(triplets.end(), t.begin(), t.end());
  }
  StepResult result;
  grads_.set_zero();
  if (triplets.empty()) {
    result.objective.category_loss.assign(static_cast<std::size_t>(params_.config.num_categories()), 0.0);
    return result;
  }

  std::vector<NodeId> targets;
  std::unordered_set<NodeId> seen;
  for (const auto& t : triplets) {
    if (seen.insert(t.user).second) targets.push_back(t.user);
  }
  const int K = params_.config.num_layers();
  std::vector<int> fanouts(config_.fanouts.begin(), config_.fanouts.begin() + K);
  const SampledNeighborhood hood = sample_neighborhood(*graph_, targets, fanouts, rng);

  result.objective = evaluate_objective(params_, hood, triplets, loss_categories_, config_.lambda, trainable_, &grads_);
  if (!std::isfinite(result.objective.total)) {
    throw NumericError("non-finite training loss (" + std::to_string(result.objective.total) + ")");
  }
  adam_.step(params_.tensors, grads_, trainable_);
  return result;
}

// ---------------------------------------------------------------------------
// Epoch loop

std::vector<NodeId> epoch_order(const std::vector<NodeId>& users, std::uint64_t seed, int epoch) {
  std::vector<NodeId> order = users;
  Rng rng(mix_seed({seed, static_cast<std::uint64_t>(epoch), 0xe70cu}));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

InferenceOptions inference_options(const TrainConfig& config, const ModelConfig& model) {
  InferenceOptions o;
  o.full_neighbors = config.full_neighbor_inference;
  o.fanouts.assign(config.fanouts.begin(), config.fanouts.begin() + model.num_layers());
  o.seed = mix_seed({config.seed, 0x1efeu});
  return o;
}

TrainResult run_training(Trainer& trainer) {
  const auto& config = trainer.config();
  const auto& index = trainer.index();
  const auto& loss_categories = trainer.loss_categories();
  const int C = trainer.params().config.num_categories();

  std::vector<NodeId> users;
  for (NodeId u = 0; u < static_cast<NodeId>(trainer.graph().num_nodes()); ++u) {
    for (int c : loss_categories) {
      if (!index.train_items(c, u).empty()) {
        users.push_back(u);
        break;
      }
    }
  }
  if (users.empty()) throw DataError("no user has training interactions");

  bool has_validation = false;
  for (int c : loss_categories) has_validation |= !index.fold(c, Fold::validation).empty();

  TrainResult result;
  result.best = trainer.params();
  double best_recall = -1.0;
  int since_best = 0;
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss.assign(static_cast<std::size_t>(C), 0.0);
    const auto order = epoch_order(users, config.seed, epoch);
    std::size_t batches = 0;
    try {
      for (std::size_t begin = 0, b = 0; begin < order.size(); begin += batch, ++b) {
        const std::size_t end = std::min(order.size(), begin + batch);
        Rng rng(mix_seed({config.seed, static_cast<std::uint64_t>(epoch), b, 0xba7cu}));
        const auto step = trainer.step(std::span<const NodeId>(order.data() + begin, end - begin), rng);
        for (int c : loss_categories) record.train_loss[c] += step.objective.category_loss[c];
        ++batches;
      }
    } catch (const NumericError& e) {
      result.diverged = true;
      result.diagnostics = "epoch " + std::to_string(epoch) + ": " + e.what();
      warn("training diverged, keeping the best checkpoint so far (" + result.diagnostics + ")");
      break;
    }
    for (double& l : record.train_loss) l /= static_cast<double>(std::max<std::size_t>(1, batches));

    if (has_validation) {
      EvalOptions eo;
      eo.seed = mix_seed({config.seed, 0x7a1du});
      eo.ks = {5};
      eo.num_negatives = config.eval_negatives;
      std::vector<int> val_categories;
      for (int c : loss_categories) {
        if (!index.fold(c, Fold::validation).empty()) val_categories.push_back(c);
      }
      const auto previous = set_warning_handler(nullptr);
      const Matrix emb = infer_embeddings(trainer.params(), trainer.graph(),
                                          inference_options(config, trainer.params().config));
      const EvalResult val = evaluate_embeddings(trainer.params(), emb, index, val_categories, Fold::validation, eo);
      set_warning_handler(previous);
      for (const auto& ce : val.categories) {
        record.val_recall += ce.recall[0].mean / static_cast<double>(val.categories.size());
        record.val_ndcg += ce.ndcg[0].mean / static_cast<double>(val.categories.size());
      }
    }
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(record);

    if (!has_validation || record.val_recall > best_recall) {
      best_recall = record.val_recall;
      result.best = trainer.params();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

ModelConfig model_config_for(const TrainConfig& config, const SocialGraph& graph,
                             const BehaviorRecords& records) {
  ModelConfig mc;
  mc.dims = config.dims;
  for (const auto& cat : records.categories) {
    mc.categories.push_back(cat.name);
    mc.num_items.push_back(static_cast<int>(cat.num_items()));
  }
  mc.num_nodes = static_cast<int>(graph.num_nodes());
  mc.attention_hidden = config.attention_hidden;
  mc.init_std = config.init_std;
  mc.mask_init_range = config.mask_init_range;
  return build_variant(mc, parse_variant(config.variant));
}

TrainResult train(const TrainConfig& config, const SocialGraph& graph, const BehaviorRecords& records,
                  const DatasetSplit& split) {
  config.validate();
  const ModelConfig mc = model_config_for(config, graph, records);
  Rng rng(mix_seed({config.seed, 0x1417u}));
  ModelParams params = init_params(mc, rng);
  const InteractionIndex index(graph.num_nodes(), records, split);
  std::vector<int> categories(static_cast<std::size_t>(mc.num_categories()));
  std::iota(categories.begin(), categories.end(), 0);
  Trainer trainer(std::move(params), graph, index, config, default_trainable(mc), categories);
  return run_training(trainer);
}

void write_history(const std::filesystem::path& path, const std::vector<std::string>& categories,
                   const std::vector<int>& loss_categories, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch";
  for (int c : loss_categories) out << ",loss_" << categories[c];
  out << ",val_recall@5,val_ndcg@5,seconds\n";
  char buf[48];
  for (const auto& r : history) {
    out << r.epoch;
    for (int c : loss_categories) {
      std::snprintf(buf, sizeof buf, ",%.6f", r.train_loss[c]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.3f\n", r.val_recall, r.val_ndcg, r.seconds);
    out << buf;
  }
}

}  // namespace mcne
