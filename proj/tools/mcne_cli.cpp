// mcne: command-line front end. Each subcommand is a thin wrapper over the
// library and writes a manifest.txt next to its outputs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mcne/config.hpp"
#include "mcne/evaluator.hpp"
#include "mcne/export.hpp"
#include "mcne/gradcheck.hpp"
#include "mcne/synth.hpp"
#include "mcne/variants.hpp"

namespace fs = std::filesystem;
using namespace mcne;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> argv;
};

TrainConfig resolve_config(const Globals& g) {
  TrainConfig c = g.config.empty() ? TrainConfig{} : load_train_config(g.config);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

void manifest(const Globals& g, const std::string& command, const TrainConfig& config,
              std::vector<fs::path> inputs) {
  RunManifest m;
  m.command = command;
  m.arguments = g.argv;
  m.seed = config.seed;
  m.config_hash = config_hash(config);
  m.config_text = format_train_config(config);
  m.inputs = std::move(inputs);
  write_manifest(g.out, m);
}

InferenceOptions inference_for(const TrainConfig& config, const ModelConfig& model) {
  if (static_cast<int>(config.fanouts.size()) < model.num_layers()) {
    throw ConfigError("config has " + std::to_string(config.fanouts.size()) + " fan-outs, checkpoint has " +
                      std::to_string(model.num_layers()) + " layers");
  }
  return inference_options(config, model);
}

DatasetSplit split_or_load(const std::string& split_path, const SocialGraph& graph, const BehaviorRecords& records,
                           std::uint64_t seed) {
  if (!split_path.empty()) return read_split_manifest(split_path, graph, records);
  return split_dataset(records, SplitRatios{}, seed);
}

void print_eval(const EvalResult& r) {
  for (const auto& ce : r.categories) {
    for (std::size_t k = 0; k < ce.ks.size(); ++k) {
      std::printf("%-16s recall@%-3d %.4f +- %.4f   ndcg@%-3d %.4f +- %.4f\n", ce.name.c_str(), ce.ks[k],
                  ce.recall[k].mean, ce.recall[k].stddev, ce.ks[k], ce.ndcg[k].mean, ce.ndcg[k].stddev);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  Globals g;
  for (int i = 1; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"Multiple conditional network embeddings"};
  app.require_subcommand(1);
  app.add_option("--config", g.config, "Training config file (key = value)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load raw edge/behavior files, filter, write a dataset directory");
  std::string edges_path;
  std::vector<std::string> behavior_specs;
  std::size_t min_links = 0, min_records = 0;
  ingest->add_option("--edges", edges_path, "Edge list file")->required();
  ingest->add_option("--behavior", behavior_specs, "name=path, repeatable")->required();
  ingest->add_option("--min-links", min_links, "Drop users with fewer neighbors");
  ingest->add_option("--min-records", min_records, "Drop users with fewer interactions (all categories)");

  // split
  auto* split_cmd = app.add_subcommand("split", "Write a 70/10/20 split manifest");
  std::string data_dir;
  split_cmd->add_option("--data", data_dir, "Dataset directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.txt and history.csv");
  std::string split_path;
  train_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  train_cmd->add_option("--split", split_path, "Split manifest (default: split with the seed)");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Ranked evaluation with sampled negatives");
  std::string checkpoint;
  int runs = 1;
  std::string fold_text = "test";
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--split", split_path, "Split manifest");
  eval_cmd->add_option("--runs", runs, "Negative-sampling repetitions");
  eval_cmd->add_option("--fold", fold_text, "train, validation or test");

  // exports
  auto* emb_cmd = app.add_subcommand("export-embeddings", "Per-category conditional embeddings as TSV");
  emb_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  emb_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  auto* mask_cmd = app.add_subcommand("export-masks", "Binarized masks per layer as CSV");
  mask_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();

  // transfer
  auto* transfer_cmd = app.add_subcommand("transfer", "Add a category by training only its mask rows and items");
  std::string category;
  transfer_cmd->add_option("--checkpoint", checkpoint, "Base checkpoint")->required();
  transfer_cmd->add_option("--data", data_dir, "Dataset directory holding the new category")->required();
  transfer_cmd->add_option("--category", category, "Name of the new category")->required();

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  double tolerance = 1e-4;
  grad_cmd->add_option("--tolerance", tolerance, "Maximum relative error");

  // synth-gen
  auto* synth_cmd = app.add_subcommand("synth-gen", "Planted-community synthetic dataset");
  SynthConfig sc;
  synth_cmd->add_option("--nodes", sc.num_nodes);
  synth_cmd->add_option("--categories", sc.num_categories);
  synth_cmd->add_option("--communities", sc.communities);
  synth_cmd->add_option("--items-per-community", sc.items_per_community);
  synth_cmd->add_option("--p-in", sc.p_in);
  synth_cmd->add_option("--p-out", sc.p_out);
  synth_cmd->add_option("--noise", sc.noise);
  synth_cmd->add_option("--interactions", sc.interactions_per_user);
  synth_cmd->add_option("--popularity-exponent", sc.popularity_exponent);
  synth_cmd->add_option("--correlate-last", sc.correlate_last);

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n' << app.help();
    return 2;
  }

  try {
    if (*ingest) {
      const TrainConfig cfg = resolve_config(g);
      const SocialGraph graph = load_edge_list(edges_path);
      std::vector<CategorySource> sources;
      std::vector<fs::path> inputs{edges_path};
      for (const auto& spec : behavior_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--behavior expects name=path, got '" + spec + "'");
        sources.push_back({spec.substr(0, eq), spec.substr(eq + 1)});
        inputs.emplace_back(spec.substr(eq + 1));
      }
      BehaviorRecords records = load_behavior_records(graph, sources);
      auto [fg, fr] = filter_min_activity(graph, records, min_links, min_records);
      save_dataset(g.out, fg, fr);
      std::printf("%zu nodes, %zu edges, %zu categories\n", fg.num_nodes(), fg.num_edges(), fr.num_categories());
      manifest(g, "ingest", cfg, inputs);
    } else if (*split_cmd) {
      const TrainConfig cfg = resolve_config(g);
      auto [graph, records] = load_dataset(data_dir);
      const DatasetSplit s = split_dataset(records, SplitRatios{}, cfg.seed);
      fs::create_directories(g.out);
      write_split_manifest(fs::path(g.out) / "split.csv", graph, records, s);
      manifest(g, "split", cfg, {data_dir});
    } else if (*train_cmd) {
      const TrainConfig cfg = resolve_config(g);
      auto [graph, records] = load_dataset(data_dir);
      const DatasetSplit s = split_or_load(split_path, graph, records, cfg.seed);
      fs::create_directories(g.out);
      const TrainResult r = train(cfg, graph, records, s);
      save_checkpoint(fs::path(g.out) / "checkpoint.txt", r.best);
      write_history(fs::path(g.out) / "history.csv", r.best.config.categories,
                    [&] {
                      std::vector<int> all(records.num_categories());
                      for (std::size_t c = 0; c < all.size(); ++c) all[c] = static_cast<int>(c);
                      return all;
                    }(),
                    r.history);
      write_split_manifest(fs::path(g.out) / "split.csv", graph, records, s);
      std::ofstream(fs::path(g.out) / "config.txt") << format_train_config(cfg);
      std::printf("best epoch %d of %zu, validation recall@5 %.4f%s\n", r.best_epoch, r.history.size(),
                  r.best_epoch > 0 ? r.history[r.best_epoch - 1].val_recall : 0.0,
                  r.diverged ? " (diverged)" : "");
      std::vector<fs::path> inputs{data_dir};
      if (!split_path.empty()) inputs.emplace_back(split_path);
      if (!g.config.empty()) inputs.emplace_back(g.config);
      manifest(g, "train", cfg, inputs);
      if (r.diverged) throw NumericError(r.diagnostics);
    } else if (*eval_cmd) {
      const TrainConfig cfg = resolve_config(g);
      const ModelParams params = load_checkpoint(checkpoint);
      auto [graph, records] = load_dataset(data_dir);
      const DatasetSplit s = split_or_load(split_path, graph, records, cfg.seed);
      const InteractionIndex index(graph.num_nodes(), records, s);
      EvalOptions eo;
      eo.runs = runs;
      eo.seed = cfg.seed;
      eo.num_negatives = cfg.eval_negatives;
      std::vector<int> cats(records.num_categories());
      for (std::size_t c = 0; c < cats.size(); ++c) cats[c] = static_cast<int>(c);
      const EvalResult r =
          evaluate(params, graph, index, cats, parse_fold(fold_text), eo, inference_for(cfg, params.config));
      fs::create_directories(g.out);
      write_results(fs::path(g.out) / "results.csv", r);
      print_eval(r);
      std::vector<fs::path> inputs{checkpoint, data_dir};
      if (!split_path.empty()) inputs.emplace_back(split_path);
      manifest(g, "evaluate", cfg, inputs);
    } else if (*emb_cmd) {
      const TrainConfig cfg = resolve_config(g);
      const ModelParams params = load_checkpoint(checkpoint);
      auto [graph, records] = load_dataset(data_dir);
      for (const auto& p : export_embeddings(g.out, params, graph, inference_for(cfg, params.config))) {
        std::printf("%s\n", p.string().c_str());
      }
      manifest(g, "export-embeddings", cfg, {checkpoint, data_dir});
    } else if (*mask_cmd) {
      const TrainConfig cfg = resolve_config(g);
      const ModelParams params = load_checkpoint(checkpoint);
      for (const auto& p : export_masks(g.out, params)) std::printf("%s\n", p.string().c_str());
      manifest(g, "export-masks", cfg, {checkpoint});
    } else if (*transfer_cmd) {
      const TrainConfig cfg = resolve_config(g);
      const ModelParams base = load_checkpoint(checkpoint);
      auto [graph, records] = load_dataset(data_dir);
      const int c = records.category_index(category);
      if (c < 0) throw DataError("category '" + category + "' not found in " + data_dir);
      const TransferOutcome t =
          transfer_new_category(base, graph, records.categories[c], cfg, git_blob_sha1(checkpoint));
      fs::create_directories(g.out);
      save_transfer_delta(fs::path(g.out) / "delta.txt", t.delta);
      save_checkpoint(fs::path(g.out) / "checkpoint.txt", t.params);
      if (!t.test.categories.empty()) {
        write_results(fs::path(g.out) / "results.csv", t.test);
        print_eval(t.test);
      }
      std::printf("trainable parameters %zu, frozen tensors %s\n", t.trainable_count,
                  t.frozen_before == t.frozen_after ? "unchanged" : "CHANGED");
      manifest(g, "transfer", cfg, {checkpoint, data_dir});
      if (t.frozen_before != t.frozen_after) throw NumericError("frozen tensors changed during transfer");
    } else if (*grad_cmd) {
      bool ok = true;
      std::printf("%-18s %-6s %12s  %s\n", "op", "result", "max_rel_err", "worst coordinate");
      const std::uint64_t seed = g.seed.value_or(1);
      for (const auto& op : gradcheck_ops()) {
        const GradCheckReport r = grad_check(op, seed, 1e-5, tolerance);
        ok = ok && r.passed;
        std::printf("%-18s %-6s %12.3e  %s (analytic %.6g, numeric %.6g)\n", op.c_str(), r.passed ? "PASS" : "FAIL",
                    r.max_rel_error, r.worst_coordinate.c_str(), r.worst_analytic, r.worst_numeric);
      }
      return ok ? 0 : 1;
    } else if (*synth_cmd) {
      const TrainConfig cfg = resolve_config(g);
      sc.seed = cfg.seed;
      const SynthData data = synth_gen(sc);
      save_dataset(g.out, data.graph, data.records);
      write_labels(fs::path(g.out) / "labels.csv", data);
      std::printf("%zu nodes, %zu edges, %zu categories\n", data.graph.num_nodes(), data.graph.num_edges(),
                  data.records.num_categories());
      manifest(g, "synth-gen", cfg, {});
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s: %s\n", e.kind().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
  return 0;
}
