#include "gelfab/commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "gelfab/errors.hpp"

namespace gelfab {

namespace {

std::vector<int> eval_fabrics(const RunConfig& cfg, const Dataset& ds) {
  const auto& split = cfg.get("eval.split");
  if (split == "train") return ds.train_ids();
  if (split == "all") return ds.all_ids();
  return ds.test_ids;
}

void check_compatible(const Checkpoint& ck, const Dataset& ds) {
  if (ck.model.input_dim() != ds.feature_dim) {
    throw std::invalid_argument("checkpoint expects feature dim " + std::to_string(ck.model.input_dim()) +
                                " (embedding dim " + std::to_string(ck.model.embedding_dim()) +
                                "), dataset has feature dim " + std::to_string(ds.feature_dim));
  }
}

std::vector<std::string> with_header(const RunConfig& cfg, std::vector<std::string> extra) {
  std::vector<std::string> lines{"resolved config:"};
  for (auto& l : cfg.echo()) lines.push_back("  " + l);
  for (auto& l : extra) lines.push_back(std::move(l));
  return lines;
}

}  // namespace

void cluster_and_split(Dataset& ds, std::size_t k, int n_test, std::uint64_t seed) {
  ds.cluster_count = static_cast<std::uint32_t>(k);
  if (k > ds.fabrics.size()) {
    throw ConfigError("cluster.k (" + std::to_string(k) + ") must not exceed the number of fabrics (" +
                      std::to_string(ds.fabrics.size()) + ")");
  }
  bool varied = ds.fabrics.size() >= 2;
  if (varied) {
    const auto norm = normalize_attributes(ds.fabrics);
    varied = !(norm.zero_variance[0] && norm.zero_variance[1] && norm.zero_variance[2] &&
               norm.zero_variance[3]);
    if (varied) {
      const auto km = kmeans_cluster(norm.rows, static_cast<int>(k), derive_seed(seed, "kmeans"));
      for (std::size_t i = 0; i < ds.fabrics.size(); ++i) ds.fabrics[i].cluster_id = km.assignments[i];
    }
  }
  if (!varied) {
    for (auto& f : ds.fabrics) f.cluster_id = 0;
  }
  ds.test_ids = split_dataset(ds.fabrics, n_test, derive_seed(seed, "split")).test_ids;
}

GenSummary cmd_gen(const RunConfig& cfg) {
  const auto opts = cfg.generate_options();
  const Dataset ds = generate_dataset(opts);
  save_dataset(ds, cfg.get("paths.dataset"));
  GenSummary s;
  s.fabrics = ds.fabrics.size();
  s.observations = ds.observations.size();
  s.test = ds.test_ids.size();
  s.train = s.fabrics - s.test;
  return s;
}

IngestSummary cmd_ingest(const RunConfig& cfg, const std::string& root) {
  auto rep = ingest_directory(root, cfg.ingest_options());
  Dataset& ds = rep.dataset;
  const int n_test = std::min<int>(cfg.n_test(), static_cast<int>(ds.fabrics.size()) - 1);
  cluster_and_split(ds, std::min(cfg.cluster_k(), ds.fabrics.size()), std::max(n_test, 0),
                    cfg.ingest_options().backbone_seed);
  save_dataset(ds, cfg.get("paths.dataset"));
  return {ds.fabrics.size(), ds.observations.size(), rep.errors};
}

TrainSummary cmd_train(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg.get("paths.dataset"));
  const auto tc = cfg.train_config();
  auto model = make_model(cfg.model_options(ds.feature_dim), derive_seed(tc.master_seed, "init"));
  model.backbone_seed = ds.world_seed;
  auto result = train(std::move(model), ds, tc);
  save_checkpoint(result.model, tc, cfg.get("paths.checkpoint"));
  write_text(cfg.get("paths.loss_csv"), loss_history_csv(result.loss_history, with_header(cfg, {})));
  TrainSummary s;
  s.iterations = result.loss_history.size();
  s.final_loss = result.loss_history.empty() ? 0.0 : result.loss_history.back();
  return s;
}

std::vector<PrecisionCell> cmd_eval(const RunConfig& cfg, std::uint32_t workers) {
  const Dataset ds = load_dataset(cfg.get("paths.dataset"));
  const Checkpoint ck = load_checkpoint(cfg.get("paths.checkpoint"));
  check_compatible(ck, ds);
  auto ec = cfg.eval_config();
  ec.workers = workers;
  const auto cells = precision_grid(ck.model, ds, eval_fabrics(cfg, ds), ec);
  const auto lines = with_header(
      cfg, {"architecture = " + std::string(architecture_name(ck.model.arch)),
            "label A2B: queries of modality B ranked against candidates of modality A; Gel = touch"});
  write_text(cfg.get("paths.report"), precision_csv(cells, ec.top_ks, lines));
  return cells;
}

ConfusionMatrix cmd_confuse(const RunConfig& cfg, std::uint32_t workers) {
  const Dataset ds = load_dataset(cfg.get("paths.dataset"));
  const Checkpoint ck = load_checkpoint(cfg.get("paths.checkpoint"));
  check_compatible(ck, ds);
  auto ec = cfg.eval_config();
  ec.workers = workers;
  const Modality q = parse_modality(cfg.get("eval.query_modality"));
  const Modality c = parse_modality(cfg.get("eval.candidate_modality"));
  const auto cm = confusion_matrix(ck.model, ds, eval_fabrics(cfg, ds), q, c, ec);
  const auto lines = with_header(cfg, {"query modality = " + std::string(modality_name(q)),
                                       "candidate modality = " + std::string(modality_name(c))});
  write_text(cfg.get("paths.confusion"), confusion_csv(cm, lines));
  const std::size_t k = ds.cluster_count ? ds.cluster_count : cfg.cluster_k();
  write_text(cfg.get("paths.cluster_confusion"), matrix_csv(aggregate_by_cluster(cm, ds, k), lines));
  write_pnm(heatmap(cm.values), cfg.get("paths.heatmap"));
  return cm;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"gelfab: cross-modal visual/tactile embedding toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint32_t workers = 1;
  std::string ingest_root;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("-s,--set", overrides, "override a config key (key=value)");
  };
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* ingest = app.add_subcommand("ingest", "featurize a directory of PNM images");
  ingest->add_option("root", ingest_root, "<root>/<fabric_id>/<modality>/<instance>.pnm")->required();
  auto* trn = app.add_subcommand("train", "train a model on the training split");
  auto* ev = app.add_subcommand("eval", "pick-1-from-N precision grid");
  auto* conf = app.add_subcommand("confuse", "confusion matrix and heatmap");
  for (auto* s : {gen, ingest, trn, ev, conf}) add_common(s);
  for (auto* s : {ev, conf}) s->add_option("--workers", workers, "parallel evaluation workers")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    for (const auto& o : overrides) cfg.set_assignment(o);
    cfg.validate();

    if (gen->parsed()) {
      const auto s = cmd_gen(cfg);
      std::printf("generated %zu fabrics, %zu observations (%zu train / %zu test) -> %s\n", s.fabrics,
                  s.observations, s.train, s.test, cfg.get("paths.dataset").c_str());
    } else if (ingest->parsed()) {
      const auto s = cmd_ingest(cfg, ingest_root);
      for (const auto& e : s.errors) std::fprintf(stderr, "skipped %s\n", e.c_str());
      std::printf("ingested %zu fabrics, %zu observations -> %s\n", s.fabrics, s.observations,
                  cfg.get("paths.dataset").c_str());
    } else if (trn->parsed()) {
      const auto s = cmd_train(cfg);
      std::printf("trained %zu iterations, final mean batch loss %.6f -> %s\n", s.iterations,
                  s.final_loss, cfg.get("paths.checkpoint").c_str());
    } else if (ev->parsed()) {
      for (const auto& c : cmd_eval(cfg, workers)) {
        std::printf("%-12s %-10s <- %-10s", c.label.c_str(), std::string(modality_name(c.query)).c_str(),
                    std::string(modality_name(c.candidate)).c_str());
        for (std::size_t i = 0; i < c.ks.size(); ++i) std::printf("  top%u %.4f", c.ks[i], c.precision[i]);
        std::printf("\n");
      }
    } else if (conf->parsed()) {
      const auto cm = cmd_confuse(cfg, workers);
      std::printf("confusion matrix %zux%zu -> %s\n", cm.fabric_ids.size(), cm.fabric_ids.size(),
                  cfg.get("paths.confusion").c_str());
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "format error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIncompatible;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
}

}  // namespace gelfab
