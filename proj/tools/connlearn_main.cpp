// connlearn command-line interface: one entry point binding graph
// construction, synthetic cohorts, pretraining, probing, transfer, scaling
// and report rendering into reproducible commands. Every command freezes its
// fully resolved configuration into the output directory; failures emit a
// one-line machine-readable error record on stderr.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include "connlearn/dataset_io.hpp"
#include "connlearn/report.hpp"
#include "connlearn/runconfig.hpp"
#include "connlearn/verify.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace connlearn;
namespace fs = std::filesystem;

struct GlobalFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool has_deterministic = false;
  bool deterministic = true;
};

nlohmann::json resolve_document(const GlobalFlags& g) {
  nlohmann::json doc = nlohmann::json::object();
  if (!g.config_path.empty()) doc = config::load_config_file(g.config_path);
  for (const std::string& o : g.overrides) config::apply_override(doc, o);
  return doc;
}

nlohmann::json section(const nlohmann::json& doc, const std::string& name) {
  const auto it = doc.find(name);
  if (it == doc.end()) return nlohmann::json::object();
  if (!it->is_object()) throw InvalidInput("config section '" + name + "' must be an object");
  return *it;
}

void print_warnings(const WarningSink& sink) {
  for (const auto& msg : sink.messages) std::cerr << "warning: " << msg << "\n";
}

int cmd_synth(const GlobalFlags& g, const std::string& output, const std::string& series_dir) {
  const nlohmann::json doc = resolve_document(g);
  synthgen::SynthConfig cfg = config::synth_from_json(section(doc, "synth"));
  if (g.has_seed) cfg.rng_seed = g.seed;
  int edge_budget = -1;
  if (doc.count("graphs") && doc.at("graphs").count("edge_budget"))
    edge_budget = doc.at("graphs").at("edge_budget").get<int>();
  auto selection = connectome::EdgeSelection::raw;
  if (doc.count("graphs") && doc.at("graphs").count("selection"))
    selection = connectome::edge_selection_from_string(doc.at("graphs").at("selection").get<std::string>());

  WarningSink warnings;
  const synthgen::Cohort cohort = synthgen::generate_cohort(cfg);
  const connectome::Dataset ds =
      synthgen::build_dataset_from_cohort(cohort, cfg, fs::path(output).filename().string(), edge_budget,
                                          selection, &warnings);
  connectome::save_dataset(ds.graphs, ds.manifest, output);
  if (!series_dir.empty()) {
    fs::create_directories(series_dir);
    for (const auto& ts : cohort.subjects)
      connectome::write_roi_timeseries(ts, fs::path(series_dir) / (ts.subject_id + ".ts"));
  }
  nlohmann::json resolved;
  resolved["synth"] = config::synth_to_json(cfg);
  config::write_resolved_config(resolved, output);
  print_warnings(warnings);
  std::cout << "wrote " << ds.graphs.size() << " graphs to " << output << "\n";
  return 0;
}

int cmd_build_graphs(const std::string& input, const std::string& output, const std::string& budget_text,
                     const std::string& selection_text, const std::string& labels_path) {
  const auto selection = connectome::edge_selection_from_string(selection_text);
  std::map<std::string, int> labels;
  if (!labels_path.empty()) {
    const nlohmann::json lj = connectome::detail::read_json_file(labels_path);
    labels = lj.get<std::map<std::string, int>>();
  }

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input))
    if (entry.is_regular_file() && entry.path().extension() == ".ts") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidInput("build-graphs: no *.ts files under '" + input + "'");

  WarningSink warnings;
  std::vector<connectome::BrainGraph> graphs;
  connectome::DatasetManifest manifest;
  manifest.name = fs::path(output).filename().string();
  manifest.provenance = "build-graphs from " + input;
  for (const fs::path& f : files) {
    const auto ts = connectome::read_roi_timeseries(f, f.stem().string());
    const auto conn = connectome::pearson_connectivity(ts, &warnings);
    const int budget = (budget_text == "auto")
                           ? connectome::default_edge_budget(static_cast<int>(conn.n_regions()))
                           : std::stoi(budget_text);
    connectome::BrainGraph graph = connectome::build_graph(conn, budget, selection, &warnings);
    const auto it = labels.find(graph.subject_id);
    if (it != labels.end()) {
      graph.label = it->second;
      manifest.label_map[graph.subject_id] = it->second;
    }
    manifest.subject_ids.push_back(graph.subject_id);
    graphs.push_back(std::move(graph));
  }
  connectome::save_dataset(graphs, manifest, output);
  nlohmann::json resolved;
  resolved["graphs"] = {{"edge_budget", budget_text}, {"selection", selection_text}, {"input", input}};
  config::write_resolved_config(resolved, output);
  print_warnings(warnings);
  std::cout << "wrote " << graphs.size() << " graphs to " << output << "\n";
  return 0;
}

int cmd_pretrain(const GlobalFlags& g, const std::string& data, const std::string& output,
                 const std::string& resume_path) {
  const nlohmann::json doc = resolve_document(g);
  trainer::TrainConfig cfg = config::train_from_json(section(doc, "train"));
  if (g.has_seed) cfg.seed = g.seed;
  if (g.has_deterministic) cfg.deterministic = g.deterministic;

  const connectome::Dataset ds = connectome::load_dataset(data);
  trainer::Checkpoint resume;
  trainer::PretrainOptions opts;
  opts.run_dir = output;
  WarningSink warnings;
  opts.warnings = &warnings;
  if (!resume_path.empty()) {
    resume = trainer::load_checkpoint(resume_path);
    opts.resume = &resume;
  }
  nlohmann::json resolved;
  resolved["train"] = config::train_to_json(cfg);
  resolved["inputs"] = {{"data", data}, {"resume", resume_path}};
  config::write_resolved_config(resolved, output);

  const trainer::Checkpoint ckpt = trainer::pretrain(ds, cfg, opts);
  print_warnings(warnings);
  std::cout << "pretrained " << cfg.objective << " for " << ckpt.epoch << " epochs (" << ckpt.metrics.steps
            << " steps); final loss " << ckpt.metrics.final_loss << "\n"
            << "checkpoint: " << (fs::path(output) / "ckpt-final.json").string() << "\n";
  return 0;
}

int cmd_probe(const GlobalFlags& g, const std::string& ckpt_path, const std::string& data,
              const std::string& output, const std::string& method_label, bool transfer) {
  const nlohmann::json doc = resolve_document(g);
  evalharness::ProbeConfig cfg = config::probe_from_json(section(doc, "probe"));
  if (g.has_seed) cfg.seed = g.seed;

  const trainer::Checkpoint ckpt = trainer::load_checkpoint(ckpt_path);
  const connectome::Dataset ds = connectome::load_dataset(data);
  evalharness::ProbeReport report = transfer ? evalharness::transfer_eval(ckpt, ds, cfg)
                                             : evalharness::probe(ckpt, ds, cfg);
  report.method = method_label.empty() ? ckpt.objective : method_label;

  nlohmann::json resolved;
  resolved["probe"] = config::probe_to_json(cfg);
  resolved["inputs"] = {{"checkpoint", ckpt_path}, {"data", data}};
  config::write_resolved_config(resolved, output);
  evalharness::render_report({report}, output);
  std::cout << report.protocol << " " << report.task << " [" << report.method << ", " << report.mode
            << "]: " << evalharness::detail::fmt(report.accuracy_mean, "%.1f") << " +/- "
            << evalharness::detail::fmt(report.accuracy_std, "%.1f") << " (majority "
            << evalharness::detail::fmt(report.majority_class_accuracy, "%.1f") << ")\n";
  return 0;
}

int cmd_scaling(const GlobalFlags& g, const std::vector<std::string>& pool_dirs,
                const std::vector<std::string>& task_dirs, const std::string& output) {
  const nlohmann::json doc = resolve_document(g);
  trainer::TrainConfig tcfg = config::train_from_json(section(doc, "train"));
  evalharness::ProbeConfig pcfg = config::probe_from_json(section(doc, "probe"));
  if (g.has_seed) {
    tcfg.seed = g.seed;
    pcfg.seed = g.seed;
  }
  std::vector<connectome::Dataset> pools, tasks;
  for (const auto& d : pool_dirs) pools.push_back(connectome::load_dataset(d));
  for (const auto& d : task_dirs) tasks.push_back(connectome::load_dataset(d));

  nlohmann::json resolved;
  resolved["train"] = config::train_to_json(tcfg);
  resolved["probe"] = config::probe_to_json(pcfg);
  resolved["inputs"] = {{"pools", pool_dirs}, {"tasks", task_dirs}};
  config::write_resolved_config(resolved, output);

  WarningSink warnings;
  const evalharness::ScalingReport report = evalharness::scaling_run(pools, tasks, tcfg, pcfg, &warnings);
  evalharness::render_scaling(report, output);
  print_warnings(warnings);
  for (const auto& point : report.points)
    std::cout << point.pool_name << " (" << point.pool_size << " subjects): " << point.reports.size()
              << " task reports\n";
  std::cout << "scaling curve: " << (fs::path(output) / "scaling.svg").string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& output) {
  std::vector<evalharness::ProbeReport> reports;
  for (const auto& path : inputs) {
    const nlohmann::json arr = connectome::detail::read_json_file(path);
    if (!arr.is_array()) throw InvalidInput("report input '" + path + "' must hold a JSON array of reports");
    for (const auto& j : arr) reports.push_back(evalharness::probe_report_from_json(j));
  }
  evalharness::render_report(reports, output);
  std::cout << "rendered " << reports.size() << " reports into " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised representation learning for functional connectivity graphs"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON run configuration (sections: synth, train, probe, graphs)");
  app.add_option("--set", g.overrides, "dotted-path config override, e.g. --set train.epochs=50");
  auto* seed_opt = app.add_option("--seed", g.seed, "override the RNG seed of the invoked pipeline");
  auto* det_opt = app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
                               "force deterministic single-worker execution");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled cohort as a graph dataset");
  std::string synth_out, synth_series;
  synth->add_option("--output", synth_out, "dataset output directory")->required();
  synth->add_option("--emit-timeseries", synth_series, "also write per-subject ROI time-series files here");

  // build-graphs
  auto* bg = app.add_subcommand("build-graphs", "ROI time series -> connectivity -> sparsified graphs");
  std::string bg_in, bg_out, bg_budget = "auto", bg_sel = "raw", bg_labels;
  bg->add_option("--input", bg_in, "directory of <subject>.ts files")->required();
  bg->add_option("--output", bg_out, "dataset output directory")->required();
  bg->add_option("--edge-budget", bg_budget, "edge count or 'auto' for floor(|V|^2/400)");
  bg->add_option("--selection", bg_sel, "raw|absolute top-k selection");
  bg->add_option("--labels", bg_labels, "optional JSON file mapping subject id -> class label");

  // pretrain
  auto* pt = app.add_subcommand("pretrain", "self-supervised pretraining on a graph dataset");
  std::string pt_data, pt_out, pt_resume;
  pt->add_option("--data", pt_data, "dataset directory")->required();
  pt->add_option("--output", pt_out, "run directory for checkpoints and metrics")->required();
  pt->add_option("--resume", pt_resume, "checkpoint to resume from");

  // probe / transfer
  auto* pr = app.add_subcommand("probe", "nested-CV probe of a checkpoint on a labeled dataset");
  auto* tr = app.add_subcommand("transfer", "probe on a dataset outside the pretraining pool");
  std::string pr_ckpt, pr_data, pr_out, pr_label;
  for (auto* cmd : {pr, tr}) {
    cmd->add_option("--checkpoint", pr_ckpt, "encoder checkpoint")->required();
    cmd->add_option("--data", pr_data, "labeled dataset directory")->required();
    cmd->add_option("--output", pr_out, "report output directory")->required();
    cmd->add_option("--method-label", pr_label, "method name used in the report tables");
  }

  // scaling
  auto* sc = app.add_subcommand("scaling", "pretrain on growing pool unions and probe every task");
  std::vector<std::string> sc_pools, sc_tasks;
  std::string sc_out;
  sc->add_option("--pools", sc_pools, "ordered pretraining pool directories")->required();
  sc->add_option("--tasks", sc_tasks, "downstream labeled dataset directories")->required();
  sc->add_option("--output", sc_out, "output directory for the curve and figure")->required();

  // report
  auto* rp = app.add_subcommand("report", "re-render tables and figures from stored report JSON");
  std::vector<std::string> rp_inputs;
  std::string rp_out;
  rp->add_option("--inputs", rp_inputs, "report.json files")->required();
  rp->add_option("--output", rp_out, "output directory")->required();

  // verify
  auto* vf = app.add_subcommand("verify", "fast invariant suite (losses, gradients, top-k oracle)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    std::cerr << R"({"error": "usage: )" << e.get_name() << R"("})" << "\n";
    return 2;
  }
  g.has_seed = seed_opt->count() > 0;
  g.has_deterministic = det_opt->count() > 0;

  try {
    if (synth->parsed()) return cmd_synth(g, synth_out, synth_series);
    if (bg->parsed()) return cmd_build_graphs(bg_in, bg_out, bg_budget, bg_sel, bg_labels);
    if (pt->parsed()) return cmd_pretrain(g, pt_data, pt_out, pt_resume);
    if (pr->parsed()) return cmd_probe(g, pr_ckpt, pr_data, pr_out, pr_label, false);
    if (tr->parsed()) return cmd_probe(g, pr_ckpt, pr_data, pr_out, pr_label, true);
    if (sc->parsed()) return cmd_scaling(g, sc_pools, sc_tasks, sc_out);
    if (rp->parsed()) return cmd_report(rp_inputs, rp_out);
    if (vf->parsed()) {
      const std::uint64_t seed = g.has_seed ? g.seed : 0;
      return connlearn::verify::run_verify(seed) ? 0 : 1;
    }
  } catch (const InvalidInput& e) {
    std::cerr << R"({"error": )" << nlohmann::json(std::string(e.what())).dump() << "}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << R"({"error": )" << nlohmann::json(std::string(e.what())).dump() << "}\n";
    return 1;
  }
  std::cerr << R"({"error": "no command"})" << "\n";
  return 2;
}
