#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <set>
#include <sstream>
#include <thread>

#include "stepsim/corpus.hpp"
#include "stepsim/csv.hpp"
#include "stepsim/embeddings.hpp"
#include "stepsim/error.hpp"
#include "stepsim/fusion.hpp"
#include "stepsim/keyvalue.hpp"
#include "stepsim/methods.hpp"
#include "stepsim/metrics.hpp"
#include "stepsim/stepd/http.hpp"
#include "stepsim/stepd/service.hpp"

namespace fs = std::filesystem;
using namespace stepsim;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : Error {
  using Error::Error;
};

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

embeddings::TableFormat table_format_for(const std::string& path, const std::string& flag) {
  if (!flag.empty()) return embeddings::parse_table_format(flag);
  return fs::path(path).extension() == ".csv" ? embeddings::TableFormat::csv : embeddings::TableFormat::text_vec;
}

void write_output(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    corpus::write_text_file(out, text);
  }
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::vector<std::string> ids;
  std::istringstream in(corpus::read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    auto t = std::string(csv::trim(line));
    if (!t.empty() && t.front() != '#') ids.push_back(t);
  }
  return ids;
}

corpus::JudgmentSet load_judgments(const std::string& dataset, const std::string& file) {
  if (!file.empty()) return corpus::parse_judgments(corpus::read_text_file(file), file);
  if (dataset.empty()) throw UsageError("ground truth needs --dataset or --judgments");
  const auto path = (fs::path(dataset) / "judgments.csv").string();
  return corpus::parse_judgments(corpus::read_text_file(path), path);
}

// ---------------------------------------------------------------------------

struct CommonOptions {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--out", o.out, "Output path ('-' for stdout)");
  app->add_option("--seed", o.seed, "Seed for every stochastic step");
  app->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

struct SimmatOptions {
  std::string method;
  std::string embeddings;
  std::string table_format;
  std::string frequencies;
  std::string selector = "last-iteration";
  std::string source = "tags";
  std::string stopwords;
  std::string lemma_rules;
  std::size_t min_doc_presence = 3;
  std::vector<std::string> dnn;
  std::string llm;
  double alpha = 0.0;
  std::string format = "condensed-csv";
};

int cmd_simmat(const CommonOptions& c, const SimmatOptions& o) {
  if (!methods::is_known(o.method)) {
    std::string list;
    for (const auto& n : methods::names()) list += " " + n;
    throw UsageError("unknown method \"" + o.method + "\"; expected one of:" + list);
  }
  if (c.dataset.empty()) throw UsageError("--dataset is required");
  const auto format = corpus::parse_matrix_format(o.format);
  const auto selector = textsim::parse_select_mode(o.selector);
  const auto source = methods::parse_text_source(o.source);

  const auto dataset = corpus::load_dataset_dir(c.dataset);
  if (o.method == "tags-to-caption" && o.embeddings.empty()) {
    std::ostringstream out;
    corpus::write_captions(out, methods::tag_captions(dataset, selector, c.seed));
    write_output(c.out, out.str());
    return 0;
  }

  methods::Inputs in;
  in.dataset = &dataset;
  in.selector = selector;
  in.source = source;
  in.seed = c.seed;
  in.threads = c.threads;
  in.alpha = o.alpha;

  const auto kind = methods::needs_word_table(o.method) ? embeddings::TableKind::word
                    : o.method == "captions-mean"       ? embeddings::TableKind::caption
                                                        : embeddings::TableKind::stimulus;
  std::optional<embeddings::EmbeddingTable> table;
  if (!o.embeddings.empty()) {
    table.emplace(embeddings::load_table(o.embeddings, table_format_for(o.embeddings, o.table_format), kind));
    in.table = &*table;
  }
  embeddings::FrequencyList freq;
  if (!o.frequencies.empty()) {
    freq = embeddings::load_frequencies(o.frequencies);
    in.frequencies = &freq;
  }
  if (!o.stopwords.empty()) in.preprocess.stopwords = wfa::load_stopwords(o.stopwords);
  if (!o.lemma_rules.empty()) in.preprocess.lemma_rules = wfa::load_lemma_rules(o.lemma_rules);
  in.preprocess.min_doc_presence = o.min_doc_presence;

  std::vector<embeddings::EmbeddingTable> dnn;
  dnn.reserve(o.dnn.size());
  for (const auto& p : o.dnn)
    dnn.push_back(embeddings::load_table(p, table_format_for(p, o.table_format), embeddings::TableKind::stimulus));
  for (const auto& t : dnn) in.dnn.push_back(&t);
  std::optional<embeddings::EmbeddingTable> llm;
  if (!o.llm.empty()) {
    llm.emplace(embeddings::load_table(o.llm, table_format_for(o.llm, o.table_format), embeddings::TableKind::stimulus));
    in.llm = &*llm;
  }

  const auto m = methods::compute(o.method, in);
  std::ostringstream out;
  corpus::write_matrix(m, out, format);
  write_output(c.out, out.str());
  return 0;
}

struct EvalOptions {
  std::vector<std::string> matrices;
  std::string judgments;
  int n_splits = 100;
  bool no_irr = false;
};

int cmd_eval(const CommonOptions& c, const EvalOptions& o) {
  if (o.matrices.empty()) throw UsageError("eval needs at least one --matrix");
  const auto judgments = load_judgments(c.dataset, o.judgments);
  std::vector<corpus::SimilarityMatrix> ms;
  for (const auto& p : o.matrices) {
    ms.push_back(corpus::read_matrix(p));
    if (ms.back().method().empty()) ms.back().set_method(fs::path(p).stem().string());
  }
  const auto truth = corpus::aggregate_judgments(judgments, ms.front().ids());
  const auto report = metrics::evaluate(ms, truth, o.no_irr ? nullptr : &judgments, o.n_splits, c.seed);
  std::ostringstream csv_out;
  metrics::write_report_csv(csv_out, report);
  if (!c.out.empty() && c.out != "-") {
    corpus::write_text_file(c.out, csv_out.str());
    std::cout << metrics::format_report_table(report);
  } else {
    std::cout << csv_out.str();
  }
  return 0;
}

struct FitAlphaOptions {
  std::vector<std::string> dnn;
  std::string llm;
  std::string table_format;
  std::string judgments;
  std::string calibration;
  std::size_t n_cal = 20;
  std::vector<double> grid;
};

int cmd_fit_alpha(const CommonOptions& c, const FitAlphaOptions& o) {
  if (o.dnn.empty() || o.llm.empty()) throw UsageError("fit-alpha needs --dnn and --llm tables");
  const auto judgments = load_judgments(c.dataset, o.judgments);
  auto truth = corpus::aggregate_judgments(judgments, {}, {});
  std::vector<std::string> cal;
  if (!o.calibration.empty()) {
    cal = read_id_list(o.calibration);
  } else {
    cal = fusion::choose_calibration(truth.ids(), o.n_cal, c.seed);
  }
  const std::set<std::string> in_cal(cal.begin(), cal.end());
  corpus::JudgmentSet subset{judgments.dataset_id, {}};
  for (const auto& r : judgments.records)
    if (in_cal.count(r.pair.first) && in_cal.count(r.pair.second)) subset.records.push_back(r);
  truth = corpus::aggregate_judgments(subset, cal);

  std::vector<embeddings::EmbeddingTable> dnn;
  for (const auto& p : o.dnn)
    dnn.push_back(embeddings::load_table(p, table_format_for(p, o.table_format), embeddings::TableKind::stimulus));
  const auto llm = embeddings::load_table(o.llm, table_format_for(o.llm, o.table_format), embeddings::TableKind::stimulus);
  std::vector<fusion::StimulusParts> parts(cal.size());
  for (const auto& t : dnn) {
    auto v = methods::stimulus_vectors(t, cal);
    for (std::size_t k = 0; k < cal.size(); ++k) parts[k].dnn.push_back(std::move(v[k]));
  }
  auto lv = methods::stimulus_vectors(llm, cal);
  for (std::size_t k = 0; k < cal.size(); ++k) parts[k].llm = std::move(lv[k]);

  const auto grid = o.grid.empty() ? fusion::default_alpha_grid() : o.grid;
  const auto fit = fusion::fit_alpha(cal, parts, truth, cal, grid);
  write_output(c.out, fusion::alpha_to_json(fit, cal));
  spdlog::info("alpha = {} (r = {:.4f}) over {} calibration pairs", fit.alpha, fit.r, corpus::pair_count(cal.size()));
  return 0;
}

struct LtCcvCliOptions {
  std::string embeddings;
  std::string table_format;
  std::string judgments;
  int folds = 6;
  std::vector<double> lambdas;
  bool standardize = false;
};

int cmd_ltccv(const CommonOptions& c, const LtCcvCliOptions& o) {
  if (o.embeddings.empty()) throw UsageError("ltccv needs --embeddings (stimulus-keyed table)");
  const auto judgments = load_judgments(c.dataset, o.judgments);
  std::vector<std::string> order;
  if (!c.dataset.empty() && fs::exists(fs::path(c.dataset) / "stimuli.csv")) {
    const auto path = (fs::path(c.dataset) / "stimuli.csv").string();
    for (const auto& s : corpus::parse_stimuli(corpus::read_text_file(path), path)) order.push_back(s.id);
  }
  const auto truth = corpus::aggregate_judgments(judgments, order);
  const auto table = embeddings::load_table(o.embeddings, table_format_for(o.embeddings, o.table_format),
                                            embeddings::TableKind::stimulus);
  const auto z = methods::stimulus_vectors(table, truth.ids());
  fusion::LtCcvOptions opt;
  opt.folds = o.folds;
  if (!o.lambdas.empty()) opt.lambda_grid = o.lambdas;
  opt.standardize = o.standardize;
  opt.seed = c.seed;
  const auto model = fusion::lt_ccv(z, truth, opt);
  write_output(c.out, fusion::model_to_json(model));
  spdlog::info("mean held-out r = {:.4f} over {} folds", model.mean_score, model.fold_scores.size());
  return 0;
}

struct ServeOptions {
  std::string data_dir;
  std::string host = "127.0.0.1";
  int port = -1;
  std::string config_path;
};

int cmd_serve(const CommonOptions& c, const ServeOptions& o) {
  const std::string data_dir = o.data_dir.empty() ? env_or("STEPSIM_DATA_DIR", "stepd-data") : o.data_dir;
  const int port = o.port >= 0 ? o.port : std::stoi(env_or("STEPSIM_PORT", "8080"));
  stepd::Config config;
  if (!o.config_path.empty()) config = stepd::Config::from(KeyValues::load(o.config_path));
  if (c.seed) config.seed = c.seed;
  std::vector<corpus::Stimulus> stimuli;
  if (!c.dataset.empty()) {
    const auto path = (fs::path(c.dataset) / "stimuli.csv").string();
    stimuli = corpus::parse_stimuli(corpus::read_text_file(path), path);
  }
  fs::create_directories(data_dir);
  const auto log_path = (fs::path(data_dir) / "events.ndjson").string();
  if (stimuli.empty() && !fs::exists(log_path))
    throw UsageError("a new service needs --dataset with stimuli.csv");

  // Signals go to a dedicated thread so the HTTP workers never see them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  stepd::Service service(std::move(stimuli), config, log_path);
  stepd::HttpServer server(service);
  const int bound = server.bind(o.host, port);
  std::cout << "listening on " << o.host << ":" << bound << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    spdlog::info("signal {}: shutting down", sig);
    server.stop();
  });
  server.listen();
  server.stop();
  if (waiter.joinable()) {
    // listen() may also end on a bind failure; wake the waiter in that case.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  }
  service.sync();
  std::cout << "stopped; " << service.status()["events"].get<std::uint64_t>() << " events in " << log_path << std::endl;
  return 0;
}

struct ExportOptions {
  std::string data_dir;
  std::string kind = "all";
};

int cmd_export(const CommonOptions& c, const ExportOptions& o) {
  const std::string data_dir = o.data_dir.empty() ? env_or("STEPSIM_DATA_DIR", "stepd-data") : o.data_dir;
  const auto log_path = (fs::path(data_dir) / "events.ndjson").string();
  if (!fs::exists(log_path)) throw Error("no event log at " + log_path);
  const auto contents = stepd::read_log(log_path);
  if (contents.truncated_tail) spdlog::warn("{}: ignored partial final record", log_path);
  const auto state = stepd::replay(contents.events);

  auto render = [&](stepd::ExportKind k) {
    std::ostringstream out;
    switch (k) {
      case stepd::ExportKind::chains: corpus::write_chains(out, stepd::export_chains(state)); break;
      case stepd::ExportKind::captions: corpus::write_captions(out, stepd::export_captions(state)); break;
      case stepd::ExportKind::judgments: corpus::write_judgments(out, stepd::export_judgments(state)); break;
    }
    return out.str();
  };
  if (o.kind != "all") {
    write_output(c.out, render(stepd::parse_export_kind(o.kind)));
    return 0;
  }
  if (c.out.empty() || c.out == "-") throw UsageError("--kind all writes a dataset directory; give --out DIR");
  fs::create_directories(c.out);
  std::ostringstream stim;
  corpus::write_stimuli(stim, state.stimuli);
  corpus::write_text_file((fs::path(c.out) / "stimuli.csv").string(), stim.str());
  corpus::write_text_file((fs::path(c.out) / "chains.json").string(), render(stepd::ExportKind::chains));
  corpus::write_text_file((fs::path(c.out) / "captions.csv").string(), render(stepd::ExportKind::captions));
  corpus::write_text_file((fs::path(c.out) / "judgments.csv").string(), render(stepd::ExportKind::judgments));
  return 0;
}

int cmd_report(const std::vector<std::string>& reports) {
  if (reports.empty()) throw UsageError("report needs at least one report CSV");
  for (const auto& p : reports) {
    if (reports.size() > 1) std::cout << "== " << p << "\n";
    std::cout << metrics::format_report_table(metrics::read_report_csv(p));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Similarity judgments from tags, captions and embeddings"};
  auto* config_opt = app.set_config("--config", "", "TOML-style settings file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  CommonOptions common;

  SimmatOptions sm;
  auto* simmat = app.add_subcommand("simmat", "Compute a pairwise similarity matrix");
  simmat->add_option("--method", sm.method, "Similarity method")->required();
  simmat->add_option("--dataset", common.dataset, "Dataset directory (stimuli.csv, chains.json, ...)");
  simmat->add_option("--embeddings", sm.embeddings, "Embedding table (word, caption or stimulus keyed)");
  simmat->add_option("--table-format", sm.table_format, "text-vec or csv (default: by extension)");
  simmat->add_option("--frequencies", sm.frequencies, "Word frequency list for spell-correction ties");
  simmat->add_option("--selector", sm.selector, "Tag selection: last-iteration, first-iteration, single-top, label");
  simmat->add_option("--source", sm.source, "Text source for wfa-* methods: tags or captions");
  simmat->add_option("--stopwords", sm.stopwords, "Stopword file replacing the bundled list");
  simmat->add_option("--lemma-rules", sm.lemma_rules, "Suffix rule file replacing the bundled rules");
  simmat->add_option("--min-doc-presence", sm.min_doc_presence, "Drop terms found in fewer documents");
  simmat->add_option("--dnn", sm.dnn, "Stimulus-keyed DNN table (repeatable, for stacked)");
  simmat->add_option("--llm", sm.llm, "Stimulus-keyed language table (for stacked)");
  simmat->add_option("--alpha", sm.alpha, "Language-part scale for stacked");
  simmat->add_option("--format", sm.format, "condensed-csv, full-csv or json");
  add_common(simmat, common);

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Correlate similarity matrices with human judgments");
  eval->add_option("--matrix,matrices", ev.matrices, "Similarity matrix files");
  eval->add_option("--dataset", common.dataset, "Dataset directory with judgments.csv");
  eval->add_option("--judgments", ev.judgments, "Judgments file (instead of --dataset)");
  eval->add_option("--n-splits", ev.n_splits, "Split-half repetitions for the IRR row");
  eval->add_flag("--no-irr", ev.no_irr, "Skip the IRR row");
  add_common(eval, common);

  FitAlphaOptions fa;
  auto* fit = app.add_subcommand("fit-alpha", "Grid-search the language-part scale of stacked embeddings");
  fit->add_option("--dataset", common.dataset, "Dataset directory with judgments.csv");
  fit->add_option("--judgments", fa.judgments, "Judgments file (instead of --dataset)");
  fit->add_option("--dnn", fa.dnn, "Stimulus-keyed DNN table (repeatable)");
  fit->add_option("--llm", fa.llm, "Stimulus-keyed language table");
  fit->add_option("--table-format", fa.table_format, "text-vec or csv (default: by extension)");
  fit->add_option("--calibration", fa.calibration, "File of calibration stimulus ids, one per line");
  fit->add_option("--n-cal", fa.n_cal, "Seeded calibration subset size when no file is given");
  fit->add_option("--grid", fa.grid, "Alpha grid (default: 0 and 61 log-spaced points in [1e-3, 1e3])")
      ->delimiter(',');
  add_common(fit, common);

  LtCcvCliOptions lt;
  auto* ltccv = app.add_subcommand("ltccv", "Cross-validated diagonal reweighting by ridge regression");
  ltccv->add_option("--dataset", common.dataset, "Dataset directory with judgments.csv");
  ltccv->add_option("--judgments", lt.judgments, "Judgments file (instead of --dataset)");
  ltccv->add_option("--embeddings", lt.embeddings, "Stimulus-keyed embedding table");
  ltccv->add_option("--table-format", lt.table_format, "text-vec or csv (default: by extension)");
  ltccv->add_option("--folds", lt.folds, "Stimulus-level folds");
  ltccv->add_option("--lambdas", lt.lambdas, "Ridge penalty grid")->delimiter(',');
  ltccv->add_flag("--standardize", lt.standardize, "Scale features to unit variance");
  add_common(ltccv, common);

  ServeOptions sv;
  auto* serve = app.add_subcommand("serve", "Run the collection service");
  serve->add_option("--dataset", common.dataset, "Dataset directory with stimuli.csv");
  serve->add_option("--data-dir", sv.data_dir, "Event log directory (env STEPSIM_DATA_DIR)");
  serve->add_option("--host", sv.host, "Listen address");
  serve->add_option("--port", sv.port, "Listen port, 0 = any (env STEPSIM_PORT, default 8080)");
  serve->add_option("--service-config", sv.config_path, "Service settings file ([stepd] section)");
  serve->add_option("--seed", common.seed, "Service seed (overrides the settings file)");

  ExportOptions ex;
  auto* exp = app.add_subcommand("export", "Export collected data from an event log");
  exp->add_option("--data-dir", ex.data_dir, "Event log directory (env STEPSIM_DATA_DIR)");
  exp->add_option("--kind", ex.kind, "chains, captions, judgments or all");
  exp->add_option("--out", common.out, "Output file, or directory for --kind all");

  std::vector<std::string> reports;
  auto* rep = app.add_subcommand("report", "Print evaluation report CSVs as tables");
  rep->add_option("reports", reports, "Report CSV files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("stepsim"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  try {
    if (*simmat) return cmd_simmat(common, sm);
    if (*eval) return cmd_eval(common, ev);
    if (*fit) return cmd_fit_alpha(common, fa);
    if (*ltccv) return cmd_ltccv(common, lt);
    if (*serve) {
      // Service settings may share the main config file.
      if (sv.config_path.empty() && config_opt->count() > 0) sv.config_path = config_opt->as<std::string>();
      return cmd_serve(common, sv);
    }
    if (*exp) return cmd_export(common, ex);
    if (*rep) return cmd_report(reports);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
