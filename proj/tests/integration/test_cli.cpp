#include <doctest.h>
#include <httplib.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fcntl.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "helpers.hpp"
#include "stepsim/corpus.hpp"
#include "stepsim/embeddings.hpp"
#include "stepsim/metrics.hpp"
#include "stepsim/stepd/service.hpp"

extern char** environ;

using namespace stepsim;
using nlohmann::json;

namespace {

const std::string kCli = STEPSIM_CLI_PATH;

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args) {
  char err_path[] = "/tmp/stepsim-cli-XXXXXX";
  const int fd = mkstemp(err_path);
  REQUIRE(fd >= 0);
  close(fd);
  const std::string cmd = kCli + " " + args + " 2>" + err_path;
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = corpus::read_text_file(err_path);
  std::remove(err_path);
  INFO("stderr: ", r.err);
  return r;
}

const std::vector<std::string> kWords = {"red", "blue", "ball", "car", "dog", "cat", "small", "fast"};

/// Four stimuli with tag chains from the collection service, judgments from
/// three raters and a word table covering every tag.
struct SmallDataset {
  testing::TempDir dir;
  std::string path;
  std::string words;

  SmallDataset() {
    path = dir.file("data");
    std::filesystem::create_directories(path);
    std::vector<corpus::Stimulus> stimuli;
    for (const auto& id : testing::numbered_ids(4)) stimuli.push_back({id, corpus::Modality::image, id + ".jpg", {}});
    stepd::Service svc(stimuli, {}, "");
    for (int p = 0; p < 3; ++p) {
      const std::string pid = svc.register_participant("r" + std::to_string(p));
      for (int k = 0; k < 4; ++k) {
        const json v = svc.next_trial(pid, stepd::Mode::tag);
        stepd::TagSubmission s{pid, {}, {}, {kWords[(p * 3 + k) % kWords.size()]}};
        for (const auto& t : v["tags"]) {
          if (t == s.new_tags[0]) s.new_tags.clear();
          s.ratings[t] = 4;
        }
        if (s.new_tags.empty() && v["must_add_tag"] == true) s.new_tags = {"extra"};
        svc.submit_tag(v["id"], s);
      }
    }
    const auto st = svc.snapshot();
    std::ostringstream stim, chains, judg;
    corpus::write_stimuli(stim, stimuli);
    corpus::write_chains(chains, stepd::export_chains(st));
    corpus::JudgmentSet js{"small", {}};
    const int base[] = {0, 2, 5, 1, 6, 3};
    std::size_t k = 0;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i + 1; j < 4; ++j, ++k)
        for (int r = 0; r < 3; ++r)
          js.records.push_back({corpus::StimulusPair::of(stimuli[i].id, stimuli[j].id), "h" + std::to_string(r),
                                std::min(6, base[k] + (r == 2 ? 1 : 0)), false});
    corpus::write_judgments(judg, js);
    corpus::write_text_file(path + "/stimuli.csv", stim.str());
    corpus::write_text_file(path + "/chains.json", chains.str());
    corpus::write_text_file(path + "/judgments.csv", judg.str());

    std::mt19937_64 rng(3);
    std::ostringstream w;
    auto all = kWords;
    all.push_back("extra");
    for (const auto& word : all) {
      w << word;
      for (double x : testing::gaussian_vector(8, rng)) w << ' ' << x;
      w << '\n';
    }
    words = dir.file("words.txt");
    corpus::write_text_file(words, w.str());
  }
};

/// Stimulus-keyed tables and judgments generated from them.
struct EmbeddingDataset {
  testing::TempDir dir;
  std::string path, dnn, llm;

  EmbeddingDataset() {
    path = dir.file("emb");
    std::filesystem::create_directories(path);
    const auto ids = testing::numbered_ids(12);
    std::mt19937_64 rng(11);
    std::ostringstream d, l, stim;
    std::vector<std::vector<double>> lv;
    std::vector<corpus::Stimulus> stimuli;
    for (const auto& id : ids) {
      stimuli.push_back({id, corpus::Modality::video, id + ".mp4", {}});
      d << id;
      for (double x : testing::gaussian_vector(5, rng)) d << ' ' << x;
      d << '\n';
      lv.push_back(testing::gaussian_vector(4, rng));
      l << id;
      for (double x : lv.back()) l << ' ' << x;
      l << '\n';
    }
    corpus::JudgmentSet js{"emb", {}};
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = i + 1; j < ids.size(); ++j) {
        const double c = embeddings::cosine(lv[i], lv[j]);
        for (int r = 0; r < 2; ++r)
          js.records.push_back({corpus::StimulusPair::of(ids[i], ids[j]), "h" + std::to_string(r),
                                static_cast<int>(std::lround(3.0 + 3.0 * c)), false});
      }
    std::ostringstream judg;
    corpus::write_stimuli(stim, stimuli);
    corpus::write_judgments(judg, js);
    corpus::write_text_file(path + "/stimuli.csv", stim.str());
    corpus::write_text_file(path + "/judgments.csv", judg.str());
    dnn = dir.file("dnn.txt");
    llm = dir.file("llm.txt");
    corpus::write_text_file(dnn, d.str());
    corpus::write_text_file(llm, l.str());
  }
};

}  // namespace

TEST_CASE("simmat writes one row per unordered pair") {
  SmallDataset ds;
  const Run r = run("simmat --method tags-mean --dataset " + ds.path + " --embeddings " + ds.words);
  REQUIRE(r.code == 0);
  const auto m = corpus::read_matrix_text(r.out);
  CHECK(m.size() == 4);
  CHECK(m.values().size() == 6);
  CHECK(m.method() == "tags-mean");
  for (double v : m.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("simmat output does not depend on the thread count") {
  SmallDataset ds;
  const std::string base = "simmat --dataset " + ds.path + " --embeddings " + ds.words;
  for (const char* method : {"tags-overlap", "tags-quantized", "tags-mean"}) {
    const Run a = run(base + " --method " + method + " --threads 1");
    const Run b = run(base + " --method " + method + " --threads 4");
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
  }
  const Run c = run("simmat --method wfa-cooc --min-doc-presence 1 --dataset " + ds.path);
  REQUIRE(c.code == 0);
  CHECK(corpus::read_matrix_text(c.out).values().size() == 6);
}

TEST_CASE("usage errors exit with status 2") {
  SmallDataset ds;
  CHECK(run("simmat --method no-such-method --dataset " + ds.path).code == 2);
  CHECK(run("simmat --dataset " + ds.path).code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("simmat --method tags-mean --dataset " + ds.path + " --embeddings /nonexistent/words.txt").code == 1);
}

TEST_CASE("eval ranks matrices against the aggregated judgments") {
  SmallDataset ds;
  const auto judgments = corpus::parse_judgments(corpus::read_text_file(ds.path + "/judgments.csv"));
  const auto truth = corpus::aggregate_judgments(judgments, testing::numbered_ids(4));
  auto neg_values = truth.values();
  for (auto& v : neg_values) v = -v;
  const corpus::SimilarityMatrix same(truth.ids(), truth.values(), "same", corpus::Scale::raw);
  const corpus::SimilarityMatrix neg(truth.ids(), neg_values, "negated", corpus::Scale::raw);
  const auto same_path = ds.dir.file("same.csv"), neg_path = ds.dir.file("neg.csv");
  corpus::write_matrix(same, same_path, corpus::MatrixFormat::condensed_csv);
  corpus::write_matrix(neg, neg_path, corpus::MatrixFormat::full_csv);

  const auto report_path = ds.dir.file("report.csv");
  const Run r = run("eval --dataset " + ds.path + " --matrix " + neg_path + " --matrix " + same_path +
                    " --n-splits 20 --out " + report_path);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("same") != std::string::npos);
  const auto report = metrics::read_report_csv(report_path);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].method == "same");
  CHECK(report.rows[0].pearson == doctest::Approx(1.0));
  CHECK(report.rows[1].pearson == doctest::Approx(-1.0));
  CHECK(report.rows[0].n_pairs == 6);
  REQUIRE(report.irr.has_value());

  const Run again = run("eval --dataset " + ds.path + " --matrix " + neg_path + " --matrix " + same_path +
                        " --n-splits 20");
  CHECK(again.code == 0);
  CHECK(again.out == corpus::read_text_file(report_path));
  const Run table = run("report " + report_path);
  CHECK(table.code == 0);
  INFO(table.out);
  CHECK(table.out.find("neg ") != std::string::npos);
}

TEST_CASE("eval rejects a matrix over different stimuli") {
  SmallDataset ds;
  const corpus::SimilarityMatrix other({"s0000", "s0001", "zzz"}, {0.1, 0.2, 0.3}, "other", corpus::Scale::raw);
  const auto p = ds.dir.file("other.csv");
  corpus::write_matrix(other, p, corpus::MatrixFormat::condensed_csv);
  CHECK(run("eval --dataset " + ds.path + " --matrix " + p).code == 1);
}

TEST_CASE("fit-alpha and ltccv write JSON models") {
  EmbeddingDataset ds;
  const auto cal = ds.dir.file("cal.txt");
  corpus::write_text_file(cal, "# calibration\ns0000\ns0001\ns0002\ns0003\ns0004\ns0005\ns0006\ns0007\n");
  const Run fa = run("fit-alpha --dataset " + ds.path + " --dnn " + ds.dnn + " --llm " + ds.llm +
                     " --calibration " + cal);
  INFO(fa.err);
  REQUIRE(fa.code == 0);
  const json a = json::parse(fa.out);
  CHECK(a["alpha"].get<double>() > 1.0);
  CHECK(a["calibration"].size() == 8);

  const Run fb = run("fit-alpha --dataset " + ds.path + " --dnn " + ds.dnn + " --llm " + ds.llm +
                     " --n-cal 6 --grid 0,1,10");
  REQUIRE(fb.code == 0);
  const double alpha = json::parse(fb.out)["alpha"];
  CHECK((alpha == 0.0 || alpha == 1.0 || alpha == 10.0));

  const Run lt = run("ltccv --dataset " + ds.path + " --embeddings " + ds.llm + " --folds 3 --lambdas 0.01,1");
  REQUIRE(lt.code == 0);
  const json m = json::parse(lt.out);
  CHECK(m["weights"].size() == 4);
  CHECK(m["fold_scores"].size() == 3);
  CHECK(run("ltccv --dataset " + ds.path).code == 2);
}

TEST_CASE("serve records trials and export rebuilds a dataset") {
  SmallDataset ds;
  const auto data_dir = ds.dir.file("stepd");
  const auto config = ds.dir.file("stepsim.toml");
  corpus::write_text_file(config, "seed = 5\n[stepd]\ntag_budget = 2\ndataset_id = \"served\"\n");

  int pipe_fds[2];
  REQUIRE(pipe(pipe_fds) == 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, pipe_fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, pipe_fds[0]);
  posix_spawn_file_actions_addopen(&actions, STDERR_FILENO, "/dev/null", O_WRONLY, 0);
  std::vector<std::string> args{kCli,       "serve",    "--config", config, "--dataset", ds.path,
                                "--data-dir", data_dir, "--port",   "0"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, kCli.c_str(), &actions, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&actions);
  close(pipe_fds[1]);

  FILE* out = fdopen(pipe_fds[0], "r");
  char line[256] = {};
  REQUIRE(fgets(line, sizeof line, out) != nullptr);
  const std::string listening(line);
  REQUIRE(listening.rfind("listening on 127.0.0.1:", 0) == 0);
  const int port = std::stoi(listening.substr(listening.rfind(':') + 1));

  {
    httplib::Client cli("127.0.0.1", port);
    REQUIRE(cli.Post("/participants", R"({"id":"p1"})", "application/json")->status == 201);
    for (int k = 0; k < 2; ++k) {
      const json t = json::parse(cli.Get("/trial?participant=p1&mode=tag")->body);
      const json body{{"participant", "p1"}, {"new_tags", {"tag" + std::to_string(k)}}};
      REQUIRE(cli.Post("/trial/" + t["id"].get<std::string>(), body.dump(), "application/json")->status == 200);
    }
    const auto r = cli.Get("/trial?participant=p1&mode=tag");
    CHECK(r->status == 409);
    CHECK(json::parse(r->body)["error"] == "budget-exhausted");
  }

  kill(pid, SIGTERM);
  int status = 0;
  waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
  std::string rest;
  while (fgets(line, sizeof line, out)) rest += line;
  fclose(out);
  CHECK(rest.find("stopped; 6 events") != std::string::npos);

  const auto export_dir = ds.dir.file("exported");
  REQUIRE(run("export --data-dir " + data_dir + " --kind all --out " + export_dir).code == 0);
  const auto exported = corpus::load_dataset_dir(export_dir);
  CHECK(exported.stimuli.size() == 4);
  CHECK(exported.chains.size() == 2);
  const Run chains = run("export --data-dir " + data_dir + " --kind chains");
  CHECK(chains.code == 0);
  CHECK(corpus::parse_chains(chains.out) == exported.chains);
  CHECK(run("export --data-dir " + ds.dir.file("missing") + " --kind chains").code == 1);
}
