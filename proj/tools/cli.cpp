#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "enlg/corpus.hpp"
#include "enlg/errors.hpp"
#include "enlg/eval.hpp"
#include "enlg/log.hpp"
#include "enlg/offline_rl.hpp"
#include "enlg/policy_training.hpp"
#include "enlg/reward_model.hpp"
#include "enlg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace enlg::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw IoError("sha256 unavailable");
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

json default_config() {
  ModelConfig mc;
  mc.context_len = 32;
  json model = mc.to_json();
  model.erase("vocab_size");
  model.erase("seed");
  json rl = RLConfig{}.to_json();
  rl["reward"] = "auto";
  return {
      {"seed", 0},
      {"paths", {{"data", "data"}, {"checkpoints", "checkpoints"}, {"reports", "reports"}}},
      {"data",
       {{"inputs", json::array()},
        {"strict", false},
        {"split", {{"train", 0.8}, {"validation", 0.1}, {"test", 0.1}}},
        {"synthetic", SyntheticSpec{}.to_json()}}},
      {"tokenizer", {{"max_size", 2048}, {"min_freq", 1}}},
      {"model", model},
      {"models", {{"policy", json::object()}, {"scorer", json::object()}, {"critic", json::object()}}},
      {"scorer", ScorerTrainConfig{}.to_json()},
      {"bc", BCConfig{}.to_json()},
      {"rl", rl},
      {"eval",
       {{"n_per_prompt", 5},
        {"temperature", 1.0},
        {"max_reply_len", 8},
        {"prompt_set", "test"},
        {"reward", "auto"}}},
      {"generate", {{"n_samples", 5}, {"max_reply_len", 8}}}};
}

json resolve_config(const json& file, std::uint64_t seed) {
  if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
  json cfg = default_config();
  cfg.merge_patch(file);
  cfg["seed"] = seed;
  for (const char* ptr : {"/data/synthetic", "/scorer", "/bc", "/rl"}) {
    const json::json_pointer p(std::string(ptr) + "/seed");
    if (!file.contains(p)) cfg[p] = seed;
  }
  return cfg;
}

namespace {

/// Error kinds that mean the request itself was invalid.
bool is_validation(const std::string& kind) {
  static const std::set<std::string> kinds = {"config", "parameter", "dependency", "spec",
                                              "split",  "kind-mismatch", "lookup"};
  return kinds.contains(kind);
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> updates, batch;
  std::optional<double> lr_model, lr_critic, temperature;
  std::optional<std::string> sample_source;
  std::vector<std::string> inputs;
  bool strict = false;
  std::string keyword, tweet;
  std::optional<std::size_t> n;
  std::string policy = "rl";
  bool compare = false;
};

class Stage {
 public:
  Stage(std::string name, json cfg, fs::path out)
      : name_(std::move(name)), cfg_(std::move(cfg)), out_(std::move(out)) {
    data_ = out_ / cfg_.at("paths").at("data").get<std::string>();
    ckpt_ = out_ / cfg_.at("paths").at("checkpoints").get<std::string>();
    reports_ = out_ / cfg_.at("paths").at("reports").get<std::string>();
  }

  const json& cfg() const { return cfg_; }
  std::uint64_t seed() const { return cfg_.at("seed").get<std::uint64_t>(); }

  fs::path data(const std::string& f) const { return data_ / f; }
  fs::path ckpt(const std::string& f) const { return ckpt_ / f; }
  fs::path report(const std::string& f) const { return reports_ / f; }

  /// Path of an upstream artifact; throws DependencyError naming it when absent.
  std::string input(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
      throw DependencyError("missing upstream artifact " + p.string() + " (run '" + producer +
                            "' first)");
    inputs_.push_back(p);
    return p.string();
  }

  std::string output(const fs::path& p) {
    fs::create_directories(p.parent_path());
    outputs_.push_back(p);
    return p.string();
  }

  CorpusSplit load_split() {
    CorpusSplit s;
    s.train = ingest_csv(input(data("train.csv"), "synth' or 'ingest"), true).records;
    s.validation = ingest_csv(input(data("validation.csv"), "synth' or 'ingest"), true).records;
    s.test = ingest_csv(input(data("test.csv"), "synth' or 'ingest"), true).records;
    s.split_seed = seed();
    return s;
  }

  Vocabulary load_vocab() { return Vocabulary::load(input(data("vocab.json"), "synth' or 'ingest")); }

  ModelConfig model_config(const std::string& which, std::size_t vocab_size) const {
    json j = cfg_.at("model");
    j.merge_patch(cfg_.at("models").value(which, json::object()));
    j["vocab_size"] = vocab_size;
    j["seed"] = seed();
    auto mc = ModelConfig::from_json(j);
    mc.validate();
    return mc;
  }

  void write_manifest() const {
    json m;
    m["subcommand"] = name_;
    m["seed"] = seed();
    m["config"] = cfg_;
    auto hashes = [&](const std::vector<fs::path>& paths) {
      json h = json::object();
      for (const auto& p : paths) h[fs::relative(p, out_).generic_string()] = sha256_file(p.string());
      return h;
    };
    m["inputs"] = hashes(inputs_);
    m["outputs"] = hashes(outputs_);
    fs::create_directories(out_);
    write_json((out_ / (name_ + ".manifest.json")).string(), m);
  }

 private:
  std::string name_;
  json cfg_;
  fs::path out_, data_, ckpt_, reports_;
  std::vector<fs::path> inputs_, outputs_;
};

/// Reward in harness mode (synthetic oracle) or real mode (trained scorer).
struct RewardSource {
  std::string name;
  std::unique_ptr<Oracle> oracle;
  std::unique_ptr<ScorerNet<float>> scorer;
  RewardFn fn;
};

std::unique_ptr<RewardSource> resolve_reward(Stage& st, const std::string& setting,
                                             const Vocabulary& vocab) {
  auto src = std::make_unique<RewardSource>();
  std::string mode = setting;
  if (mode == "auto") mode = fs::exists(st.data("oracle.json")) ? "oracle" : "scorer";
  if (mode == "oracle") {
    const auto state = OracleState::load(st.input(st.data("oracle.json"), "synth"));
    src->oracle = std::make_unique<Oracle>(state, vocab);
    src->fn = oracle_reward(*src->oracle);
  } else if (mode == "scorer") {
    src->scorer = std::make_unique<ScorerNet<float>>(
        load_scorer(st.input(st.ckpt("scorer.ckpt"), "train-scorer")));
    src->fn = scorer_reward(*src->scorer, vocab);
  } else {
    throw ConfigError("reward must be auto, oracle or scorer, not '" + setting + "'");
  }
  src->name = mode;
  return src;
}

/// Split, vocabulary and split CSVs shared by ingest and synth.
void prepare_data(Stage& st, const std::vector<ReplyRecord>& records) {
  if (records.empty()) throw TrainingError("no usable records");
  const auto& r = st.cfg().at("data").at("split");
  const auto s = split(records, {r.at("train"), r.at("validation"), r.at("test")}, st.seed());
  write_csv(st.output(st.data("corpus.csv")), records);
  write_csv(st.output(st.data("train.csv")), s.train);
  write_csv(st.output(st.data("validation.csv")), s.validation);
  write_csv(st.output(st.data("test.csv")), s.test);
  std::vector<std::string> texts;
  for (const auto& rec : s.train) {
    texts.push_back(rec.keyword);
    texts.push_back(rec.main_tweet);
    texts.push_back(rec.reply);
  }
  const auto& tok = st.cfg().at("tokenizer");
  build_vocab(texts, tok.at("max_size"), tok.at("min_freq")).save(st.output(st.data("vocab.json")));
}

void cmd_ingest(Stage& st, const Options& o) {
  std::vector<std::string> paths = o.inputs;
  if (paths.empty()) paths = st.cfg().at("data").at("inputs").get<std::vector<std::string>>();
  if (paths.empty()) throw ConfigError("ingest needs CSV inputs (arguments or data.inputs)");
  for (const auto& p : paths) st.input(p, "an external crawl");
  const bool strict = o.strict || st.cfg().at("data").at("strict").get<bool>();
  const auto result = ingest_csv_files(paths, strict);
  write_json(st.output(st.report("ingest_report.json")), result.diagnostics.to_json());
  fs::remove(st.data("oracle.json"));
  prepare_data(st, result.records);
  std::cout << result.diagnostics.rows_accepted << " of " << result.diagnostics.rows_read
            << " rows accepted\n";
}

void cmd_synth(Stage& st, const Options&) {
  const auto spec = SyntheticSpec::from_json(st.cfg().at("data").at("synthetic"));
  spec.validate();
  const auto corpus = generate_synthetic(spec);
  write_json(st.output(st.data("synthetic_spec.json")), spec.to_json());
  corpus.oracle.save(st.output(st.data("oracle.json")));
  prepare_data(st, corpus.records);
  std::cout << corpus.records.size() << " synthetic records\n";
}

void cmd_train_scorer(Stage& st, const Options&) {
  const auto s = st.load_split();
  const auto vocab = st.load_vocab();
  const auto cfg = ScorerTrainConfig::from_json(st.cfg().at("scorer"));
  cfg.validate();
  const auto mc = st.model_config("scorer", vocab.size());
  ScorerNet<float> scorer(mc);
  scorer.init(derive_seed(mc.seed, 2));
  const auto train = label_records(s.train, vocab, cfg.like_threshold, mc.context_len);
  const auto val = label_records(s.validation, vocab, cfg.like_threshold, mc.context_len);
  const auto metrics = train_scorer(scorer, train, val, cfg);
  json report = metrics.to_json();
  if (!s.test.empty()) {
    const auto test = label_records(s.test, vocab, cfg.like_threshold, mc.context_len);
    const auto ev = evaluate_scorer(scorer, test, cfg);
    report["test"] = {{"loss", ev.loss}, {"accuracy", ev.accuracy}};
  }
  save_checkpoint(scorer, st.output(st.ckpt("scorer.ckpt")));
  write_json(st.output(st.report("scorer_metrics.json")), report);
  std::printf("validation accuracy %.4f\n", metrics.validation_accuracy);
}

void cmd_train_bc(Stage& st, const Options&) {
  const auto s = st.load_split();
  const auto vocab = st.load_vocab();
  const auto cfg = BCConfig::from_json(st.cfg().at("bc"));
  cfg.validate();
  const auto mc = st.model_config("policy", vocab.size());
  PolicyNet<float> policy(mc);
  policy.init(derive_seed(mc.seed, 1));
  const auto stats = train_bc(policy, s, vocab, cfg);
  save_checkpoint(policy, st.output(st.ckpt("policy_bc.ckpt")));
  write_json(st.output(st.report("bc_stats.json")), stats.to_json());
  std::printf("bc train loss %.4f -> %.4f\n", stats.train_loss.front(), stats.train_loss.back());
}

void cmd_train_rl(Stage& st, const Options&) {
  auto policy = load_policy(st.input(st.ckpt("policy_bc.ckpt"), "train-bc"));
  const auto s = st.load_split();
  const auto vocab = st.load_vocab();
  const json& rl = st.cfg().at("rl");
  const auto cfg = RLConfig::from_json(rl);
  cfg.validate();
  const auto reward = resolve_reward(st, rl.value("reward", "auto"), vocab);
  const auto mc = st.model_config("critic", vocab.size());
  CriticBundle<float> critics(mc);
  critics.init(derive_seed(mc.seed, 3));
  const RLSinks sinks{st.output(st.report("rl_curve.csv")), st.output(st.report("rl_stats.jsonl"))};
  const auto result = train_rl(policy, critics, s, reward->fn, vocab, cfg, sinks);
  save_checkpoint(policy, st.output(st.ckpt("policy_rl.ckpt")));
  save_checkpoint(critics, st.output(st.ckpt("critic_rl.ckpt")));
  json summary = result.summary();
  summary["reward_source"] = reward->name;
  summary["config"] = cfg.to_json();
  write_json(st.output(st.report("rl_summary.json")), summary);
  std::printf("reward curve %.4f -> %.4f\n", summary["first_decile_reward"].get<double>(),
              summary["last_decile_reward"].get<double>());
}

std::vector<Prompt> eval_prompts(const CorpusSplit& s, const std::string& set) {
  if (set == "test") return prompts_of(s.test);
  if (set == "validation") return prompts_of(s.validation);
  if (set == "train") return prompts_of(s.train);
  throw ConfigError("eval.prompt_set must be test, validation or train");
}

void cmd_evaluate(Stage& st, const Options&) {
  const auto bc = load_policy(st.input(st.ckpt("policy_bc.ckpt"), "train-bc"));
  const auto rl = load_policy(st.input(st.ckpt("policy_rl.ckpt"), "train-rl"));
  const auto s = st.load_split();
  const auto vocab = st.load_vocab();
  const json& e = st.cfg().at("eval");
  const auto reward = resolve_reward(st, e.at("reward"), vocab);
  const std::string set = e.at("prompt_set");
  const auto prompts = eval_prompts(s, set);
  const std::uint64_t seed = derive_seed(st.seed(), 0xe7a1);
  const std::size_t n = e.at("n_per_prompt");
  const double temp = e.at("temperature");
  const std::size_t max_len = e.at("max_reply_len");
  const auto base = evaluate_policy(bc, vocab, prompts, reward->fn, n, temp, seed, max_len);
  const auto after = evaluate_policy(rl, vocab, prompts, reward->fn, n, temp, seed, max_len);
  auto report = compare(base, after);
  report.prompt_set = set;
  report.seeds = {seed};
  json j = report.to_json();
  j["reward_source"] = reward->name;
  write_json(st.output(st.report("eval_report.json")), j);
  std::printf("mean score %.4f -> %.4f (relative %+.1f%%, sign test p %.3g)\n", report.baseline_mean,
              report.rl_mean, 100 * report.relative_improvement, report.sign_test_p);
}

PolicyNet<float> chosen_policy(Stage& st, const std::string& which) {
  if (which == "rl") return load_policy(st.input(st.ckpt("policy_rl.ckpt"), "train-rl"));
  if (which == "bc") return load_policy(st.input(st.ckpt("policy_bc.ckpt"), "train-bc"));
  return load_policy(st.input(which, "train-bc' or 'train-rl"));
}

std::vector<ScoredReply> sample_scored(Stage& st, const PolicyNet<float>& policy,
                                       const Vocabulary& vocab, const RewardSource& reward,
                                       const Options& o, std::uint64_t index) {
  const json& g = st.cfg().at("generate");
  GenerationRequest req;
  req.keyword = o.keyword;
  req.tweet = o.tweet;
  req.n_samples = o.n.value_or(g.at("n_samples").get<std::size_t>());
  req.temperature = st.cfg().at("eval").at("temperature");
  req.max_reply_len = g.at("max_reply_len");
  req.seed = derive_seed(st.seed(), 0x9e2);
  std::vector<ScoredReply> scored;
  for (const auto& r : generate(policy, vocab, req, index))
    scored.push_back({r, reward.fn({o.keyword, o.tweet}, encode(r, vocab))});
  return rank_scored(std::move(scored));
}

void require_prompt(const Options& o) {
  if (o.keyword.empty()) throw ParameterError("--keyword is required");
}

void cmd_generate(Stage& st, const Options& o) {
  require_prompt(o);
  const auto policy = chosen_policy(st, o.policy);
  const auto vocab = st.load_vocab();
  const auto reward = resolve_reward(st, st.cfg().at("eval").at("reward"), vocab);
  std::string text;
  for (const auto& r : sample_scored(st, policy, vocab, *reward, o, 0)) {
    char score[32];
    std::snprintf(score, sizeof score, " (%.2f)\n", r.score);
    text += r.reply + score;
  }
  std::ofstream(st.output(st.report("generated.txt")), std::ios::binary) << text;
  std::cout << text;
}

void cmd_showcase(Stage& st, const Options& o) {
  require_prompt(o);
  const auto vocab = st.load_vocab();
  const auto reward = resolve_reward(st, st.cfg().at("eval").at("reward"), vocab);
  std::string text;
  if (o.compare) {
    const auto bc = chosen_policy(st, "bc");
    const auto rl = chosen_policy(st, "rl");
    text = render_comparison(o.keyword, o.tweet, sample_scored(st, bc, vocab, *reward, o, 0),
                             sample_scored(st, rl, vocab, *reward, o, 0));
  } else {
    const auto policy = chosen_policy(st, o.policy);
    text = render_showcase(o.keyword, o.tweet, sample_scored(st, policy, vocab, *reward, o, 0));
  }
  std::ofstream(st.output(st.report("showcase.txt")), std::ios::binary) << text;
  std::cout << text;
}

/// Every section must parse and validate before any stage runs.
void validate_config(const json& cfg) {
  SyntheticSpec::from_json(cfg.at("data").at("synthetic")).validate();
  ScorerTrainConfig::from_json(cfg.at("scorer")).validate();
  BCConfig::from_json(cfg.at("bc")).validate();
  RLConfig::from_json(cfg.at("rl")).validate();
  for (const char* which : {"policy", "scorer", "critic"}) {
    json j = cfg.at("model");
    j.merge_patch(cfg.at("models").value(which, json::object()));
    j["vocab_size"] = special::kCount + 1;
    ModelConfig::from_json(j).validate();
  }
  const json& e = cfg.at("eval");
  if (e.at("n_per_prompt").get<std::size_t>() == 0) throw ConfigError("eval.n_per_prompt must be positive");
  if (!(e.at("temperature").get<double>() > 0)) throw ConfigError("eval.temperature must be positive");
  for (const char* key : {"/rl/reward", "/eval/reward"}) {
    const std::string r = cfg.at(json::json_pointer(key)).get<std::string>();
    if (r != "auto" && r != "oracle" && r != "scorer")
      throw ConfigError(std::string(key + 1) + " must be auto, oracle or scorer");
  }
}

json read_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DependencyError("config file " + path + " not found");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Keyword-conditioned reply generation trained with offline RL", "enlg"};
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("--config", o.config_path, "JSON pipeline config");
  app.add_option("--seed", o.seed, "global seed");
  app.add_option("--out", o.out, "output directory (default $ENLG_OUT or enlg_out)");

  using Run = void (*)(Stage&, const Options&);
  std::vector<std::pair<CLI::App*, Run>> commands;
  auto sub = [&](const char* name, const char* help, Run fn) {
    auto* s = app.add_subcommand(name, help);
    commands.emplace_back(s, fn);
    return s;
  };
  auto* ingest = sub("ingest", "read reply CSVs, split and build the vocabulary", cmd_ingest);
  ingest->add_option("inputs", o.inputs, "CSV files");
  ingest->add_flag("--strict", o.strict, "fail on the first malformed row");
  sub("synth", "generate the synthetic corpus and its oracle", cmd_synth);
  sub("train-scorer", "train the like-score model", cmd_train_scorer);
  sub("train-bc", "behaviour-clone the reply policy", cmd_train_bc);
  auto* rl = sub("train-rl", "offline IQL fine-tuning of the BC policy", cmd_train_rl);
  rl->add_option("--updates", o.updates, "IQL updates");
  rl->add_option("--batch", o.batch, "replies per update");
  rl->add_option("--lr-model", o.lr_model, "policy learning rate");
  rl->add_option("--lr-critic", o.lr_critic, "critic learning rate");
  rl->add_option("--temperature", o.temperature, "self-generation temperature");
  rl->add_option("--sample-source", o.sample_source, "where replies come from")
      ->check(CLI::IsMember({"corpus", "self_generated", "mixed"}));
  auto* ev = sub("evaluate", "compare BC and RL policies on held-out prompts", cmd_evaluate);
  ev->add_option("--temperature", o.temperature);
  for (auto* s : {sub("generate", "sample scored replies for one prompt", cmd_generate),
                  sub("showcase", "render ranked replies for one prompt", cmd_showcase)}) {
    s->add_option("--keyword", o.keyword)->required();
    s->add_option("--tweet", o.tweet, "article input");
    s->add_option("--n", o.n, "number of replies");
    s->add_option("--policy", o.policy, "rl, bc or a checkpoint path");
    s->add_option("--temperature", o.temperature);
    if (std::string(s->get_name()) == "showcase")
      s->add_flag("--compare", o.compare, "before/after RL side by side");
  }
  app.fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "enlg: " << e.what() << "\n" << app.help();
    return kValidation;
  }

  try {
    const json file = read_config_file(o.config_path);
    const std::uint64_t seed = o.seed.value_or(file.value("seed", std::uint64_t{0}));
    json cfg = resolve_config(file, seed);
    if (o.updates) cfg["rl"]["updates"] = *o.updates;
    if (o.batch) cfg["rl"]["batch"] = *o.batch;
    if (o.lr_model) cfg["rl"]["lr_model"] = *o.lr_model;
    if (o.lr_critic) cfg["rl"]["lr_critic"] = *o.lr_critic;
    if (o.sample_source) cfg["rl"]["sample_source"] = *o.sample_source;
    if (o.temperature) {
      cfg["rl"]["temperature"] = *o.temperature;
      cfg["eval"]["temperature"] = *o.temperature;
    }
    validate_config(cfg);
    std::string out = o.out;
    if (out.empty()) {
      const char* env = std::getenv("ENLG_OUT");
      out = env != nullptr && *env != '\0' ? env : "enlg_out";
    }
    for (const auto& [cmd, fn] : commands) {
      if (!cmd->parsed()) continue;
      Stage st(cmd->get_name(), cfg, out);
      fn(st, o);
      st.write_manifest();
    }
    return kOk;
  } catch (const Error& e) {
    std::cerr << "enlg: " << e.kind() << " error: " << e.what() << "\n";
    return is_validation(e.kind()) ? kValidation : kRuntime;
  } catch (const json::exception& e) {
    std::cerr << "enlg: config error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "enlg: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace enlg::cli
