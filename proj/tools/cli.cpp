// SPDX-License-Identifier: Apache-2.0
//
// Copyright 2026 The visionrf Authors

#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iomanip>
#include <iostream>
#include <optional>

#include "pipeline.hpp"
#include "visionrf/csv.hpp"
#include "visionrf/error.hpp"
#include "visionrf/nn/checkpoint.hpp"
#include "visionrf/nn/gradcheck.hpp"

namespace visionrf::cli {
namespace fs = std::filesystem;

namespace {

// Bad flag values found after parsing; reported like parse errors (exit 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string model;
  std::string variant;
  std::optional<int> episodes;
};

struct Context {
  const Options& opt;
  std::string command;
  std::ostream& out;
  std::ostream& err;
  ScenarioConfig config;
  std::uint64_t seed = 0;
  fs::path out_dir;
};

bool same_or_inside(const fs::path& inner, const fs::path& outer) {
  const auto a = fs::weakly_canonical(inner);
  const auto b = fs::weakly_canonical(outer);
  auto ai = a.begin();
  for (auto bi = b.begin(); bi != b.end(); ++bi, ++ai) {
    if (ai == a.end() || *ai != *bi) return false;
  }
  return true;
}

Context make_context(const Options& opt, std::string command, std::ostream& out, std::ostream& err) {
  Context ctx{opt, std::move(command), out, err, {}, 0, {}};
  ctx.config = opt.config.empty() ? reference_config() : load_config(opt.config);
  if (opt.seed) ctx.config.world.seed = *opt.seed;
  if (opt.episodes) ctx.config.dataset.episodes = *opt.episodes;
  ctx.config.validate();
  ctx.seed = ctx.config.world.seed;
  ctx.out_dir = opt.out.empty() ? fs::path(ctx.config.output.root) / ctx.command : fs::path(opt.out);
  for (const std::string* input : {&opt.data, &opt.model}) {
    if (!input->empty() && (same_or_inside(ctx.out_dir, *input) || same_or_inside(*input, ctx.out_dir))) {
      throw UsageError("--out must not overlap the input directory " + *input);
    }
  }
  return ctx;
}

void begin(Context& ctx) {
  fs::create_directories(ctx.out_dir);
  write_resolved_config(ctx.out_dir, ctx.config);
}

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
  return value;
}

void print_rmse(std::ostream& os, const std::string& name, const RmseReport& r) {
  os << std::left << std::setw(12) << name << std::right << std::fixed << std::setprecision(3)
     << " overall " << r.overall << "  LOS " << r.of(Condition::kLos) << "  NLOS " << r.of(Condition::kNlos)
     << "  TRANSITION " << r.of(Condition::kTransition) << "  (n=" << r.total << ")\n";
  os.unsetf(std::ios::floatfield);
}

int cmd_generate(Context& ctx) {
  begin(ctx);
  generate_dataset(ctx.config, ctx.seed, static_cast<std::size_t>(ctx.config.dataset.episodes), ctx.out_dir,
                   ctx.config.dataset.workers);
  ctx.out << "wrote " << ctx.config.dataset.episodes << " episodes to " << ctx.out_dir.string() << "\n";
  return kExitOk;
}

int cmd_train_predictor(Context& ctx) {
  const auto& data = require(ctx.opt.data, "--data");
  if (!ctx.opt.variant.empty()) ctx.config.predictor.variant = ctx.opt.variant;
  const PredictorVariant variant = parse_predictor_variant(ctx.config.predictor.variant);
  begin(ctx);
  const auto set = pipeline::read_dataset(data);
  const auto split = pipeline::predictor_windows(ctx.config, set);
  ctx.err << "training " << variant_name(variant) << " on " << split.train.size() << " windows\n";
  const auto result = pipeline::train_predictor(ctx.config, split, variant, ctx.seed);
  nn::save_checkpoint(ctx.out_dir / "model", result.model.to_checkpoint());
  CsvTable t;
  t.header = {"epoch", "train_loss", "val_loss"};
  for (const auto& e : result.history) {
    t.rows.push_back({std::to_string(e.epoch), format_double(e.train_loss), format_double(e.val_loss)});
  }
  write_csv(ctx.out_dir / "history.csv", t);
  print_rmse(ctx.out, std::string(variant_name(variant)), evaluate_rmse(result.model, split.test));
  return kExitOk;
}

int cmd_eval_predictor(Context& ctx) {
  const auto& data = require(ctx.opt.data, "--data");
  const auto model = PredictorModel::from_checkpoint(nn::load_checkpoint(require(ctx.opt.model, "--model")));
  ctx.config.predictor.variant = std::string(variant_name(model.variant));
  ctx.config.predictor.t_past = model.dims.t_past;
  begin(ctx);
  const auto set = pipeline::read_dataset(data);
  const auto split = pipeline::predictor_windows(ctx.config, set);
  if (split.test.empty()) throw DomainError("the dataset has no held-out episodes");
  const RmseReport report = evaluate_rmse(model, split.test);
  const RmseReport persistence = rmse_report(persistence_predictions(split.test), split.test);
  write_rmse_report(ctx.out_dir / "rmse_report.csv", report);
  write_rmse_report(ctx.out_dir / "rmse_persistence.csv", persistence);
  print_rmse(ctx.out, std::string(variant_name(model.variant)), report);
  print_rmse(ctx.out, "PERSISTENCE", persistence);
  return kExitOk;
}

int cmd_train_handover(Context& ctx) {
  if (!ctx.opt.variant.empty()) ctx.config.handover.observation = ctx.opt.variant;
  const Observation obs = parse_observation(ctx.config.handover.observation);
  begin(ctx);
  ctx.err << "training " << observation_name(obs) << "-RL for " << ctx.config.handover.train_steps << " steps\n";
  const auto result = dqn_train(ctx.config, obs, dqn_config(ctx.config), ctx.seed);
  nn::save_checkpoint(ctx.out_dir / "model", result.model.to_checkpoint());
  CsvTable t;
  t.header = {"episode", "return_mbit"};
  for (std::size_t i = 0; i < result.episode_returns.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_double(result.episode_returns[i])});
  }
  write_csv(ctx.out_dir / "returns.csv", t);
  ctx.out << "trained " << observation_name(obs) << "-RL over " << result.episode_returns.size() << " episodes\n";
  return kExitOk;
}

int cmd_eval_handover(Context& ctx) {
  const auto model = QModel::from_checkpoint(nn::load_checkpoint(require(ctx.opt.model, "--model")));
  ctx.config.handover.observation = std::string(observation_name(model.observation));
  begin(ctx);
  const int n = ctx.config.handover.eval_episodes;
  std::vector<Policy> policies;
  policies.push_back({Policy::Kind::kQModel, &model, 0.0, std::string(observation_name(model.observation)) + "-RL"});
  policies.push_back({Policy::Kind::kAlwaysStay, nullptr, 0.0, "ALWAYS_STAY"});
  policies.push_back({Policy::Kind::kRssThreshold, nullptr, ctx.config.handover.threshold_db, "RSS_THRESHOLD"});
  std::vector<PolicyReport> reports;
  for (const auto& p : policies) reports.push_back(evaluate_policy(ctx.config, p, n, ctx.seed));
  write_policy_report(ctx.out_dir / "policy_report.csv", reports);
  write_qtrace(ctx.out_dir / "qtrace.csv", q_trace(model, ctx.config));
  for (const auto& r : reports) {
    ctx.out << std::left << std::setw(14) << r.policy << std::right << " throughput " << r.avg_throughput_mbps
            << " Mbit/s  handovers " << r.handover_count << "  mean lead " << r.mean_lead_ticks << " ticks\n";
  }
  return kExitOk;
}

int cmd_train_inpaint(Context& ctx) {
  const auto& data = require(ctx.opt.data, "--data");
  if (!ctx.opt.variant.empty()) ctx.config.inpaint.variant = ctx.opt.variant;
  const InpaintVariant variant = parse_inpaint_variant(ctx.config.inpaint.variant);
  begin(ctx);
  const auto set = pipeline::read_dataset(data);
  const auto split = pipeline::inpaint_samples(ctx.config, set, ctx.seed);
  ctx.err << "training " << inpaint_variant_name(variant) << " on " << split.train.size() << " samples\n";
  const auto result = pipeline::train_inpainter(ctx.config, split, variant, ctx.seed);
  nn::save_checkpoint(ctx.out_dir / "model", result.model.to_checkpoint());
  CsvTable t;
  t.header = {"step", "loss"};
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_double(result.loss_history[i])});
  }
  write_csv(ctx.out_dir / "loss.csv", t);
  ctx.out << "trained " << inpaint_variant_name(variant) << " for " << result.model.step << " steps\n";
  return kExitOk;
}

int cmd_eval_inpaint(Context& ctx) {
  const auto& data = require(ctx.opt.data, "--data");
  const auto model = InpaintModel::from_checkpoint(nn::load_checkpoint(require(ctx.opt.model, "--model")));
  ctx.config.inpaint.variant = std::string(inpaint_variant_name(model.variant));
  ctx.config.inpaint.rss_window = model.dims.rss_window;
  begin(ctx);
  const auto set = pipeline::read_dataset(data);
  const auto split = pipeline::inpaint_samples(ctx.config, set, ctx.seed);
  if (split.test.empty()) throw DomainError("the dataset has no held-out episodes");
  const std::vector<pipeline::InpaintEvaluation> evals{pipeline::evaluate_inpainter(ctx.config, model, split.test),
                                                       pipeline::evaluate_background_fill(ctx.config, split.test)};
  write_inpaint_report(ctx.out_dir / "inpaint_report.csv", evals[0].rows);
  write_inpaint_report(ctx.out_dir / "inpaint_background.csv", evals[1].rows);
  pipeline::write_inpaint_summary(ctx.out_dir / "inpaint_summary.csv", evals);
  // A few examples with a pedestrian behind the mask.
  int written = 0;
  for (std::size_t i = 0; i < split.test.size() && written < 4; ++i) {
    if (!evals[0].rows[i].metrics.presence_true) continue;
    const auto& s = split.test[i];
    const DepthFrame masked = masked_input(s);
    write_triptych(ctx.out_dir / ("triptych_" + std::to_string(i) + ".pgm"), *s.truth, masked,
                   reconstruct(model, masked, s.rss), ctx.config.camera);
    i += 30;
    ++written;
  }
  for (const auto& e : evals) {
    ctx.out << std::left << std::setw(12) << e.method << std::right << " median masked MSE (present) "
            << e.median_mse_present << " m^2  balanced accuracy " << e.balanced_accuracy << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(Context& ctx) {
  nn::GradcheckOptions options;
  options.seed = ctx.seed;
  const auto rows = nn::run_gradcheck(options);
  if (!ctx.opt.out.empty()) {
    begin(ctx);
    CsvTable t;
    t.header = {"layer", "instances", "checked", "max_rel_error"};
    for (const auto& r : rows) {
      t.rows.push_back({r.layer, std::to_string(r.instances), std::to_string(r.checked),
                        format_double(r.max_rel_error)});
    }
    write_csv(ctx.out_dir / "gradcheck.csv", t);
  }
  constexpr double kTolerance = 1e-4;
  bool ok = true;
  ctx.out << std::left << std::setw(16) << "layer" << std::setw(11) << "instances" << std::setw(10) << "checked"
          << "max_rel_error\n";
  for (const auto& r : rows) {
    ok = ok && r.max_rel_error < kTolerance;
    ctx.out << std::left << std::setw(16) << r.layer << std::setw(11) << r.instances << std::setw(10) << r.checked
            << std::scientific << std::setprecision(3) << r.max_rel_error << "\n";
    ctx.out.unsetf(std::ios::floatfield);
  }
  if (!ok) {
    ctx.err << "gradient check failed: max relative error >= " << kTolerance << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision-aided mmWave experiments on a synthetic room", args.empty() ? "visionrf" : args.front()};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  Options opt;
  using Handler = int (*)(Context&);
  struct Command {
    const char* name;
    const char* help;
    Handler handler;
    bool data;
    bool model;
    const char* variants;
  };
  const Command commands[] = {
      {"generate", "Render episodes (frames, rss traces, condition labels)", cmd_generate, false, false, nullptr},
      {"train-predictor", "Train an rss look-ahead predictor", cmd_train_predictor, true, false, "IMG|RF|IMG_RF"},
      {"train-handover", "Train a DQN handover policy", cmd_train_handover, false, false, "IMG|RF"},
      {"train-inpaint", "Train a depth inpainter", cmd_train_inpaint, true, false, "IMG_RF|RF_ONLY"},
      {"eval-predictor", "RMSE per condition on held-out episodes", cmd_eval_predictor, true, true, nullptr},
      {"eval-handover", "Throughput, handovers and lead time against baselines", cmd_eval_handover, false, true,
       nullptr},
      {"eval-inpaint", "Masked-region error and presence detection", cmd_eval_inpaint, true, true, nullptr},
      {"gradcheck", "Compare analytic gradients with finite differences", cmd_gradcheck, false, false, nullptr},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config, "Scenario file (TOML); the reference scenario when omitted")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Master seed (overrides world.seed)");
    sub->add_option("--out", opt.out, "Output directory (default <output.root>/<command>)");
    if (c.data) sub->add_option("--data", opt.data, "Episode directory written by generate")->required();
    if (c.model) sub->add_option("--model", opt.model, "Checkpoint directory")->required();
    if (c.variants) sub->add_option("--variant", opt.variant, c.variants)->check(CLI::IsMember(
        [&] {
          std::vector<std::string> v;
          std::string s = c.variants;
          for (std::size_t p = 0; p != std::string::npos;) {
            const std::size_t q = s.find('|', p);
            v.push_back(s.substr(p, q == std::string::npos ? q : q - p));
            p = q == std::string::npos ? q : q + 1;
          }
          return v;
        }()));
    if (std::string_view(c.name) == "generate") {
      sub->add_option("--episodes", opt.episodes, "Episode count (overrides dataset.episodes)")
          ->check(CLI::PositiveNumber);
    }
  }

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const Command* command = nullptr;
  for (const auto& c : commands) {
    if (chosen->get_name() == c.name) command = &c;
  }
  try {
    Context ctx = make_context(opt, command->name, out, err);
    return command->handler(ctx);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << chosen->help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace visionrf::cli
