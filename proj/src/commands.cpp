/* Copyright 2026 The fopkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "fopkit/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <vector>

#include "fopkit/binary_io.hpp"
#include "fopkit/checkpoint.hpp"
#include "fopkit/config.hpp"
#include "fopkit/distsim.hpp"
#include "fopkit/metrics.hpp"
#include "fopkit/trainer.hpp"
#include "fopkit/verify.hpp"
#include "json.hpp"

namespace fopkit {
namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Runs body and converts failures to the single-line error protocol.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "parse_error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal_error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

std::ofstream open_output(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

double condition(const Matrix& m) {
  const auto eig = sym_eigendecomposition(m);
  const double lo = eig.values.front();
  return lo > 0.0 ? eig.values.back() / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotSymmetric:
    case ErrorKind::kFactorizationFailed:
    case ErrorKind::kConvergenceFailure:
    case ErrorKind::kStaleInverseCache:
    case ErrorKind::kDegenerateDenominator:
    case ErrorKind::kNonFiniteUpdate:
    case ErrorKind::kTooLargeForDenseDiagnostics:
      return kExitNumerical;
    default:
      return kExitUsage;
  }
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(args.config);
    if (args.seed) cfg.set_seed(*args.seed);
    if (args.epochs) cfg.epochs = *args.epochs;
    if (args.metrics) cfg.output.metrics = args.metrics->string();

    std::optional<Checkpoint> resume;
    if (args.resume) resume = load_checkpoint(*args.resume);
    const TrainData data = load_data(cfg);

    std::optional<std::ofstream> metrics;
    if (!cfg.output.metrics.empty()) metrics.emplace(open_output(cfg.output.metrics, resume.has_value()));
    TrainHooks hooks;
    if (metrics) {
      hooks.on_record = [&](const MetricsRecord& rec) { *metrics << to_json_line(rec) << "\n"; };
    }
    if (!cfg.output.checkpoint.empty()) {
      hooks.on_checkpoint = [&](const Checkpoint& ckpt, bool) {
        const std::filesystem::path path = cfg.output.checkpoint;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        save_checkpoint(path, ckpt);
      };
    }
    const TrainResult result = train(cfg, data, hooks, resume ? &*resume : nullptr);
    if (metrics) {
      metrics->flush();
      if (!*metrics) throw Error(ErrorKind::kIo, "failed writing " + cfg.output.metrics);
    }
    out << "optimizer " << to_string(cfg.optimizer.kind) << ", " << data.train.size() << " samples, "
        << result.model.parameter_count() << " parameters\n";
    if (result.epochs.empty()) {
      out << "nothing to do: checkpoint already at epoch " << (resume ? resume->epoch : 0) << "\n";
    } else {
      const auto& last = result.epochs.back();
      out << "epoch " << last.epoch + 1 << "/" << cfg.epochs << ": mean loss " << num(last.mean_loss)
          << ", train accuracy " << num(last.train_accuracy) << ", steps " << result.state.step << "\n";
    }
    if (data.eval) {
      const auto ev = evaluate(result.model, data.eval->features, data.eval->labels);
      out << "eval loss " << num(ev.loss) << ", eval accuracy " << num(ev.accuracy) << "\n";
    }
    return kExitOk;
  });
}

int cmd_verify(const VerifyArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    VerifyOptions opts;
    if (args.seed) opts.seed = *args.seed;
    opts.instances = args.instances;
    bool any_known = args.suite == "all";
    for (const auto& s : suite_names()) any_known = any_known || s == args.suite;
    if (!any_known) throw Error(ErrorKind::kInvalidParam, "unknown suite '" + args.suite + "'");
    bool all_passed = true;
    for (const std::string& name : args.suite == "all" ? suite_names() : std::vector<std::string>{args.suite}) {
      const SuiteReport rep = run_suite(name, opts);
      for (const auto& p : rep.properties) {
        out << (p.passed ? "PASS " : "FAIL ") << rep.suite << "." << p.name << ": " << p.detail << "\n";
      }
      for (const auto& note : rep.notes) out << "  note " << rep.suite << ": " << note << "\n";
      out << (rep.passed() ? "suite " : "suite ") << rep.suite << (rep.passed() ? " passed" : " FAILED") << " in "
          << num(rep.seconds) << " s\n";
      out.flush();
      all_passed = all_passed && rep.passed();
    }
    if (!all_passed) err << "verify_failed: one or more properties failed\n";
    return all_passed ? kExitOk : kExitVerifyFailed;
  });
}

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = load_config(args.config);
    if (args.seed) cfg.set_seed(*args.seed);
    const std::size_t workers = args.workers.value_or(cfg.simulate.workers);
    if (cfg.optimizer.kind != OptimizerKind::kFop) {
      throw Error(ErrorKind::kConfig, cfg.source + ": simulate requires optimizer.kind = fop");
    }
    std::filesystem::path log_path = cfg.simulate.log;
    std::filesystem::path report_path = cfg.simulate.report;
    if (args.out_dir) {
      log_path = *args.out_dir / "message_log.csv";
      report_path = *args.out_dir / "equivalence.json";
    }
    const TrainData data = load_data(cfg);
    Model sim = initial_model(cfg, data.train);
    Model ref = sim;
    OptimizerState sim_state = OptimizerState::create(sim, cfg.optimizer);
    OptimizerState ref_state = OptimizerState::create(ref, cfg.optimizer);
    MessageLog log;

    const std::size_t n = data.train.size();
    std::vector<std::vector<std::size_t>> batches;
    std::size_t epoch = 0;
    double max_abs = 0.0;
    double max_rel = 0.0;
    nlohmann::ordered_json per_step = nlohmann::ordered_json::array();
    for (std::size_t step = 0; step < cfg.simulate.steps; ++step) {
      if (batches.empty()) {
        batches = epoch_batches(n, cfg.batch_size, cfg.seed, epoch++);
        std::reverse(batches.begin(), batches.end());
      }
      const auto rows = std::move(batches.back());
      batches.pop_back();
      const SubBatch global = gather_rows(data.train.features, data.train.labels, rows);
      const auto halves = split_batch(global.features, global.labels, split_seed(cfg.seed, step));
      const auto topo = ClusterTopology::from_halves(workers, halves.first.indices, halves.second.indices);
      simulate_fop_step(sim, global.features, global.labels, topo, cfg.optimizer, sim_state, log);
      fop_step(ref, gather_rows(global.features, global.labels, topo.group_rows(true)),
               gather_rows(global.features, global.labels, topo.group_rows(false)), cfg.optimizer, ref_state);
      const auto a = sim.parameters();
      const auto b = ref.parameters();
      double step_abs = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = std::abs(a[k] - b[k]);
        step_abs = std::max(step_abs, d);
        max_rel = std::max(max_rel, d / std::max(1.0, std::abs(b[k])));
      }
      max_abs = std::max(max_abs, step_abs);
      per_step.push_back({{"step", step}, {"max_abs_dtheta", step_abs}});
    }

    const bool passed = max_abs <= cfg.simulate.tolerance;
    nlohmann::ordered_json report;
    report["workers"] = workers;
    report["steps"] = cfg.simulate.steps;
    report["layers"] = sim.num_layers();
    report["parameters"] = sim.parameter_count();
    report["tolerance"] = cfg.simulate.tolerance;
    report["max_abs_dtheta"] = max_abs;
    report["max_rel_dtheta"] = max_rel;
    report["passed"] = passed;
    report["per_step"] = std::move(per_step);
    nlohmann::ordered_json volume = nlohmann::ordered_json::array();
    for (const auto& row : comm_volume_report(log)) {
      volume.push_back({{"step", row.step},
                        {"factor_send", row.factor_send},
                        {"allreduce_g1", row.allreduce_g1},
                        {"allreduce_g2", row.allreduce_g2},
                        {"broadcast_update", row.broadcast_update},
                        {"total", row.total()}});
    }
    report["volume"] = std::move(volume);

    if (!log_path.empty()) {
      auto f = open_output(log_path, false);
      log.write_csv(f);
    }
    if (!report_path.empty()) {
      auto f = open_output(report_path, false);
      f << report.dump(2) << "\n";
    }
    out << "simulated " << cfg.simulate.steps << " steps on " << workers << " workers, " << log.records.size()
        << " messages; max |dtheta| vs single process = " << num(max_abs) << "\n";
    if (!passed) {
      err << "equivalence_failure: max |dtheta| " << num(max_abs) << " exceeds tolerance "
          << num(cfg.simulate.tolerance) << "\n";
      return kExitNumerical;
    }
    return kExitOk;
  });
}

int cmd_inspect(const std::filesystem::path& path, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ckpt = load_checkpoint(path);
    const Model& m = ckpt.model;
    out << "checkpoint " << path.string() << " (format " << kCheckpointVersion << ")\n";
    out << "epochs completed: " << ckpt.epoch << "\n";
    out << "model: " << m.num_layers() << " layers, " << m.parameter_count() << " parameters\n";
    for (std::size_t i = 0; i < m.num_layers(); ++i) {
      const auto& l = m.layer(i);
      out << "  layer " << i << ": " << l.in_features() << " -> " << l.out_features() << " ("
          << to_string(l.activation) << ")\n";
    }
    const auto& s = ckpt.state;
    out << "optimizer: " << to_string(ckpt.kind) << ", step " << s.step << ", lr " << num(s.lr) << "\n";
    out << "scheduler: lr " << num(ckpt.scheduler_lr) << ", best " << num(ckpt.scheduler_best) << ", bad epochs "
        << ckpt.scheduler_bad_epochs << "\n";
    if (!s.blocks.empty()) out << "fisher blocks (condition = mu_max / mu_min):\n";
    for (const auto& b : s.blocks) {
      out << "  layer " << b.layer_id() << ": A " << b.input_dim() << "x" << b.input_dim() << " cond "
          << num(condition(b.a())) << ", G " << b.output_dim() << "x" << b.output_dim() << " cond "
          << num(condition(b.g()));
      if (b.has_inverse()) {
        out << ", inverse damping " << num(b.damping()) << (b.inverse_is_current() ? " (current)" : " (stale)");
      } else {
        out << ", no inverse";
      }
      out << "\n";
    }
    return kExitOk;
  });
}

int cmd_export_csv(const std::filesystem::path& metrics, const std::optional<std::filesystem::path>& csv,
                   std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(metrics);
    if (!in) throw Error(ErrorKind::kIo, "cannot open " + metrics.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    if (csv) {
      auto f = open_output(*csv, false);
      metrics_to_csv(lines, f);
    } else {
      metrics_to_csv(lines, out);
    }
    return kExitOk;
  });
}

}  // namespace fopkit
