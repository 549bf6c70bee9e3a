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

#include "fopkit/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "fopkit/binary_io.hpp"
#include "fopkit/error.hpp"

namespace fopkit {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct Entry {
  std::string value;
  std::size_t line = 0;
  bool used = false;
};

class ConfigReader {
 public:
  ConfigReader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(std::size_t line, const std::string& reason) const {
    throw Error(ErrorKind::kConfig, source_ + ":" + std::to_string(line) + ": " + reason);
  }

  void parse(std::string_view text) {
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto end = text.find('\n', pos);
      std::string_view line = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
      pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
      ++line_no;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(line_no, "malformed section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        static const char* kSections[] = {"data", "model", "optimizer", "scheduler", "output", "simulate"};
        bool known = false;
        for (const char* s : kSections) known = known || section == s;
        if (!known) fail(line_no, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
      const std::string key = std::string(trim(line.substr(0, eq)));
      const std::string value = std::string(trim(line.substr(eq + 1)));
      if (key.empty()) fail(line_no, "missing key");
      if (value.empty()) fail(line_no, "missing value for '" + key + "'");
      const std::string full = section.empty() ? key : section + "." + key;
      if (entries_.count(full) != 0) {
        fail(line_no, "duplicate key '" + full + "' (first set on line " + std::to_string(entries_[full].line) + ")");
      }
      entries_[full] = Entry{value, line_no, false};
    }
  }

  // Calls fn(value, line) when the key is present.
  void with(const std::string& key, const std::function<void(const std::string&, std::size_t)>& fn) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return;
    it->second.used = true;
    try {
      fn(it->second.value, it->second.line);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kConfig) throw;
      fail(it->second.line, key + ": " + e.what());
    }
  }

  void size(const std::string& key, std::size_t& out) {
    with(key, [&](const std::string& v, std::size_t line) { out = parse_size(v, line, key); });
  }
  void u64(const std::string& key, std::uint64_t& out) {
    with(key, [&](const std::string& v, std::size_t line) { out = parse_size(v, line, key); });
  }
  void real(const std::string& key, double& out) {
    with(key, [&](const std::string& v, std::size_t line) { out = parse_real(v, line, key); });
  }
  void text(const std::string& key, std::string& out) {
    with(key, [&](const std::string& v, std::size_t) { out = v; });
  }
  void flag(const std::string& key, bool& out) {
    with(key, [&](const std::string& v, std::size_t line) {
      if (v == "true" || v == "yes" || v == "1") {
        out = true;
      } else if (v == "false" || v == "no" || v == "0") {
        out = false;
      } else {
        fail(line, key + ": expected true or false, got '" + v + "'");
      }
    });
  }

  std::size_t parse_size(const std::string& v, std::size_t line, const std::string& key) const {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      fail(line, key + ": expected a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::size_t>(out);
  }

  double parse_real(const std::string& v, std::size_t line, const std::string& key) const {
    errno = 0;
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out)) {
      fail(line, key + ": expected a finite number, got '" + v + "'");
    }
    return out;
  }

  void check_unused() const {
    for (const auto& [key, entry] : entries_) {
      if (!entry.used) fail(entry.line, "unknown key '" + key + "'");
    }
  }

  std::size_t line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
};

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.emplace_back(trim(item));
  return out;
}

}  // namespace

std::vector<std::size_t> RunConfig::widths(std::size_t input_dim, std::size_t classes) const {
  std::vector<std::size_t> w;
  w.push_back(input_dim);
  w.insert(w.end(), model.hidden.begin(), model.hidden.end());
  w.push_back(classes);
  return w;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  optimizer.seed = value;
}

RunConfig parse_config(std::string_view text, std::string source) {
  ConfigReader r(source);
  r.parse(text);
  RunConfig cfg;
  cfg.source = source;

  r.u64("seed", cfg.seed);
  r.size("epochs", cfg.epochs);
  r.size("batch_size", cfg.batch_size);

  r.with("data.kind", [&](const std::string& v, std::size_t line) {
    if (v == "spirals") {
      cfg.data.kind = DataKind::kSpirals;
    } else if (v == "blobs") {
      cfg.data.kind = DataKind::kBlobs;
    } else if (v == "idx") {
      cfg.data.kind = DataKind::kIdx;
    } else {
      r.fail(line, "data.kind: expected spirals, blobs or idx, got '" + v + "'");
    }
  });
  r.size("data.classes", cfg.data.classes);
  r.size("data.per_class", cfg.data.per_class);
  r.size("data.dim", cfg.data.dim);
  r.real("data.noise", cfg.data.noise);
  r.real("data.turns", cfg.data.turns);
  r.real("data.spread", cfg.data.spread);
  r.size("data.eval_per_class", cfg.data.eval_per_class);
  r.with("data.seed", [&](const std::string& v, std::size_t line) { cfg.data.seed = r.parse_size(v, line, "data.seed"); });
  r.text("data.images", cfg.data.images);
  r.text("data.labels", cfg.data.labels);
  r.text("data.eval_images", cfg.data.eval_images);
  r.text("data.eval_labels", cfg.data.eval_labels);

  r.with("model.hidden", [&](const std::string& v, std::size_t line) {
    cfg.model.hidden.clear();
    if (v == "none") return;
    for (const auto& item : split_list(v)) {
      const std::size_t w = r.parse_size(item, line, "model.hidden");
      if (w == 0) r.fail(line, "model.hidden: widths must be positive");
      cfg.model.hidden.push_back(w);
    }
  });
  r.with("model.activation", [&](const std::string& v, std::size_t) { cfg.model.activation = parse_activation(v); });

  auto& opt = cfg.optimizer;
  r.with("optimizer.kind", [&](const std::string& v, std::size_t) { opt.kind = parse_optimizer_kind(v); });
  r.real("optimizer.lr", opt.lr);
  r.real("optimizer.damping", opt.damping);
  r.real("optimizer.momentum", opt.momentum);
  r.real("optimizer.weight_decay", opt.weight_decay);
  r.flag("optimizer.precond_momentum", opt.precond_momentum);
  r.real("optimizer.adam_beta1", opt.adam_beta1);
  r.real("optimizer.adam_beta2", opt.adam_beta2);
  r.real("optimizer.adam_eps", opt.adam_eps);
  r.real("optimizer.ema_decay", opt.ema_decay);
  r.size("optimizer.cov_interval", opt.curvature.cov_interval);
  r.size("optimizer.inv_interval", opt.curvature.inv_interval);
  r.with("optimizer.beta", [&](const std::string& v, std::size_t line) {
    if (v == "adaptive") {
      opt.fop.beta_mode = BetaMode::kAdaptive;
    } else if (v == "zero") {
      opt.fop.beta_mode = BetaMode::kZero;
    } else {
      opt.fop.beta_mode = BetaMode::kFixed;
      opt.fop.beta_value = r.parse_real(v, line, "optimizer.beta");
    }
  });
  r.with("optimizer.eta", [&](const std::string& v, std::size_t line) {
    if (v == "adaptive") {
      opt.fop.eta_mode = EtaMode::kAdaptive;
    } else {
      opt.fop.eta_mode = EtaMode::kFixed;
      opt.fop.eta_value = r.parse_real(v, line, "optimizer.eta");
    }
  });
  r.with("optimizer.epsilon", [&](const std::string& v, std::size_t line) {
    if (v == "auto") {
      opt.fop.epsilon.reset();
    } else {
      opt.fop.epsilon = r.parse_real(v, line, "optimizer.epsilon");
    }
  });
  r.with("optimizer.eta_clamp", [&](const std::string& v, std::size_t line) {
    const auto parts = split_list(v);
    if (parts.size() != 2) r.fail(line, "optimizer.eta_clamp: expected 'lo, hi'");
    opt.fop.eta_clamp.lo = r.parse_real(parts[0], line, "optimizer.eta_clamp");
    opt.fop.eta_clamp.hi = r.parse_real(parts[1], line, "optimizer.eta_clamp");
  });
  r.with("optimizer.total_gradient", [&](const std::string& v, std::size_t line) {
    if (v == "mean") {
      opt.fop.total = TotalGradient::kMean;
    } else if (v == "sum") {
      opt.fop.total = TotalGradient::kSum;
    } else {
      r.fail(line, "optimizer.total_gradient: expected mean or sum");
    }
  });

  auto& sch = opt.scheduler;
  r.with("scheduler.kind", [&](const std::string& v, std::size_t) { sch.kind = parse_scheduler_kind(v); });
  r.size("scheduler.max_epoch", sch.max_epoch);
  r.real("scheduler.floor", sch.cosine_floor);
  r.real("scheduler.cosine_factor", sch.cosine_factor);
  r.size("scheduler.patience", sch.patience);
  r.real("scheduler.factor", sch.plateau_factor);
  r.real("scheduler.threshold", sch.plateau_threshold);

  r.text("output.metrics", cfg.output.metrics);
  r.text("output.checkpoint", cfg.output.checkpoint);
  r.size("output.checkpoint_every", cfg.output.checkpoint_every);
  r.size("output.log_every", cfg.output.log_every);
  r.flag("output.kl_diagnostics", cfg.output.kl_diagnostics);

  r.size("simulate.steps", cfg.simulate.steps);
  r.size("simulate.workers", cfg.simulate.workers);
  r.text("simulate.log", cfg.simulate.log);
  r.text("simulate.report", cfg.simulate.report);
  r.real("simulate.tolerance", cfg.simulate.tolerance);

  r.check_unused();

  // Cross-field validation, attributed to the most relevant line.
  cfg.optimizer.seed = cfg.seed;
  auto check = [&](bool ok, const std::string& key, const std::string& reason) {
    if (!ok) r.fail(r.line_of(key), reason);
  };
  check(cfg.epochs >= 1, "epochs", "epochs must be >= 1");
  check(cfg.output.log_every >= 1, "output.log_every", "output.log_every must be >= 1");
  check(cfg.data.classes >= 1 && cfg.data.per_class >= 1, "data.per_class", "data counts must be >= 1");
  check(cfg.data.kind != DataKind::kIdx || (!cfg.data.images.empty() && !cfg.data.labels.empty()), "data.kind",
        "idx data needs data.images and data.labels");
  check(cfg.optimizer.kind != OptimizerKind::kFop || cfg.batch_size == 0 || cfg.batch_size >= 2, "batch_size",
        "FOP needs batches of at least 2 samples");
  try {
    cfg.optimizer.validate();
  } catch (const Error& e) {
    r.fail(r.line_of("optimizer.kind"), e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, path.string() + ":0: " + e.what());
  }
  RunConfig cfg = parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                               path.string());
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(cfg.data.images);
  resolve(cfg.data.labels);
  resolve(cfg.data.eval_images);
  resolve(cfg.data.eval_labels);
  resolve(cfg.output.metrics);
  resolve(cfg.output.checkpoint);
  resolve(cfg.simulate.log);
  resolve(cfg.simulate.report);
  return cfg;
}

}  // namespace fopkit
