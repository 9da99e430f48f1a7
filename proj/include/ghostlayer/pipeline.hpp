#pragma once

// End-to-end reconstruction jobs: option parsing (flags over config file
// over defaults), preprocessing, one optimisation per style image or a
// single multi-style optimisation, ensemble averaging and atomic output.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "ghostlayer/error.hpp"
#include "ghostlayer/imaging.hpp"
#include "ghostlayer/losses.hpp"
#include "ghostlayer/network.hpp"
#include "ghostlayer/optimizer.hpp"
#include "ghostlayer/weights.hpp"

namespace ghostlayer {

enum class EnsembleMode { kPerStyleThenMean, kMultiStyleSingleRun };

struct Preprocess {
  bool grayscale = false;
  bool invert = false;
  std::size_t width = 1412;
  std::size_t height = 2000;

  friend bool operator==(const Preprocess&, const Preprocess&) = default;
};

struct TransferJob {
  std::filesystem::path content_path;
  std::vector<std::filesystem::path> style_paths;
  std::filesystem::path weight_path;
  std::filesystem::path output_path;
  std::filesystem::path trace_path;  // empty: derived from output_path
  std::filesystem::path report_path;        // optional
  std::filesystem::path dump_content_path;  // optional: preprocessed content image
  LossConfig loss = default_loss_config();
  OptimizerConfig optimizer{};
  Preprocess preprocess{};
  PoolMode pool_mode = PoolMode::kAverage;
  EnsembleMode ensemble = EnsembleMode::kPerStyleThenMean;
  std::size_t jobs = 1;
  bool quiet = false;

  friend bool operator==(const TransferJob&, const TransferJob&) = default;
};

struct RunReport {
  std::filesystem::path output_path;
  std::vector<std::filesystem::path> trace_paths;
  double wall_seconds = 0.0;
  std::string config_echo;
  std::vector<std::vector<TraceRow>> traces;  // one per optimisation run
};

// Thrown by parse_config for --help; carries the help text.
class HelpRequested : public std::exception {
 public:
  explicit HelpRequested(std::string text) : text_(std::move(text)) {}
  const char* what() const noexcept override { return text_.c_str(); }

 private:
  std::string text_;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Loss values as they appear in both the trace CSV and the progress log.
inline std::string format_loss(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct OptionDef {
  const char* name;
  enum Kind { kValue, kMulti, kFlag } kind;
  const char* help;
};

inline const std::vector<OptionDef>& option_table() {
  static const std::vector<OptionDef> table = {
      {"content", OptionDef::kValue, "content image (PNG): the underdrawing"},
      {"style", OptionDef::kMulti, "style image (PNG); repeat for an ensemble"},
      {"weights", OptionDef::kValue, "GLW1 weight file"},
      {"output", OptionDef::kValue, "output PNG"},
      {"alpha", OptionDef::kValue, "content cost weight (default 10)"},
      {"beta", OptionDef::kValue, "style cost weight (default 40)"},
      {"iterations", OptionDef::kValue, "optimisation steps (default 10000)"},
      {"lr", OptionDef::kValue, "learning rate (default 1.0)"},
      {"method", OptionDef::kValue, "adam|sgd (default adam)"},
      {"seed", OptionDef::kValue, "noise seed (default 0)"},
      {"init", OptionDef::kValue, "noise|content (default noise)"},
      {"noise-ratio", OptionDef::kValue, "noise fraction of the noise init (default 1)"},
      {"size", OptionDef::kValue, "working size WxH (default 1412x2000)"},
      {"grayscale", OptionDef::kFlag, "convert the content image to grayscale"},
      {"invert", OptionDef::kFlag, "use the negative of the content image"},
      {"content-layer", OptionDef::kValue, "content layer (default conv4_2; 'none' disables)"},
      {"style-layers", OptionDef::kValue, "comma-separated style layers"},
      {"style-weights", OptionDef::kValue, "comma-separated style layer weights"},
      {"pool", OptionDef::kValue, "avg|max pooling (default avg)"},
      {"ensemble", OptionDef::kValue, "per|multi (default per)"},
      {"jobs", OptionDef::kValue, "parallel ensemble runs (default 1)"},
      {"trace", OptionDef::kValue, "loss trace CSV (default: output with .csv)"},
      {"checkpoint-every", OptionDef::kValue, "steps between loss records (default 100)"},
      {"report", OptionDef::kValue, "write the resolved configuration and run summary here"},
      {"dump-content", OptionDef::kValue, "write the preprocessed content image here"},
      {"quiet", OptionDef::kFlag, "no progress lines"},
  };
  return table;
}

using RawOptions = std::map<std::string, std::vector<std::string>>;

inline RawOptions read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path.string() + "'");
  RawOptions raw;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = option_table();
    const auto def = std::find_if(table.begin(), table.end(),
                                  [&](const OptionDef& d) { return key == d.name; });
    if (def == table.end()) {
      throw UsageError(path.string() + ":" + std::to_string(line_no) + ": unknown option '" + key + "'");
    }
    auto& slot = raw[key];
    if (def->kind == OptionDef::kMulti) {
      slot.push_back(value);
    } else {
      slot = {value};
    }
  }
  return raw;
}

inline double parse_number(const std::string& flag, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError("--" + flag + ": '" + text + "' is not a number");
  }
}

inline std::uint64_t parse_count(const std::string& flag, const std::string& text, bool allow_zero) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
    throw UsageError("--" + flag + ": '" + text + "' is not a non-negative integer");
  }
  try {
    const std::uint64_t v = std::stoull(text);
    if (!allow_zero && v == 0) throw UsageError("--" + flag + " must be at least 1");
    return v;
  } catch (const std::out_of_range&) {
    throw UsageError("--" + flag + ": '" + text + "' is out of range");
  }
}

inline bool parse_bool(const std::string& flag, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw UsageError("--" + flag + ": '" + text + "' is not a boolean");
}

inline TransferJob job_from_options(const RawOptions& opts) {
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = opts.find(key);
    if (it == opts.end() || it->second.empty()) return std::nullopt;
    return it->second.back();
  };
  auto required = [&](const char* key) -> std::string {
    auto v = get(key);
    if (!v || v->empty()) throw UsageError("missing required option --" + std::string(key));
    return *v;
  };

  TransferJob job;
  job.content_path = required("content");
  if (auto it = opts.find("style"); it != opts.end()) {
    for (const auto& s : it->second) job.style_paths.emplace_back(s);
  }
  if (job.style_paths.empty()) throw UsageError("missing required option --style");
  job.weight_path = required("weights");
  job.output_path = required("output");

  if (auto v = get("alpha")) job.loss.alpha = parse_number("alpha", *v);
  if (auto v = get("beta")) job.loss.beta = parse_number("beta", *v);
  if (job.loss.alpha < 0) throw UsageError("--alpha must be >= 0");
  if (job.loss.beta < 0) throw UsageError("--beta must be >= 0");
  if (auto v = get("content-layer")) job.loss.content_layer = *v == "none" ? std::string() : *v;

  std::vector<std::string> layers;
  for (const auto& s : job.loss.style_layers) layers.push_back(s.name);
  if (auto v = get("style-layers")) {
    layers = split(*v, ',');
    if (*v != "none" && layers.empty()) throw UsageError("--style-layers: empty list");
    if (*v == "none") layers.clear();
  }
  job.loss.style_layers = equal_style_weights(layers);
  if (auto v = get("style-weights")) {
    const auto weights = split(*v, ',');
    if (weights.size() != layers.size()) {
      throw UsageError("--style-weights has " + std::to_string(weights.size()) +
                       " entries but --style-layers has " + std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double w = parse_number("style-weights", weights[i]);
      if (w < 0) throw UsageError("--style-weights: negative weight " + weights[i]);
      job.loss.style_layers[i].weight = w;
    }
  }
  if (job.loss.content_layer.empty() && job.loss.style_layers.empty()) {
    throw UsageError("both the content layer and the style layers are disabled");
  }

  auto& opt = job.optimizer;
  if (auto v = get("iterations")) opt.iterations = parse_count("iterations", *v, false);
  if (auto v = get("lr")) {
    opt.learning_rate = parse_number("lr", *v);
    if (opt.learning_rate <= 0) throw UsageError("--lr must be positive");
  }
  if (auto v = get("method")) {
    if (*v == "adam") {
      opt.method = OptimizerMethod::kAdam;
    } else if (*v == "sgd") {
      opt.method = OptimizerMethod::kSgd;
    } else {
      throw UsageError("--method must be adam or sgd, got '" + *v + "'");
    }
  }
  if (auto v = get("seed")) opt.seed = parse_count("seed", *v, true);
  if (auto v = get("init")) {
    if (*v == "noise") {
      opt.init = InitMode::kNoise;
    } else if (*v == "content") {
      opt.init = InitMode::kContent;
    } else {
      throw UsageError("--init must be noise or content, got '" + *v + "'");
    }
  }
  if (auto v = get("noise-ratio")) {
    opt.noise_ratio = parse_number("noise-ratio", *v);
    if (opt.noise_ratio < 0 || opt.noise_ratio > 1) throw UsageError("--noise-ratio must lie in [0, 1]");
  }
  if (auto v = get("checkpoint-every")) opt.checkpoint_every = parse_count("checkpoint-every", *v, false);

  if (auto v = get("size")) {
    const auto x = v->find('x');
    if (x == std::string::npos) throw UsageError("--size must look like WxH, got '" + *v + "'");
    job.preprocess.width = parse_count("size", v->substr(0, x), false);
    job.preprocess.height = parse_count("size", v->substr(x + 1), false);
  }
  if (auto v = get("grayscale")) job.preprocess.grayscale = parse_bool("grayscale", *v);
  if (auto v = get("invert")) job.preprocess.invert = parse_bool("invert", *v);

  if (auto v = get("pool")) {
    if (*v == "avg" || *v == "average") {
      job.pool_mode = PoolMode::kAverage;
    } else if (*v == "max") {
      job.pool_mode = PoolMode::kMax;
    } else {
      throw UsageError("--pool must be avg or max, got '" + *v + "'");
    }
  }
  if (auto v = get("ensemble")) {
    if (*v == "per") {
      job.ensemble = EnsembleMode::kPerStyleThenMean;
    } else if (*v == "multi") {
      job.ensemble = EnsembleMode::kMultiStyleSingleRun;
    } else {
      throw UsageError("--ensemble must be per or multi, got '" + *v + "'");
    }
  }
  if (auto v = get("jobs")) job.jobs = parse_count("jobs", *v, false);
  if (auto v = get("quiet")) job.quiet = parse_bool("quiet", *v);
  if (auto v = get("trace")) job.trace_path = *v;
  if (auto v = get("report")) job.report_path = *v;
  if (auto v = get("dump-content")) job.dump_content_path = *v;
  if (job.trace_path.empty()) job.trace_path = std::filesystem::path(job.output_path).replace_extension(".csv");

  // Outputs must not clobber inputs or each other.
  std::vector<std::filesystem::path> inputs = {job.content_path, job.weight_path};
  inputs.insert(inputs.end(), job.style_paths.begin(), job.style_paths.end());
  std::vector<std::pair<const char*, std::filesystem::path>> outputs = {
      {"output", job.output_path}, {"trace", job.trace_path}};
  if (!job.report_path.empty()) outputs.emplace_back("report", job.report_path);
  if (!job.dump_content_path.empty()) outputs.emplace_back("dump-content", job.dump_content_path);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto norm = outputs[i].second.lexically_normal();
    for (const auto& in : inputs) {
      if (norm == in.lexically_normal()) {
        throw UsageError(std::string("--") + outputs[i].first + " path '" + outputs[i].second.string() +
                         "' is also an input");
      }
    }
    for (std::size_t j = i + 1; j < outputs.size(); ++j) {
      if (norm == outputs[j].second.lexically_normal()) {
        throw UsageError(std::string("--") + outputs[i].first + " and --" + outputs[j].first +
                         " name the same file");
      }
    }
  }
  return job;
}

}  // namespace detail

// Flags override config-file values, which override defaults.
inline TransferJob parse_config(int argc, const char* const* argv) {
  CLI::App app{"Colour reconstruction of grayscale underdrawings by neural style transfer",
               "ghostlayer"};
  app.set_help_flag("-h,--help", "show this help");
  std::string config_path;
  app.add_option("--config", config_path, "flat key=value file with any of the options below");

  std::map<std::string, std::vector<std::string>> values;
  std::map<std::string, bool> flags;
  std::map<std::string, CLI::Option*> handles;
  for (const auto& def : detail::option_table()) {
    const std::string flag = std::string("--") + def.name;
    switch (def.kind) {
      case detail::OptionDef::kFlag:
        handles[def.name] = app.add_flag(flag, flags[def.name], def.help);
        break;
      case detail::OptionDef::kMulti:
        handles[def.name] = app.add_option(flag, values[def.name], def.help)->take_all();
        break;
      case detail::OptionDef::kValue:
        handles[def.name] = app.add_option(flag, values[def.name], def.help)
                                ->expected(1)
                                ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        break;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  detail::RawOptions raw;
  if (!config_path.empty()) raw = detail::read_config_file(config_path);
  for (const auto& def : detail::option_table()) {
    if (handles[def.name]->count() == 0) continue;
    if (def.kind == detail::OptionDef::kFlag) {
      raw[def.name] = {flags[def.name] ? "true" : "false"};
    } else {
      raw[def.name] = values[def.name];
    }
  }
  return detail::job_from_options(raw);
}

inline TransferJob parse_config(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"ghostlayer"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_config(static_cast<int>(argv.size()), argv.data());
}

// Fully resolved configuration in the config-file format; feeding it back
// through --config reproduces the job.
inline std::string render_config(const TransferJob& job) {
  std::ostringstream os;
  auto kv = [&](const char* k, const std::string& v) { os << k << '=' << v << '\n'; };
  kv("content", job.content_path.string());
  for (const auto& s : job.style_paths) kv("style", s.string());
  kv("weights", job.weight_path.string());
  kv("output", job.output_path.string());
  kv("trace", job.trace_path.string());
  if (!job.report_path.empty()) kv("report", job.report_path.string());
  if (!job.dump_content_path.empty()) kv("dump-content", job.dump_content_path.string());
  kv("alpha", detail::format_double(job.loss.alpha));
  kv("beta", detail::format_double(job.loss.beta));
  kv("content-layer", job.loss.content_layer.empty() ? "none" : job.loss.content_layer);
  std::string layers, weights;
  for (const auto& s : job.loss.style_layers) {
    layers += (layers.empty() ? "" : ",") + s.name;
    weights += (weights.empty() ? "" : ",") + detail::format_double(s.weight);
  }
  kv("style-layers", layers.empty() ? "none" : layers);
  if (!weights.empty()) kv("style-weights", weights);
  const auto& o = job.optimizer;
  kv("iterations", std::to_string(o.iterations));
  kv("lr", detail::format_double(o.learning_rate));
  kv("method", o.method == OptimizerMethod::kAdam ? "adam" : "sgd");
  kv("seed", std::to_string(o.seed));
  kv("init", o.init == InitMode::kNoise ? "noise" : "content");
  kv("noise-ratio", detail::format_double(o.noise_ratio));
  kv("checkpoint-every", std::to_string(o.checkpoint_every));
  kv("size", std::to_string(job.preprocess.width) + "x" + std::to_string(job.preprocess.height));
  kv("grayscale", job.preprocess.grayscale ? "true" : "false");
  kv("invert", job.preprocess.invert ? "true" : "false");
  kv("pool", job.pool_mode == PoolMode::kAverage ? "avg" : "max");
  kv("ensemble", job.ensemble == EnsembleMode::kPerStyleThenMean ? "per" : "multi");
  kv("jobs", std::to_string(job.jobs));
  kv("quiet", job.quiet ? "true" : "false");
  return os.str();
}

inline std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,c_cont,c_style,c_tot\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + ',' + detail::format_loss(r.loss.c_cont) + ',' +
           detail::format_loss(r.loss.c_style) + ',' + detail::format_loss(r.loss.c_tot) + '\n';
  }
  return out;
}

// One structured progress line per recorded checkpoint.
inline std::string progress_line(const TraceRow& row, double images_per_sec,
                                 std::optional<std::size_t> member = std::nullopt) {
  std::string line;
  if (member) line += "member=" + std::to_string(*member) + ' ';
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.3f", images_per_sec);
  line += "step=" + std::to_string(row.step) + " c_cont=" + detail::format_loss(row.loss.c_cont) +
          " c_style=" + detail::format_loss(row.loss.c_style) +
          " c_tot=" + detail::format_loss(row.loss.c_tot) + " images_per_sec=" + rate;
  return line;
}

// Trace file of ensemble member k when several independent runs are made.
inline std::filesystem::path member_trace_path(const std::filesystem::path& trace, std::size_t k) {
  auto p = trace;
  const auto ext = p.extension().string();
  p.replace_extension();
  p += "." + std::to_string(k) + ext;
  return p;
}

namespace detail {

// Collects output files in temporaries and renames them into place only
// once every one of them has been written.
class AtomicOutputs {
 public:
  AtomicOutputs() = default;
  AtomicOutputs(const AtomicOutputs&) = delete;
  AtomicOutputs& operator=(const AtomicOutputs&) = delete;
  ~AtomicOutputs() {
    std::error_code ec;
    for (const auto& [tmp, dst] : pending_) std::filesystem::remove(tmp, ec);
  }

  void stage(const std::filesystem::path& dst, std::span<const std::uint8_t> bytes) {
    auto tmp = dst;
    tmp += ".tmp" + std::to_string(pending_.size());
    write_file_bytes(tmp, bytes);
    pending_.emplace_back(tmp, dst);
  }
  void stage(const std::filesystem::path& dst, const std::string& text) {
    stage(dst, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }

  void commit() {
    for (const auto& [tmp, dst] : pending_) {
      std::error_code ec;
      std::filesystem::rename(tmp, dst, ec);
      if (ec) throw IoError("cannot move output into place at '" + dst.string() + "': " + ec.message());
    }
    pending_.clear();
  }

 private:
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> pending_;
};

}  // namespace detail

// Runs the job against an already constructed network. `log` receives
// progress lines unless the job is quiet.
inline RunReport run_job(const TransferJob& job, const FeatureExtractor& network, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  job.loss.validate();
  job.optimizer.validate();
  if (job.style_paths.empty()) throw UsageError("at least one --style image is required");
  if (job.jobs == 0) throw UsageError("--jobs must be at least 1");
  for (const auto& tap : job.loss.taps()) (void)network.spec().index_of(tap);

  const auto& mean = network.preprocess_mean();
  const std::size_t w = job.preprocess.width;
  const std::size_t h = job.preprocess.height;

  ImageBuffer content = decode(job.content_path);
  if (job.preprocess.grayscale) content = to_grayscale(content);
  if (job.preprocess.invert) content = invert(content);
  content = resize(content, w, h);
  const Tensor content_tensor = to_tensor(content, mean);
  std::vector<Tensor> style_tensors;
  for (const auto& p : job.style_paths) style_tensors.push_back(to_tensor(resize(decode(p), w, h), mean));

  // One objective per independent run.
  std::vector<StyleObjective> objectives;
  if (job.ensemble == EnsembleMode::kPerStyleThenMean) {
    for (const auto& s : style_tensors) {
      objectives.emplace_back(network, job.loss, content_tensor, std::span<const Tensor>(&s, 1));
    }
  } else {
    objectives.emplace_back(network, job.loss, content_tensor, style_tensors);
  }

  const std::size_t runs = objectives.size();
  std::vector<ImageBuffer> results(runs);
  std::vector<std::vector<TraceRow>> traces(runs);
  std::vector<std::exception_ptr> errors(runs);
  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};

  auto worker = [&](std::stop_token stop) {
    for (std::size_t k = next++; k < runs; k = next++) {
      try {
        OptimizationState state = init_state(job.optimizer, content_tensor, mean);
        auto last_time = std::chrono::steady_clock::now();
        std::size_t last_step = 0;
        CheckpointObserver observer;
        if (!job.quiet) {
          observer = [&, k](const TraceRow& row) {
            const auto now = std::chrono::steady_clock::now();
            const double dt = std::chrono::duration<double>(now - last_time).count();
            const double rate = dt > 0 ? static_cast<double>(row.step - last_step) / dt : 0.0;
            last_time = now;
            last_step = row.step;
            const auto member = runs > 1 ? std::optional<std::size_t>(k) : std::nullopt;
            std::lock_guard lock(log_mutex);
            log << progress_line(row, rate, member) << '\n' << std::flush;
          };
        }
        run(objectives[k], job.optimizer, state, observer, stop);
        results[k] = from_tensor(state.x_hat, mean);
        traces[k] = std::move(state.trace);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t threads = std::min(job.jobs, runs);
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker(std::stop_token{});
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunReport report;
  report.output_path = job.output_path;
  report.config_echo = render_config(job);

  detail::AtomicOutputs outputs;
  const ImageBuffer final_image = ensemble_mean(results);
  outputs.stage(job.output_path, encode_png(final_image));
  if (!job.dump_content_path.empty()) outputs.stage(job.dump_content_path, encode_png(content));
  for (std::size_t k = 0; k < runs; ++k) {
    const auto path = runs == 1 ? job.trace_path : member_trace_path(job.trace_path, k);
    outputs.stage(path, trace_csv(traces[k]));
    report.trace_paths.push_back(path);
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (!job.report_path.empty()) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", report.wall_seconds);
    outputs.stage(job.report_path, "# wall_seconds=" + std::string(secs) + "\n" + report.config_echo);
  }
  outputs.commit();
  report.traces = std::move(traces);
  return report;
}

inline RunReport run_job(const TransferJob& job, std::ostream& log) {
  FeatureExtractor network(vgg19_spec(job.pool_mode),
                           load_weights(job.weight_path, vgg19_spec(job.pool_mode)));
  return run_job(job, network, log);
}

}  // namespace ghostlayer
