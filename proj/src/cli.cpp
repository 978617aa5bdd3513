#include "setsum/cli.hpp"

#include <filesystem>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include "detail/bytes.hpp"
#include "detail/text.hpp"
#include "setsum/errors.hpp"
#include "setsum/metrics.hpp"

namespace setsum {

namespace fs = std::filesystem;

std::map<std::string, ConfigEntry> parse_key_values(const std::string& text) {
  std::map<std::string, ConfigEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'", number);
    std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key", number);
    if (entries.contains(key)) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " +
                            std::to_string(entries[key].line) + ")",
                        number);
    }
    entries[key] = {detail::trim(line.substr(eq + 1)), number};
  }
  return entries;
}

namespace {

// Typed access to parsed entries; remembers which keys were consumed so that
// unknown keys can be reported.
class ConfigReader {
 public:
  explicit ConfigReader(std::map<std::string, ConfigEntry> entries) : entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.contains(key); }

  template <typename T, typename Parse>
  T get(const std::string& key, T fallback, Parse parse) {
    known_.insert(key);
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
      return parse(it->second.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what(), it->second.line);
    }
  }

  template <typename T, typename Parse>
  T require(const std::string& key, Parse parse) {
    if (!has(key)) throw ConfigError("missing required key '" + key + "'");
    return get<T>(key, T{}, parse);
  }

  std::size_t line(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  void reject_unknown() const {
    for (const auto& [key, entry] : entries_) {
      if (!known_.contains(key)) throw ConfigError("unknown key '" + key + "'", entry.line);
    }
  }

 private:
  std::map<std::string, ConfigEntry> entries_;
  std::set<std::string> known_;
};

auto as_string = [](const std::string& v) { return v; };
auto as_uint = [](const std::string& v) { return detail::parse_uint(v); };
auto as_size = [](const std::string& v) { return static_cast<std::size_t>(detail::parse_uint(v)); };
auto as_double = [](const std::string& v) { return detail::parse_double(v); };
auto as_bool = [](const std::string& v) { return detail::parse_bool(v); };
auto as_sizes = [](const std::string& v) { return detail::parse_size_list(v); };

template <typename T>
std::pair<T, T> as_range(const std::vector<T>& values) {
  if (values.size() != 2) throw std::invalid_argument("expected min,max");
  if (values[0] > values[1]) throw std::invalid_argument("min exceeds max");
  return {values[0], values[1]};
}

std::string join_methods(const std::vector<Method>& methods) {
  std::string out;
  for (std::size_t i = 0; i < methods.size(); ++i) out += (i ? "," : "") + to_string(methods[i]);
  return out;
}

std::string pairs_text(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out += (i ? "," : "") + std::to_string(pairs[i].first) + ":" + std::to_string(pairs[i].second);
  }
  return out;
}

}  // namespace

RunConfig resolve_run_config(const std::string& text, const fs::path& base_dir,
                             std::optional<std::uint64_t> seed_override) {
  ConfigReader r(parse_key_values(text));
  RunConfig c;
  auto as_path = [&](const std::string& v) {
    if (v.empty()) throw std::invalid_argument("empty path");
    fs::path p(v);
    return (p.is_absolute() ? p : base_dir / p).lexically_normal();
  };

  c.output_dir = r.get<fs::path>("output_dir", (base_dir / "out").lexically_normal(), as_path);
  c.seed = r.get<std::uint64_t>("seed", 0, as_uint);
  if (seed_override) c.seed = *seed_override;
  c.record_timing = r.get("record_timing", false, as_bool);

  // data
  c.data_dir = r.get<fs::path>("data.dir", c.output_dir / "data", as_path);
  c.manifest = r.get<fs::path>("data.manifest", c.data_dir / "manifest.csv", as_path);
  SyntheticConfig& s = c.synthetic;
  s.image_extent = r.require<Shape>("data.image_extent", as_sizes);
  s.dims = static_cast<int>(r.get<std::size_t>("data.dims", s.image_extent.size(), as_size));
  s.blob_count_range = r.get("data.blob_count_range", s.blob_count_range,
                             [](const std::string& v) { return as_range(detail::parse_size_list(v)); });
  s.blob_sigma_range = r.get("data.blob_sigma_range", s.blob_sigma_range,
                             [](const std::string& v) { return as_range(detail::parse_double_list(v)); });
  s.intensity_range = r.get("data.intensity_range", s.intensity_range,
                            [](const std::string& v) { return as_range(detail::parse_double_list(v)); });
  s.noise_sigma = r.get("data.noise_sigma", s.noise_sigma, as_double);
  s.volume_threshold = r.get("data.volume_threshold", s.volume_threshold, as_double);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid data settings: ") + e.what(), r.line("data.image_extent"));
  }
  c.sizes.train = r.get("data.num_train", c.sizes.train, as_size);
  c.sizes.val = r.get("data.num_val", c.sizes.val, as_size);
  c.sizes.test = r.get("data.num_test", c.sizes.test, as_size);
  c.label_kind = r.get("data.label_kind", c.label_kind,
                       [](const std::string& v) { return parse_label_kind(v); });
  c.preprocess.crop_extent = r.get("data.crop_extent", Shape(s.image_extent.size(), 64), as_sizes);
  if (c.preprocess.crop_extent.size() != s.image_extent.size()) {
    throw ConfigError("data.crop_extent needs one extent per spatial axis", r.line("data.crop_extent"));
  }
  c.preprocess.center_crop = r.get("data.center_crop", true, as_bool);
  c.preprocess.rescale = r.get("data.rescale", true, as_bool);

  // model
  ArchitectureConfig& a = c.architecture;
  a.dims = s.dims;
  a.input_shape = {1};
  for (std::size_t d = 0; d < s.image_extent.size(); ++d) {
    a.input_shape.push_back(c.preprocess.center_crop
                                ? std::min(c.preprocess.crop_extent[d], s.image_extent[d])
                                : s.image_extent[d]);
  }
  a.conv_blocks = r.get("model.conv_blocks", a.conv_blocks, [](const std::string& v) {
    std::vector<ConvBlock> blocks;
    for (auto [maps, kernel] : detail::parse_pair_list(v)) blocks.push_back({maps, kernel});
    return blocks;
  });
  a.skip_connections = r.get("model.skip_connections", a.skip_connections, [](const std::string& v) {
    std::vector<SkipConnection> skips;
    for (auto [from, to] : detail::parse_pair_list(v)) skips.push_back({from, to});
    return skips;
  });
  a.dropout_rate = r.get("model.dropout_rate", a.dropout_rate, as_double);
  a.zero_bias = r.get("model.zero_bias", a.zero_bias, as_bool);
  a.seed = derive_seed(c.seed, {0x696e6974});
  try {
    build_base_regressor(a);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid model settings: ") + e.what(), r.line("model.conv_blocks"));
  }

  // augment
  TrainConfig& t = c.train;
  t.augment = r.get("augment.enabled", t.augment, as_bool);
  t.augmentation.flip_axes = r.get("augment.flip_axes", Shape{}, as_sizes);
  if (!r.has("augment.flip_axes")) {
    t.augmentation.flip_axes.clear();
    for (std::size_t d = 0; d < s.image_extent.size(); ++d) t.augmentation.flip_axes.push_back(d);
  }
  for (std::size_t axis : t.augmentation.flip_axes) {
    if (axis >= s.image_extent.size()) {
      throw ConfigError("augment.flip_axes: axis " + std::to_string(axis) + " out of range",
                        r.line("augment.flip_axes"));
    }
  }
  t.augmentation.rotation_range = r.get("augment.rotation_range", t.augmentation.rotation_range, as_double);
  t.augmentation.translation_range =
      r.get("augment.translation_range", t.augmentation.translation_range, as_size);
  if (t.augmentation.rotation_range < 0.0) {
    throw ConfigError("augment.rotation_range must be non-negative", r.line("augment.rotation_range"));
  }

  // train
  t.epochs = r.get("train.epochs", t.epochs, as_size);
  t.method = r.get("train.method", t.method, [](const std::string& v) { return parse_method(v); });
  t.sampler.n = r.get("train.n", t.sampler.n, as_size);
  t.sampler.p = r.get("train.p", t.sampler.p, as_double);
  t.sampler.with_replacement = r.get("train.with_replacement", t.sampler.with_replacement, as_bool);
  t.loss = r.get("train.loss", t.loss, [](const std::string& v) { return parse_loss_kind(v); });
  t.batch_size = r.get("train.batch_size", t.sampler.n, as_size);
  t.optimizer.rho = r.get("train.rho", t.optimizer.rho, as_double);
  t.optimizer.epsilon = r.get("train.epsilon", t.optimizer.epsilon, as_double);
  t.optimizer.learning_rate = r.get("train.learning_rate", t.optimizer.learning_rate, as_double);
  t.seed = derive_seed(c.seed, {0x747261696e});
  t.record_timing = c.record_timing;
  if (t.epochs == 0) throw ConfigError("train.epochs must be positive", r.line("train.epochs"));
  if (t.sampler.n == 0) throw ConfigError("train.n must be positive", r.line("train.n"));
  if (!(t.sampler.p >= 0.0 && t.sampler.p <= 1.0)) throw ConfigError("train.p must lie in [0,1]", r.line("train.p"));
  if (t.batch_size == 0 || (t.method == Method::setsum && t.batch_size % t.sampler.n != 0)) {
    throw ConfigError("train.batch_size must be a positive multiple of train.n for setsum",
                      r.line("train.batch_size"));
  }
  if (!(t.optimizer.rho > 0.0 && t.optimizer.rho < 1.0)) throw ConfigError("train.rho must lie in (0,1)", r.line("train.rho"));
  if (!(t.optimizer.epsilon > 0.0)) throw ConfigError("train.epsilon must be positive", r.line("train.epsilon"));
  if (r.has("train.init_model")) c.init_model = r.get<fs::path>("train.init_model", {}, as_path);
  else r.get<std::string>("train.init_model", "", as_string);

  c.eval_split = r.get("eval.split", c.eval_split, [](const std::string& v) { return parse_split(v); });

  // curve
  CurveSettings& cs = c.curve;
  cs.sizes = r.get("curve.sizes", cs.sizes, as_sizes);
  cs.methods = r.get("curve.methods", cs.methods, [](const std::string& v) {
    std::vector<Method> methods;
    for (const std::string& m : detail::split(v, ',')) methods.push_back(parse_method(m));
    return methods;
  });
  cs.num_seeds = r.get("curve.num_seeds", cs.num_seeds, as_size);
  cs.jobs = r.get("curve.jobs", std::size_t{1}, as_size);
  if (cs.sizes.empty()) throw ConfigError("curve.sizes must not be empty", r.line("curve.sizes"));
  if (cs.num_seeds == 0) throw ConfigError("curve.num_seeds must be positive", r.line("curve.num_seeds"));
  if (cs.jobs == 0) throw ConfigError("curve.jobs must be positive", r.line("curve.jobs"));
  cs.master_seed = c.seed;
  cs.architecture = a;
  cs.train = t;
  cs.record_timing = c.record_timing;

  r.reject_unknown();
  return c;
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return resolve_run_config(text, fs::absolute(path).parent_path(), seed_override);
}

std::string render_run_config(const RunConfig& c) {
  using detail::format_double;
  using detail::join_sizes;
  std::ostringstream o;
  const SyntheticConfig& s = c.synthetic;
  const TrainConfig& t = c.train;
  o << "# resolved configuration\n";
  o << "output_dir=" << c.output_dir.string() << "\n";
  o << "seed=" << c.seed << "\n";
  o << "record_timing=" << (c.record_timing ? "true" : "false") << "\n";
  o << "data.dir=" << c.data_dir.string() << "\n";
  o << "data.manifest=" << c.manifest.string() << "\n";
  o << "data.image_extent=" << join_sizes(s.image_extent) << "\n";
  o << "data.dims=" << s.dims << "\n";
  o << "data.blob_count_range=" << s.blob_count_range.first << "," << s.blob_count_range.second << "\n";
  o << "data.blob_sigma_range=" << format_double(s.blob_sigma_range.first) << ","
    << format_double(s.blob_sigma_range.second) << "\n";
  o << "data.intensity_range=" << format_double(s.intensity_range.first) << ","
    << format_double(s.intensity_range.second) << "\n";
  o << "data.noise_sigma=" << format_double(s.noise_sigma) << "\n";
  o << "data.volume_threshold=" << format_double(s.volume_threshold) << "\n";
  o << "data.num_train=" << c.sizes.train << "\n";
  o << "data.num_val=" << c.sizes.val << "\n";
  o << "data.num_test=" << c.sizes.test << "\n";
  o << "data.label_kind=" << to_string(c.label_kind) << "\n";
  o << "data.crop_extent=" << join_sizes(c.preprocess.crop_extent) << "\n";
  o << "data.center_crop=" << (c.preprocess.center_crop ? "true" : "false") << "\n";
  o << "data.rescale=" << (c.preprocess.rescale ? "true" : "false") << "\n";

  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (const ConvBlock& b : c.architecture.conv_blocks) blocks.emplace_back(b.feature_maps, b.kernel_size);
  std::vector<std::pair<std::size_t, std::size_t>> skips;
  for (const SkipConnection& k : c.architecture.skip_connections) skips.emplace_back(k.from, k.to);
  o << "model.conv_blocks=" << pairs_text(blocks) << "\n";
  o << "model.skip_connections=" << pairs_text(skips) << "\n";
  o << "model.dropout_rate=" << format_double(c.architecture.dropout_rate) << "\n";
  o << "model.zero_bias=" << (c.architecture.zero_bias ? "true" : "false") << "\n";

  o << "augment.enabled=" << (t.augment ? "true" : "false") << "\n";
  o << "augment.flip_axes=" << join_sizes(t.augmentation.flip_axes) << "\n";
  o << "augment.rotation_range=" << format_double(t.augmentation.rotation_range) << "\n";
  o << "augment.translation_range=" << t.augmentation.translation_range << "\n";

  o << "train.epochs=" << t.epochs << "\n";
  o << "train.method=" << to_string(t.method) << "\n";
  o << "train.n=" << t.sampler.n << "\n";
  o << "train.p=" << format_double(t.sampler.p) << "\n";
  o << "train.with_replacement=" << (t.sampler.with_replacement ? "true" : "false") << "\n";
  o << "train.loss=" << to_string(t.loss) << "\n";
  o << "train.batch_size=" << t.batch_size << "\n";
  o << "train.rho=" << format_double(t.optimizer.rho) << "\n";
  o << "train.epsilon=" << format_double(t.optimizer.epsilon) << "\n";
  o << "train.learning_rate=" << format_double(t.optimizer.learning_rate) << "\n";
  if (c.init_model) o << "train.init_model=" << c.init_model->string() << "\n";

  o << "eval.split=" << to_string(c.eval_split) << "\n";

  o << "curve.sizes=" << join_sizes(c.curve.sizes) << "\n";
  o << "curve.methods=" << join_methods(c.curve.methods) << "\n";
  o << "curve.num_seeds=" << c.curve.num_seeds << "\n";
  o << "curve.jobs=" << c.curve.jobs << "\n";
  return o.str();
}

namespace {

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

void prepare_output(const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create " + config.output_dir.string() + ": " + ec.message());
  detail::write_file(config.output_dir / "resolved_config.txt", render_run_config(config));
}

DatasetManifest open_manifest(const RunConfig& config) {
  if (!fs::exists(config.manifest)) {
    throw ConfigError("manifest " + config.manifest.string() + " does not exist (run generate first)");
  }
  return read_manifest(config.manifest, config.label_kind);
}

}  // namespace

int cmd_generate(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const RunConfig config = load_run_config(options.config_path, options.seed);
    prepare_output(config);
    const std::vector<ImageRecord> records =
        generate_dataset(config.synthetic, config.sizes, derive_seed(config.seed, {0x64617461}), config.data_dir);
    if (config.manifest != config.data_dir / "manifest.csv") write_manifest(config.manifest, records);
    out << "generated " << records.size() << " records into " << config.data_dir.string() << "\n";
    return int{kExitOk};
  });
}

int cmd_train(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    RunConfig config = load_run_config(options.config_path, options.seed);
    if (options.model_path) config.init_model = fs::absolute(*options.model_path);
    const DatasetManifest manifest = open_manifest(config);
    const LabeledImages train_set = load_split(manifest, Split::train, config.preprocess);
    const LabeledImages val_set = load_split(manifest, Split::val, config.preprocess);
    if (train_set.size() == 0 || val_set.size() == 0) {
      throw ConfigError("manifest needs at least one train and one val record");
    }
    RegressorModel initial = config.init_model ? load_model(*config.init_model)
                                               : build_base_regressor(config.architecture);
    initial.check_input(train_set.images.front());
    prepare_output(config);
    const TrainResult result = train(initial, train_set, val_set, config.train);
    save_model(config.output_dir / "model.ssrm", result.model);
    detail::write_file(config.output_dir / "history.csv", history_csv(result.history));
    out << "trained " << to_string(config.train.method) << " for " << config.train.epochs
        << " epochs; best epoch " << result.history.best_epoch << " with val mse "
        << detail::format_double(result.history.best_val_mse) << "\n";
    return int{kExitOk};
  });
}

int cmd_eval(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const RunConfig config = load_run_config(options.config_path, options.seed);
    const fs::path model_path = options.model_path ? fs::absolute(*options.model_path)
                                                   : config.output_dir / "model.ssrm";
    const RegressorModel model = load_model(model_path);
    const DatasetManifest manifest = open_manifest(config);
    const LabeledImages split = load_split(manifest, config.eval_split, config.preprocess);
    if (split.size() < 2) throw ConfigError("eval split needs at least 2 records");
    for (const Tensor& image : split.images) model.check_input(image);
    const std::vector<double> predictions = infer(model, split.images);
    const MetricsReport report = evaluate(split.labels, predictions);

    prepare_output(config);
    std::ostringstream pred_csv;
    pred_csv << "path,truth,prediction\n";
    for (std::size_t i = 0; i < split.size(); ++i) {
      pred_csv << split.paths[i] << "," << detail::format_double(split.labels[i]) << ","
               << detail::format_double(predictions[i]) << "\n";
    }
    detail::write_file(config.output_dir / "predictions.csv", pred_csv.str());
    const std::string metrics = "mse,mae,icc,n\n" + detail::format_double(report.mse) + "," +
                                detail::format_double(report.mae) + "," + format_optional(report.icc) +
                                "," + std::to_string(report.n) + "\n";
    detail::write_file(config.output_dir / "metrics.csv", metrics);
    out << "mse=" << detail::format_double(report.mse) << " mae=" << detail::format_double(report.mae)
        << " icc=" << format_optional(report.icc) << " n=" << report.n << "\n";
    return int{kExitOk};
  });
}

int cmd_curve(const CommandOptions& options, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const RunConfig config = load_run_config(options.config_path, options.seed);
    CurveSettings settings = config.curve;
    // --jobs only changes scheduling, so the echoed config keeps the file's value.
    if (options.jobs) {
      if (*options.jobs == 0) throw ConfigError("--jobs must be positive");
      settings.jobs = *options.jobs;
    }
    const DatasetManifest manifest = open_manifest(config);
    const LabeledImages pool = load_split(manifest, Split::train, config.preprocess);
    const LabeledImages val_set = load_split(manifest, Split::val, config.preprocess);
    const LabeledImages test_set = load_split(manifest, Split::test, config.preprocess);
    if (val_set.size() == 0) throw ConfigError("manifest has no val records");
    prepare_output(config);
    const CurveResult result = learning_curve_experiment(pool, val_set, test_set, settings);
    detail::write_file(config.output_dir / "curve_jobs.csv", curve_jobs_csv(result.jobs));
    detail::write_file(config.output_dir / "curve_summary.csv", curve_summary_csv(result.points));
    out << "ran " << result.jobs.size() << " jobs; results in " << config.output_dir.string() << "\n";
    return int{kExitOk};
  });
}

}  // namespace setsum
