#include "advspeech/config.hpp"

#include <charconv>
#include <map>
#include <sstream>
#include <stdexcept>

#include "advspeech/io.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream ss(s);
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

class ValueParser {
 public:
  explicit ValueParser(const std::string& location) : loc_(location) {}

  std::int64_t as_int(const std::string& v) const {
    try {
      std::size_t pos = 0;
      const std::int64_t r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      return r;
    } catch (const std::exception&) {
      throw std::invalid_argument(loc_ + ": expected integer, got '" + v + "'");
    }
  }

  std::uint64_t as_uint(const std::string& v) const {
    try {
      std::size_t pos = 0;
      const std::uint64_t r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      return r;
    } catch (const std::exception&) {
      throw std::invalid_argument(loc_ + ": expected unsigned integer, got '" + v + "'");
    }
  }

  double as_double(const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing characters");
      return r;
    } catch (const std::exception&) {
      throw std::invalid_argument(loc_ + ": expected number, got '" + v + "'");
    }
  }

  bool as_bool(const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument(loc_ + ": expected boolean, got '" + v + "'");
  }

  std::vector<double> as_double_list(const std::string& v) const {
    std::vector<double> out;
    for (const std::string& tok : split_csv(v)) out.push_back(as_double(tok));
    if (out.empty()) throw std::invalid_argument(loc_ + ": expected non-empty list");
    return out;
  }

 private:
  std::string loc_;
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

std::string join_csv_doubles(const std::vector<double>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ",";
    ss << fmt(v[i]);
  }
  return ss.str();
}

std::string join_csv_strings(const std::vector<std::string>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ",";
    ss << v[i];
  }
  return ss.str();
}

}  // namespace

AsrConfig ExperimentConfig::asr_config() const {
  AsrConfig cfg;
  cfg.frontend.frame_len = corpus.frame_len;
  cfg.frontend.frame_shift = corpus.frame_shift;
  cfg.frontend.window = Window::kHann;
  cfg.conv_channels = asr.conv_channels;
  cfg.conv_layers = asr.conv_layers;
  cfg.kernel = asr.kernel;
  return cfg;
}

DenoiserConfig ExperimentConfig::denoiser_config() const {
  if (denoiser.preset == "desk") return DenoiserConfig::desk();
  if (denoiser.preset == "paper-shape") return DenoiserConfig::paper_shape();
  throw std::invalid_argument("[denoiser] preset: unknown value '" + denoiser.preset + "'");
}

FinetuneConfig ExperimentConfig::finetune_config() const {
  FinetuneConfig cfg;
  cfg.epochs = finetune.epochs;
  cfg.pgd_iterations = finetune.pgd_iterations;
  cfg.eps_min = finetune.eps_min;
  cfg.eps_max = finetune.eps_max;
  cfg.lr = static_cast<float>(asr.lr / finetune.lr_divisor);
  cfg.seed = finetune.seed;
  return cfg;
}

void ExperimentConfig::override_seeds(std::uint64_t master) {
  corpus.seed = Rng::mix(master, "corpus");
  asr.seed = Rng::mix(master, "asr");
  denoiser.seed = Rng::mix(master, "denoiser");
  attacks.seed = Rng::mix(master, "attacks");
  finetune.seed = Rng::mix(master, "finetune");
  evaluate.seed = Rng::mix(master, "evaluate");
}

std::string ExperimentConfig::to_ini() const {
  std::ostringstream ss;
  ss << "[corpus]\n";
  ss << "vocab_size = " << corpus.vocab_size << "\n";
  ss << "n_train = " << corpus.n_train << "\n";
  ss << "n_test = " << corpus.n_test << "\n";
  ss << "words_min = " << corpus.words_min << "\n";
  ss << "words_max = " << corpus.words_max << "\n";
  ss << "word_duration_frames = " << corpus.word_duration_frames << "\n";
  ss << "gap_frames = " << corpus.gap_frames << "\n";
  ss << "sample_rate = " << corpus.sample_rate << "\n";
  ss << "frame_shift = " << corpus.frame_shift << "\n";
  ss << "frame_len = " << corpus.frame_len << "\n";
  ss << "target_rms = " << fmt(corpus.target_rms) << "\n";
  ss << "reference_rms = " << fmt(corpus.reference_rms) << "\n";
  ss << "snr_db = " << fmt(corpus.snr_db) << "\n";
  ss << "seed = " << corpus.seed << "\n";
  ss << "\n[asr]\n";
  ss << "conv_channels = " << asr.conv_channels << "\n";
  ss << "conv_layers = " << asr.conv_layers << "\n";
  ss << "kernel = " << asr.kernel << "\n";
  ss << "epochs = " << asr.epochs << "\n";
  ss << "lr = " << fmt(asr.lr) << "\n";
  ss << "checkpoint_averaging = " << (asr.checkpoint_averaging ? "true" : "false") << "\n";
  ss << "seed = " << asr.seed << "\n";
  ss << "\n[denoiser]\n";
  ss << "preset = " << denoiser.preset << "\n";
  ss << "epochs = " << denoiser.epochs << "\n";
  ss << "lr = " << fmt(denoiser.lr) << "\n";
  ss << "seed = " << denoiser.seed << "\n";
  ss << "\n[attacks_dataset]\n";
  ss << "n_pairs = " << attacks.n_pairs << "\n";
  ss << "holdout_fraction = " << fmt(attacks.holdout_fraction) << "\n";
  ss << "seed = " << attacks.seed << "\n";
  ss << "\n[finetune]\n";
  ss << "epochs = " << finetune.epochs << "\n";
  ss << "pgd_iterations = " << finetune.pgd_iterations << "\n";
  ss << "eps_min = " << fmt(finetune.eps_min) << "\n";
  ss << "eps_max = " << fmt(finetune.eps_max) << "\n";
  ss << "lr_divisor = " << fmt(finetune.lr_divisor) << "\n";
  ss << "seed = " << finetune.seed << "\n";
  ss << "\n[smoothing]\n";
  ss << "sigma = " << fmt(smoothing.sigma) << "\n";
  ss << "\n[evaluate]\n";
  ss << "epsilons = " << join_csv_doubles(evaluate.epsilons) << "\n";
  ss << "pgd_iterations = " << evaluate.pgd_iterations << "\n";
  ss << "long_epsilons = " << join_csv_doubles(evaluate.long_epsilons) << "\n";
  ss << "long_iterations = " << evaluate.long_iterations << "\n";
  ss << "systems = " << join_csv_strings(evaluate.systems) << "\n";
  ss << "boxplot_exclude_epsilon = "
     << (evaluate.boxplot_exclude_epsilon ? fmt(*evaluate.boxplot_exclude_epsilon) : "none")
     << "\n";
  ss << "seed = " << evaluate.seed << "\n";
  return ss.str();
}

ExperimentConfig ExperimentConfig::from_ini(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section header");
      }
      section = line.substr(1, line.size() - 2);
      static const std::vector<std::string> known{"corpus",   "asr",      "denoiser",
                                                  "attacks_dataset", "finetune", "smoothing",
                                                  "evaluate"};
      bool ok = false;
      for (const auto& s : known) ok = ok || s == section;
      if (!ok) throw std::invalid_argument("config: unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      throw std::invalid_argument("config: key '" + key + "' outside any section");
    }
    const ValueParser p("[" + section + "] " + key);
    bool handled = true;
    if (section == "corpus") {
      if (key == "vocab_size") cfg.corpus.vocab_size = p.as_int(value);
      else if (key == "n_train") cfg.corpus.n_train = p.as_int(value);
      else if (key == "n_test") cfg.corpus.n_test = p.as_int(value);
      else if (key == "words_min") cfg.corpus.words_min = p.as_int(value);
      else if (key == "words_max") cfg.corpus.words_max = p.as_int(value);
      else if (key == "word_duration_frames") cfg.corpus.word_duration_frames = p.as_int(value);
      else if (key == "gap_frames") cfg.corpus.gap_frames = p.as_int(value);
      else if (key == "sample_rate") cfg.corpus.sample_rate = p.as_int(value);
      else if (key == "frame_shift") cfg.corpus.frame_shift = p.as_int(value);
      else if (key == "frame_len") cfg.corpus.frame_len = p.as_int(value);
      else if (key == "target_rms") cfg.corpus.target_rms = p.as_double(value);
      else if (key == "reference_rms") cfg.corpus.reference_rms = p.as_double(value);
      else if (key == "snr_db") cfg.corpus.snr_db = p.as_double(value);
      else if (key == "seed") cfg.corpus.seed = p.as_uint(value);
      else handled = false;
    } else if (section == "asr") {
      if (key == "conv_channels") cfg.asr.conv_channels = p.as_int(value);
      else if (key == "conv_layers") cfg.asr.conv_layers = p.as_int(value);
      else if (key == "kernel") cfg.asr.kernel = p.as_int(value);
      else if (key == "epochs") cfg.asr.epochs = p.as_int(value);
      else if (key == "lr") cfg.asr.lr = static_cast<float>(p.as_double(value));
      else if (key == "checkpoint_averaging") cfg.asr.checkpoint_averaging = p.as_bool(value);
      else if (key == "seed") cfg.asr.seed = p.as_uint(value);
      else handled = false;
    } else if (section == "denoiser") {
      if (key == "preset") cfg.denoiser.preset = value;
      else if (key == "epochs") cfg.denoiser.epochs = p.as_int(value);
      else if (key == "lr") cfg.denoiser.lr = static_cast<float>(p.as_double(value));
      else if (key == "seed") cfg.denoiser.seed = p.as_uint(value);
      else handled = false;
    } else if (section == "attacks_dataset") {
      if (key == "n_pairs") cfg.attacks.n_pairs = p.as_int(value);
      else if (key == "holdout_fraction") cfg.attacks.holdout_fraction = p.as_double(value);
      else if (key == "seed") cfg.attacks.seed = p.as_uint(value);
      else handled = false;
    } else if (section == "finetune") {
      if (key == "epochs") cfg.finetune.epochs = p.as_int(value);
      else if (key == "pgd_iterations") cfg.finetune.pgd_iterations = p.as_int(value);
      else if (key == "eps_min") cfg.finetune.eps_min = p.as_double(value);
      else if (key == "eps_max") cfg.finetune.eps_max = p.as_double(value);
      else if (key == "lr_divisor") cfg.finetune.lr_divisor = p.as_double(value);
      else if (key == "seed") cfg.finetune.seed = p.as_uint(value);
      else handled = false;
    } else if (section == "smoothing") {
      if (key == "sigma") cfg.smoothing.sigma = p.as_double(value);
      else handled = false;
    } else if (section == "evaluate") {
      if (key == "epsilons") cfg.evaluate.epsilons = p.as_double_list(value);
      else if (key == "pgd_iterations") cfg.evaluate.pgd_iterations = p.as_int(value);
      else if (key == "long_epsilons") cfg.evaluate.long_epsilons = p.as_double_list(value);
      else if (key == "long_iterations") cfg.evaluate.long_iterations = p.as_int(value);
      else if (key == "systems") cfg.evaluate.systems = split_csv(value);
      else if (key == "boxplot_exclude_epsilon") {
        if (value == "none") cfg.evaluate.boxplot_exclude_epsilon.reset();
        else cfg.evaluate.boxplot_exclude_epsilon = p.as_double(value);
      } else if (key == "seed") cfg.evaluate.seed = p.as_uint(value);
      else handled = false;
    }
    if (!handled) {
      throw std::invalid_argument("config: unknown key '" + key + "' in section [" + section + "]");
    }
  }

  if (cfg.evaluate.epsilons.empty() || cfg.evaluate.long_epsilons.empty()) {
    throw std::invalid_argument("config: epsilon lists must be non-empty");
  }
  if (cfg.evaluate.systems.empty()) {
    throw std::invalid_argument("config: systems list must be non-empty");
  }
  cfg.denoiser_config();  // validates the preset name
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
  return from_ini(read_text_file(path));
}

}  // namespace advspeech
