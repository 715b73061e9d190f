#include "ucil/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ucil {

Method parse_method(const std::string& name) {
  if (name == "ucil") return Method::Ucil;
  if (name == "finetune") return Method::Finetune;
  if (name == "joint") return Method::Joint;
  if (name == "nr") return Method::Nr;
  if (name == "ewc") return Method::Ewc;
  if (name == "lwf") return Method::Lwf;
  throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Ucil: return "ucil";
    case Method::Finetune: return "finetune";
    case Method::Joint: return "joint";
    case Method::Nr: return "nr";
    case Method::Ewc: return "ewc";
    case Method::Lwf: return "lwf";
  }
  throw std::logic_error("unhandled method");
}

TaskMode parse_task_mode(const std::string& name) {
  if (name == "two_task") return TaskMode::TwoTask;
  if (name == "four_task") return TaskMode::FourTask;
  throw std::invalid_argument("unknown task mode: " + name);
}

std::string task_mode_name(TaskMode m) {
  return m == TaskMode::TwoTask ? "two_task" : "four_task";
}

ExperimentConfig::ExperimentConfig() {
  // Desk-scale defaults: the 6-class corpus trains in minutes, not hours.
  // Labeled data is kept scarce relative to the unlabeled pool, and skewed
  // priors make the rehearsal balance an actual decision.
  synth.n_strong = 240;
  synth.n_weak = 120;
  synth.class_weights = {3.0, 2.0, 1.0, 3.0, 2.0, 1.0};
  model.n_mels = synth.n_mels;
  model.conv_channels = {12, 16};
  model.embedding_dim = 16;
  model.frame_count = synth.frame_count;
  train.epochs = 30;
  train.warmup_epochs = 5;
  train.max_steps_per_epoch = 8;
}

void ExperimentConfig::validate() const {
  if (method != Method::Ucil && !(fd && ul && mu)) {
    throw std::invalid_argument("ablation toggles apply to the ucil method only");
  }
  if (seeds.empty()) throw std::invalid_argument("config: empty seeds list");
  if (eval_strong == 0) throw std::invalid_argument("config: eval corpus needs strong clips");
  if (model.n_mels != synth.n_mels || model.frame_count != synth.frame_count) {
    throw std::invalid_argument("config: model input shape does not match the corpus");
  }
  model.validate();
  train.validate();
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

}  // namespace

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "# ucil-config v1\n";
  os << "method " << method_name(cfg.method) << "\n";
  os << "task_mode " << task_mode_name(cfg.task_mode) << "\n";
  os << "cap_strong " << cfg.cap_strong << "\n";
  os << "cap_weak " << cfg.cap_weak << "\n";
  os << "fd " << (cfg.fd ? "on" : "off") << "\n";
  os << "ul " << (cfg.ul ? "on" : "off") << "\n";
  os << "mu " << (cfg.mu ? "on" : "off") << "\n";
  os << "seeds";
  for (std::uint64_t s : cfg.seeds) os << " " << s;
  os << "\n";
  os << "n_classes " << cfg.synth.n_classes << "\n";
  os << "n_strong " << cfg.synth.n_strong << "\n";
  os << "n_weak " << cfg.synth.n_weak << "\n";
  os << "n_unlabeled " << cfg.synth.n_unlabeled << "\n";
  os << "frame_count " << cfg.synth.frame_count << "\n";
  os << "n_mels " << cfg.synth.n_mels << "\n";
  os << "data_seed " << cfg.synth.seed << "\n";
  os << "class_weights";
  for (double w : cfg.synth.class_weights) os << " " << fmt_double(w);
  os << "\n";
  os << "pair_rate " << fmt_double(cfg.synth.pair_rate) << "\n";
  os << "eval_strong " << cfg.eval_strong << "\n";
  os << "conv_channels";
  for (std::size_t c : cfg.model.conv_channels) os << " " << c;
  os << "\n";
  os << "kernel_width " << cfg.model.kernel_width << "\n";
  os << "embedding_dim " << cfg.model.embedding_dim << "\n";
  os << "epochs " << cfg.train.epochs << "\n";
  os << "warmup_epochs " << cfg.train.warmup_epochs << "\n";
  os << "lr_max " << fmt_double(cfg.train.lr_max) << "\n";
  os << "batch_size " << cfg.train.batch_size << "\n";
  os << "patience " << cfg.train.patience << "\n";
  os << "ema_decay " << fmt_double(cfg.train.ema_decay) << "\n";
  os << "omega " << fmt_double(cfg.train.omega) << "\n";
  os << "lambda_ewc " << fmt_double(cfg.train.lambda_ewc) << "\n";
  os << "max_steps_per_epoch " << cfg.train.max_steps_per_epoch << "\n";
  os << "fisher_samples " << cfg.fisher_samples << "\n";
  os << "out_dir " << cfg.out_dir << "\n";
  return os.str();
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto rest = [&ls]() {
      std::string v;
      ls >> v;
      return v;
    };
    if (key == "method") {
      cfg.method = parse_method(rest());
    } else if (key == "task_mode") {
      cfg.task_mode = parse_task_mode(rest());
    } else if (key == "cap_strong") {
      ls >> cfg.cap_strong;
    } else if (key == "cap_weak") {
      ls >> cfg.cap_weak;
    } else if (key == "fd") {
      cfg.fd = parse_bool(rest(), key);
    } else if (key == "ul") {
      cfg.ul = parse_bool(rest(), key);
    } else if (key == "mu") {
      cfg.mu = parse_bool(rest(), key);
    } else if (key == "seeds") {
      cfg.seeds.clear();
      std::uint64_t s;
      while (ls >> s) cfg.seeds.push_back(s);
    } else if (key == "n_classes") {
      ls >> cfg.synth.n_classes;
    } else if (key == "n_strong") {
      ls >> cfg.synth.n_strong;
    } else if (key == "n_weak") {
      ls >> cfg.synth.n_weak;
    } else if (key == "n_unlabeled") {
      ls >> cfg.synth.n_unlabeled;
    } else if (key == "frame_count") {
      ls >> cfg.synth.frame_count;
      cfg.model.frame_count = cfg.synth.frame_count;
    } else if (key == "n_mels") {
      ls >> cfg.synth.n_mels;
      cfg.model.n_mels = cfg.synth.n_mels;
    } else if (key == "data_seed") {
      ls >> cfg.synth.seed;
    } else if (key == "class_weights") {
      cfg.synth.class_weights.clear();
      double w;
      while (ls >> w) cfg.synth.class_weights.push_back(w);
    } else if (key == "pair_rate") {
      ls >> cfg.synth.pair_rate;
    } else if (key == "eval_strong") {
      ls >> cfg.eval_strong;
    } else if (key == "conv_channels") {
      cfg.model.conv_channels.clear();
      std::size_t c;
      while (ls >> c) cfg.model.conv_channels.push_back(c);
    } else if (key == "kernel_width") {
      ls >> cfg.model.kernel_width;
    } else if (key == "embedding_dim") {
      ls >> cfg.model.embedding_dim;
    } else if (key == "epochs") {
      ls >> cfg.train.epochs;
    } else if (key == "warmup_epochs") {
      ls >> cfg.train.warmup_epochs;
    } else if (key == "lr_max") {
      ls >> cfg.train.lr_max;
    } else if (key == "batch_size") {
      ls >> cfg.train.batch_size;
    } else if (key == "patience") {
      ls >> cfg.train.patience;
    } else if (key == "ema_decay") {
      ls >> cfg.train.ema_decay;
    } else if (key == "omega") {
      ls >> cfg.train.omega;
    } else if (key == "lambda_ewc") {
      ls >> cfg.train.lambda_ewc;
    } else if (key == "max_steps_per_epoch") {
      ls >> cfg.train.max_steps_per_epoch;
    } else if (key == "fisher_samples") {
      ls >> cfg.fisher_samples;
    } else if (key == "out_dir") {
      cfg.out_dir = rest();
    } else {
      throw std::invalid_argument("config: unknown key: " + key);
    }
    if (ls.fail() && key != "seeds" && key != "conv_channels" && key != "class_weights") {
      throw std::invalid_argument("config: bad value for " + key);
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config: " + path);
  os << format_config(cfg);
}

}  // namespace ucil
