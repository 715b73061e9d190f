#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ucil/dataset.hpp"
#include "ucil/eval.hpp"
#include "ucil/model.hpp"
#include "ucil/trainer.hpp"

namespace ucil {

enum class Method { Ucil, Finetune, Joint, Nr, Ewc, Lwf };

Method parse_method(const std::string& name);
std::string method_name(Method m);
TaskMode parse_task_mode(const std::string& name);
std::string task_mode_name(TaskMode m);

// One experiment: a method on the synthetic corpus under a task split, with
// rehearsal capacity, the UCIL ablation toggles, and the seed list for the
// matrix. Training hyper-parameters carry desk-scale defaults; TrainConfig
// itself defaults to the reference constants (batch 48, lr 0.001, warm-up
// 50 of 200 epochs, EMA 0.999).
struct ExperimentConfig {
  Method method = Method::Ucil;
  TaskMode task_mode = TaskMode::TwoTask;
  std::size_t cap_strong = 60;
  std::size_t cap_weak = 30;
  bool fd = true;  // feature distillation (UCIL only)
  bool ul = true;  // unlabeled stream + selection (UCIL only)
  bool mu = true;  // balanced memory update; off falls back to random fill
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  SynthSpec synth;
  std::size_t eval_strong = 120;  // held-out eval corpus, strong-labeled
  ModelConfig model;
  TrainConfig train;
  std::size_t fisher_samples = 500;
  std::string out_dir = "runs";

  ExperimentConfig();
  void validate() const;
};

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);
std::string format_config(const ExperimentConfig& cfg);

}  // namespace ucil
