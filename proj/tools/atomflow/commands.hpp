#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace atomflow::cli {

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
};

struct SampleArgs {
  std::filesystem::path ckpt;
  std::filesystem::path out;
  std::string domain = "molecule";
  int n = 16;
  std::optional<int> steps;
  std::optional<int> num_atoms;
  std::uint64_t seed = 0;
  std::filesystem::path report;     // optional
  std::filesystem::path reference;  // optional, for reference-based metrics
};

struct FinetuneArgs {
  std::filesystem::path ckpt;
  std::filesystem::path data;
  std::filesystem::path val;  // empty: validate on the training data
  std::filesystem::path out;
  std::string task = "properties";
  std::optional<int> tap_layer;
  int steps = 100;
  int batch = 16;
  int eval_every = 10;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::filesystem::path in;
  std::filesystem::path report;
  std::filesystem::path reference;
};

struct InspectArgs {
  std::filesystem::path config;
  std::filesystem::path ckpt;
  bool tensors = false;
};

int run_train(const TrainArgs& args);
int run_sample(const SampleArgs& args);
int run_finetune(const FinetuneArgs& args);
int run_eval(const EvalArgs& args);
int run_inspect(const InspectArgs& args);

}  // namespace atomflow::cli
