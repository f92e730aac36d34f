#pragma once

#include <filesystem>
#include <fstream>
#include <ostream>

#include "kgbilm/trainer/checkpoint.hpp"

namespace kgbilm {

struct RunOptions {
  std::filesystem::path out;          // loss.tsv, checkpoint/ and step-N/ land here
  std::size_t checkpoint_every = 0;   // 0: final checkpoint only
  std::ostream* progress = nullptr;   // optional per-step echo of the loss line
};

/// Trains from `state` up to cfg.total_steps, appending one loss line per
/// step to out/loss.tsv and leaving the final state in out/checkpoint.
inline TrainState run_training(TrainState state, const TrainingData& data, const TrainConfig& cfg, const Vocab& vocab,
                               const RunOptions& opt) {
  cfg.validate();
  std::filesystem::create_directories(opt.out);
  const auto log_path = opt.out / "loss.tsv";
  std::ofstream log(log_path, state.step() == 0 ? std::ios::trunc : std::ios::app);
  if (!log) throw DataError("cannot write " + log_path.string());
  while (state.step() < cfg.total_steps) {
    const auto line = format_loss_line(train_step(state, data, cfg));
    log << line << '\n';
    log.flush();
    if (opt.progress) *opt.progress << line << '\n';
    if (opt.checkpoint_every && state.step() % opt.checkpoint_every == 0 && state.step() < cfg.total_steps) {
      save_checkpoint(opt.out / ("step-" + std::to_string(state.step())), cfg, vocab, state);
    }
  }
  save_checkpoint(opt.out / "checkpoint", cfg, vocab, state);
  return state;
}

}  // namespace kgbilm
