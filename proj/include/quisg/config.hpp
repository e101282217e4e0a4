#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "quisg/errors.hpp"

namespace quisg::cfg {

// Flat run configuration. File format: one `key = value` per line, with
// '#' comments. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 17;

  // encoder
  std::size_t d_h = 32;
  std::size_t mixing_layers = 2;
  std::size_t vocab = 4096;
  std::size_t window_radius = 2;
  double position_scale = 0.1;
  std::size_t max_tokens = 512;

  // key-utterance extraction
  std::size_t m = 2;  // unit spans m+1 utterances
  std::size_t k = 3;  // units kept per question

  // graph + attention
  std::size_t k_w = 2;
  std::size_t heads = 2;
  std::size_t gat_layers = 5;
  double leaky_slope = 0.2;

  // decoding
  double f = 0.5;
  std::size_t beam = 5;
  std::size_t max_answer_tokens = 30;

  // training
  double lr = 1e-3;
  std::size_t batch_size = 4;
  std::size_t extractor_steps = 200;
  std::size_t qa_steps = 300;

  // answerability
  bool enable_no_answer = false;
  double na_threshold = 0.5;
  bool na_label_one_means_unanswerable = true;

  void validate() const;  // throws ValidationError
  std::string to_string() const;
};

RunConfig load_config(const std::filesystem::path& path);
// Applies one `key=value` override; throws ValidationError on unknown keys
// or unparsable values.
void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value);

}  // namespace quisg::cfg
