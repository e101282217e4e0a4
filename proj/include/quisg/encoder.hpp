#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "quisg/params.hpp"
#include "quisg/tape.hpp"
#include "quisg/tensor.hpp"
#include "quisg/textseq.hpp"

namespace quisg::enc {

// Hidden states of the joint sequence plus the row ranges owned by the
// question and the context.
struct EncoderOutput {
  nn::Tensor h_qc;  // L x d_h
  text::TokenRange question;
  text::TokenRange context;

  nn::Tensor question_states(nn::Tape& tape) const;
  nn::Tensor context_states(nn::Tape& tape) const;
  // Row 0 of h_qc as a 1 x d_h tensor.
  nn::Tensor cls_state(nn::Tape& tape) const;
};

class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput encode(nn::Tape& tape, const text::TokenSequence& seq,
                               const std::string& sequence_id) const = 0;
  virtual std::size_t d_h() const = 0;
};

struct ToyEncoderConfig {
  std::size_t d_h = 32;
  std::size_t mixing_layers = 2;
  std::size_t vocab = 4096;
  std::size_t window_radius = 2;
  double position_scale = 0.1;
};

// Hashed token embeddings plus fixed sinusoidal positions, refined by a
// stack of local mixing layers. Each layer takes the mean over a +/-
// window_radius token window, applies a trained linear map and ELU, and
// adds the result back, so one changed token can only influence rows
// within mixing_layers * window_radius positions of it.
class ToyEncoder : public Encoder {
 public:
  ToyEncoder(nn::ParameterStore& store, ToyEncoderConfig config,
             std::string prefix = "enc");

  EncoderOutput encode(nn::Tape& tape, const text::TokenSequence& seq,
                       const std::string& sequence_id) const override;
  std::size_t d_h() const override { return config_.d_h; }
  const ToyEncoderConfig& config() const { return config_; }

  static std::size_t hash_token(const std::string& token, std::size_t vocab);

 private:
  nn::ParameterStore& store_;
  ToyEncoderConfig config_;
  std::string prefix_;
};

// Serves precomputed hidden-state matrices keyed by sequence id from a
// tensor container file. Rows are constants; nothing is trainable.
class FileEncoder : public Encoder {
 public:
  explicit FileEncoder(const std::filesystem::path& path);

  EncoderOutput encode(nn::Tape& tape, const text::TokenSequence& seq,
                       const std::string& sequence_id) const override;
  std::size_t d_h() const override { return d_h_; }

 private:
  std::map<std::string, nn::Tensor> records_;
  std::size_t d_h_ = 0;
};

}  // namespace quisg::enc
