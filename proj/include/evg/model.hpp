#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "evg/common.hpp"
#include "evg/ssm.hpp"
#include "evg/tensor.hpp"

namespace evg {

struct ModelConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 5;
  std::vector<std::size_t> widths = {8, 16, 32};  // one Blaze block per entry
  std::size_t kernel = 3;                         // asymmetric depthwise size
  std::size_t state_size = 8;                     // SSM states per feature
  std::size_t bins = 2;                           // T
  std::size_t frames_per_bin = 6;                 // Bn
  bool use_ssm = true;
  bool use_btsm = true;
  std::uint64_t seed = 1;

  std::size_t feature_dim() const { return widths.back(); }
  std::size_t num_blocks() const { return widths.size(); }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 60;
  std::size_t patience = 10;
  std::size_t batch_size = 8;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct Dense {
  GradPair w;  // (out, in)
  GradPair b;  // (out)
};

struct DepthwiseAsym {
  GradPair wh;  // (C, k)
  GradPair wv;  // (C, k)
};

/// Depthwise-asym + pointwise + zero-padded channel residual, SiLU, 2x2 pool.
struct BlazeBlock {
  DepthwiseAsym dw;
  Dense pw;
};

struct ParamRef {
  std::string name;
  GradPair* p;
};

struct InventoryEntry {
  std::string name;
  std::size_t count;
};

/// Encoder -> SSM context block -> BTSM -> per-step fusion -> temporal mean
/// -> classifier. The fusion layer (pointwise linear + SiLU applied to every
/// (t, b) position) sits between the shifts and the mean so the BTSM
/// permutation is observable: a cyclic shift followed directly by a mean
/// over the shifted axes would cancel exactly.
struct GestureModel {
  ModelConfig cfg;
  Dense stem;                      // pointwise 2 -> widths[0]
  std::vector<BlazeBlock> blocks;  // widths[i-1] -> widths[i]
  RmsNormParams norm;              // present iff use_ssm
  SsmParams ssm;                   // present iff use_ssm
  Dense fuse;                      // F -> F per timestep
  Dense cls;                       // F -> C

  std::vector<ParamRef> params();
  std::vector<InventoryEntry> inventory() const;
  std::size_t param_count() const;
  void zero_grads();
};

GestureModel build_model(const ModelConfig& cfg);

struct BlockCache {
  TensorN in;       // block input
  TensorN dw_out;
  TensorN pre_act;  // pw_out + padded residual
  TensorN act;
};

struct FrameCache {
  TensorN input;     // (2,H,W)
  TensorN stem_pre;  // before SiLU
  TensorN stem_act;
  std::vector<BlockCache> blocks;
  TensorN pooled_final;  // encoder output before GAP
};

struct ForwardCache {
  std::vector<FrameCache> frames;  // Bt*T*Bn, frame-major per batch element
  TensorN feats;                   // (Bt,T,Bn,F)
  SsmBlockCache ssm;
  TensorN ssm_out;    // (Bt,T,Bn,F)
  TensorN btsm_out;   // (Bt,T,Bn,F)
  TensorN fuse_pre;   // (Bt,T,Bn,F)
  TensorN fuse_act;   // (Bt,T,Bn,F)
  TensorN pooled;     // (Bt,F)
  TensorN logits;     // (Bt,C)
  TensorN probs;      // (Bt,C)
};

/// batch: (Bt, T, Bn, 2, H, W) -> class probabilities (Bt, C); every row
/// sums to 1.
TensorN forward(GestureModel& m, const TensorN& batch, ForwardCache* cache = nullptr);

/// Accumulates parameter gradients for dL/dlogits of shape (Bt, C).
void backward(GestureModel& m, const ForwardCache& cache, const TensorN& dlogits);

struct Sample {
  TensorN volume;  // (T, Bn, 2, H, W)
  std::size_t label = 0;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::size_t num_classes = 0;
};

struct EpochLog {
  std::size_t epoch;
  double train_loss;
  double train_acc;
  double val_loss;
  double val_acc;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 1-based; 0 when no val set was used
};

/// AdamW with decoupled weight decay; early stopping on validation loss with
/// the configured patience, restoring the best parameters. Deterministic for
/// a fixed seed. Throws numeric_error if the loss goes non-finite.
TrainResult train(GestureModel& m, const Dataset& data, const TrainConfig& tc);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::size_t> confusion;  // (C x C) row-major, rows = truth
};

EvalResult evaluate(GestureModel& m, std::span<const Sample> samples,
                    std::size_t batch_size = 16);

/// Rows of `confusion` scaled to sum to 1 (rows with no samples stay zero).
std::vector<double> normalize_confusion(const std::vector<std::size_t>& confusion,
                                        std::size_t num_classes);

struct AblationRow {
  std::string name;
  bool use_ssm;
  bool use_btsm;
  std::size_t param_count;
  std::vector<double> per_seed_accuracy;
  double mean_accuracy;
};

/// The four-variant table {baseline, +BTSM, +SSM, full}; identical configs
/// and seeds across variants except the two flags.
std::vector<AblationRow> ablate(const ModelConfig& base, const Dataset& data,
                                const TrainConfig& tc, std::span<const std::uint64_t> seeds);

/// Checkpoint file: one-line JSON header {format, config, params:[{name,
/// shape}]} + '\n' + little-endian float32 payload in declared order.
void save_checkpoint(const std::filesystem::path& path, GestureModel& m);
GestureModel load_checkpoint(const std::filesystem::path& path);

std::string epoch_log_line(const EpochLog& e);

}  // namespace evg
