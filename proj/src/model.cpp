#include "evg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "evg/btsm.hpp"
#include "evg/event_io.hpp"
#include "evg/kernels.hpp"

namespace evg {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"height", c.height},
                     {"width", c.width},
                     {"num_classes", c.num_classes},
                     {"widths", c.widths},
                     {"kernel", c.kernel},
                     {"state_size", c.state_size},
                     {"bins", c.bins},
                     {"frames_per_bin", c.frames_per_bin},
                     {"use_ssm", c.use_ssm},
                     {"use_btsm", c.use_btsm},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.num_classes = j.value("num_classes", d.num_classes);
  c.widths = j.value("widths", d.widths);
  c.kernel = j.value("kernel", d.kernel);
  c.state_size = j.value("state_size", d.state_size);
  c.bins = j.value("bins", d.bins);
  c.frames_per_bin = j.value("frames_per_bin", d.frames_per_bin);
  c.use_ssm = j.value("use_ssm", d.use_ssm);
  c.use_btsm = j.value("use_btsm", d.use_btsm);
  c.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr", c.lr},
                     {"epochs", c.epochs},
                     {"patience", c.patience},
                     {"batch_size", c.batch_size},
                     {"weight_decay", c.weight_decay},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.lr = j.value("lr", d.lr);
  c.epochs = j.value("epochs", d.epochs);
  c.patience = j.value("patience", d.patience);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.seed = j.value("seed", d.seed);
}

namespace {

void validate_train_config(const TrainConfig& tc) {
  if (!(tc.lr > 0.0) || tc.epochs == 0 || tc.patience == 0 || tc.batch_size == 0 ||
      tc.weight_decay < 0.0)
    throw data_error("train config: lr, epochs, patience and batch_size must be "
                     "positive; weight_decay non-negative");
}

void validate_model_config(const ModelConfig& c) {
  if (c.num_classes < 2) throw data_error("model config: need at least 2 classes");
  if (c.widths.empty()) throw data_error("model config: widths must not be empty");
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    if (c.widths[i] == 0) throw data_error("model config: zero channel width");
    if (i > 0 && c.widths[i] < c.widths[i - 1])
      throw data_error("model config: widths must be non-decreasing (channel-pad residual)");
  }
  if (c.feature_dim() % 4 != 0)
    throw data_error("model config: final width must be divisible by 4 (BTSM channel split)");
  if (c.kernel % 2 == 0 || c.kernel == 0)
    throw data_error("model config: kernel size must be odd");
  const std::size_t down = std::size_t{1} << c.num_blocks();
  if (c.height % down != 0 || c.width % down != 0 || c.height / down == 0 ||
      c.width / down == 0)
    throw data_error("model config: geometry must survive " +
                     std::to_string(c.num_blocks()) + " rounds of 2x2 pooling");
  if (c.bins == 0 || c.frames_per_bin == 0 || c.state_size == 0)
    throw data_error("model config: bins, frames_per_bin, state_size must be positive");
}

Dense init_dense(std::size_t out, std::size_t in, Rng& rng) {
  Dense d;
  d.w = GradPair({out, in});
  d.b = GradPair({out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : d.w.value.data) v = uniform(rng, -bound, bound);
  return d;
}

DepthwiseAsym init_depthwise(std::size_t channels, std::size_t k, Rng& rng) {
  DepthwiseAsym d;
  d.wh = GradPair({channels, k});
  d.wv = GradPair({channels, k});
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  for (double& v : d.wh.value.data) v = uniform(rng, -bound, bound);
  for (double& v : d.wv.value.data) v = uniform(rng, -bound, bound);
  return d;
}

// Zero-pad channels (Cin,H,W) -> (Cout,H,W); parameter-free residual path.
TensorN pad_channels(const TensorN& x, std::size_t cout) {
  const std::size_t cin = x.extent(0), h = x.extent(1), w = x.extent(2);
  TensorN out({cout, h, w});
  std::memcpy(out.data.data(), x.data.data(), cin * h * w * sizeof(double));
  return out;
}

TensorN take_channels(const TensorN& g, std::size_t cin) {
  const std::size_t h = g.extent(1), w = g.extent(2);
  TensorN out({cin, h, w});
  std::memcpy(out.data.data(), g.data.data(), cin * h * w * sizeof(double));
  return out;
}

}  // namespace

GestureModel build_model(const ModelConfig& cfg) {
  validate_model_config(cfg);
  GestureModel m;
  m.cfg = cfg;

  Rng stem_rng = make_rng(cfg.seed, 1);
  m.stem = init_dense(cfg.widths[0], 2, stem_rng);

  for (std::size_t i = 0; i < cfg.num_blocks(); ++i) {
    const std::size_t cin = i == 0 ? cfg.widths[0] : cfg.widths[i - 1];
    Rng block_rng = make_rng(cfg.seed, 10 + i);
    BlazeBlock b;
    b.dw = init_depthwise(cin, cfg.kernel, block_rng);
    b.pw = init_dense(cfg.widths[i], cin, block_rng);
    m.blocks.push_back(std::move(b));
  }

  if (cfg.use_ssm) {
    Rng ssm_rng = make_rng(cfg.seed, 2);
    m.norm = RmsNormParams::init(cfg.feature_dim());
    m.ssm = SsmParams::init(cfg.feature_dim(), cfg.state_size, ssm_rng);
  }

  Rng fuse_rng = make_rng(cfg.seed, 3);
  m.fuse = init_dense(cfg.feature_dim(), cfg.feature_dim(), fuse_rng);
  Rng cls_rng = make_rng(cfg.seed, 4);
  m.cls = init_dense(cfg.num_classes, cfg.feature_dim(), cls_rng);
  return m;
}

std::vector<ParamRef> GestureModel::params() {
  std::vector<ParamRef> out;
  out.push_back({"stem.w", &stem.w});
  out.push_back({"stem.b", &stem.b});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block" + std::to_string(i);
    out.push_back({p + ".dw.h", &blocks[i].dw.wh});
    out.push_back({p + ".dw.v", &blocks[i].dw.wv});
    out.push_back({p + ".pw.w", &blocks[i].pw.w});
    out.push_back({p + ".pw.b", &blocks[i].pw.b});
  }
  if (cfg.use_ssm) {
    out.push_back({"norm.gain", &norm.gain});
    out.push_back({"ssm.A", &ssm.a});
    out.push_back({"ssm.W_B", &ssm.w_b});
    out.push_back({"ssm.W_C", &ssm.w_c});
    out.push_back({"ssm.W_delta", &ssm.w_delta});
    out.push_back({"ssm.b_delta", &ssm.b_delta});
    out.push_back({"ssm.D", &ssm.skip});
  }
  out.push_back({"fuse.w", &fuse.w});
  out.push_back({"fuse.b", &fuse.b});
  out.push_back({"cls.w", &cls.w});
  out.push_back({"cls.b", &cls.b});
  return out;
}

std::vector<InventoryEntry> GestureModel::inventory() const {
  std::vector<InventoryEntry> out;
  auto& self = const_cast<GestureModel&>(*this);
  for (const ParamRef& pr : self.params()) out.push_back({pr.name, pr.p->value.numel()});
  if (cfg.use_btsm) {
    // Placed where the module sits in the pipeline: after the context block,
    // before fusion. Always zero: the shifts are pure permutations.
    auto it = out.end();
    for (auto i = out.begin(); i != out.end(); ++i)
      if (i->name == "fuse.w") {
        it = i;
        break;
      }
    out.insert(it, {"btsm", 0});
  }
  return out;
}

std::size_t GestureModel::param_count() const {
  std::size_t n = 0;
  for (const InventoryEntry& e : inventory()) n += e.count;
  return n;
}

void GestureModel::zero_grads() {
  for (ParamRef& pr : params()) pr.p->zero_grad();
}

namespace {

// Gradient buffers for the shared frame encoder; one instance per frame so
// frames can run in parallel and reduce in fixed order afterwards.
struct DenseGrads {
  TensorN dw, db;
};

struct BlockGrads {
  TensorN dwh, dwv;
  DenseGrads pw;
};

struct EncoderGrads {
  DenseGrads stem;
  std::vector<BlockGrads> blocks;
};

TensorN encode_frame(GestureModel& m, TensorN frame, FrameCache* cache) {
  TensorN stem_pre = conv_pointwise(frame, m.stem.w.value, m.stem.b.value);
  TensorN stem_act = silu(stem_pre);

  TensorN cur = stem_act;
  std::vector<BlockCache> bcaches;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    BlazeBlock& blk = m.blocks[i];
    TensorN dw_out = conv_depthwise_asym(cur, blk.dw.wh.value, blk.dw.wv.value);
    TensorN pre_act = conv_pointwise(dw_out, blk.pw.w.value, blk.pw.b.value);
    // Residual: zero-padded channels of the block input.
    const std::size_t cin = cur.extent(0);
    for (std::size_t c = 0; c < cin; ++c) {
      const std::size_t plane = cur.extent(1) * cur.extent(2);
      double* dst = pre_act.data.data() + c * plane;
      const double* src = cur.data.data() + c * plane;
      for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
    }
    TensorN act = silu(pre_act);
    TensorN pooled = maxpool2x2(act);
    if (cache) {
      BlockCache bc;
      bc.in = std::move(cur);
      bc.dw_out = std::move(dw_out);
      bc.pre_act = std::move(pre_act);
      bc.act = std::move(act);
      bcaches.push_back(std::move(bc));
    }
    cur = std::move(pooled);
  }

  TensorN feat = global_avg_pool(cur);
  if (cache) {
    cache->input = std::move(frame);
    cache->stem_pre = std::move(stem_pre);
    cache->stem_act = std::move(stem_act);
    cache->blocks = std::move(bcaches);
    cache->pooled_final = std::move(cur);
  }
  return feat;
}

EncoderGrads encode_frame_backward(GestureModel& m, const FrameCache& cache,
                                   const TensorN& dfeat) {
  EncoderGrads g;
  g.blocks.resize(m.blocks.size());

  TensorN dcur = global_avg_pool_backward(cache.pooled_final, dfeat);
  for (std::size_t i = m.blocks.size(); i-- > 0;) {
    const BlockCache& bc = cache.blocks[i];
    BlazeBlock& blk = m.blocks[i];
    TensorN dact = maxpool2x2_backward(bc.act, dcur);
    TensorN dpre = silu_backward(bc.pre_act, dact);

    ConvPointwiseGrads pw = conv_pointwise_backward(bc.dw_out, blk.pw.w.value, dpre);
    ConvAsymGrads dw =
        conv_depthwise_asym_backward(bc.in, blk.dw.wh.value, blk.dw.wv.value, pw.dx);

    TensorN dres = take_channels(dpre, bc.in.extent(0));
    dcur = std::move(dw.dx);
    add_inplace(dcur, dres);

    g.blocks[i].dwh = std::move(dw.dweights_h);
    g.blocks[i].dwv = std::move(dw.dweights_v);
    g.blocks[i].pw.dw = std::move(pw.dw);
    g.blocks[i].pw.db = std::move(pw.db);
  }

  TensorN dstem_pre = silu_backward(cache.stem_pre, dcur);
  ConvPointwiseGrads sg = conv_pointwise_backward(cache.input, m.stem.w.value, dstem_pre);
  g.stem.dw = std::move(sg.dw);
  g.stem.db = std::move(sg.db);
  return g;
}

void check_batch_shape(const GestureModel& m, const TensorN& batch) {
  const ModelConfig& c = m.cfg;
  if (batch.rank() != 6 || batch.extent(1) != c.bins || batch.extent(2) != c.frames_per_bin ||
      batch.extent(3) != 2 || batch.extent(4) != c.height || batch.extent(5) != c.width)
    throw std::invalid_argument(
        "forward: batch shape " + shape_string(batch.shape) + " does not match config (Bt," +
        std::to_string(c.bins) + "," + std::to_string(c.frames_per_bin) + ",2," +
        std::to_string(c.height) + "," + std::to_string(c.width) + ")");
}

}  // namespace

TensorN forward(GestureModel& m, const TensorN& batch, ForwardCache* cache) {
  check_batch_shape(m, batch);
  const ModelConfig& c = m.cfg;
  const std::size_t bt = batch.extent(0);
  const std::size_t n = c.bins * c.frames_per_bin;
  const std::size_t f = c.feature_dim();
  const std::size_t frame_elems = 2 * c.height * c.width;

  TensorN feats({bt, c.bins, c.frames_per_bin, f});
  if (cache) cache->frames.assign(bt * n, FrameCache());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t fr = 0; fr < static_cast<std::ptrdiff_t>(bt * n); ++fr) {
    const auto fi = static_cast<std::size_t>(fr);
    TensorN frame({2, c.height, c.width});
    std::memcpy(frame.data.data(), batch.data.data() + fi * frame_elems,
                frame_elems * sizeof(double));
    TensorN feat = encode_frame(m, std::move(frame), cache ? &cache->frames[fi] : nullptr);
    std::memcpy(feats.data.data() + fi * f, feat.data.data(), f * sizeof(double));
  }

  TensorN ssm_out =
      c.use_ssm ? ssm_block(feats, m.ssm, m.norm, cache ? &cache->ssm : nullptr) : feats;
  TensorN btsm_out = c.use_btsm ? btsm_forward(ssm_out) : ssm_out;

  TensorN fuse_pre({bt, c.bins, c.frames_per_bin, f});
  TensorN fuse_act({bt, c.bins, c.frames_per_bin, f});
  TensorN x_step({f});
  for (std::size_t b = 0; b < bt; ++b)
    for (std::size_t step = 0; step < n; ++step) {
      std::memcpy(x_step.data.data(), btsm_out.data.data() + (b * n + step) * f,
                  f * sizeof(double));
      TensorN pre = linear(x_step, m.fuse.w.value, m.fuse.b.value);
      TensorN act = silu(pre);
      std::memcpy(fuse_pre.data.data() + (b * n + step) * f, pre.data.data(),
                  f * sizeof(double));
      std::memcpy(fuse_act.data.data() + (b * n + step) * f, act.data.data(),
                  f * sizeof(double));
    }

  TensorN pooled({bt, f});
  for (std::size_t b = 0; b < bt; ++b)
    for (std::size_t step = 0; step < n; ++step)
      for (std::size_t ff = 0; ff < f; ++ff)
        pooled.data[pooled.idx(b, ff)] += fuse_act.data[(b * n + step) * f + ff];
  scale_inplace(pooled, 1.0 / static_cast<double>(n));

  TensorN logits({bt, c.num_classes});
  TensorN probs({bt, c.num_classes});
  TensorN row({f});
  for (std::size_t b = 0; b < bt; ++b) {
    std::memcpy(row.data.data(), pooled.data.data() + b * f, f * sizeof(double));
    TensorN lg = linear(row, m.cls.w.value, m.cls.b.value);
    TensorN pb = softmax(lg);
    std::memcpy(logits.data.data() + b * c.num_classes, lg.data.data(),
                c.num_classes * sizeof(double));
    std::memcpy(probs.data.data() + b * c.num_classes, pb.data.data(),
                c.num_classes * sizeof(double));
  }

  if (cache) {
    cache->feats = std::move(feats);
    cache->ssm_out = std::move(ssm_out);
    cache->btsm_out = std::move(btsm_out);
    cache->fuse_pre = std::move(fuse_pre);
    cache->fuse_act = std::move(fuse_act);
    cache->pooled = std::move(pooled);
    cache->logits = std::move(logits);
    cache->probs = probs;
  }
  return probs;
}

void backward(GestureModel& m, const ForwardCache& cache, const TensorN& dlogits) {
  const ModelConfig& c = m.cfg;
  const std::size_t bt = dlogits.extent(0);
  const std::size_t n = c.bins * c.frames_per_bin;
  const std::size_t f = c.feature_dim();

  // Classifier.
  TensorN dpooled({bt, f});
  TensorN row({f}), drow({c.num_classes});
  for (std::size_t b = 0; b < bt; ++b) {
    std::memcpy(row.data.data(), cache.pooled.data.data() + b * f, f * sizeof(double));
    std::memcpy(drow.data.data(), dlogits.data.data() + b * c.num_classes,
                c.num_classes * sizeof(double));
    LinearGrads lg = linear_backward(row, m.cls.w.value, drow);
    add_inplace(m.cls.w.grad, lg.dw);
    add_inplace(m.cls.b.grad, lg.db);
    std::memcpy(dpooled.data.data() + b * f, lg.dx.data.data(), f * sizeof(double));
  }

  // Temporal mean and fusion layer.
  TensorN dbtsm_out({bt, c.bins, c.frames_per_bin, f});
  const double inv_n = 1.0 / static_cast<double>(n);
  TensorN x_step({f}), d_step({f});
  for (std::size_t b = 0; b < bt; ++b)
    for (std::size_t step = 0; step < n; ++step) {
      for (std::size_t ff = 0; ff < f; ++ff)
        d_step.data[ff] = dpooled.data[dpooled.idx(b, ff)] * inv_n;
      TensorN pre({f});
      std::memcpy(pre.data.data(), cache.fuse_pre.data.data() + (b * n + step) * f,
                  f * sizeof(double));
      TensorN dpre = silu_backward(pre, d_step);
      std::memcpy(x_step.data.data(), cache.btsm_out.data.data() + (b * n + step) * f,
                  f * sizeof(double));
      LinearGrads lg = linear_backward(x_step, m.fuse.w.value, dpre);
      add_inplace(m.fuse.w.grad, lg.dw);
      add_inplace(m.fuse.b.grad, lg.db);
      std::memcpy(dbtsm_out.data.data() + (b * n + step) * f, lg.dx.data.data(),
                  f * sizeof(double));
    }

  TensorN dssm_out = c.use_btsm ? btsm_backward(dbtsm_out) : std::move(dbtsm_out);

  TensorN dfeats;
  if (c.use_ssm) {
    SsmBlockGrads bg = ssm_block_backward(cache.feats, m.ssm, m.norm, cache.ssm, dssm_out);
    add_inplace(m.ssm.a.grad, bg.params.da);
    add_inplace(m.ssm.w_b.grad, bg.params.dw_b);
    add_inplace(m.ssm.w_c.grad, bg.params.dw_c);
    add_inplace(m.ssm.w_delta.grad, bg.params.dw_delta);
    add_inplace(m.ssm.b_delta.grad, bg.params.db_delta);
    add_inplace(m.ssm.skip.grad, bg.params.dskip);
    add_inplace(m.norm.gain.grad, bg.dgain);
    dfeats = std::move(bg.dx);
  } else {
    dfeats = std::move(dssm_out);
  }

  // Shared frame encoder: per-frame buffers, then a fixed-order reduction.
  const std::size_t frames = bt * n;
  std::vector<EncoderGrads> per_frame(frames);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t fr = 0; fr < static_cast<std::ptrdiff_t>(frames); ++fr) {
    const auto fi = static_cast<std::size_t>(fr);
    TensorN dfeat({f});
    std::memcpy(dfeat.data.data(), dfeats.data.data() + fi * f, f * sizeof(double));
    per_frame[fi] = encode_frame_backward(m, cache.frames[fi], dfeat);
  }

  for (std::size_t fi = 0; fi < frames; ++fi) {
    add_inplace(m.stem.w.grad, per_frame[fi].stem.dw);
    add_inplace(m.stem.b.grad, per_frame[fi].stem.db);
    for (std::size_t i = 0; i < m.blocks.size(); ++i) {
      add_inplace(m.blocks[i].dw.wh.grad, per_frame[fi].blocks[i].dwh);
      add_inplace(m.blocks[i].dw.wv.grad, per_frame[fi].blocks[i].dwv);
      add_inplace(m.blocks[i].pw.w.grad, per_frame[fi].blocks[i].pw.dw);
      add_inplace(m.blocks[i].pw.b.grad, per_frame[fi].blocks[i].pw.db);
    }
  }
}

namespace {

bool decayed_param(const std::string& name) {
  // Decoupled weight decay applies to weight matrices only; biases, gains,
  // the state matrix and the skip vector are exempt.
  return name.ends_with(".w") || name.ends_with("dw.h") || name.ends_with("dw.v") ||
         name == "ssm.W_B" || name == "ssm.W_C" || name == "ssm.W_delta";
}

struct AdamState {
  std::vector<double> m, v;
};

struct Batch {
  TensorN input;
  std::vector<std::size_t> labels;
};

Batch assemble_batch(std::span<const Sample> pool, std::span<const std::size_t> idxs,
                     const ModelConfig& cfg) {
  const std::size_t bt = idxs.size();
  Batch b;
  b.input = TensorN({bt, cfg.bins, cfg.frames_per_bin, 2, cfg.height, cfg.width});
  const std::size_t per = b.input.numel() / bt;
  for (std::size_t i = 0; i < bt; ++i) {
    const Sample& s = pool[idxs[i]];
    if (s.volume.numel() != per)
      throw data_error("sample volume shape does not match model config");
    std::memcpy(b.input.data.data() + i * per, s.volume.data.data(), per * sizeof(double));
    b.labels.push_back(s.label);
  }
  return b;
}

void fisher_yates(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[uniform_below(rng, i)]);
}

}  // namespace

EvalResult evaluate(GestureModel& m, std::span<const Sample> samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw data_error("evaluate: empty dataset");
  const std::size_t c = m.cfg.num_classes;
  EvalResult r;
  r.confusion.assign(c * c, 0);

  std::vector<std::size_t> idxs(samples.size());
  std::iota(idxs.begin(), idxs.end(), 0);
  double loss_sum = 0.0;
  std::size_t correct = 0;

  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, samples.size() - start);
    Batch b = assemble_batch(samples, std::span(idxs).subspan(start, count), m.cfg);
    TensorN probs = forward(m, b.input);
    TensorN row({c});
    for (std::size_t i = 0; i < count; ++i) {
      std::memcpy(row.data.data(), probs.data.data() + i * c, c * sizeof(double));
      loss_sum += cross_entropy(row, b.labels[i]).loss;
      std::size_t pred = 0;
      for (std::size_t k = 1; k < c; ++k)
        if (row.data[k] > row.data[pred]) pred = k;
      if (pred == b.labels[i]) ++correct;
      ++r.confusion[b.labels[i] * c + pred];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  r.mean_loss = loss_sum / static_cast<double>(samples.size());
  return r;
}

std::vector<double> normalize_confusion(const std::vector<std::size_t>& confusion,
                                        std::size_t num_classes) {
  std::vector<double> out(confusion.size(), 0.0);
  for (std::size_t r = 0; r < num_classes; ++r) {
    std::size_t total = 0;
    for (std::size_t k = 0; k < num_classes; ++k) total += confusion[r * num_classes + k];
    if (total == 0) continue;
    for (std::size_t k = 0; k < num_classes; ++k)
      out[r * num_classes + k] =
          static_cast<double>(confusion[r * num_classes + k]) / static_cast<double>(total);
  }
  return out;
}

TrainResult train(GestureModel& m, const Dataset& data, const TrainConfig& tc) {
  validate_train_config(tc);
  if (data.train.empty()) throw data_error("train: empty training set");

  std::vector<ParamRef> prs = m.params();
  std::vector<AdamState> adam(prs.size());
  for (std::size_t i = 0; i < prs.size(); ++i) {
    adam[i].m.assign(prs[i].p->value.numel(), 0.0);
    adam[i].v.assign(prs[i].p->value.numel(), 0.0);
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t step_count = 0;

  Rng shuffle_rng = make_rng(tc.seed, 42, 17);

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  std::size_t stale = 0;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t c = m.cfg.num_classes;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    fisher_yates(order, shuffle_rng);

    double train_loss = 0.0;
    std::size_t train_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t count = std::min(tc.batch_size, order.size() - start);
      Batch batch =
          assemble_batch(data.train, std::span(order).subspan(start, count), m.cfg);

      ForwardCache cache;
      TensorN probs = forward(m, batch.input, &cache);

      TensorN dlogits({count, c});
      TensorN row({c});
      for (std::size_t i = 0; i < count; ++i) {
        std::memcpy(row.data.data(), probs.data.data() + i * c, c * sizeof(double));
        const CrossEntropyResult ce = cross_entropy(row, batch.labels[i]);
        if (!std::isfinite(ce.loss))
          throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step_count));
        train_loss += ce.loss;
        std::size_t pred = 0;
        for (std::size_t k = 1; k < c; ++k)
          if (row.data[k] > row.data[pred]) pred = k;
        if (pred == batch.labels[i]) ++train_correct;

        TensorN g = softmax_cross_entropy_backward(row, batch.labels[i]);
        for (std::size_t k = 0; k < c; ++k)
          dlogits.data[dlogits.idx(i, k)] = g.data[k] / static_cast<double>(count);
      }

      m.zero_grads();
      backward(m, cache, dlogits);

      ++step_count;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
      for (std::size_t pi = 0; pi < prs.size(); ++pi) {
        const bool decay = decayed_param(prs[pi].name);
        double* w = prs[pi].p->value.data.data();
        const double* g = prs[pi].p->grad.data.data();
        double* mm = adam[pi].m.data();
        double* vv = adam[pi].v.data();
        const std::size_t nel = prs[pi].p->value.numel();
        for (std::size_t k = 0; k < nel; ++k) {
          mm[k] = beta1 * mm[k] + (1.0 - beta1) * g[k];
          vv[k] = beta2 * vv[k] + (1.0 - beta2) * g[k] * g[k];
          const double mhat = mm[k] / bc1;
          const double vhat = vv[k] / bc2;
          double upd = mhat / (std::sqrt(vhat) + eps);
          if (decay) upd += tc.weight_decay * w[k];
          w[k] -= tc.lr * upd;
        }
      }
      if (m.cfg.use_ssm) {
        // Keep the state matrix strictly negative (scan stability).
        for (double& v : m.ssm.a.value.data) v = std::min(v, -1e-4);
      }
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_loss / static_cast<double>(order.size());
    log.train_acc = static_cast<double>(train_correct) / static_cast<double>(order.size());
    if (!data.val.empty()) {
      EvalResult ev = evaluate(m, data.val, tc.batch_size);
      log.val_loss = ev.mean_loss;
      log.val_acc = ev.accuracy;
    } else {
      log.val_loss = log.train_loss;
      log.val_acc = log.train_acc;
    }
    result.log.push_back(log);

    if (!data.val.empty()) {
      if (log.val_loss < best_val) {
        best_val = log.val_loss;
        result.best_epoch = epoch;
        stale = 0;
        best_params.clear();
        for (ParamRef& pr : prs) best_params.push_back(pr.p->value.data);
      } else {
        ++stale;
        if (stale >= tc.patience) break;
      }
    }
  }

  if (!best_params.empty())
    for (std::size_t i = 0; i < prs.size(); ++i) prs[i].p->value.data = best_params[i];
  return result;
}

std::vector<AblationRow> ablate(const ModelConfig& base, const Dataset& data,
                                const TrainConfig& tc, std::span<const std::uint64_t> seeds) {
  struct Variant {
    const char* name;
    bool use_ssm, use_btsm;
  };
  static constexpr Variant kVariants[] = {{"baseline", false, false},
                                          {"btsm", false, true},
                                          {"ssm", true, false},
                                          {"full", true, true}};
  std::vector<AblationRow> rows;
  for (const Variant& v : kVariants) {
    AblationRow row;
    row.name = v.name;
    row.use_ssm = v.use_ssm;
    row.use_btsm = v.use_btsm;
    for (std::uint64_t seed : seeds) {
      ModelConfig cfg = base;
      cfg.use_ssm = v.use_ssm;
      cfg.use_btsm = v.use_btsm;
      cfg.seed = seed;
      GestureModel model = build_model(cfg);
      row.param_count = model.param_count();
      TrainConfig tcs = tc;
      tcs.seed = seed;
      train(model, data, tcs);
      row.per_seed_accuracy.push_back(evaluate(model, data.test, tc.batch_size).accuracy);
    }
    row.mean_accuracy =
        std::accumulate(row.per_seed_accuracy.begin(), row.per_seed_accuracy.end(), 0.0) /
        static_cast<double>(row.per_seed_accuracy.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void put_f32le(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

float get_f32le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, GestureModel& m) {
  nlohmann::json params = nlohmann::json::array();
  for (const ParamRef& pr : m.params())
    params.push_back({{"name", pr.name}, {"shape", pr.p->value.shape}});
  nlohmann::json header = {
      {"format", "evg-checkpoint-v1"}, {"config", m.cfg}, {"params", params}};
  std::string head = header.dump();
  head.push_back('\n');

  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  for (const ParamRef& pr : m.params())
    for (double v : pr.p->value.data) put_f32le(bytes, static_cast<float>(v));
  write_file_bytes(path, bytes);
}

GestureModel load_checkpoint(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw data_error(path.string() + ": missing checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), nl);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path.string() + ": bad checkpoint header: " + e.what());
  }
  if (header.value("format", "") != "evg-checkpoint-v1")
    throw data_error(path.string() + ": unknown checkpoint format");

  GestureModel m = build_model(header.at("config").get<ModelConfig>());
  const nlohmann::json& ptable = header.at("params");

  std::size_t off = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  std::vector<ParamRef> prs = m.params();
  if (ptable.size() != prs.size())
    throw data_error(path.string() + ": parameter table size mismatch");
  for (std::size_t i = 0; i < prs.size(); ++i) {
    if (ptable[i].at("name").get<std::string>() != prs[i].name ||
        ptable[i].at("shape").get<std::vector<std::size_t>>() != prs[i].p->value.shape)
      throw data_error(path.string() + ": parameter table entry " + std::to_string(i) +
                       " does not match config");
    for (double& v : prs[i].p->value.data) {
      if (off + 4 > bytes.size()) throw data_error(path.string() + ": truncated payload");
      v = static_cast<double>(get_f32le(bytes.data() + off));
      off += 4;
    }
  }
  if (off != bytes.size()) throw data_error(path.string() + ": trailing bytes in payload");
  return m;
}

std::string epoch_log_line(const EpochLog& e) {
  nlohmann::json j = {{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_acc}};
  return j.dump();
}

}  // namespace evg
