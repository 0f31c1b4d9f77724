#include "csteer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Core>

#include "csteer/error.hpp"
#include "csteer/rng.hpp"
#include "engine.hpp"
#include "kernels.hpp"

namespace csteer {
namespace {

using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Mat>;
using MapM = Eigen::Map<Mat>;
using RowC = Eigen::Map<const Eigen::RowVectorXf>;
using RowM = Eigen::Map<Eigen::RowVectorXf>;

struct Segment {
  std::size_t begin = 0;  // first row in the packed batch
  std::size_t length = 0;
};

// Sequences stacked row-wise; attention never crosses a segment boundary.
struct Packed {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> positions;
  std::vector<Segment> segments;
  std::vector<int> targets;  // next-token target per row, -1 when unsupervised
  std::size_t supervised = 0;
};

Packed pack(std::span<const Sequence> batch, const detail::Dims& dm) {
  Packed p;
  for (const auto& seq : batch) {
    const std::size_t n = seq.tokens.size();
    if (n < 2) throw ConfigError("training sequence needs at least two tokens");
    if (n > dm.max_seq) {
      throw ConfigError("training sequence of length " + std::to_string(n) + " exceeds max_seq_len");
    }
    if (seq.answer_begin < 1 || seq.answer_begin >= n) {
      throw ConfigError("training sequence has no supervised answer tokens");
    }
    detail::check_tokens(dm, seq.tokens);
    p.segments.push_back({p.tokens.size(), n});
    for (std::size_t i = 0; i < n; ++i) {
      p.tokens.push_back(seq.tokens[i]);
      p.positions.push_back(i);
      const bool supervised = i + 1 >= seq.answer_begin && i + 1 < n;
      p.targets.push_back(supervised ? seq.tokens[i + 1] : -1);
      p.supervised += supervised;
    }
  }
  return p;
}

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXf rstd;
};

Mat layernorm(const Mat& x, const float* g, const float* b, LayerNormCache& cache) {
  const auto d = x.cols();
  cache.xhat.resize(x.rows(), d);
  cache.rstd.resize(x.rows());
  Mat y(x.rows(), d);
  const RowC gain(g, d), bias(b, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const float mean = x.row(i).mean();
    const float var = (x.row(i).array() - mean).square().mean();
    const float rstd = 1.0f / std::sqrt(var + kernels::kLayerNormEps);
    cache.rstd(i) = rstd;
    cache.xhat.row(i) = (x.row(i).array() - mean) * rstd;
    y.row(i) = cache.xhat.row(i).cwiseProduct(gain) + bias;
  }
  return y;
}

Mat layernorm_backward(const Mat& dy, const float* g, const LayerNormCache& cache, float* dg,
                       float* db) {
  const auto d = dy.cols();
  const RowC gain(g, d);
  RowM dgain(dg, d), dbias(db, d);
  Mat dx(dy.rows(), d);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    dgain += dy.row(i).cwiseProduct(cache.xhat.row(i));
    dbias += dy.row(i);
    const Eigen::RowVectorXf dxhat = dy.row(i).cwiseProduct(gain);
    const float mean_dxhat = dxhat.mean();
    const float mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = cache.rstd(i) *
                (dxhat.array() - mean_dxhat - cache.xhat.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

struct LayerCache {
  Mat x_in;
  LayerNormCache ln1;
  Mat a1, qkv;
  std::vector<Mat> probs;  // per (segment, head)
  Mat attn;                // concatenated head outputs
  Mat x_mid;
  LayerNormCache ln2;
  Mat a2, pre_gelu, gelu_tanh, post_gelu;
};

struct ForwardResult {
  double loss_sum = 0.0;
  std::vector<LayerCache> layers;
  Mat x_final;
  LayerNormCache lnf;
  Mat z;
  Mat dlogits;  // softmax - onehot, unscaled
};

class Trainer {
 public:
  Trainer(const ModelConfig& config, const float* params)
      : config_(config), params_(params), off_(detail::build_layout(config)),
        dm_(detail::dims_of(config)) {}

  ForwardResult forward(const Packed& p, bool keep) const {
    const auto d = static_cast<Eigen::Index>(dm_.d);
    const auto rows = static_cast<Eigen::Index>(p.tokens.size());
    ForwardResult r;
    Mat x(rows, d);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto pos = p.positions[static_cast<std::size_t>(i)];
      x.row(i) = RowC(params_ + off_.wpe + pos * dm_.d, d);
      for (std::size_t k = 0; k < detail::kEmbedTaps && k <= pos; ++k) {
        const auto t = static_cast<std::size_t>(p.tokens[static_cast<std::size_t>(i) - k]);
        x.row(i).array() += RowC(params_ + off_.emb_taps + k * dm_.d, d).array() *
                            RowC(params_ + off_.wte + t * dm_.d, d).array();
      }
    }
    const float scale = 1.0f / std::sqrt(static_cast<float>(dm_.head_dim));
    const auto hd = static_cast<Eigen::Index>(dm_.head_dim);
    for (std::size_t l = 0; l < dm_.layers; ++l) {
      const auto& lo = off_.layers[l];
      LayerCache c;
      c.x_in = x;
      c.a1 = layernorm(x, params_ + lo.ln1_g, params_ + lo.ln1_b, c.ln1);
      c.qkv = c.a1 * MapC(params_ + lo.w_qkv, d, 3 * d);
      c.qkv.rowwise() += RowC(params_ + lo.b_qkv, 3 * d);
      c.attn.setZero(rows, d);
      for (const auto& seg : p.segments) {
        const auto b = static_cast<Eigen::Index>(seg.begin);
        const auto n = static_cast<Eigen::Index>(seg.length);
        for (std::size_t h = 0; h < dm_.heads; ++h) {
          const auto col = static_cast<Eigen::Index>(h) * hd;
          const auto q = c.qkv.block(b, col, n, hd);
          const auto k = c.qkv.block(b, d + col, n, hd);
          const auto v = c.qkv.block(b, 2 * d + col, n, hd);
          Mat s = (q * k.transpose()) * scale;
          for (Eigen::Index i = 0; i < n; ++i) {
            const float mx = s.row(i).head(i + 1).maxCoeff();
            float total = 0.0f;
            for (Eigen::Index j = 0; j <= i; ++j) {
              s(i, j) = std::exp(s(i, j) - mx);
              total += s(i, j);
            }
            s.row(i).head(i + 1) /= total;
            s.row(i).tail(n - i - 1).setZero();
          }
          c.attn.block(b, col, n, hd) = s * v;
          if (keep) c.probs.push_back(std::move(s));
        }
      }
      x += c.attn * MapC(params_ + lo.w_o, d, d);
      x.rowwise() += RowC(params_ + lo.b_o, d);
      c.x_mid = x;
      c.a2 = layernorm(x, params_ + lo.ln2_g, params_ + lo.ln2_b, c.ln2);
      const auto ff = static_cast<Eigen::Index>(dm_.ff);
      c.pre_gelu = c.a2 * MapC(params_ + lo.w_fc, d, ff);
      c.pre_gelu.rowwise() += RowC(params_ + lo.b_fc, ff);
      {
        const auto z = c.pre_gelu.array();
        c.gelu_tanh = (kernels::kGeluC * (z + 0.044715f * z.cube())).tanh().matrix();
        c.post_gelu = (0.5f * z * (1.0f + c.gelu_tanh.array())).matrix();
      }
      x += c.post_gelu * MapC(params_ + lo.w_proj, ff, d);
      x.rowwise() += RowC(params_ + lo.b_proj, d);
      if (keep) r.layers.push_back(std::move(c));
    }
    r.z = layernorm(x, params_ + off_.lnf_g, params_ + off_.lnf_b, r.lnf);
    r.x_final = std::move(x);
    const auto vocab = static_cast<Eigen::Index>(dm_.vocab);
    Mat logits = r.z * MapC(params_ + off_.w_head, d, vocab);
    r.dlogits.setZero(rows, vocab);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const int target = p.targets[static_cast<std::size_t>(i)];
      if (target < 0) continue;
      const float mx = logits.row(i).maxCoeff();
      const Eigen::RowVectorXf e = (logits.row(i).array() - mx).exp().matrix();
      const double total = e.cast<double>().sum();
      r.loss_sum += std::log(total) - static_cast<double>(logits(i, target) - mx);
      r.dlogits.row(i) = e / static_cast<float>(total);
      r.dlogits(i, target) -= 1.0f;
    }
    return r;
  }

  // Gradient of loss_sum * inv_count.
  void backward(const Packed& p, ForwardResult& r, float inv_count, float* grad) const {
    const auto d = static_cast<Eigen::Index>(dm_.d);
    const auto hd = static_cast<Eigen::Index>(dm_.head_dim);
    const auto ff = static_cast<Eigen::Index>(dm_.ff);
    const auto vocab = static_cast<Eigen::Index>(dm_.vocab);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dm_.head_dim));
    r.dlogits *= inv_count;
    MapM(grad + off_.w_head, d, vocab).noalias() += r.z.transpose() * r.dlogits;
    Mat dz = r.dlogits * MapC(params_ + off_.w_head, d, vocab).transpose();
    Mat dx = layernorm_backward(dz, params_ + off_.lnf_g, r.lnf, grad + off_.lnf_g, grad + off_.lnf_b);

    for (std::size_t li = dm_.layers; li-- > 0;) {
      const auto& lo = off_.layers[li];
      const LayerCache& c = r.layers[li];
      // MLP branch.
      MapM(grad + lo.w_proj, ff, d).noalias() += c.post_gelu.transpose() * dx;
      RowM(grad + lo.b_proj, d) += dx.colwise().sum();
      Mat dg = dx * MapC(params_ + lo.w_proj, ff, d).transpose();
      {
        const auto z = c.pre_gelu.array();
        const auto t = c.gelu_tanh.array();
        const auto du = kernels::kGeluC * (1.0f + 3.0f * 0.044715f * z.square());
        dg.array() *= 0.5f * (1.0f + t) + 0.5f * z * (1.0f - t.square()) * du;
      }
      MapM(grad + lo.w_fc, d, ff).noalias() += c.a2.transpose() * dg;
      RowM(grad + lo.b_fc, ff) += dg.colwise().sum();
      Mat da2 = dg * MapC(params_ + lo.w_fc, d, ff).transpose();
      dx += layernorm_backward(da2, params_ + lo.ln2_g, c.ln2, grad + lo.ln2_g, grad + lo.ln2_b);
      // Attention branch.
      MapM(grad + lo.w_o, d, d).noalias() += c.attn.transpose() * dx;
      RowM(grad + lo.b_o, d) += dx.colwise().sum();
      const Mat dattn = dx * MapC(params_ + lo.w_o, d, d).transpose();
      Mat dqkv = Mat::Zero(dx.rows(), 3 * d);
      std::size_t pi = 0;
      for (const auto& seg : p.segments) {
        const auto b = static_cast<Eigen::Index>(seg.begin);
        const auto n = static_cast<Eigen::Index>(seg.length);
        for (std::size_t h = 0; h < dm_.heads; ++h, ++pi) {
          const auto col = static_cast<Eigen::Index>(h) * hd;
          const Mat& P = c.probs[pi];
          const auto q = c.qkv.block(b, col, n, hd);
          const auto k = c.qkv.block(b, d + col, n, hd);
          const auto v = c.qkv.block(b, 2 * d + col, n, hd);
          const auto dout = dattn.block(b, col, n, hd);
          const Mat dP = dout * v.transpose();
          dqkv.block(b, 2 * d + col, n, hd) = P.transpose() * dout;
          Mat dS = P.cwiseProduct(dP);
          const Eigen::VectorXf rowsum = dS.rowwise().sum();
          dS -= P.cwiseProduct(rowsum.replicate(1, n));
          dS *= scale;
          dqkv.block(b, col, n, hd) = dS * k;
          dqkv.block(b, d + col, n, hd) = dS.transpose() * q;
        }
      }
      MapM(grad + lo.w_qkv, d, 3 * d).noalias() += c.a1.transpose() * dqkv;
      RowM(grad + lo.b_qkv, 3 * d) += dqkv.colwise().sum();
      const Mat da1 = dqkv * MapC(params_ + lo.w_qkv, d, 3 * d).transpose();
      dx += layernorm_backward(da1, params_ + lo.ln1_g, c.ln1, grad + lo.ln1_g, grad + lo.ln1_b);
    }
    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      const auto pos = p.positions[static_cast<std::size_t>(i)];
      RowM(grad + off_.wpe + pos * dm_.d, d) += dx.row(i);
      for (std::size_t k = 0; k < detail::kEmbedTaps && k <= pos; ++k) {
        const auto t = static_cast<std::size_t>(p.tokens[static_cast<std::size_t>(i) - k]);
        RowM(grad + off_.wte + t * dm_.d, d).array() +=
            RowC(params_ + off_.emb_taps + k * dm_.d, d).array() * dx.row(i).array();
        RowM(grad + off_.emb_taps + k * dm_.d, d).array() +=
            RowC(params_ + off_.wte + t * dm_.d, d).array() * dx.row(i).array();
      }
    }
  }

  const detail::Dims& dims() const { return dm_; }
  const detail::Offsets& offsets() const { return off_; }

 private:
  const ModelConfig& config_;
  const float* params_;
  detail::Offsets off_;
  detail::Dims dm_;
};

constexpr std::size_t kEvalChunk = 32;

}  // namespace

LossGrad loss_and_gradient(const Model& model, std::span<const Sequence> batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  const Trainer t(model.config(), model.parameters().data());
  const Packed p = pack(batch, t.dims());
  auto r = t.forward(p, true);
  LossGrad out;
  out.tokens = p.supervised;
  out.loss = r.loss_sum / static_cast<double>(p.supervised);
  out.grad.assign(model.parameters().size(), 0.0f);
  t.backward(p, r, 1.0f / static_cast<float>(p.supervised), out.grad.data());
  return out;
}

double mean_loss(const Model& model, std::span<const Sequence> data) {
  if (data.empty()) throw ConfigError("mean_loss needs at least one sequence");
  const Trainer t(model.config(), model.parameters().data());
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < data.size(); i += kEvalChunk) {
    const Packed p = pack(data.subspan(i, std::min(kEvalChunk, data.size() - i)), t.dims());
    total += t.forward(p, false).loss_sum;
    tokens += p.supervised;
  }
  return total / static_cast<double>(tokens);
}

std::vector<Sequence> training_sequences(std::span<const ReferringExample> examples, bool mc_cues) {
  std::vector<Sequence> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(make_sequence(ex.context, ex.ground_truth));
    if (mc_cues && ex.kind == QuestionKind::kMC) {
      out.push_back(make_sequence(render_cue_example(ex).context, ex.ground_truth));
    }
  }
  return out;
}

TrainReport train_substrate(Model& model, std::span<const Sequence> data, const TrainParams& params) {
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (params.epochs < 1 || params.batch_size < 1) throw ConfigError("epochs and batch_size must be positive");
  if (!(params.holdout_fraction > 0.0 && params.holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must lie in (0, 1)");
  }
  if (data.size() < 2) throw ConfigError("training needs at least two sequences (one held out)");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(params.seed, 0x7a11));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_hold = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(params.holdout_fraction * static_cast<double>(data.size()))), 1,
      data.size() - 1);
  std::vector<Sequence> heldout, train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_hold ? heldout : train).push_back(data[order[i]]);
  }

  TrainReport report;
  report.train_size = train.size();
  report.heldout_size = heldout.size();
  report.initial_heldout_loss = mean_loss(model, heldout);

  auto params_span = model.mutable_parameters();
  float* w = params_span.data();
  const std::size_t count = params_span.size();
  std::vector<float> m1(count, 0.0f), m2(count, 0.0f);
  std::vector<char> decay(count, 0);
  for (const auto& slot : model.layout()) {
    const bool matrix = slot.name.find(".w_") != std::string::npos || slot.name == "head";
    if (matrix) std::fill_n(decay.begin() + static_cast<std::ptrdiff_t>(slot.offset), slot.size(), 1);
  }

  const std::size_t batch = static_cast<std::size_t>(params.batch_size);
  const int per_epoch = static_cast<int>((train.size() + batch - 1) / batch);
  const int total_steps = per_epoch * params.epochs;
  const float beta1 = 0.9f, beta2 = 0.95f, eps = 1e-8f;
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<Sequence> chunk;
  int step = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    double epoch_loss = 0.0;
    for (int bi = 0; bi < per_epoch; ++bi) {
      chunk.clear();
      for (std::size_t k = static_cast<std::size_t>(bi) * batch;
           k < std::min(train.size(), static_cast<std::size_t>(bi + 1) * batch); ++k) {
        chunk.push_back(train[idx[k]]);
      }
      auto lg = loss_and_gradient(model, chunk);
      if (!std::isfinite(lg.loss)) {
        throw NumericError("non-finite training loss at step " + std::to_string(step) +
                           "; lower the learning rate");
      }
      double norm_sq = 0.0;
      for (float g : lg.grad) norm_sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(norm_sq);
      if (!std::isfinite(norm)) throw NumericError("non-finite gradient at step " + std::to_string(step));
      const float clip = norm > params.grad_clip ? static_cast<float>(params.grad_clip / norm) : 1.0f;

      ++step;
      float lr = params.learning_rate;
      if (step <= params.warmup_steps) {
        lr *= static_cast<float>(step) / static_cast<float>(params.warmup_steps);
      } else {
        const double progress = static_cast<double>(step - params.warmup_steps) /
                                std::max(1, total_steps - params.warmup_steps);
        const double cosine = 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, progress)));
        lr *= static_cast<float>(params.min_lr_ratio + (1.0 - params.min_lr_ratio) * cosine);
      }
      const float bc1 = 1.0f - std::pow(beta1, static_cast<float>(step));
      const float bc2 = 1.0f - std::pow(beta2, static_cast<float>(step));
      for (std::size_t i = 0; i < count; ++i) {
        const float g = lg.grad[i] * clip;
        m1[i] = beta1 * m1[i] + (1.0f - beta1) * g;
        m2[i] = beta2 * m2[i] + (1.0f - beta2) * g * g;
        if (decay[i]) w[i] -= lr * params.weight_decay * w[i];
        w[i] -= lr * (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + eps);
      }
      epoch_loss += lg.loss;
      if (params.on_step) params.on_step(step, total_steps, lg.loss);
    }
    report.final_train_loss = epoch_loss / per_epoch;
  }
  report.steps = step;
  report.final_heldout_loss = mean_loss(model, heldout);
  if (!std::isfinite(report.final_heldout_loss)) throw NumericError("non-finite held-out loss after training");
  return report;
}

}  // namespace csteer
