#include "semlink/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace semlink {

void VitStageConfig::validate() const {
  if (num_heads < 1 || dims_per_head < 1) throw std::invalid_argument("vit: bad head config");
  if (num_heads * dims_per_head != embed_dim)
    throw std::invalid_argument("vit: num_heads * dims_per_head must equal embed_dim");
  if (mlp_expansion < 1) throw std::invalid_argument("vit: mlp_expansion must be >= 1");
}

template <typename T>
DenseLayer<T> DenseLayer<T>::create(int din, int dout, RngStream& rng) {
  DenseLayer layer;
  layer.weight = Tensor<T>::truncated_normal({din, dout}, rng, T(0.02), true);
  layer.bias = Tensor<T>::zeros({dout}, true);
  return layer;
}

template <typename T>
Tensor<T> DenseLayer<T>::forward(const Tensor<T>& x) const {
  return add_row_bias(matmul(x, weight), bias);
}

template <typename T>
void DenseLayer<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  params.add(prefix + ".weight", weight);
  params.add(prefix + ".bias", bias);
}

template <typename T>
Conv2dLayer<T> Conv2dLayer<T>::create(int k, int cin, int cout, int stride, RngStream& rng) {
  if (k % 2 == 0 || k < 1) throw std::invalid_argument("conv: kernel size must be odd");
  if (cin < 1 || cout < 1) throw std::invalid_argument("conv: channels must be >= 1");
  Conv2dLayer layer;
  const T bound = static_cast<T>(std::sqrt(1.0 / (static_cast<double>(k) * k * cin)));
  layer.kernel = Tensor<T>::uniform({k, k, cin, cout}, rng, -bound, bound, true);
  layer.bias = Tensor<T>::zeros({cout}, true);
  layer.stride = stride;
  return layer;
}

template <typename T>
void Conv2dLayer<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  params.add(prefix + ".kernel", kernel);
  params.add(prefix + ".bias", bias);
}

template <typename T>
GdnLayer<T> GdnLayer<T>::create(int C, bool inverse) {
  std::vector<T> beta(static_cast<std::size_t>(C), T(1));
  std::vector<T> gamma(static_cast<std::size_t>(C) * C, T(0));
  for (int i = 0; i < C; ++i) gamma[static_cast<std::size_t>(i) * C + i] = T(0.1);
  return from_effective(beta, gamma, inverse);
}

template <typename T>
GdnLayer<T> GdnLayer<T>::from_effective(const std::vector<T>& beta, const std::vector<T>& gamma,
                                        bool inverse) {
  const int C = static_cast<int>(beta.size());
  if (gamma.size() != beta.size() * beta.size())
    throw std::invalid_argument("gdn: gamma must be CxC");
  GdnLayer layer;
  layer.inverse = inverse;
  std::vector<T> braw(beta.size());
  for (std::size_t i = 0; i < beta.size(); ++i) {
    // invert softplus(raw) + floor = beta; betas at/below the floor clamp
    const double target = static_cast<double>(beta[i]) - kBetaFloor;
    braw[i] = static_cast<T>(target <= 1e-12 ? -40.0 : std::log(std::expm1(target)));
  }
  std::vector<T> graw(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    if (gamma[i] < T(0)) throw std::invalid_argument("gdn: gamma must be non-negative");
    graw[i] = static_cast<T>(std::sqrt(static_cast<double>(gamma[i])));
  }
  layer.beta_raw = Tensor<T>::from({C}, std::move(braw), true);
  layer.gamma_raw = Tensor<T>::from({C, C}, std::move(graw), true);
  return layer;
}

template <typename T>
Tensor<T> GdnLayer<T>::forward(const Tensor<T>& x) const {
  const int C = channels();
  if (x.shape().back() != C) throw std::invalid_argument("gdn: channel mismatch");
  const int P = static_cast<int>(x.size() / C);
  auto flat = reshape(x, {P, C});
  auto beta_eff = add_const(softplus(beta_raw), static_cast<T>(kBetaFloor));
  auto gamma_eff = mul(gamma_raw, gamma_raw);
  // denom_pi = beta_i + sum_j gamma_ij x_pj^2
  auto denom = add_row_bias(matmul(mul(flat, flat), transpose(gamma_eff)), beta_eff);
  auto factor = pow_scalar(denom, inverse ? T(0.5) : T(-0.5));
  return reshape(mul(flat, factor), x.shape());
}

template <typename T>
void GdnLayer<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  params.add(prefix + ".beta", beta_raw);
  params.add(prefix + ".gamma", gamma_raw);
}

template <typename T>
MhsaLayer<T> MhsaLayer<T>::create(int in_dim, const VitStageConfig& cfg, int grid_h, int grid_w,
                                  RngStream& rng) {
  cfg.validate();
  MhsaLayer layer;
  layer.in_dim = in_dim;
  layer.num_heads = cfg.num_heads;
  layer.dims_per_head = cfg.dims_per_head;
  layer.grid_h = grid_h;
  layer.grid_w = grid_w;
  layer.scale_by_head_dim = cfg.scale_by_head_dim;
  for (int h = 0; h < cfg.num_heads; ++h) {
    layer.wq.push_back(Tensor<T>::truncated_normal({in_dim, cfg.dims_per_head}, rng, T(0.02), true));
    layer.wk.push_back(Tensor<T>::truncated_normal({in_dim, cfg.dims_per_head}, rng, T(0.02), true));
    layer.wv.push_back(Tensor<T>::truncated_normal({in_dim, cfg.dims_per_head}, rng, T(0.02), true));
    // zero init keeps the untrained block permutation-equivariant
    layer.pos_tables.push_back(Tensor<T>::zeros({2 * grid_h - 1, 2 * grid_w - 1}, true));
  }
  const int dout = cfg.num_heads * cfg.dims_per_head;
  layer.w_out = Tensor<T>::truncated_normal({dout, dout}, rng, T(0.02), true);
  return layer;
}

template <typename T>
Tensor<T> MhsaLayer<T>::forward(const Tensor<T>& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(1) != in_dim)
    throw std::invalid_argument("mhsa: tokens must be [N, in_dim]");
  const int N = tokens.dim(0);
  if (N != grid_h * grid_w) throw std::invalid_argument("mhsa: token count must match the grid");
  const T norm = static_cast<T>(
      1.0 / std::sqrt(static_cast<double>(scale_by_head_dim ? dims_per_head : in_dim)));

  std::vector<Tensor<T>> head_outputs;
  head_outputs.reserve(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    auto q = matmul(tokens, wq[static_cast<std::size_t>(h)]);
    auto k = matmul(tokens, wk[static_cast<std::size_t>(h)]);
    auto a = matmul(q, transpose(k));
    a = add(a, rel_pos_gather(pos_tables[static_cast<std::size_t>(h)], grid_h, grid_w));
    auto attn = softmax(scale(a, norm), -1);
    if (attention_capture != nullptr)
      attention_capture->emplace_back(attn.data().begin(), attn.data().end());
    auto v = matmul(tokens, wv[static_cast<std::size_t>(h)]);
    head_outputs.push_back(matmul(attn, v));
  }
  auto merged = num_heads == 1 ? head_outputs.front() : concat_last(head_outputs);
  return matmul(merged, w_out);
}

template <typename T>
void MhsaLayer<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  for (int h = 0; h < num_heads; ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    params.add(hp + ".wq", wq[static_cast<std::size_t>(h)]);
    params.add(hp + ".wk", wk[static_cast<std::size_t>(h)]);
    params.add(hp + ".wv", wv[static_cast<std::size_t>(h)]);
    params.add(hp + ".pos", pos_tables[static_cast<std::size_t>(h)]);
  }
  params.add(prefix + ".w_out", w_out);
}

template <typename T>
VitBlock<T> VitBlock<T>::create(int dim, const VitStageConfig& cfg, int grid_h, int grid_w,
                                RngStream& rng) {
  if (dim != cfg.embed_dim)
    throw std::invalid_argument("vit_block: input dim must equal embed_dim");
  VitBlock block;
  block.dim = dim;
  block.grid_h = grid_h;
  block.grid_w = grid_w;
  block.ln1_gain = Tensor<T>::full({dim}, T(1), true);
  block.ln1_bias = Tensor<T>::zeros({dim}, true);
  block.ln2_gain = Tensor<T>::full({dim}, T(1), true);
  block.ln2_bias = Tensor<T>::zeros({dim}, true);
  block.attn = MhsaLayer<T>::create(dim, cfg, grid_h, grid_w, rng);
  block.mlp_in = DenseLayer<T>::create(dim, cfg.mlp_expansion * dim, rng);
  block.mlp_out = DenseLayer<T>::create(cfg.mlp_expansion * dim, dim, rng);
  return block;
}

template <typename T>
Tensor<T> VitBlock<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(0) != grid_h || x.dim(1) != grid_w || x.dim(2) != dim)
    throw std::invalid_argument("vit_block: expects [H,W,C] matching the stage grid");
  const int N = grid_h * grid_w;
  auto tokens = reshape(x, {N, dim});
  auto t1 = add(tokens, attn.forward(layer_norm(tokens, ln1_gain, ln1_bias, T(1e-5))));
  auto h = mlp_out.forward(relu(mlp_in.forward(layer_norm(t1, ln2_gain, ln2_bias, T(1e-5)))));
  return reshape(add(t1, h), x.shape());
}

template <typename T>
void VitBlock<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  params.add(prefix + ".ln1.gain", ln1_gain);
  params.add(prefix + ".ln1.bias", ln1_bias);
  params.add(prefix + ".ln2.gain", ln2_gain);
  params.add(prefix + ".ln2.bias", ln2_bias);
  attn.register_params(params, prefix + ".attn");
  mlp_in.register_params(params, prefix + ".mlp_in");
  mlp_out.register_params(params, prefix + ".mlp_out");
}

template <typename T>
ConvStage<T> ConvStage<T>::create(const ConvStageConfig& cfg, bool decoder_side, RngStream& rng) {
  ConvStage stage;
  stage.cfg = cfg;
  const int stride = cfg.resample == Resample::down2 ? 2 : 1;
  stage.conv = Conv2dLayer<T>::create(cfg.kernel_size, cfg.in_channels, cfg.out_channels, stride, rng);
  if (cfg.use_gdn) stage.gdn = GdnLayer<T>::create(cfg.out_channels, decoder_side);
  return stage;
}

template <typename T>
Tensor<T> ConvStage<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = cfg.resample == Resample::up2 ? upsample_nearest2(x) : x;
  h = conv.forward(h);
  if (gdn.has_value()) h = gdn->forward(h);
  switch (cfg.activation) {
    case Activation::relu:
      return relu(h);
    case Activation::sigmoid:
      return sigmoid(h);
    case Activation::none:
      break;
  }
  return h;
}

template <typename T>
void ConvStage<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  conv.register_params(params, prefix + ".conv");
  if (gdn.has_value()) gdn->register_params(params, prefix + ".gdn");
}

template <typename T>
VitStage<T> VitStage<T>::create(const VitStageConfig& cfg, Resample resample, int grid_h,
                                int grid_w, RngStream& rng) {
  VitStage stage;
  stage.resample = resample;
  stage.block = VitBlock<T>::create(cfg.embed_dim, cfg, grid_h, grid_w, rng);
  return stage;
}

template <typename T>
Tensor<T> VitStage<T>::forward(const Tensor<T>& x) const {
  Tensor<T> h = x;
  if (resample == Resample::down2) h = avgpool2(h);
  if (resample == Resample::up2) h = upsample_nearest2(h);
  return block.forward(h);
}

template <typename T>
void VitStage<T>::register_params(ParamList<T>& params, const std::string& prefix) const {
  block.register_params(params, prefix + ".vit");
}

#define SEMLINK_INSTANTIATE_LAYERS(T) \
  template struct DenseLayer<T>;      \
  template struct Conv2dLayer<T>;     \
  template struct GdnLayer<T>;        \
  template struct MhsaLayer<T>;       \
  template struct VitBlock<T>;        \
  template struct ConvStage<T>;       \
  template struct VitStage<T>;

SEMLINK_INSTANTIATE_LAYERS(float)
SEMLINK_INSTANTIATE_LAYERS(double)
#undef SEMLINK_INSTANTIATE_LAYERS

}  // namespace semlink
