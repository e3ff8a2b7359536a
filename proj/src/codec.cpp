#include "semlink/codec.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "semlink/kernels.hpp"

namespace semlink {

Rational::Rational(long long n, long long d) : num(n), den(d) {
  if (den == 0) throw std::invalid_argument("rational: zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const long long g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

Rational Rational::parse(const std::string& text) {
  const auto slash = text.find('/');
  try {
    if (slash == std::string::npos) return Rational(std::stoll(text), 1);
    return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
  } catch (const std::exception&) {
    throw std::invalid_argument("rational: cannot parse '" + text + "'");
  }
}

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Rational bandwidth_ratio(long long symbols, int h, int w) {
  if (symbols <= 0 || h <= 0 || w <= 0) throw std::invalid_argument("bandwidth_ratio: non-positive input");
  return Rational(symbols, 3LL * h * w);
}

WidthProfile WidthProfile::paper() {
  WidthProfile p;
  p.conv_width = {1024, 256, 256, 256, 448, 128};
  p.conv_kernel = {9, 5, 9, 5, 5, 5};
  p.head_kernel = 9;
  p.num_heads = 8;
  p.dims_per_head = 32;
  p.mlp_expansion = 4;
  return p;
}

WidthProfile WidthProfile::toy() {
  WidthProfile p;
  p.conv_width = {32, 32, 32, 32, 32, 32};
  p.conv_kernel = {5, 5, 5, 5, 5, 5};
  p.head_kernel = 5;
  p.num_heads = 4;
  p.dims_per_head = 8;
  p.mlp_expansion = 2;
  return p;
}

void ArchSpec::validate() const {
  if (stages.size() != 6) throw std::invalid_argument("arch: stage string must have 6 letters");
  for (char c : stages)
    if (c != 'C' && c != 'V') throw std::invalid_argument("arch: stages must be 'C' or 'V'");
  if (stages[0] == 'V') throw std::invalid_argument("arch: stage 0 must be convolutional");
  for (int k : profile.conv_kernel)
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("arch: conv kernels must be odd");
  if (profile.head_kernel < 1 || profile.head_kernel % 2 == 0)
    throw std::invalid_argument("arch: head kernel must be odd");
  if (profile.conv_width[2] != profile.vit_dim())
    throw std::invalid_argument("arch: conv_width[2] must equal the ViT embed dim");
}

template <typename T>
double SymbolBlock<T>::mean_power() const {
  if (iq.empty()) return 0.0;
  const double total = kernels::Kern<T>::sumsq(iq.size(), iq.data());
  return total / static_cast<double>(count());
}

template <typename T>
SymbolBlock<T> power_normalize(const SymbolBlock<T>& raw) {
  if (raw.count() < 1) throw std::invalid_argument("power_normalize: empty block");
  SymbolBlock<T> out = raw;
  const double total = kernels::Kern<T>::sumsq(raw.iq.size(), raw.iq.data());
  if (total == 0.0) {
    out.zero_power = true;
    return out;
  }
  const double factor = std::sqrt(static_cast<double>(raw.count()) / total);
  for (auto& v : out.iq) v = static_cast<T>(static_cast<double>(v) * factor);
  out.zero_power = false;
  return out;
}

namespace {

// In-graph unit mean power normalization: y = s * (mean |s|^2)^(-1/2).
template <typename T>
Tensor<T> power_normalize_t(const Tensor<T>& iq, long long symbols) {
  const double total = kernels::Kern<T>::sumsq(iq.data().size(), iq.data().data());
  if (total == 0.0) return iq;  // degenerate zero-power input passes through
  auto mean_power = scale(sum_all(mul(iq, iq)), static_cast<T>(1.0 / static_cast<double>(symbols)));
  return mul_scalar_t(iq, pow_scalar(mean_power, T(-0.5)));
}

}  // namespace

template <typename T>
Codec<T>::Codec(const ArchSpec& spec, Rational ratio, int image_h, int image_w, std::uint64_t seed)
    : spec_(spec), ratio_(ratio), image_h_(image_h), image_w_(image_w) {
  spec_.validate();
  if (image_h < 4 || image_w < 4 || image_h % 4 != 0 || image_w % 4 != 0)
    throw std::invalid_argument("codec: image dims must be multiples of 4");
  if (ratio.num <= 0) throw std::invalid_argument("codec: bandwidth ratio must be positive");

  const long long source_values = 3LL * image_h * image_w;
  if ((source_values * ratio.num) % ratio.den != 0)
    throw std::invalid_argument("codec: ratio does not give an integral symbol count");
  symbols_ = source_values * ratio.num / ratio.den;
  const long long grid_positions = static_cast<long long>(grid_h()) * grid_w();
  if ((2 * symbols_) % grid_positions != 0)
    throw std::invalid_argument("codec: ratio does not give integral symbol channels");
  c_sym_ = static_cast<int>(2 * symbols_ / grid_positions);
  if (c_sym_ < 1) throw std::invalid_argument("codec: symbol channels must be >= 1");

  const WidthProfile& prof = spec_.profile;
  RngStream rng(seed, streams::kParamInit);

  VitStageConfig vit_cfg;
  vit_cfg.num_heads = prof.num_heads;
  vit_cfg.dims_per_head = prof.dims_per_head;
  vit_cfg.mlp_expansion = prof.mlp_expansion;
  vit_cfg.embed_dim = prof.vit_dim();
  vit_cfg.scale_by_head_dim = spec_.scale_attention_by_head_dim;

  // Resolve per-position output widths: conv stages use the profile width but
  // emit the ViT dim when feeding a ViT stage; ViT stages preserve width.
  int in_w = 3;
  for (int i = 0; i < 6; ++i) {
    const bool is_vit = stage_is_vit(i);
    if (is_vit) {
      if (in_w != vit_cfg.embed_dim)
        throw std::invalid_argument("codec: ViT stage " + std::to_string(i) +
                                    " requires input width " + std::to_string(vit_cfg.embed_dim));
      out_width_[static_cast<std::size_t>(i)] = in_w;
    } else {
      int w = prof.conv_width[static_cast<std::size_t>(i)];
      if (i < 5 && spec_.stages[static_cast<std::size_t>(i) + 1] == 'V') w = vit_cfg.embed_dim;
      out_width_[static_cast<std::size_t>(i)] = w;
    }
    if (i == 2) in_w = prof.conv_width[2];  // decoder restarts from the deprojection width
    else in_w = out_width_[static_cast<std::size_t>(i)];
  }

  const auto resample_of = [](int i) {
    if (i <= 1) return Resample::down2;
    if (i >= 4) return Resample::up2;
    return Resample::none;
  };

  in_w = 3;
  for (int i = 0; i < 6; ++i) {
    const bool decoder_side = i >= 3;
    if (i == 3) in_w = prof.conv_width[2];
    if (stage_is_vit(i)) {
      stages_.push_back(
          VitStage<T>::create(vit_cfg, resample_of(i), stage_grid(i), stage_grid(i), rng));
    } else {
      ConvStageConfig cfg;
      cfg.kernel_size = prof.conv_kernel[static_cast<std::size_t>(i)];
      cfg.in_channels = in_w;
      cfg.out_channels = out_width_[static_cast<std::size_t>(i)];
      cfg.resample = resample_of(i);
      cfg.use_gdn = spec_.use_gdn;
      cfg.activation = spec_.use_gdn ? Activation::none : Activation::relu;
      stages_.push_back(ConvStage<T>::create(cfg, decoder_side, rng));
    }
    in_w = out_width_[static_cast<std::size_t>(i)];
  }

  proj_ = DenseLayer<T>::create(out_width_[2], c_sym_, rng);
  deproj_ = DenseLayer<T>::create(c_sym_, prof.conv_width[2], rng);
  head_ = Conv2dLayer<T>::create(prof.head_kernel, out_width_[5], 3, 1, rng);

  for (int i = 0; i < 3; ++i)
    std::visit([&](const auto& s) { s.register_params(params_, "enc" + std::to_string(i)); },
               stages_[static_cast<std::size_t>(i)]);
  proj_.register_params(params_, "proj");
  deproj_.register_params(params_, "deproj");
  for (int i = 3; i < 6; ++i)
    std::visit([&](const auto& s) { s.register_params(params_, "dec" + std::to_string(i)); },
               stages_[static_cast<std::size_t>(i)]);
  head_.register_params(params_, "head");
}

template <typename T>
int Codec<T>::stage_grid(int i) const {
  switch (i) {
    case 0: return image_h_ / 2;
    case 1: case 2: case 3: return image_h_ / 4;
    case 4: return image_h_ / 2;
    case 5: return image_h_;
  }
  throw std::invalid_argument("stage_grid: bad stage index");
}

template <typename T>
Tensor<T> Codec<T>::run_stage(int i, const Tensor<T>& x, CodecTaps<T>* taps) const {
  const Stage& stage = stages_[static_cast<std::size_t>(i)];
  std::vector<std::vector<T>> capture;
  const bool want_attn = taps != nullptr && taps->want_attention && stage_is_vit(i);
  if (want_attn)
    std::get<VitStage<T>>(stage).block.attn.attention_capture = &capture;
  Tensor<T> out = std::visit([&](const auto& s) { return s.forward(x); }, stage);
  if (want_attn) {
    std::get<VitStage<T>>(stage).block.attn.attention_capture = nullptr;
    taps->attention.emplace_back(i, std::move(capture));
  }
  if (taps != nullptr && taps->want_features) taps->features.emplace_back(i, out.detach());
  return out;
}

template <typename T>
Tensor<T> Codec<T>::encode_tensor(const Tensor<T>& image, CodecTaps<T>* taps) const {
  if (image.rank() != 3 || image.dim(0) != image_h_ || image.dim(1) != image_w_ ||
      image.dim(2) != 3)
    throw std::invalid_argument("encode: image must be [H,W,3]");
  Tensor<T> h = image;
  for (int i = 0; i < 3; ++i) h = run_stage(i, h, taps);
  const int P = grid_h() * grid_w();
  auto flat = reshape(h, {P, out_width_[2]});
  auto projected = proj_.forward(flat);
  auto iq = reshape(projected, {static_cast<int>(2 * symbols_)});
  auto normalized = power_normalize_t(iq, symbols_);
  if (taps != nullptr && taps->want_features)
    taps->features.emplace_back(kSymbolsLayer, normalized.detach());
  return normalized;
}

template <typename T>
Tensor<T> Codec<T>::decode_tensor(const Tensor<T>& iq, CodecTaps<T>* taps) const {
  if (iq.size() != 2 * symbols_) throw std::invalid_argument("decode: symbol length mismatch");
  const int P = grid_h() * grid_w();
  auto flat = reshape(iq, {P, c_sym_});
  auto features = reshape(deproj_.forward(flat), {grid_h(), grid_w(), spec_.profile.conv_width[2]});
  Tensor<T> h = features;
  for (int i = 3; i < 6; ++i) h = run_stage(i, h, taps);
  return sigmoid(head_.forward(h));
}

template <typename T>
SymbolBlock<T> Codec<T>::encode(const Tensor<T>& image) const {
  NoGradGuard guard;
  auto iq = encode_tensor(image);
  SymbolBlock<T> block;
  block.iq.assign(iq.data().begin(), iq.data().end());
  block.source_h = image_h_;
  block.source_w = image_w_;
  block.zero_power = block.mean_power() == 0.0;
  return block;
}

template <typename T>
Tensor<T> Codec<T>::decode(const SymbolBlock<T>& block) const {
  NoGradGuard guard;
  if (block.count() != static_cast<std::size_t>(symbols_))
    throw std::invalid_argument("decode: symbol count mismatch");
  auto iq = Tensor<T>::from({static_cast<int>(2 * symbols_)},
                            std::vector<T>(block.iq.begin(), block.iq.end()));
  return decode_tensor(iq);
}

template <typename T>
void Codec<T>::zero_grads() {
  for (auto& [_, t] : params_.items) const_cast<Tensor<T>&>(t).zero_grad();
}

template <typename T>
CostReport Codec<T>::count_cost() const {
  CostReport report;
  const long long P2 = static_cast<long long>(grid_h()) * grid_w();

  const auto conv_flops = [](long long hw, int k, long long cin, long long cout) {
    return 2LL * hw * k * k * cin * cout;
  };

  int in_w = 3;
  for (int i = 0; i < 6; ++i) {
    if (i == 3) in_w = spec_.profile.conv_width[2];
    StageCost sc;
    sc.name = (i < 3 ? "enc" : "dec") + std::to_string(i);
    const long long grid = stage_grid(i);
    const long long hw = grid * grid;
    ParamList<T> tmp;
    std::visit([&](const auto& s) { s.register_params(tmp, sc.name); },
               stages_[static_cast<std::size_t>(i)]);
    sc.params = tmp.total_size();
    if (stage_is_vit(i)) {
      const long long N = hw;
      const long long D = spec_.profile.vit_dim();
      const long long mlp = spec_.profile.mlp_expansion;
      // qkv, attention scores, weighted sum, output projection, two MLP denses
      sc.flops = 2 * N * D * (3 * D) + 4 * N * N * D + 2 * N * D * D + 2 * N * D * (mlp * D) * 2;
    } else {
      const int k = spec_.profile.conv_kernel[static_cast<std::size_t>(i)];
      sc.flops = conv_flops(hw, k, in_w, out_width_[static_cast<std::size_t>(i)]);
      if (spec_.use_gdn) {
        const long long C = out_width_[static_cast<std::size_t>(i)];
        sc.flops += 2 * hw * C * C;
      }
    }
    report.breakdown.push_back(sc);
    in_w = out_width_[static_cast<std::size_t>(i)];
  }

  {
    StageCost sc{"proj", proj_.weight.size() + proj_.bias.size(),
                 2 * P2 * out_width_[2] * c_sym_};
    report.breakdown.push_back(sc);
  }
  {
    StageCost sc{"deproj", deproj_.weight.size() + deproj_.bias.size(),
                 2 * P2 * c_sym_ * spec_.profile.conv_width[2]};
    report.breakdown.push_back(sc);
  }
  {
    StageCost sc{"head", head_.kernel.size() + head_.bias.size(),
                 conv_flops(static_cast<long long>(image_h_) * image_w_, spec_.profile.head_kernel,
                            out_width_[5], 3)};
    report.breakdown.push_back(sc);
  }

  for (const auto& sc : report.breakdown) {
    report.param_count += sc.params;
    report.flop_count += sc.flops;
  }
  return report;
}

template <typename T>
void Codec<T>::save_checkpoint(const std::string& path) const {
  std::vector<NamedTensorF32> tensors;
  tensors.reserve(params_.items.size());
  for (const auto& [name, t] : params_.items) {
    NamedTensorF32 nt;
    nt.name = name;
    nt.shape = t.shape();
    nt.values.assign(t.data().begin(), t.data().end());
    tensors.push_back(std::move(nt));
  }
  write_checkpoint(path, tensors);
}

template <typename T>
void Codec<T>::load_checkpoint(const std::string& path) {
  const auto tensors = read_checkpoint(path);
  std::map<std::string, const NamedTensorF32*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  for (auto& [name, t] : params_.items) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: missing tensor " + name);
    if (it->second->shape != t.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    auto dst = const_cast<Tensor<T>&>(t).data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->second->values[i]);
  }
}

CodecConfig parse_codec_config(const std::string& text) {
  CodecConfig cfg;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }

  if (kv.count("profile")) {
    cfg.profile_name = kv["profile"];
    if (cfg.profile_name == "paper")
      cfg.spec.profile = WidthProfile::paper();
    else if (cfg.profile_name == "toy")
      cfg.spec.profile = WidthProfile::toy();
    else
      throw std::invalid_argument("config: unknown profile '" + cfg.profile_name + "'");
  }
  if (kv.count("arch")) cfg.spec.stages = kv["arch"];
  if (kv.count("gdn")) cfg.spec.use_gdn = kv["gdn"] == "true" || kv["gdn"] == "1" || kv["gdn"] == "yes";
  if (kv.count("ratio")) cfg.ratio = Rational::parse(kv["ratio"]);
  if (kv.count("heads")) cfg.spec.profile.num_heads = std::stoi(kv["heads"]);
  if (kv.count("head_dim")) cfg.spec.profile.dims_per_head = std::stoi(kv["head_dim"]);
  if (kv.count("mlp_expansion")) cfg.spec.profile.mlp_expansion = std::stoi(kv["mlp_expansion"]);
  if (kv.count("seed")) cfg.seed = std::stoull(kv["seed"]);
  return cfg;
}

std::string emit_codec_config(const CodecConfig& cfg) {
  std::ostringstream out;
  out << "arch = " << cfg.spec.stages << "\n";
  out << "gdn = " << (cfg.spec.use_gdn ? "true" : "false") << "\n";
  out << "ratio = " << cfg.ratio.str() << "\n";
  out << "heads = " << cfg.spec.profile.num_heads << "\n";
  out << "head_dim = " << cfg.spec.profile.dims_per_head << "\n";
  out << "mlp_expansion = " << cfg.spec.profile.mlp_expansion << "\n";
  out << "profile = " << cfg.profile_name << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

template struct SymbolBlock<float>;
template struct SymbolBlock<double>;
template class Codec<float>;
template class Codec<double>;
template SymbolBlock<float> power_normalize(const SymbolBlock<float>&);
template SymbolBlock<double> power_normalize(const SymbolBlock<double>&);

}  // namespace semlink
