#include "semlink/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "semlink/ops.hpp"

namespace semlink {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("train: negative learning rate");
}

namespace {

template <typename T>
std::vector<Tensor<T>> probe_batch(std::span<const DatasetRecord> val_data, int count) {
  std::vector<Tensor<T>> probes;
  const int n = std::min<int>(count, static_cast<int>(val_data.size()));
  for (int i = 0; i < n; ++i) probes.push_back(to_tensor<T>(val_data[static_cast<std::size_t>(i)]));
  return probes;
}

}  // namespace

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, std::span<const DatasetRecord> train_data,
                     std::span<const DatasetRecord> val_data) {
  cfg.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty training set");
  const int H = train_data[0].h, W = train_data[0].w;
  for (const auto& r : train_data)
    if (r.h != H || r.w != W) throw std::invalid_argument("train: mixed image sizes");

  const auto t0 = std::chrono::steady_clock::now();
  Codec<T> codec(cfg.arch, cfg.ratio, H, W, cfg.seed);
  auto params = codec.parameters();
  AdamState<T> opt;
  opt.lr = cfg.lr;

  RngStream shuffle_rng(cfg.seed, streams::kShuffle);
  RngStream noise_rng(cfg.seed, streams::kChannelNoise);

  RunReport report;
  report.arch = cfg.arch.stages;
  report.gdn = cfg.arch.use_gdn;
  report.ratio = cfg.ratio.str();
  report.channel_kind = cfg.channel.kind == ChannelKind::awgn ? "awgn" : "rayleigh_slow";
  report.snr_db = cfg.channel.snr_db;
  report.epochs = cfg.epochs;
  report.batch_size = cfg.batch_size;
  report.lr = cfg.lr;
  report.seed = cfg.seed;
  {
    const auto cost = codec.count_cost();
    report.param_count = cost.param_count;
    report.flop_count = cost.flop_count;
  }

  const auto probes = probe_batch<T>(val_data, cfg.probe_images);
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates from the shuffle stream
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[j < i ? j : i - 1]);
    }

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      codec.zero_grads();
      for (std::size_t i = start; i < end; ++i) {
        auto img = to_tensor<T>(train_data[order[i]]);
        auto iq = codec.encode_tensor(img);
        auto rx = channel_apply_t(iq, cfg.channel, noise_rng);
        auto out = codec.decode_tensor(rx);
        auto loss = mse_loss(out, img);
        const double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv)) {
          if (!cfg.checkpoint_path.empty())
            codec.save_checkpoint(cfg.checkpoint_path + ".nan-abort.semw");
          std::ostringstream msg;
          msg << "train: non-finite loss at epoch " << epoch << ", image " << order[i];
          throw TrainAbort(msg.str());
        }
        loss_sum += lv;
        loss.backward();
      }
      // batch-mean gradients
      const T inv = static_cast<T>(1.0 / static_cast<double>(end - start));
      for (auto& p : params)
        for (auto& g : p.impl_->grad) g *= inv;
      adam_step(params, opt);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(order.size());
    if (!val_data.empty()) {
      const auto ev = evaluate(codec, val_data, cfg.channel,
                               static_cast<int>(val_data.size()), cfg.seed);
      stats.val_psnr = ev.mean_psnr;
      stats.val_ssim = ev.mean_ssim;
      stats.has_ssim = ev.has_ssim;
    }
    if (cfg.analysis_hooks && !probes.empty()) {
      const auto sims = encoder_similarity(codec, std::span<const Tensor<T>>(probes));
      for (const auto& s : sims) {
        if (s.layer_id == 0) stats.cossim_layer0 = s.similarity;
        if (s.layer_id == 1) stats.cossim_layer1 = s.similarity;
        if (s.layer_id == 2) stats.cossim_layer2 = s.similarity;
        if (s.layer_id == kSymbolsLayer) stats.cossim_symbols = s.similarity;
      }
    }
    report.epoch_stats.push_back(stats);

    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
        epoch % cfg.checkpoint_every == 0)
      codec.save_checkpoint(cfg.checkpoint_path + ".epoch" + std::to_string(epoch) + ".semw");
  }

  if (!report.epoch_stats.empty()) {
    report.final_psnr = report.epoch_stats.back().val_psnr;
    report.final_ssim = report.epoch_stats.back().val_ssim;
    report.has_ssim = report.epoch_stats.back().has_ssim;
  }
  if (!cfg.checkpoint_path.empty()) codec.save_checkpoint(cfg.checkpoint_path);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(codec), std::move(report)};
}

template <typename T>
EvalResult evaluate(const Codec<T>& codec, std::span<const DatasetRecord> data,
                    const ChannelConfig& channel, int n_images, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const int n = std::min<int>(n_images, static_cast<int>(data.size()));
  NoGradGuard guard;
  RngStream rng(seed, streams::kEval);

  EvalResult res;
  for (int i = 0; i < n; ++i) {
    auto img = to_tensor<T>(data[static_cast<std::size_t>(i)]);
    auto block = codec.encode(img);
    SymbolBlock<T> rx;
    switch (channel.kind) {
      case ChannelKind::awgn:
        rx = awgn_apply(block, channel.snr_db, rng);
        break;
      case ChannelKind::rayleigh_slow:
        rx = rayleigh_apply(block, channel.snr_db, rng, channel.equalization).block;
        break;
    }
    auto out = codec.decode(rx);
    res.per_image_psnr.push_back(psnr(out, img));
    if (img.dim(0) >= 11 && img.dim(1) >= 11) {
      res.has_ssim = true;
      res.per_image_ssim.push_back(ssim(out, img));
    }
  }

  const auto mean_std = [](const std::vector<double>& v, double& mean, double& stddev) {
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    stddev = std::sqrt(var / static_cast<double>(v.size()));
  };
  mean_std(res.per_image_psnr, res.mean_psnr, res.std_psnr);
  mean_std(res.per_image_ssim, res.mean_ssim, res.std_ssim);
  return res;
}

std::vector<SweepCell> table1_cells(Rational ratio, double snr_db) {
  const auto cell = [&](const char* arch, bool gdn) {
    return SweepCell{arch, gdn, ratio, snr_db};
  };
  return {
      cell("CCCCCC", true),  cell("CCVCCC", true), cell("CCVCCC", false),
      cell("CVVCCC", true),  cell("CCCVCC", true), cell("CCCVCC", false),
      cell("CCCVVC", true),  cell("CVVVVC", true), cell("CCVVCC", true),
      cell("CCVVCC", false),
  };
}

template <typename T>
std::string sweep_csv(const std::vector<SweepCell>& cells, const TrainConfig& base,
                      std::span<const DatasetRecord> train_data,
                      std::span<const DatasetRecord> val_data) {
  std::ostringstream csv;
  csv << "arch,gdn,ratio,snr_db,psnr,ssim,params,gflops,cossim_layer2,status\n";
  for (const auto& cell : cells) {
    csv << cell.arch << "," << (cell.gdn ? "yes" : "no") << "," << cell.ratio.str() << ","
        << cell.snr_db << ",";
    try {
      TrainConfig cfg = base;
      cfg.arch.stages = cell.arch;
      cfg.arch.use_gdn = cell.gdn;
      cfg.ratio = cell.ratio;
      cfg.channel.snr_db = cell.snr_db;

      const int H = train_data.empty() ? 0 : train_data[0].h;
      const int W = train_data.empty() ? 0 : train_data[0].w;
      Codec<T> codec = [&]() {
        if (cfg.epochs >= 1) return train<T>(cfg, train_data, val_data).codec;
        return Codec<T>(cfg.arch, cfg.ratio, H, W, cfg.seed);
      }();

      const auto ev = evaluate(codec, val_data.empty() ? train_data : val_data, cfg.channel,
                               64, cfg.seed);
      const auto cost = codec.count_cost();
      const auto probes = probe_batch<T>(val_data.empty() ? train_data : val_data, 4);
      double cossim2 = 0.0;
      for (const auto& s : encoder_similarity(codec, std::span<const Tensor<T>>(probes)))
        if (s.layer_id == 2) cossim2 = s.similarity;

      csv << ev.mean_psnr << "," << (ev.has_ssim ? ev.mean_ssim : 0.0) << "," << cost.param_count
          << "," << static_cast<double>(cost.flop_count) / 1e9 << "," << cossim2 << ",ok\n";
    } catch (const std::exception& e) {
      std::string why = e.what();
      for (auto& c : why)
        if (c == ',' || c == '\n') c = ';';
      csv << "0,0,0,0,0,error: " << why << "\n";
    }
  }
  return csv.str();
}

template TrainResult<float> train(const TrainConfig&, std::span<const DatasetRecord>,
                                  std::span<const DatasetRecord>);
template TrainResult<double> train(const TrainConfig&, std::span<const DatasetRecord>,
                                   std::span<const DatasetRecord>);
template EvalResult evaluate(const Codec<float>&, std::span<const DatasetRecord>,
                             const ChannelConfig&, int, std::uint64_t);
template EvalResult evaluate(const Codec<double>&, std::span<const DatasetRecord>,
                             const ChannelConfig&, int, std::uint64_t);
template std::string sweep_csv<float>(const std::vector<SweepCell>&, const TrainConfig&,
                                      std::span<const DatasetRecord>,
                                      std::span<const DatasetRecord>);

}  // namespace semlink
