// Training/evaluation loops and experiment sweeps. Runs are deterministic
// given (seed, config): data shuffling, parameter init, and channel noise
// draw from fixed independent streams.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "semlink/analysis.hpp"
#include "semlink/channel.hpp"
#include "semlink/codec.hpp"
#include "semlink/dataset.hpp"

namespace semlink {

struct TrainAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  ArchSpec arch;
  Rational ratio{1, 6};
  ChannelConfig channel;
  int epochs = 600;
  int batch_size = 64;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  bool analysis_hooks = true;
  int probe_images = 8;        // fixed validation prefix used for traces
  int checkpoint_every = 0;    // 0 disables periodic checkpoints
  std::string checkpoint_path;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double val_ssim = 0.0;
  bool has_ssim = false;
  double cossim_layer0 = 0.0;
  double cossim_layer1 = 0.0;
  double cossim_layer2 = 0.0;
  double cossim_symbols = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct RunReport {
  // config echo
  std::string arch;
  bool gdn = false;
  std::string ratio;
  std::string channel_kind;
  double snr_db = 0.0;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  // results
  std::vector<EpochStats> epoch_stats;
  double final_psnr = 0.0;
  double final_ssim = 0.0;
  bool has_ssim = false;
  long long param_count = 0;
  long long flop_count = 0;
  double wall_seconds = 0.0;
  bool operator==(const RunReport&) const = default;
};

template <typename T>
struct TrainResult {
  Codec<T> codec;
  RunReport report;
};

template <typename T>
TrainResult<T> train(const TrainConfig& cfg, std::span<const DatasetRecord> train_data,
                     std::span<const DatasetRecord> val_data);

struct EvalResult {
  double mean_psnr = 0.0;
  double std_psnr = 0.0;
  double mean_ssim = 0.0;
  double std_ssim = 0.0;
  bool has_ssim = false;
  std::vector<double> per_image_psnr;
  std::vector<double> per_image_ssim;
};

template <typename T>
EvalResult evaluate(const Codec<T>& codec, std::span<const DatasetRecord> data,
                    const ChannelConfig& channel, int n_images, std::uint64_t seed);

struct SweepCell {
  std::string arch;
  bool gdn = false;
  Rational ratio{1, 6};
  double snr_db = 10.0;
};

// The ten architecture/GDN rows of the reference comparison table.
std::vector<SweepCell> table1_cells(Rational ratio = {1, 6}, double snr_db = 10.0);

// One CSV row per cell: train (epochs >= 1) or evaluate untrained (epochs == 0)
// at the matched SNR. Per-cell failures land in the status column and the
// sweep continues.
template <typename T>
std::string sweep_csv(const std::vector<SweepCell>& cells, const TrainConfig& base,
                      std::span<const DatasetRecord> train_data,
                      std::span<const DatasetRecord> val_data);

extern template TrainResult<float> train(const TrainConfig&, std::span<const DatasetRecord>,
                                         std::span<const DatasetRecord>);
extern template TrainResult<double> train(const TrainConfig&, std::span<const DatasetRecord>,
                                          std::span<const DatasetRecord>);
extern template EvalResult evaluate(const Codec<float>&, std::span<const DatasetRecord>,
                                    const ChannelConfig&, int, std::uint64_t);
extern template EvalResult evaluate(const Codec<double>&, std::span<const DatasetRecord>,
                                    const ChannelConfig&, int, std::uint64_t);
extern template std::string sweep_csv<float>(const std::vector<SweepCell>&, const TrainConfig&,
                                             std::span<const DatasetRecord>,
                                             std::span<const DatasetRecord>);

}  // namespace semlink
