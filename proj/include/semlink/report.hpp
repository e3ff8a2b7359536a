// Report emission: JSON round-trips RunReport losslessly (non-finite doubles
// are encoded as strings); CSVs carry plot-ready columns with fixed headers.
#pragma once

#include <string>
#include <vector>

#include "semlink/analysis.hpp"
#include "semlink/train.hpp"

namespace semlink {

inline constexpr const char* kTraceCsvHeader =
    "epoch,train_loss,val_psnr,val_ssim,cossim_layer0,cossim_layer1,cossim_layer2,cossim_symbols";
inline constexpr const char* kSweepCsvHeader =
    "arch,gdn,ratio,snr_db,psnr,ssim,params,gflops,cossim_layer2,status";
inline constexpr const char* kSpectrumCsvHeader = "layer,bin,y";

std::string run_report_json(const RunReport& report);
RunReport parse_run_report(const std::string& json_text);

std::string trace_csv(const RunReport& report);  // one row per epoch
std::string spectrum_csv(const std::vector<SpectrumProfile>& profiles);

enum class ReportFormat { csv, json };

// Writes <base>.json and/or <base>_trace.csv.
void emit_report(const RunReport& report, const std::string& base_path, ReportFormat format);

}  // namespace semlink
