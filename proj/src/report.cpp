#include "semlink/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace semlink {

namespace {

using nlohmann::json;

// JSON has no inf/nan literals; encode them as strings so reports reload
// losslessly.
json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double parse_num(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  return j.get<double>();
}

}  // namespace

std::string run_report_json(const RunReport& r) {
  json j;
  j["arch"] = r.arch;
  j["gdn"] = r.gdn;
  j["ratio"] = r.ratio;
  j["channel_kind"] = r.channel_kind;
  j["snr_db"] = num(r.snr_db);
  j["epochs"] = r.epochs;
  j["batch_size"] = r.batch_size;
  j["lr"] = r.lr;
  j["seed"] = r.seed;
  j["final_psnr"] = num(r.final_psnr);
  j["final_ssim"] = num(r.final_ssim);
  j["has_ssim"] = r.has_ssim;
  j["param_count"] = r.param_count;
  j["flop_count"] = r.flop_count;
  j["wall_seconds"] = r.wall_seconds;
  j["epoch_stats"] = json::array();
  for (const auto& e : r.epoch_stats) {
    json je;
    je["epoch"] = e.epoch;
    je["train_loss"] = num(e.train_loss);
    je["val_psnr"] = num(e.val_psnr);
    je["val_ssim"] = num(e.val_ssim);
    je["has_ssim"] = e.has_ssim;
    je["cossim_layer0"] = num(e.cossim_layer0);
    je["cossim_layer1"] = num(e.cossim_layer1);
    je["cossim_layer2"] = num(e.cossim_layer2);
    je["cossim_symbols"] = num(e.cossim_symbols);
    j["epoch_stats"].push_back(je);
  }
  return j.dump(2);
}

RunReport parse_run_report(const std::string& text) {
  const json j = json::parse(text);
  RunReport r;
  r.arch = j.at("arch").get<std::string>();
  r.gdn = j.at("gdn").get<bool>();
  r.ratio = j.at("ratio").get<std::string>();
  r.channel_kind = j.at("channel_kind").get<std::string>();
  r.snr_db = parse_num(j.at("snr_db"));
  r.epochs = j.at("epochs").get<int>();
  r.batch_size = j.at("batch_size").get<int>();
  r.lr = j.at("lr").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.final_psnr = parse_num(j.at("final_psnr"));
  r.final_ssim = parse_num(j.at("final_ssim"));
  r.has_ssim = j.at("has_ssim").get<bool>();
  r.param_count = j.at("param_count").get<long long>();
  r.flop_count = j.at("flop_count").get<long long>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  for (const auto& je : j.at("epoch_stats")) {
    EpochStats e;
    e.epoch = je.at("epoch").get<int>();
    e.train_loss = parse_num(je.at("train_loss"));
    e.val_psnr = parse_num(je.at("val_psnr"));
    e.val_ssim = parse_num(je.at("val_ssim"));
    e.has_ssim = je.at("has_ssim").get<bool>();
    e.cossim_layer0 = parse_num(je.at("cossim_layer0"));
    e.cossim_layer1 = parse_num(je.at("cossim_layer1"));
    e.cossim_layer2 = parse_num(je.at("cossim_layer2"));
    e.cossim_symbols = parse_num(je.at("cossim_symbols"));
    r.epoch_stats.push_back(e);
  }
  return r;
}

std::string trace_csv(const RunReport& r) {
  std::ostringstream out;
  out.precision(10);
  out << kTraceCsvHeader << "\n";
  for (const auto& e : r.epoch_stats)
    out << e.epoch << "," << e.train_loss << "," << e.val_psnr << "," << e.val_ssim << ","
        << e.cossim_layer0 << "," << e.cossim_layer1 << "," << e.cossim_layer2 << ","
        << e.cossim_symbols << "\n";
  return out.str();
}

std::string spectrum_csv(const std::vector<SpectrumProfile>& profiles) {
  std::ostringstream out;
  out.precision(10);
  out << kSpectrumCsvHeader << "\n";
  for (const auto& p : profiles) {
    for (std::size_t bin = 0; bin < p.y.size(); ++bin) {
      if (p.layer_id == kSymbolsLayer)
        out << "symbols";
      else
        out << p.layer_id;
      out << "," << bin << "," << p.y[bin] << "\n";
    }
  }
  return out.str();
}

void emit_report(const RunReport& report, const std::string& base_path, ReportFormat format) {
  const auto write = [](const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("report: cannot open " + path);
    out << content;
  };
  if (format == ReportFormat::json)
    write(base_path + ".json", run_report_json(report));
  else
    write(base_path + "_trace.csv", trace_csv(report));
}

}  // namespace semlink
