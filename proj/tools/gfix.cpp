// Copyright 2026 The GFix Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// gfix: command-line front end for adapter compression and analysis.
//
// Exit codes: 0 success, 1 invalid input, 2 usage, 3 format, 4 numerical.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "gfix/alignment.hpp"
#include "gfix/archive.hpp"
#include "gfix/codec.hpp"
#include "gfix/metrics.hpp"
#include "gfix/mlora.hpp"
#include "gfix/rd_opt.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitInvalid = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitNumerical = 4;

struct LayerEntry {
  std::string name;
  std::size_t split_axis = 1;
  std::size_t rank = 0;
};

struct Manifest {
  std::vector<LayerEntry> layers;
  std::vector<double> lambdas;
  std::vector<double> grid;
  std::optional<std::uint64_t> seed;
  bool refine = false;
};

Manifest LoadManifest(const std::string& path) {
  const auto bytes = gfix::detail::ReadFileBytes(path);
  ordered_json j;
  try {
    j = ordered_json::parse(bytes.begin(), bytes.end());
  } catch (const ordered_json::exception& e) {
    throw gfix::InvalidArgument("manifest " + path + ": " + e.what());
  }
  Manifest m;
  try {
    for (const auto& l : j.value("layers", ordered_json::array())) {
      LayerEntry s;
      s.name = l.at("name").get<std::string>();
      s.split_axis = l.value("split_axis", std::size_t{1});
      s.rank = l.at("rank").get<std::size_t>();
      if (s.rank == 0) throw gfix::InvalidArgument("layer '" + s.name + "' has rank 0");
      m.layers.push_back(s);
    }
    m.lambdas = j.value("lambdas", std::vector<double>{});
    m.grid = j.value("grid", std::vector<double>{});
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    m.refine = j.value("refine", false);
  } catch (const ordered_json::exception& e) {
    throw gfix::InvalidArgument("manifest " + path + ": " + e.what());
  }
  return m;
}

void WriteText(const std::string& path, const std::string& text) {
  gfix::detail::WriteFileAtomically(
      path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

// Text goes to `path`, or stdout when empty.
void Emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    WriteText(path, text);
  }
}

std::string FormatDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

gfix::Matrix LayerMatrix(const gfix::TensorArchive& archive, const LayerEntry& l) {
  const gfix::Tensor* t = archive.Find(l.name);
  if (t == nullptr) throw gfix::InvalidArgument("layer '" + l.name + "' not found in archive");
  return gfix::Reshape2d(*t, l.split_axis);
}

std::vector<gfix::MloraAdapter> BuildAdapters(const gfix::TensorArchive& base,
                                              const Manifest& m) {
  std::vector<gfix::MloraAdapter> out;
  for (const auto& l : m.layers) out.push_back(gfix::InitAdapter(LayerMatrix(base, l), l.rank, l.name));
  return out;
}

std::vector<gfix::Matrix> TargetDeltas(const gfix::TensorArchive& base,
                                       const gfix::TensorArchive& target, const Manifest& m) {
  std::vector<gfix::Matrix> out;
  for (const auto& l : m.layers) {
    const gfix::Matrix w0 = LayerMatrix(base, l);
    const gfix::Matrix w1 = LayerMatrix(target, l);
    if (w0.rows() != w1.rows() || w0.cols() != w1.cols()) {
      throw gfix::InvalidArgument("layer '" + l.name + "': base and target shapes differ");
    }
    out.push_back(gfix::Subtract(w1, w0));
  }
  return out;
}

gfix::RdConfig MakeRdConfig(const std::vector<gfix::MloraAdapter>& adapters,
                            const std::vector<gfix::Matrix>& targets, const Manifest& m,
                            const std::vector<double>& grid_flag, bool refine_flag) {
  gfix::RdConfig cfg;
  cfg.step_grid = !grid_flag.empty() ? grid_flag : m.grid;
  if (cfg.step_grid.empty()) cfg.step_grid = gfix::DefaultStepGrid(gfix::FittedScale(adapters, targets));
  cfg.refine = refine_flag || m.refine;
  if (m.seed) cfg.noise_seed = *m.seed;
  return cfg;
}

// Parses "a:b:step" into a, a+step, ... < b.
std::vector<std::size_t> ParseStepRange(const std::string& text) {
  std::vector<std::size_t> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      parts.push_back(v);
    } catch (const std::exception&) {
      throw gfix::InvalidArgument("bad step range '" + text + "', expected start:end:stride");
    }
  }
  if (parts.size() != 3 || parts[2] == 0 || parts[0] >= parts[1]) {
    throw gfix::InvalidArgument("bad step range '" + text + "', expected start:end:stride");
  }
  std::vector<std::size_t> out;
  for (std::size_t t = parts[0]; t < parts[1]; t += parts[2]) out.push_back(t);
  return out;
}

// Two-column rate,quality CSV; '#' lines and a non-numeric header are skipped.
gfix::RdCurvePoints ReadCurveCsv(const std::string& path, gfix::QualityOrientation o) {
  std::ifstream in(path);
  if (!in) throw gfix::FormatError(gfix::FormatErrorCode::kIo, "cannot open " + path);
  gfix::RdCurvePoints c;
  c.orientation = o;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw gfix::InvalidArgument(path + ":" + std::to_string(lineno) + ": expected rate,quality");
    }
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      const double rate = std::stod(a, &u1);
      const double quality = std::stod(b, &u2);
      c.points.push_back({rate, quality});
    } catch (const std::exception&) {
      if (c.points.empty() && lineno <= 2) continue;  // header row
      throw gfix::InvalidArgument(path + ":" + std::to_string(lineno) + ": not a number");
    }
  }
  return c;
}

gfix::SampleSet LoadSamples(const std::string& path, const std::string& tensor_name) {
  const gfix::TensorArchive a = gfix::ReadArchive(path);
  if (a.entries().empty()) throw gfix::InvalidArgument(path + " holds no tensors");
  const gfix::Tensor& t = tensor_name.empty() ? a.entries().front() : a.Get(tensor_name);
  if (t.rank() < 2) throw gfix::InvalidArgument("samples need a tensor of rank >= 2");
  return {gfix::Reshape2d(t, 1), path};
}

std::string InspectArchive(const gfix::TensorArchive& a) {
  std::ostringstream os;
  os << "GFXT archive, " << a.entries().size() << " tensors\n";
  for (const auto& [k, v] : a.metadata()) os << "  meta " << k << " = " << v << "\n";
  for (const auto& t : a.entries()) {
    os << "  " << t.name() << " " << gfix::DTypeName(t.dtype()) << " "
       << gfix::ShapeString(t.shape()) << "\n";
  }
  return os.str();
}

std::string InspectStream(const std::vector<gfix::QuantizedGroup>& groups) {
  std::ostringstream os;
  os << "GFXB bitstream, " << groups.size() << " groups\n";
  for (const auto& g : groups) {
    os << "  rank " << g.rank << " x " << g.count << " maps, step " << FormatDouble(g.step)
       << ", " << gfix::BuildPmf(g.symbols).alphabet.size() << " distinct symbols\n";
    for (const auto& id : g.layer_ids) os << "    " << id << "\n";
  }
  return os.str();
}

int Run(int argc, char** argv) {
  CLI::App app{"Low-rank adapter compression and analysis tools"};
  app.set_version_flag("--version", std::string(gfix::kVersion));
  app.require_subcommand(1);

  // decompose
  std::string base_path, target_path, manifest_path, out_path, report_path, maps_path;
  auto* decompose = app.add_subcommand("decompose", "Build rank-r adapters from base weights");
  decompose->add_option("base", base_path, "Base weights (.gfxt)")->required();
  decompose->add_option("--layers", manifest_path, "Layer manifest (JSON)")->required();
  decompose->add_option("--out", out_path, "Adapter archive to write")->required();

  // fit
  double lambda = 0.01;
  std::vector<double> grid;
  bool refine = false;
  auto* fit = app.add_subcommand("fit", "Fit, quantize and entropy-code modulation maps");
  fit->add_option("base", base_path, "Base weights (.gfxt)")->required();
  fit->add_option("target", target_path, "Fine-tuned weights (.gfxt)")->required();
  fit->add_option("--manifest", manifest_path, "Layer manifest (JSON)")->required();
  fit->add_option("--lambda", lambda, "Rate-distortion tradeoff")->check(CLI::NonNegativeNumber);
  fit->add_option("--grid", grid, "Quantization steps to search")->delimiter(',');
  fit->add_flag("--refine", refine, "Greedy per-symbol refinement");
  fit->add_option("--out", out_path, "Bitstream to write (.gfxb)")->required();
  fit->add_option("--report", report_path, "JSON report (stdout if omitted)");

  // decode
  auto* decode = app.add_subcommand("decode", "Decode a bitstream into dequantized maps");
  decode->add_option("stream", base_path, "Bitstream (.gfxb)")->required();
  decode->add_option("--out", out_path, "Map archive to write (.gfxt)")->required();

  // apply
  auto* apply = app.add_subcommand("apply", "Reconstruct weights from base and decoded maps");
  apply->add_option("base", base_path, "Base weights (.gfxt)")->required();
  apply->add_option("maps", maps_path, "Decoded maps (.gfxt)")->required();
  apply->add_option("--manifest", manifest_path, "Layer manifest (JSON)")->required();
  apply->add_option("--out", out_path, "Reconstructed weights (.gfxt)")->required();

  // rdcurve
  std::vector<double> lambdas;
  auto* rdcurve = app.add_subcommand("rdcurve", "Rate-distortion points over a lambda sweep");
  rdcurve->add_option("base", base_path, "Base weights (.gfxt)")->required();
  rdcurve->add_option("target", target_path, "Fine-tuned weights (.gfxt)")->required();
  rdcurve->add_option("--manifest", manifest_path, "Layer manifest (JSON)")->required();
  rdcurve->add_option("--lambdas", lambdas, "Lambda values")->delimiter(',');
  rdcurve->add_option("--grid", grid, "Quantization steps to search")->delimiter(',');
  rdcurve->add_flag("--refine", refine, "Greedy per-symbol refinement");
  rdcurve->add_option("--out", out_path, "CSV to write (stdout if omitted)");

  // bdrate
  std::string test_csv, anchor_csv, orientation = "higher";
  auto* bdrate = app.add_subcommand("bdrate", "Average rate difference between two RD curves");
  bdrate->add_option("--test", test_csv, "Test curve CSV (rate,quality)")->required();
  bdrate->add_option("--anchor", anchor_csv, "Anchor curve CSV (rate,quality)")->required();
  bdrate->add_option("--quality-orientation", orientation, "higher or lower is better")
      ->check(CLI::IsMember({"higher", "lower"}));

  // mmd-scan
  std::string degraded_path, reference_path, t_range = "0:1000:25", tensor_name;
  std::optional<double> bandwidth;
  std::uint64_t seed = gfix::ScanOptions{}.seed;
  bool unbiased = false;
  auto* scan = app.add_subcommand("mmd-scan", "Kernel MMD against noised references");
  scan->add_option("--degraded", degraded_path, "Degraded samples (.gfxt)")->required();
  scan->add_option("--reference", reference_path, "Reference samples (.gfxt)")->required();
  scan->add_option("--t", t_range, "Schedule steps start:end:stride (end exclusive)");
  scan->add_option("--tensor", tensor_name, "Tensor holding the samples (default: first)");
  scan->add_option("--bandwidth", bandwidth, "RBF bandwidth (median heuristic if omitted)")
      ->check(CLI::PositiveNumber);
  scan->add_option("--seed", seed, "Noise seed");
  scan->add_flag("--unbiased", unbiased, "Unbiased estimator");
  scan->add_option("--out", out_path, "CSV to write (stdout if omitted)");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "List the contents of a .gfxt or .gfxb file");
  inspect->add_option("file", base_path, "File to inspect")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const std::string version(gfix::kVersion);

  if (decompose->parsed()) {
    const gfix::TensorArchive base = gfix::ReadArchive(base_path);
    const Manifest m = LoadManifest(manifest_path);
    if (m.layers.empty()) std::cerr << "warning: manifest selects no layers\n";
    gfix::TensorArchive out;
    out.metadata()["producer"] = version;
    for (const auto& ad : BuildAdapters(base, m)) gfix::StoreAdapter(out, ad);
    gfix::WriteArchive(out, out_path);
    return 0;
  }

  if (fit->parsed()) {
    const gfix::TensorArchive base = gfix::ReadArchive(base_path);
    const gfix::TensorArchive target = gfix::ReadArchive(target_path);
    const Manifest m = LoadManifest(manifest_path);
    if (m.layers.empty()) throw gfix::InvalidArgument("manifest selects no layers");
    const auto adapters = BuildAdapters(base, m);
    const auto deltas = TargetDeltas(base, target, m);
    gfix::RdConfig cfg = MakeRdConfig(adapters, deltas, m, grid, refine);
    cfg.lambda = lambda;
    const gfix::RdResult res = gfix::RdFit(adapters, deltas, cfg);

    std::vector<gfix::EncodedGroupInfo> info;
    const auto stream = gfix::EncodeBitstream(res.groups, &info);
    ordered_json report;
    report["producer"] = version;
    report["lambda"] = res.lambda;
    report["chosen_step"] = res.chosen_step;
    report["rate_bits"] = res.rate_bits;
    report["distortion"] = res.distortion;
    report["objective"] = res.objective;
    report["refine_moves"] = res.refine_moves;
    report["stream_bytes"] = stream.size();
    report["groups"] = ordered_json::array();
    for (std::size_t i = 0; i < res.groups.size(); ++i) {
      report["groups"].push_back({{"rank", res.groups[i].rank},
                                  {"layers", res.groups[i].layer_ids},
                                  {"payload_bytes", info[i].payload_bytes},
                                  {"table_bytes", info[i].table_bytes},
                                  {"precision", info[i].precision}});
    }
    const std::string text = report.dump(2) + "\n";
    if (!report_path.empty()) WriteText(report_path, text);
    gfix::detail::WriteFileAtomically(out_path, stream);
    if (report_path.empty()) std::cout << text;
    return 0;
  }

  if (decode->parsed()) {
    const auto groups = gfix::ReadBitstream(base_path);
    gfix::TensorArchive out;
    out.metadata()["producer"] = version;
    for (const auto& q : groups) {
      const gfix::ModulationGroup g = gfix::Dequantize(q);
      for (std::size_t k = 0; k < g.count(); ++k) {
        out.Add(gfix::Tensor::FromMatrix(g.layer_ids[k] + ".M", g.maps[k]));
      }
      for (const auto& id : q.layer_ids) out.metadata()[id + ".step"] = FormatDouble(q.step);
    }
    gfix::WriteArchive(out, out_path);
    return 0;
  }

  if (apply->parsed()) {
    const gfix::TensorArchive base = gfix::ReadArchive(base_path);
    const gfix::TensorArchive maps = gfix::ReadArchive(maps_path);
    const Manifest m = LoadManifest(manifest_path);
    gfix::TensorArchive out = base;
    out.metadata()["producer"] = version;
    for (const auto& l : m.layers) {
      gfix::MloraAdapter ad = gfix::InitAdapter(LayerMatrix(base, l), l.rank, l.name);
      const gfix::Tensor* mt = maps.Find(l.name + ".M");
      if (mt == nullptr) throw gfix::InvalidArgument("no decoded map for layer '" + l.name + "'");
      if (mt->shape() != std::vector<std::size_t>{l.rank, l.rank}) {
        throw gfix::InvalidArgument("layer '" + l.name + "': decoded map is " +
                                    gfix::ShapeString(mt->shape()) + ", manifest rank " +
                                    std::to_string(l.rank));
      }
      ad.m_map = gfix::Reshape2d(*mt, 1);
      const gfix::Tensor& w0 = base.Get(l.name);
      out.Put(gfix::ReshapeLike(gfix::Apply(gfix::Reshape2d(w0, l.split_axis), ad), w0));
    }
    gfix::WriteArchive(out, out_path);
    return 0;
  }

  if (rdcurve->parsed()) {
    const gfix::TensorArchive base = gfix::ReadArchive(base_path);
    const gfix::TensorArchive target = gfix::ReadArchive(target_path);
    const Manifest m = LoadManifest(manifest_path);
    if (m.layers.empty()) throw gfix::InvalidArgument("manifest selects no layers");
    const auto adapters = BuildAdapters(base, m);
    const auto deltas = TargetDeltas(base, target, m);
    const gfix::RdConfig cfg = MakeRdConfig(adapters, deltas, m, grid, refine);
    if (lambdas.empty()) lambdas = m.lambdas;
    if (lambdas.empty()) lambdas = gfix::DefaultLambdas();
    std::ostringstream os;
    os << "# " << version << "\n";
    os << "lambda,step,rate_bits,distortion,objective\n";
    for (const auto& r : gfix::RdCurve(adapters, deltas, lambdas, cfg)) {
      os << FormatDouble(r.lambda) << "," << FormatDouble(r.chosen_step) << ","
         << FormatDouble(r.rate_bits) << "," << FormatDouble(r.distortion) << ","
         << FormatDouble(r.objective) << "\n";
    }
    Emit(out_path, os.str());
    return 0;
  }

  if (bdrate->parsed()) {
    const auto o = orientation == "lower" ? gfix::QualityOrientation::kLowerBetter
                                          : gfix::QualityOrientation::kHigherBetter;
    const double bd = gfix::BdRate(ReadCurveCsv(test_csv, o), ReadCurveCsv(anchor_csv, o));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f\n", bd);
    std::cout << buf;
    return 0;
  }

  if (scan->parsed()) {
    const gfix::SampleSet degraded = LoadSamples(degraded_path, tensor_name);
    const gfix::SampleSet reference = LoadSamples(reference_path, tensor_name);
    gfix::ScanOptions opts;
    opts.bandwidth = bandwidth;
    opts.seed = seed;
    opts.estimator = unbiased ? gfix::MmdEstimator::kUnbiased : gfix::MmdEstimator::kBiased;
    const auto points = gfix::MmdScan(degraded, reference, gfix::NoiseSchedule::Linear(),
                                      ParseStepRange(t_range), opts);
    std::ostringstream os;
    os << "# " << version << "\n";
    os << "t,mmd2,normalized\n";
    for (const auto& p : points) {
      os << p.t << "," << FormatDouble(p.mmd2) << "," << FormatDouble(p.normalized) << "\n";
    }
    Emit(out_path, os.str());
    std::cerr << "best t = " << gfix::SelectStepsize(points) << "\n";
    return 0;
  }

  if (inspect->parsed()) {
    const auto bytes = gfix::detail::ReadFileBytes(base_path);
    if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "GFXB") {
      std::cout << InspectStream(gfix::DecodeBitstream(bytes));
    } else {
      std::cout << InspectArchive(gfix::ParseArchive(bytes));
    }
    return 0;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const gfix::FormatError& e) {
    std::cerr << "error: " << gfix::ToString(e.code()) << ": " << e.what() << "\n";
    return kExitFormat;
  } catch (const gfix::NumericalError& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const gfix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}
