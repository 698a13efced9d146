#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedaugmix/image.hpp"
#include "fedaugmix/model.hpp"

namespace fam {

struct ImagePairScore {
  double mse = 0.0;
  double ssim = 1.0;  // fraction; reports print it as a percentage
  double psnr = 0.0;  // dB, +inf for identical images
};

double mse(const Image& a, const Image& b);
double psnr_from_mse(double mse_value, double max_val = 1.0);
double psnr(const Image& a, const Image& b, double max_val = 1.0);
// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), dynamic range 1,
// averaged over valid window positions and channels. Images smaller than the
// window use one global window.
double ssim(const Image& a, const Image& b);
ImagePairScore score_pair(const Image& reference, const Image& candidate);

// Fraction of rows whose argmax prediction equals the label.
double accuracy(const ModelState& model, std::span<const Image> images, std::span<const std::size_t> labels);

// "none" for severity 0, otherwise "s=<severity>".
std::string protection_label(double severity);

struct ScoreRecord {
  std::string stage;  // "untrained" or "convergent"
  double severity = 0.0;
  ImagePairScore score;
};

struct ReportCell {
  std::string stage;
  std::string protection;
  double severity = 0.0;
  double mse = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  std::size_t n = 0;
};

// Per (stage, protection) means. When `expected_grid` lists (stage, severity)
// cells, those without scores are omitted and reported in `warnings`.
std::vector<ReportCell> defense_report(const std::vector<ScoreRecord>& records,
                                       const std::vector<std::pair<std::string, double>>& expected_grid = {},
                                       std::vector<std::string>* warnings = nullptr);

// CSV with header stage,protection,mse,ssim,psnr,n.
std::string defense_report_csv(const std::vector<ReportCell>& cells);
// JSON array mirroring the CSV field names.
std::string defense_report_json(const std::vector<ReportCell>& cells);

// Shortest text that parses back to the same double for CSV/JSON output; "inf"/"-inf"/"nan" for non-finite values.
std::string format_number(double v);

}  // namespace fam
