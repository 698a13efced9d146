#include "fedaugmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "fedaugmix/errors.hpp"

namespace fam {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": image shapes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                         std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                         std::to_string(b.channels) + ")");
  }
}

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  const double c = (kWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i) {
    g[i] = std::exp(-((i - c) * (i - c)) / (2.0 * kSigma * kSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  std::vector<double> w(kWindow * kWindow);
  for (std::size_t y = 0; y < kWindow; ++y)
    for (std::size_t x = 0; x < kWindow; ++x) w[y * kWindow + x] = g[y] * g[x];
  return w;
}

double ssim_formula(double mu_a, double mu_b, double var_a, double var_b, double cov) {
  return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

}  // namespace

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double psnr_from_mse(double mse_value, double max_val) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse_value);
}

double psnr(const Image& a, const Image& b, double max_val) { return psnr_from_mse(mse(a, b), max_val); }

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  const std::size_t ch = a.channels;
  if (a.height < kWindow || a.width < kWindow) {
    double total = 0.0;
    const double n = static_cast<double>(a.height * a.width);
    for (std::size_t c = 0; c < ch; ++c) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t i = c; i < a.size(); i += ch) {
        ma += a.pixels[i];
        mb += b.pixels[i];
      }
      ma /= n;
      mb /= n;
      double va = 0.0, vb = 0.0, cv = 0.0;
      for (std::size_t i = c; i < a.size(); i += ch) {
        const double da = a.pixels[i] - ma, db = b.pixels[i] - mb;
        va += da * da;
        vb += db * db;
        cv += da * db;
      }
      total += ssim_formula(ma, mb, va / n, vb / n, cv / n);
    }
    return total / static_cast<double>(ch);
  }

  static const std::vector<double> window = gaussian_window();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y0 = 0; y0 + kWindow <= a.height; ++y0) {
      for (std::size_t x0 = 0; x0 + kWindow <= a.width; ++x0) {
        double ma = 0.0, mb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        for (std::size_t y = 0; y < kWindow; ++y) {
          for (std::size_t x = 0; x < kWindow; ++x) {
            const double w = window[y * kWindow + x];
            const double pa = a.at(y0 + y, x0 + x, c), pb = b.at(y0 + y, x0 + x, c);
            ma += w * pa;
            mb += w * pb;
            saa += w * pa * pa;
            sbb += w * pb * pb;
            sab += w * pa * pb;
          }
        }
        total += ssim_formula(ma, mb, saa - ma * ma, sbb - mb * mb, sab - ma * mb);
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

ImagePairScore score_pair(const Image& reference, const Image& candidate) {
  const double m = mse(reference, candidate);
  return {m, ssim(reference, candidate), psnr_from_mse(m)};
}

double accuracy(const ModelState& model, std::span<const Image> images, std::span<const std::size_t> labels) {
  if (images.empty()) throw DimensionError("accuracy: empty test set");
  if (images.size() != labels.size()) throw DimensionError("accuracy: images and labels differ in count");
  const auto predicted = predict(model, to_batch(images));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string protection_label(double severity) {
  if (severity == 0.0) return "none";
  return "s=" + format_number(severity);
}

namespace {

int stage_rank(const std::string& stage) {
  if (stage == "untrained") return 0;
  if (stage == "convergent") return 1;
  return 2;
}

struct CellKey {
  std::string stage;
  double severity;
  bool operator<(const CellKey& o) const {
    const int a = stage_rank(stage), b = stage_rank(o.stage);
    if (a != b) return a < b;
    if (stage != o.stage) return stage < o.stage;
    return severity < o.severity;
  }
};

}  // namespace

std::vector<ReportCell> defense_report(const std::vector<ScoreRecord>& records,
                                       const std::vector<std::pair<std::string, double>>& expected_grid,
                                       std::vector<std::string>* warnings) {
  std::map<CellKey, std::vector<ImagePairScore>> cells;
  for (const auto& r : records) cells[{r.stage, r.severity}].push_back(r.score);
  for (const auto& [stage, severity] : expected_grid) {
    if (!cells.count({stage, severity}) && warnings) {
      warnings->push_back("no scores for stage=" + stage + " protection=" + protection_label(severity) +
                          "; cell omitted");
    }
  }
  std::vector<ReportCell> out;
  for (const auto& [key, scores] : cells) {
    ReportCell cell{key.stage, protection_label(key.severity), key.severity, 0.0, 0.0, 0.0, scores.size()};
    for (const auto& s : scores) {
      cell.mse += s.mse;
      cell.ssim += s.ssim;
      cell.psnr += s.psnr;
    }
    const double n = static_cast<double>(scores.size());
    cell.mse /= n;
    cell.ssim /= n;
    cell.psnr /= n;
    out.push_back(cell);
  }
  return out;
}

std::string defense_report_csv(const std::vector<ReportCell>& cells) {
  std::ostringstream os;
  os << "stage,protection,mse,ssim,psnr,n\n";
  for (const auto& c : cells) {
    os << c.stage << ',' << c.protection << ',' << format_number(c.mse) << ',' << format_number(c.ssim) << ','
       << format_number(c.psnr) << ',' << c.n << '\n';
  }
  return os.str();
}

std::string defense_report_json(const std::vector<ReportCell>& cells) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json row;
    row["stage"] = c.stage;
    row["protection"] = c.protection;
    row["mse"] = c.mse;
    row["ssim"] = c.ssim;
    if (std::isfinite(c.psnr)) {
      row["psnr"] = c.psnr;
    } else {
      row["psnr"] = format_number(c.psnr);
    }
    row["n"] = c.n;
    arr.push_back(row);
  }
  return arr.dump(2) + "\n";
}

}  // namespace fam
