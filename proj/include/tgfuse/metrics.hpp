#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tgfuse::metrics {

/// Row-major bit grid; values are 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t width, std::size_t height);
  BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  bool get(std::size_t x, std::size_t y) const { return bits_[y * width_ + x] != 0; }
  void set(std::size_t x, std::size_t y, bool on = true) { bits_[y * width_ + x] = on ? 1 : 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t width_ = 0, height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct Point {
  std::int64_t x = 0;
  std::int64_t y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Boundary pixels of a mask, in row-major scan order.
using SurfaceSet = std::vector<Point>;

/// 2|A n B| / (|A| + |B|); both empty gives 1.
double dsc(const BinaryMask& gt, const BinaryMask& agc);

/// Pixels that are set and have a 4-neighbour that is unset or outside the grid.
SurfaceSet extract_surface(const BinaryMask& mask);

/// For each x in X, the squared Euclidean distance to the nearest y in Y.
/// Uses an exact squared distance transform over the bounding grid of X u Y.
std::vector<std::int64_t> directed_squared_distances(const SurfaceSet& from, const SurfaceSet& to);
std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to);

enum class Hd95Mode {
  Pooled,        // percentile of d(GT->AGC) u d(AGC->GT)
  MaxDirected,   // max of the two per-direction percentiles
};

/// Nearest-rank 95th percentile: element ceil(0.95 m) of the sorted values.
double percentile95(std::vector<double> values);

/// Undefined (nullopt) when either mask is empty.
std::optional<double> hd95(const BinaryMask& gt, const BinaryMask& agc,
                           Hd95Mode mode = Hd95Mode::Pooled);
std::optional<double> asd(const BinaryMask& gt, const BinaryMask& agc);

enum class WilcoxonMethod { Exact, NormalApprox, Degenerate };
const char* to_string(WilcoxonMethod m);

struct WilcoxonResult {
  double w_plus = 0.0;
  std::size_t n_effective = 0;
  double p_value = 1.0;  // two-sided
  WilcoxonMethod method = WilcoxonMethod::Degenerate;
  bool degenerate = false;
};

struct PairedSample {
  double a = 0.0;
  double b = 0.0;
};

enum class WilcoxonPath { Auto, ForceExact, ForceNormal };

/// Signed-rank test on d_i = a_i - b_i. Zero differences are discarded, tied
/// |d_i| share their average rank. Auto picks exact enumeration for n <= 20.
WilcoxonResult wilcoxon_signed_rank(std::span<const PairedSample> pairs,
                                    WilcoxonPath path = WilcoxonPath::Auto);

struct Summary {
  double mean = 0.0;
  double stddev = 0.0;  // population (divides by n)
  std::size_t count = 0;
};

Summary aggregate(std::span<const double> values);

/// One evaluated sample. Undefined surface metrics carry `sentinel` (the
/// image diagonal) and hd95_defined = false.
struct SampleMetrics {
  std::string sample_id;
  double dsc = 0.0;
  double hd95 = 0.0;
  double asd = 0.0;
  bool hd95_defined = true;
};

SampleMetrics evaluate_pair(const std::string& sample_id, const BinaryMask& gt,
                            const BinaryMask& agc, Hd95Mode mode = Hd95Mode::Pooled);

struct MetricsReport {
  std::vector<SampleMetrics> samples;

  Summary dsc() const;
  Summary hd95() const;
  Summary asd() const;
  std::size_t undefined_count() const;
};

/// Columns: sample_id,dsc,hd95,asd,hd95_defined.
void write_report_csv(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_report_csv(const std::filesystem::path& path);

/// Aligned "metric mean±std" table.
std::string format_summary(const MetricsReport& report);

struct ComparisonRow {
  std::string metric;
  WilcoxonResult result;
};

/// Pairs samples by sample_id (reports must list the same ids) and tests each
/// metric. Throws InputError naming the first divergent id.
std::vector<ComparisonRow> compare_reports(const MetricsReport& a, const MetricsReport& b);

/// Columns: metric,n_effective,w_plus,p_two_sided,method.
std::string format_comparison_csv(std::span<const ComparisonRow> rows);

}  // namespace tgfuse::metrics
