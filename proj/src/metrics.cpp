#include "tgfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "text_util.hpp"
#include "tgfuse/errors.hpp"

namespace tgfuse::metrics {

BinaryMask::BinaryMask(std::size_t width, std::size_t height)
    : width_(width), height_(height), bits_(width * height, 0) {}

BinaryMask::BinaryMask(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (bits_.size() != width * height) throw ShapeError("mask: bit count does not match dims");
  for (auto b : bits_) {
    if (b > 1) throw InputError("mask: values must be 0 or 1");
  }
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

namespace {

void require_same_dims(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ShapeError(std::string(what) + ": mask dims differ (" + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()) + ")");
  }
}

constexpr std::int64_t kFar = std::numeric_limits<std::int64_t>::max() / 4;

// Exact 1-D squared distance transform (lower envelope of parabolas) over
// samples f; only finite samples contribute parabolas.
void edt_1d(const std::vector<std::int64_t>& f, std::vector<std::int64_t>& out) {
  const std::size_t n = f.size();
  std::vector<std::int64_t> v(n);
  std::vector<double> z(n + 1);
  std::size_t k = 0;
  bool any = false;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] >= kFar) continue;
    const auto qi = static_cast<std::int64_t>(q);
    if (!any) {
      any = true;
      k = 0;
      v[0] = qi;
      z[0] = -std::numeric_limits<double>::infinity();
      z[1] = std::numeric_limits<double>::infinity();
      continue;
    }
    // z[0] is -inf, so the scan always stops at k == 0.
    double s = 0.0;
    while (true) {
      const std::int64_t p = v[k];
      s = static_cast<double>((f[q] + qi * qi) - (f[p] + p * p)) / static_cast<double>(2 * (qi - p));
      if (s > z[k]) break;
      --k;
    }
    ++k;
    v[k] = qi;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  out.assign(n, kFar);
  if (!any) return;
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const std::int64_t d = static_cast<std::int64_t>(q) - v[k];
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

double dsc(const BinaryMask& gt, const BinaryMask& agc) {
  require_same_dims(gt, agc, "dsc");
  std::size_t inter = 0, a = 0, b = 0;
  const auto& x = gt.bits();
  const auto& y = agc.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    a += x[i];
    b += y[i];
    inter += x[i] & y[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

SurfaceSet extract_surface(const BinaryMask& mask) {
  SurfaceSet out;
  const std::size_t w = mask.width(), h = mask.height();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask.get(x, y)) continue;
      const bool interior = x > 0 && y > 0 && x + 1 < w && y + 1 < h && mask.get(x - 1, y) &&
                            mask.get(x + 1, y) && mask.get(x, y - 1) && mask.get(x, y + 1);
      if (!interior) out.push_back({static_cast<std::int64_t>(x), static_cast<std::int64_t>(y)});
    }
  }
  return out;
}

std::vector<std::int64_t> directed_squared_distances(const SurfaceSet& from, const SurfaceSet& to) {
  if (to.empty()) throw InputError("directed_distances: target point set is empty");
  if (from.empty()) return {};
  std::int64_t x0 = to[0].x, x1 = to[0].x, y0 = to[0].y, y1 = to[0].y;
  for (const auto* set : {&from, &to}) {
    for (const Point& p : *set) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const auto w = static_cast<std::size_t>(x1 - x0 + 1), h = static_cast<std::size_t>(y1 - y0 + 1);
  std::vector<std::int64_t> grid(w * h, kFar);
  for (const Point& p : to) grid[static_cast<std::size_t>(p.y - y0) * w + static_cast<std::size_t>(p.x - x0)] = 0;

  std::vector<std::int64_t> line, result;
  line.resize(h);
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[y * w + x];
    edt_1d(line, result);
    for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = result[y];
  }
  line.resize(w);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y * w), w, line.begin());
    edt_1d(line, result);
    std::copy(result.begin(), result.end(), grid.begin() + static_cast<std::ptrdiff_t>(y * w));
  }

  std::vector<std::int64_t> out;
  out.reserve(from.size());
  for (const Point& p : from) {
    out.push_back(grid[static_cast<std::size_t>(p.y - y0) * w + static_cast<std::size_t>(p.x - x0)]);
  }
  return out;
}

std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to) {
  const auto sq = directed_squared_distances(from, to);
  std::vector<double> out(sq.size());
  std::transform(sq.begin(), sq.end(), out.begin(),
                 [](std::int64_t v) { return std::sqrt(static_cast<double>(v)); });
  return out;
}

double percentile95(std::vector<double> values) {
  if (values.empty()) throw InputError("percentile95: no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size();
  const std::size_t rank = (95 * m + 99) / 100;  // ceil(0.95 m), 1-based
  return values[rank - 1];
}

std::optional<double> hd95(const BinaryMask& gt, const BinaryMask& agc, Hd95Mode mode) {
  require_same_dims(gt, agc, "hd95");
  const SurfaceSet s_gt = extract_surface(gt), s_agc = extract_surface(agc);
  if (s_gt.empty() || s_agc.empty()) return std::nullopt;
  std::vector<double> forward = directed_distances(s_gt, s_agc);
  std::vector<double> backward = directed_distances(s_agc, s_gt);
  if (mode == Hd95Mode::MaxDirected) {
    return std::max(percentile95(std::move(forward)), percentile95(std::move(backward)));
  }
  forward.insert(forward.end(), backward.begin(), backward.end());
  return percentile95(std::move(forward));
}

std::optional<double> asd(const BinaryMask& gt, const BinaryMask& agc) {
  require_same_dims(gt, agc, "asd");
  const SurfaceSet s_gt = extract_surface(gt), s_agc = extract_surface(agc);
  if (s_gt.empty() || s_agc.empty()) return std::nullopt;
  double total = 0.0;
  for (double d : directed_distances(s_gt, s_agc)) total += d;
  for (double d : directed_distances(s_agc, s_gt)) total += d;
  return total / static_cast<double>(s_gt.size() + s_agc.size());
}

const char* to_string(WilcoxonMethod m) {
  switch (m) {
    case WilcoxonMethod::Exact: return "exact";
    case WilcoxonMethod::NormalApprox: return "normal-approx";
    case WilcoxonMethod::Degenerate: return "degenerate";
  }
  return "?";
}

WilcoxonResult wilcoxon_signed_rank(std::span<const PairedSample> pairs, WilcoxonPath path) {
  std::vector<double> diffs;
  for (const auto& p : pairs) {
    const double d = p.a - p.b;
    if (d != 0.0) diffs.push_back(d);
  }
  WilcoxonResult result;
  const std::size_t n = diffs.size();
  result.n_effective = n;
  if (n == 0) {
    result.degenerate = true;
    result.method = WilcoxonMethod::Degenerate;
    result.p_value = 1.0;
    return result;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return std::fabs(diffs[i]) < std::fabs(diffs[j]); });
  // Ranks are kept doubled so that average ranks of ties stay integral.
  std::vector<std::uint64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::fabs(diffs[order[j + 1]]) == std::fabs(diffs[order[i]])) ++j;
    const std::uint64_t r2 = i + j + 2;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const auto t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::uint64_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) w2 += rank2[i];
  }
  result.w_plus = static_cast<double>(w2) / 2.0;

  const bool exact = path == WilcoxonPath::ForceExact || (path == WilcoxonPath::Auto && n <= 20);
  if (exact) {
    if (n > 62) throw InputError("wilcoxon: exact enumeration limited to n <= 62");
    const std::uint64_t max_sum = n * (n + 1);
    std::vector<std::uint64_t> counts(max_sum + 1, 0);
    counts[0] = 1;
    std::uint64_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint64_t s = reach + 1; s-- > 0;) {
        if (counts[s]) counts[s + rank2[i]] += counts[s];
      }
      reach += rank2[i];
    }
    std::uint64_t lower = 0, upper = 0;
    for (std::uint64_t s = 0; s <= max_sum; ++s) {
      if (s <= w2) lower += counts[s];
      if (s >= w2) upper += counts[s];
    }
    const double total = std::ldexp(1.0, static_cast<int>(n));
    result.p_value = std::min(1.0, 2.0 * static_cast<double>(std::min(lower, upper)) / total);
    result.method = WilcoxonMethod::Exact;
  } else {
    const auto nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double z = std::max(0.0, std::fabs(result.w_plus - mu) - 0.5) / std::sqrt(var);
    result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    result.method = WilcoxonMethod::NormalApprox;
  }
  return result;
}

Summary aggregate(std::span<const double> values) {
  if (values.empty()) throw InputError("aggregate: no samples");
  Summary s;
  s.count = values.size();
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(s.count);
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(s.count));
  return s;
}

SampleMetrics evaluate_pair(const std::string& sample_id, const BinaryMask& gt,
                            const BinaryMask& agc, Hd95Mode mode) {
  SampleMetrics m;
  m.sample_id = sample_id;
  m.dsc = dsc(gt, agc);
  const auto h = hd95(gt, agc, mode);
  const auto a = asd(gt, agc);
  const double diagonal = std::hypot(static_cast<double>(gt.width()), static_cast<double>(gt.height()));
  m.hd95_defined = h.has_value();
  m.hd95 = h.value_or(diagonal);
  m.asd = a.value_or(diagonal);
  return m;
}

namespace {

template <typename Fn>
Summary summarize(const std::vector<SampleMetrics>& samples, Fn field) {
  std::vector<double> v;
  v.reserve(samples.size());
  for (const auto& s : samples) v.push_back(field(s));
  return aggregate(v);
}

}  // namespace

Summary MetricsReport::dsc() const {
  return summarize(samples, [](const SampleMetrics& s) { return s.dsc; });
}
Summary MetricsReport::hd95() const {
  return summarize(samples, [](const SampleMetrics& s) { return s.hd95; });
}
Summary MetricsReport::asd() const {
  return summarize(samples, [](const SampleMetrics& s) { return s.asd; });
}
std::size_t MetricsReport::undefined_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const SampleMetrics& s) { return !s.hd95_defined; }));
}

void write_report_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("report: cannot write " + path.string());
  out << "sample_id,dsc,hd95,asd,hd95_defined\n";
  for (const auto& s : report.samples) {
    out << s.sample_id << ',' << text::format_double(s.dsc) << ',' << text::format_double(s.hd95)
        << ',' << text::format_double(s.asd) << ',' << (s.hd95_defined ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("report: write failed for " + path.string());
}

MetricsReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("report: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "sample_id,dsc,hd95,asd,hd95_defined") {
    throw InputError("report: unexpected header in " + path.string());
  }
  MetricsReport report;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(text::trim(line), ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 5) throw InputError("report: expected 5 columns at " + where);
    SampleMetrics s;
    s.sample_id = f[0];
    s.dsc = text::parse_double(f[1], where);
    s.hd95 = text::parse_double(f[2], where);
    s.asd = text::parse_double(f[3], where);
    s.hd95_defined = text::parse_size(f[4], where) != 0;
    report.samples.push_back(std::move(s));
  }
  return report;
}

std::string format_summary(const MetricsReport& report) {
  std::ostringstream os;
  const auto row = [&](const char* name, const Summary& s, int digits) {
    std::string label = name;
    label.resize(8, ' ');
    os << label << text::format_fixed(s.mean, digits) << "±" << text::format_fixed(s.stddev, digits) << '\n';
  };
  os << "metric  mean±std\n";
  row("DSC", report.dsc(), 3);
  row("HD95", report.hd95(), 2);
  row("ASD", report.asd(), 2);
  os << "undefined HD95/ASD: " << report.undefined_count() << " of " << report.samples.size() << '\n';
  return os.str();
}

std::vector<ComparisonRow> compare_reports(const MetricsReport& a, const MetricsReport& b) {
  std::unordered_map<std::string, const SampleMetrics*> by_id;
  for (const auto& s : b.samples) by_id.emplace(s.sample_id, &s);
  std::vector<PairedSample> dsc_pairs, hd_pairs, asd_pairs;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& s = a.samples[i];
    auto it = by_id.find(s.sample_id);
    if (it == by_id.end()) {
      throw InputError("compare: sample '" + s.sample_id + "' (row " + std::to_string(i + 1) +
                       ") missing from second report");
    }
    dsc_pairs.push_back({s.dsc, it->second->dsc});
    hd_pairs.push_back({s.hd95, it->second->hd95});
    asd_pairs.push_back({s.asd, it->second->asd});
  }
  if (a.samples.size() != b.samples.size()) {
    for (const auto& s : b.samples) {
      const bool found = std::any_of(a.samples.begin(), a.samples.end(),
                                     [&](const SampleMetrics& x) { return x.sample_id == s.sample_id; });
      if (!found) throw InputError("compare: sample '" + s.sample_id + "' missing from first report");
    }
    throw InputError("compare: reports list duplicate sample ids");
  }
  return {{"dsc", wilcoxon_signed_rank(dsc_pairs)},
          {"hd95", wilcoxon_signed_rank(hd_pairs)},
          {"asd", wilcoxon_signed_rank(asd_pairs)}};
}

std::string format_comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream os;
  os << "metric,n_effective,w_plus,p_two_sided,method\n";
  for (const auto& r : rows) {
    os << r.metric << ',' << r.result.n_effective << ',' << text::format_double(r.result.w_plus) << ','
       << text::format_double(r.result.p_value) << ',' << to_string(r.result.method) << '\n';
  }
  return os.str();
}

}  // namespace tgfuse::metrics
