#include "deltaphi/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "deltaphi/error.hpp"
#include "deltaphi/parallel.hpp"

namespace dphi {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RankCurve average_curve(const std::vector<std::vector<double>>& per_query, std::size_t max_rank, std::size_t size) {
  RankCurve curve{std::vector<double>(max_rank, 0.0), size};
  for (const auto& row : per_query)
    for (std::size_t r = 0; r < max_rank; ++r) curve.mean_distance[r] += row[r];
  for (double& v : curve.mean_distance) v /= static_cast<double>(per_query.size());
  return curve;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> flatten(const GridField& f) { return {f.values().begin(), f.values().end()}; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

// Non-empty lines with a trailing '\r' removed.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

[[noreturn]] void csv_error(const std::string& what, std::size_t line) {
  throw ParseError("CSV line " + std::to_string(line + 1) + ": " + what, line);
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) csv_error("bad number '" + std::string(s) + "'", line);
  return v;
}

std::size_t parse_index(std::string_view s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) csv_error("bad integer '" + std::string(s) + "'", line);
  return v;
}

std::vector<std::vector<std::string_view>> csv_body(std::string_view text, std::string_view header,
                                                    std::size_t columns) {
  const auto lines = lines_of(text);
  if (lines.empty() || lines.front() != header) csv_error("expected header '" + std::string(header) + "'", 0);
  std::vector<std::vector<std::string_view>> rows;
  for (std::size_t l = 1; l < lines.size(); ++l) {
    auto fields = split(lines[l], ',');
    if (fields.size() != columns) csv_error("expected " + std::to_string(columns) + " fields", l);
    rows.push_back(std::move(fields));
  }
  return rows;
}

}  // namespace

RankCurve similarity_rank_curve(const Dataset& train_set, const Dataset& test_set, std::size_t max_rank,
                                SimilarityMetric metric) {
  DPHI_REQUIRE(!train_set.empty() && !test_set.empty(), "similarity_rank_curve: empty dataset");
  DPHI_REQUIRE(max_rank >= 1 && max_rank <= train_set.size(), "similarity_rank_curve: max_rank exceeds train size");
  const RetrievalIndex index(train_set, metric);
  std::vector<std::vector<double>> per_query(test_set.size());
  parallel_for(test_set.size(), [&](std::size_t q) {
    const auto ranked = index.rank_neighbors(test_set[q].input);
    for (std::size_t r = 0; r < max_rank; ++r)
      per_query[q].push_back(relative_l2(train_set[ranked.items[r].id].output, test_set[q].output));
  });
  return average_curve(per_query, max_rank, train_set.size());
}

RankCurve similarity_rank_curve_leave_one_out(const Dataset& train_set, std::size_t max_rank,
                                              SimilarityMetric metric) {
  DPHI_REQUIRE(train_set.size() >= 2, "similarity_rank_curve: need at least two samples");
  DPHI_REQUIRE(max_rank >= 1 && max_rank < train_set.size(),
               "similarity_rank_curve: max_rank must be below the dataset size when the query is excluded");
  const RetrievalIndex index(train_set, metric);
  std::vector<std::vector<double>> per_query(train_set.size());
  parallel_for(train_set.size(), [&](std::size_t q) {
    const auto& ranked = index.neighbors_of(q);
    for (std::size_t r = 0; r < max_rank; ++r)
      per_query[q].push_back(relative_l2(train_set[ranked.items[r].id].output, train_set[q].output));
  });
  return average_curve(per_query, max_rank, train_set.size() - 1);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  DPHI_REQUIRE(x.size() == y.size() && x.size() >= 2, "spearman: need two equal-length series of length >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("spearman: constant series");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<Point2> PcaBasis::project(std::span<const std::vector<double>> labels) const {
  std::vector<Point2> out;
  out.reserve(labels.size());
  for (const auto& l : labels) {
    DPHI_REQUIRE(l.size() == mean.size(), "PcaBasis::project: label dimension mismatch");
    Point2 p{0.0, 0.0};
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < l.size(); ++k) p[a] += (l[k] - mean[k]) * axes[a][k];
    out.push_back(p);
  }
  return out;
}

PcaBasis pca_project(std::span<const std::vector<double>> labels) {
  DPHI_REQUIRE(labels.size() >= 3, "pca_project: need at least three labels");
  const std::size_t n = labels.size(), d = labels.front().size();
  DPHI_REQUIRE(d >= 2, "pca_project: label dimension must be at least 2");
  PcaBasis basis;
  basis.mean.assign(d, 0.0);
  for (const auto& l : labels) {
    DPHI_REQUIRE(l.size() == d, "pca_project: labels differ in dimension");
    for (std::size_t k = 0; k < d; ++k) basis.mean[k] += l[k];
  }
  for (double& m : basis.mean) m /= static_cast<double>(n);
  RowMat x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = labels[i][k] - basis.mean[k];

  // Eigen-decompose whichever of the Gram (n x n) and covariance (d x d)
  // matrices is smaller; both share the nonzero spectrum.
  const bool gram = n <= d;
  const Eigen::MatrixXd m = gram ? Eigen::MatrixXd(x * x.transpose()) : Eigen::MatrixXd(x.transpose() * x);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  DPHI_REQUIRE(eig.info() == Eigen::Success, "pca_project: eigen-decomposition failed");
  const Eigen::Index top = m.rows() - 1;
  const double lead = std::max(eig.eigenvalues()(top), 0.0);
  std::size_t found = 0;
  for (std::size_t a = 0; a < 2; ++a) {
    const double lambda = eig.eigenvalues()(top - static_cast<Eigen::Index>(a));
    if (!(lambda > 1e-12 * lead) || lambda <= 0.0) break;
    Eigen::VectorXd axis = gram ? Eigen::VectorXd(x.transpose() * eig.eigenvectors().col(top - static_cast<Eigen::Index>(a)))
                                : Eigen::VectorXd(eig.eigenvectors().col(top - static_cast<Eigen::Index>(a)));
    axis.normalize();
    basis.axes[a].assign(axis.data(), axis.data() + d);
    ++found;
  }
  basis.rank_deficient = found < 2;
  // Complete the basis with standard vectors orthogonalized against it.
  for (std::size_t e = 0; found < 2 && e < d; ++e) {
    std::vector<double> v(d, 0.0);
    v[e] = 1.0;
    for (std::size_t a = 0; a < found; ++a) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += v[k] * basis.axes[a][k];
      for (std::size_t k = 0; k < d; ++k) v[k] -= dot * basis.axes[a][k];
    }
    double norm = 0.0;
    for (double c : v) norm += c * c;
    norm = std::sqrt(norm);
    if (norm < 0.5) continue;
    for (double& c : v) c /= norm;
    basis.axes[found++] = std::move(v);
  }
  for (auto& axis : basis.axes) {
    const auto big = std::max_element(axis.begin(), axis.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (*big < 0.0)
      for (double& c : axis) c = -c;
  }
  for (const auto& p : basis.project(labels))
    for (std::size_t a = 0; a < 2; ++a) basis.variance[a] += p[a] * p[a] / static_cast<double>(n);
  return basis;
}

double Ellipse::area() const { return std::numbers::pi * semi_axes[0] * semi_axes[1]; }

Ellipse LabelSet::std_ellipse() const { return {mean, stddev}; }

Ellipse LabelSet::range_ellipse() const {
  return {{0.5 * (min[0] + max[0]), 0.5 * (min[1] + max[1])}, {0.5 * (max[0] - min[0]), 0.5 * (max[1] - min[1])}};
}

LabelSet summarize(std::vector<Point2> points) {
  DPHI_REQUIRE(!points.empty(), "summarize: no points");
  LabelSet s;
  s.points = std::move(points);
  const double n = static_cast<double>(s.points.size());
  for (std::size_t a = 0; a < 2; ++a) {
    // Offsets from the first point, so identical points give exactly zero spread.
    const double origin = s.points.front()[a];
    double sum = 0.0;
    s.min[a] = s.max[a] = origin;
    for (const auto& p : s.points) {
      sum += p[a] - origin;
      s.min[a] = std::min(s.min[a], p[a]);
      s.max[a] = std::max(s.max[a], p[a]);
    }
    const double shift = sum / n;
    s.mean[a] = origin + shift;
    double sq = 0.0;
    for (const auto& p : s.points) sq += (p[a] - origin - shift) * (p[a] - origin - shift);
    s.stddev[a] = std::sqrt(sq / n);
  }
  return s;
}

LabelStudy label_distribution_study(const Dataset& train_set, std::span<const ResidualPair> residual_pairs,
                                    const Dataset& test_set, const RetrievalIndex& index) {
  DPHI_REQUIRE(residual_pairs.size() == train_set.size(), "label_distribution_study: one residual pair per sample");
  DPHI_REQUIRE(index.size() == train_set.size(), "label_distribution_study: index is not over the training set");
  DPHI_REQUIRE(!test_set.empty(), "label_distribution_study: empty test set");

  std::vector<std::vector<double>> train_u, test_u, train_r, test_r;
  for (const auto& s : train_set) train_u.push_back(flatten(s.output));
  for (const auto& p : residual_pairs) {
    DPHI_REQUIRE(p.target_residual.has_value(), "label_distribution_study: pair without a target residual");
    train_r.push_back(flatten(*p.target_residual));
  }
  for (const auto& s : test_set) {
    test_u.push_back(flatten(s.output));
    const auto hit = retrieve_inference(index, s.input);
    test_r.push_back(flatten(s.output - train_set[hit.id].output));
  }
  LabelStudy study;
  const auto fill = [](LabelDistribution& d, const auto& train, const auto& test) {
    d.basis = pca_project(train);
    d.train = summarize(d.basis.project(train));
    d.test = summarize(d.basis.project(test));
  };
  fill(study.direct, train_u, test_u);
  fill(study.residual, train_r, test_r);
  return study;
}

std::string rank_curve_csv(const RankCurve& curve) {
  std::string out = "rank,mean_distance,retrieval_size\n";
  for (std::size_t r = 0; r < curve.mean_distance.size(); ++r)
    out += std::to_string(r + 1) + "," + fmt(curve.mean_distance[r]) + "," + std::to_string(curve.retrieval_size) + "\n";
  return out;
}

RankCurve parse_rank_curve_csv(std::string_view text) {
  RankCurve curve;
  const auto rows = csv_body(text, "rank,mean_distance,retrieval_size", 3);
  for (std::size_t l = 0; l < rows.size(); ++l) {
    if (parse_index(rows[l][0], l + 1) != l + 1) csv_error("ranks must be consecutive from 1", l + 1);
    curve.mean_distance.push_back(parse_double(rows[l][1], l + 1));
    const std::size_t size = parse_index(rows[l][2], l + 1);
    if (l > 0 && size != curve.retrieval_size) csv_error("retrieval_size changes between rows", l + 1);
    curve.retrieval_size = size;
  }
  return curve;
}

std::vector<PointRow> point_rows(const LabelDistribution& d) {
  std::vector<PointRow> rows;
  for (const auto& [name, set] : {std::pair{"train", &d.train}, std::pair{"test", &d.test}})
    for (std::size_t i = 0; i < set->points.size(); ++i) rows.push_back({name, i, set->points[i][0], set->points[i][1]});
  return rows;
}

std::vector<StatRow> stat_rows(const LabelDistribution& d) {
  std::vector<StatRow> rows;
  for (const auto& [name, set] : {std::pair{"train", &d.train}, std::pair{"test", &d.test}})
    for (std::size_t a = 0; a < 2; ++a) {
      const std::string axis = a == 0 ? "pc1" : "pc2";
      rows.push_back({name, "mean", axis, set->mean[a]});
      rows.push_back({name, "std", axis, set->stddev[a]});
      rows.push_back({name, "min", axis, set->min[a]});
      rows.push_back({name, "max", axis, set->max[a]});
    }
  return rows;
}

std::string points_csv(std::span<const PointRow> rows) {
  std::string out = "set,point_index,pc1,pc2\n";
  for (const auto& r : rows) out += r.set + "," + std::to_string(r.point_index) + "," + fmt(r.pc1) + "," + fmt(r.pc2) + "\n";
  return out;
}

std::vector<PointRow> parse_points_csv(std::string_view text) {
  std::vector<PointRow> out;
  const auto rows = csv_body(text, "set,point_index,pc1,pc2", 4);
  for (std::size_t l = 0; l < rows.size(); ++l)
    out.push_back({std::string(rows[l][0]), parse_index(rows[l][1], l + 1), parse_double(rows[l][2], l + 1),
                   parse_double(rows[l][3], l + 1)});
  return out;
}

std::string stats_csv(std::span<const StatRow> rows) {
  std::string out = "set,stat,axis,value\n";
  for (const auto& r : rows) out += r.set + "," + r.stat + "," + r.axis + "," + fmt(r.value) + "\n";
  return out;
}

std::vector<StatRow> parse_stats_csv(std::string_view text) {
  std::vector<StatRow> out;
  const auto rows = csv_body(text, "set,stat,axis,value", 4);
  for (std::size_t l = 0; l < rows.size(); ++l)
    out.push_back({std::string(rows[l][0]), std::string(rows[l][1]), std::string(rows[l][2]),
                   parse_double(rows[l][3], l + 1)});
  return out;
}

namespace {

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double kW = 640, kH = 480, kPad = 50;
  double sx(double x) const { return kPad + (x - x0) / (x1 - x0) * (kW - 2 * kPad); }
  double sy(double y) const { return kH - kPad - (y - y0) / (y1 - y0) * (kH - 2 * kPad); }
};

Frame padded_frame(double x0, double x1, double y0, double y1) {
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double mx = 0.05 * (x1 - x0), my = 0.05 * (y1 - y0);
  return {x0 - mx, x1 + mx, y0 - my, y1 + my};
}

std::string svg_open(std::string_view title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\">\n"
         "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n"
         "<text x=\"320\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         std::string(title) + "</text>\n";
}

std::string axis_labels(const Frame& f, std::string_view xl, std::string_view yl) {
  return "<line x1=\"50\" y1=\"430\" x2=\"590\" y2=\"430\" stroke=\"black\"/>\n"
         "<line x1=\"50\" y1=\"50\" x2=\"50\" y2=\"430\" stroke=\"black\"/>\n"
         "<text x=\"320\" y=\"465\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         std::string(xl) + " [" + fmt(f.x0) + ", " + fmt(f.x1) + "]</text>\n" +
         "<text x=\"15\" y=\"240\" transform=\"rotate(-90 15 240)\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">" +
         std::string(yl) + "</text>\n";
}

}  // namespace

std::string rank_curve_svg(const RankCurve& curve) {
  DPHI_REQUIRE(!curve.mean_distance.empty(), "rank_curve_svg: empty curve");
  const auto [lo, hi] = std::minmax_element(curve.mean_distance.begin(), curve.mean_distance.end());
  const Frame f = padded_frame(1.0, static_cast<double>(curve.mean_distance.size()), *lo, *hi);
  std::string out = svg_open("Output distance by similarity rank") + axis_labels(f, "rank", "mean relative L2");
  out += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t r = 0; r < curve.mean_distance.size(); ++r)
    out += fmt(f.sx(static_cast<double>(r + 1))) + "," + fmt(f.sy(curve.mean_distance[r])) + " ";
  return out + "\"/>\n</svg>\n";
}

std::string label_distribution_svg(const LabelDistribution& d, std::string_view title) {
  double x0 = std::min(d.train.min[0], d.test.min[0]), x1 = std::max(d.train.max[0], d.test.max[0]);
  double y0 = std::min(d.train.min[1], d.test.min[1]), y1 = std::max(d.train.max[1], d.test.max[1]);
  const Frame f = padded_frame(x0, x1, y0, y1);
  std::string out = svg_open(title) + axis_labels(f, "pc1", "pc2");
  const auto draw = [&](const LabelSet& s, const char* colour) {
    for (const auto& p : s.points)
      out += "<circle cx=\"" + fmt(f.sx(p[0])) + "\" cy=\"" + fmt(f.sy(p[1])) + "\" r=\"2\" fill=\"" + colour +
             "\" fill-opacity=\"0.5\"/>\n";
    for (const auto& [e, dash] : {std::pair{s.std_ellipse(), ""}, std::pair{s.range_ellipse(), " stroke-dasharray=\"4 3\""}}) {
      const double rx = e.semi_axes[0] / (f.x1 - f.x0) * (Frame::kW - 2 * Frame::kPad);
      const double ry = e.semi_axes[1] / (f.y1 - f.y0) * (Frame::kH - 2 * Frame::kPad);
      out += "<ellipse cx=\"" + fmt(f.sx(e.center[0])) + "\" cy=\"" + fmt(f.sy(e.center[1])) + "\" rx=\"" + fmt(rx) +
             "\" ry=\"" + fmt(ry) + "\" fill=\"none\" stroke=\"" + colour + "\"" + dash + "/>\n";
    }
  };
  draw(d.train, "steelblue");
  draw(d.test, "darkorange");
  return out + "</svg>\n";
}

}  // namespace dphi
