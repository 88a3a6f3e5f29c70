#ifndef IUP_METRICS_HPP
#define IUP_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iup/so3.hpp"

namespace iup {

template <typename S>
struct PairError {
  S rot_err = S(0);    // degrees
  S trans_err = S(0);  // degrees
  S pose_err = S(0);   // max of the two
  S overlap = S(0);
};

template <typename S>
S rad_to_deg(S r) {
  return r * S(180) / S(M_PI);
}

template <typename S>
S rotation_error_deg(const Mat3<S>& r_pred, const Mat3<S>& r_gt) {
  return rad_to_deg(geodesic_angle(r_pred, r_gt));
}

/// Angle between translation directions. A zero-norm prediction counts as
/// 90 degrees; a zero-norm ground truth (pure rotation) as 0.
template <typename S>
S translation_error_deg(const Vec3<S>& t_pred, const Vec3<S>& t_gt) {
  const S gn = t_gt.norm();
  if (gn == S(0)) return S(0);
  const S pn = t_pred.norm();
  if (pn < S(1e-12)) return S(90);
  const S c = clamp_acos_arg(t_pred.dot(t_gt) / (pn * gn));
  return rad_to_deg(std::acos(c));
}

template <typename S>
PairError<S> make_pair_error(const Mat3<S>& r_pred, const Mat3<S>& r_gt, const Vec3<S>& t_pred,
                             const Vec3<S>& t_gt, S overlap) {
  PairError<S> e;
  e.rot_err = rotation_error_deg(r_pred, r_gt);
  e.trans_err = translation_error_deg(t_pred, t_gt);
  e.pose_err = std::max(e.rot_err, e.trans_err);
  e.overlap = overlap;
  return e;
}

/// AUC@tau = (1/tau) * integral_0^tau recall(t) dt with recall the fraction
/// of errors <= t, evaluated exactly from the sorted step function: each
/// error e < tau contributes (tau - e)/(n*tau).
template <typename S>
std::map<S, S> pose_auc(std::vector<S> errors, const std::vector<S>& thresholds = {S(5), S(10),
                                                                                   S(20)}) {
  if (errors.empty()) throw std::invalid_argument("pose_auc: empty error list");
  std::sort(errors.begin(), errors.end());
  const S n = S(errors.size());
  std::map<S, S> out;
  for (S tau : thresholds) {
    S area = S(0);
    for (S e : errors) {
      if (e >= tau) break;
      area += (tau - std::max(e, S(0))) / tau;
    }
    out[tau] = area / n;
  }
  return out;
}

struct BucketRange {
  double lo, hi;
  bool closed_hi;
};

inline const std::vector<BucketRange>& overlap_buckets() {
  static const std::vector<BucketRange> b = {
      {0.0, 0.1, false}, {0.1, 0.4, false}, {0.4, 0.7, false}, {0.7, 1.0, true}};
  return b;
}

template <typename S>
struct BucketRow {
  BucketRange range{};
  int count = 0;
  S auc10 = S(0);  // valid only when count > 0
};

template <typename S>
struct BucketReport {
  std::vector<BucketRow<S>> rows;
  int total = 0;
  S overall_auc10 = S(0);
};

/// AUC@10 per overlap bucket (left-closed, last bucket closed) plus overall.
template <typename S>
BucketReport<S> bucket_report(const std::vector<PairError<S>>& errors) {
  BucketReport<S> rep;
  std::vector<std::vector<S>> per_bucket(overlap_buckets().size());
  std::vector<S> all;
  for (const auto& e : errors) {
    all.push_back(e.pose_err);
    const double ov = static_cast<double>(e.overlap);
    for (size_t i = 0; i < overlap_buckets().size(); ++i) {
      const auto& b = overlap_buckets()[i];
      if (ov >= b.lo && (ov < b.hi || (b.closed_hi && ov <= b.hi))) {
        per_bucket[i].push_back(e.pose_err);
        break;
      }
    }
  }
  for (size_t i = 0; i < per_bucket.size(); ++i) {
    BucketRow<S> row;
    row.range = overlap_buckets()[i];
    row.count = static_cast<int>(per_bucket[i].size());
    if (row.count > 0) row.auc10 = pose_auc(per_bucket[i], {S(10)}).at(S(10));
    rep.rows.push_back(row);
  }
  rep.total = static_cast<int>(all.size());
  if (rep.total > 0) rep.overall_auc10 = pose_auc(all, {S(10)}).at(S(10));
  return rep;
}

template <typename S>
S median(std::vector<S> v) {
  if (v.empty()) throw std::invalid_argument("median: empty list");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / S(2);
}

template <typename S>
std::string format_bucket_table(const BucketReport<S>& rep) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof(line), "%-12s %6s %8s\n", "overlap", "pairs", "AUC@10");
  os << line;
  for (const auto& row : rep.rows) {
    char rng[32];
    std::snprintf(rng, sizeof(rng), "[%.1f,%.1f%c", row.range.lo, row.range.hi,
                  row.range.closed_hi ? ']' : ')');
    if (row.count > 0)
      std::snprintf(line, sizeof(line), "%-12s %6d %8.4f\n", rng, row.count,
                    static_cast<double>(row.auc10));
    else
      std::snprintf(line, sizeof(line), "%-12s %6d %8s\n", rng, row.count, "n/a");
    os << line;
  }
  std::snprintf(line, sizeof(line), "%-12s %6d %8.4f\n", "overall", rep.total,
                static_cast<double>(rep.overall_auc10));
  os << line;
  return os.str();
}

}  // namespace iup

#endif
