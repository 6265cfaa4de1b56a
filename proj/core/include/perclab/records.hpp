#pragma once
// Result records and their serialized forms. Every estimator returns an
// EstimateRecord; the CSV columns are fixed across the whole tool:
//   event,d,s,L,N,p,q,mean,stderr,n,seed
// with N = -1 whenever the geometry has no slab half-thickness.

#include <cmath>
#include <string>
#include <vector>

#include "perclab/common.hpp"

namespace perclab {

struct EstimateRecord {
  std::string event;
  int d = 0, s = 0;
  i64 L = 0;    // primary linear size of the run (per-event meaning)
  i64 N = -1;   // slab half-thickness; -1 when not applicable
  double p = 0.0, q = 0.0;
  double mean = 0.0;
  double se = 0.0;  // standard error of `mean` (the "stderr" column)
  i64 n = 0;        // number of samples
  u64 seed = 0;

  double ci_lo(double z = 1.96) const { return mean - z * se; }
  double ci_hi(double z = 1.96) const { return mean + z * se; }
};

// Fixed CSV column list (header line, no newline).
std::string csv_header();
// One CSV row (no newline).
std::string to_csv_row(const EstimateRecord& r);
// Flat JSON object.
std::string to_json(const EstimateRecord& r);

// Minimal JSON string escaping (quotes, backslash, control characters).
std::string json_escape(const std::string& s);

// Streaming mean / standard-error accumulator. Partial sums merge
// associatively; merging in a fixed order makes the result reproducible
// bit-for-bit regardless of how the work was distributed. Indicator-valued
// samples accumulate exactly (integer-valued doubles below 2^53).
struct Accumulator {
  double sum = 0.0;
  double sumsq = 0.0;
  i64 n = 0;

  void add(double x) {
    sum += x;
    sumsq += x * x;
    ++n;
  }
  void merge(const Accumulator& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    n += o.n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
  // Sample variance (unbiased) clamped at zero against rounding.
  double variance() const {
    if (n < 2) return 0.0;
    double m = mean();
    double v = (sumsq - n * m * m) / (n - 1);
    return v > 0.0 ? v : 0.0;
  }
  double stderr_of_mean() const {
    return n > 0 ? std::sqrt(variance() / n) : 0.0;
  }
};

}  // namespace perclab
