#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ft/checkpoint.hpp"
#include "ft/data.hpp"
#include "ft/net.hpp"

namespace ft {

struct TrainConfig {
  std::string arch = "single-deep";
  int batch_size = 196;
  float lr = 0.01f;
  float momentum = 0.9f;
  long max_iters = 400000;
  std::uint64_t seed = 1;
  std::string dataset;
  long checkpoint_every = 0;  // 0 = only the final checkpoint
  long log_every = 100;
  std::string out;       // final checkpoint path; empty = in-memory only
  std::string log_path;  // loss log CSV; empty = no log
  float lr_decay = 1.0f;  // step decay factor; 1.0 = constant lr
  long lr_step = 0;       // iterations between decays; 0 = never
  bool tie_streams = true;

  std::string describe() const;      // resolved config, one line per field
  std::uint64_t config_hash() const;
};

// Deterministic minibatch SGD: sequential epochs over a seed-shuffled order,
// forward -> Euclidean loss -> backward -> momentum step.
Checkpoint train(const TrainConfig& cfg, const std::vector<Sample>& data,
                 std::ostream* progress = nullptr);
Checkpoint train(const TrainConfig& cfg, std::ostream* progress = nullptr);

struct EvalOptions {
  double discard_over_mm = 0;  // 0 = keep everything
  double mp_tau = 10.0;        // scalar mP operating threshold, mm
};

inline constexpr int kMpCurveMax = 50;  // mP(tau) sampled at 1..50 mm

struct EvalReport {
  std::string method;
  std::vector<std::array<double, 5>> fingertip_errors_mm;  // per frame
  double err_f = 0;
  std::size_t discarded = 0;
  std::size_t pairs = 0;
  // Two reductions of the precision curve: per (frame,fingertip) pair and
  // per frame (all five fingertips within tau).
  std::array<double, kMpCurveMax> mp_curve{};
  std::array<double, kMpCurveMax> mp_frame_curve{};
  double mp = 0;
  double mp_frame = 0;
  double mp_tau = 10.0;
  double mean_ms = 0;
  double p95_ms = 0;
};

EvalReport evaluate(NetworkGraph& net, const std::vector<Sample>& data,
                    const EvalOptions& opt = {});

struct BenchResult {
  double mean_ms = 0;
  double p95_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
  int runs = 0;
};

// Wall-clock per-image forward time (edge extraction included when the
// architecture consumes edges); 3 warmup runs, then n timed runs.
BenchResult bench(NetworkGraph& net, const Sample& sample, int n);

// --- report files ------------------------------------------------------------

void write_report_csv(const std::string& path, const EvalReport& r);
void write_curve_csv(const std::string& path, const EvalReport& r);
EvalReport read_report_csv(const std::string& path);

// Aligned text table (method, mP, err_f/mm, time/ms), one row per report.
std::string compare_table_text(std::vector<EvalReport> reports,
                               bool sort_by_err = false);
std::string compare_table_csv(std::vector<EvalReport> reports,
                              bool sort_by_err = false);

}  // namespace ft
