#include "ft/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "ft/binio.hpp"
#include "ft/ops.hpp"
#include "ft/rng.hpp"

namespace ft {

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Draws minibatch indices as sequential epochs over seed-shuffled
// permutations; batches may straddle an epoch boundary.
class BatchCursor {
 public:
  BatchCursor(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) { refill(); }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> idx;
    idx.reserve(batch);
    while (idx.size() < batch) {
      if (pos_ == n_) refill();
      idx.push_back(perm_[pos_++]);
    }
    return idx;
  }

 private:
  void refill() {
    perm_ = rng_.permutation(n_);
    pos_ = 0;
  }
  std::size_t n_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

struct Batch {
  Tensor depth;
  Tensor edge;
  Tensor target;
};

Batch make_batch(const std::vector<Sample>& data,
                 const std::vector<std::size_t>& idx, bool want_edge,
                 int out_dim) {
  const int b = static_cast<int>(idx.size());
  Batch out;
  out.depth = Tensor({b, 1, kCropSize, kCropSize});
  if (want_edge) out.edge = Tensor({b, 1, kCropSize, kCropSize});
  out.target = Tensor({b, out_dim});
  const std::size_t plane = static_cast<std::size_t>(kCropSize) * kCropSize;
  for (int i = 0; i < b; ++i) {
    const Sample& s = data[idx[static_cast<std::size_t>(i)]];
    std::copy(s.depth.data(), s.depth.data() + plane,
              out.depth.data() + static_cast<std::size_t>(i) * plane);
    if (want_edge) {
      if (!s.has_edge)
        throw std::invalid_argument(
            "dataset sample " + std::to_string(s.meta.frame_id) +
            " has no edge raster but the architecture consumes edges");
      std::copy(s.edge.data(), s.edge.data() + plane,
                out.edge.data() + static_cast<std::size_t>(i) * plane);
    }
    auto t = normalize_joints(joints_from_mm(s.target_mm), s.meta);
    for (int k = 0; k < out_dim; ++k)
      out.target.at(i, k) = t[static_cast<std::size_t>(k)];
  }
  return out;
}

}  // namespace

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << "arch: " << arch << "\n"
     << "batch_size: " << batch_size << "\n"
     << "lr: " << lr << "\n"
     << "momentum: " << momentum << "\n"
     << "max_iters: " << max_iters << "\n"
     << "seed: " << seed << "\n"
     << "dataset: " << dataset << "\n"
     << "checkpoint_every: " << checkpoint_every << "\n"
     << "log_every: " << log_every << "\n"
     << "lr_decay: " << lr_decay << "\n"
     << "lr_step: " << lr_step << "\n"
     << "tie_streams: " << (tie_streams ? "true" : "false") << "\n";
  return os.str();
}

std::uint64_t TrainConfig::config_hash() const { return binio::fnv1a(describe()); }

Checkpoint train(const TrainConfig& cfg, const std::vector<Sample>& data,
                 std::ostream* progress) {
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.lr <= 0.f && cfg.lr != 0.f)
    throw std::invalid_argument("train: lr must be non-negative");
  if (cfg.max_iters < 1) throw std::invalid_argument("train: max_iters must be >= 1");

  BuildOptions opt;
  opt.seed = cfg.seed;
  opt.tie_streams = cfg.tie_streams;
  NetworkGraph net = NetworkGraph::build(arch_from_string(cfg.arch), opt);
  const int out_dim = net.output_dim();
  const bool want_edge = net.uses_edge();

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    log.open(cfg.log_path);
    if (!log) throw std::runtime_error("cannot open loss log: " + cfg.log_path);
    log << "iteration,loss,lr\n";
  }

  BatchCursor cursor(data.size(), cfg.seed);
  float lr = cfg.lr;
  for (long it = 1; it <= cfg.max_iters; ++it) {
    if (cfg.lr_step > 0 && it > 1 && (it - 1) % cfg.lr_step == 0)
      lr *= cfg.lr_decay;
    Batch b = make_batch(data, cursor.next(static_cast<std::size_t>(cfg.batch_size)),
                         want_edge, out_dim);
    net.zero_grads();
    Tensor pred = net.forward(b.depth, want_edge ? &b.edge : nullptr);
    auto loss = euclidean_loss(pred, b.target);
    if (!std::isfinite(loss.loss))
      throw std::runtime_error("train: non-finite loss at iteration " +
                               std::to_string(it) + " (lr=" + std::to_string(lr) + ")");
    net.backward(loss.grad);
    sgd_step(net.parameters(), lr, cfg.momentum);

    bool log_now = cfg.log_every > 0 && (it % cfg.log_every == 0 || it == 1);
    if (log_now) {
      if (log.is_open())
        log << it << "," << std::setprecision(9) << loss.loss << "," << lr << "\n";
      if (progress)
        *progress << "iter " << it << " loss " << loss.loss << " lr " << lr << "\n";
    }
    if (cfg.checkpoint_every > 0 && !cfg.out.empty() &&
        it % cfg.checkpoint_every == 0 && it != cfg.max_iters) {
      save_checkpoint(cfg.out + ".iter" + std::to_string(it),
                      Checkpoint::from_network(net, static_cast<std::uint64_t>(it),
                                               cfg.seed, cfg.config_hash()));
    }
  }

  Checkpoint c = Checkpoint::from_network(
      net, static_cast<std::uint64_t>(cfg.max_iters), cfg.seed, cfg.config_hash());
  if (!cfg.out.empty()) save_checkpoint(cfg.out, c);
  return c;
}

Checkpoint train(const TrainConfig& cfg, std::ostream* progress) {
  return train(cfg, read_dataset(cfg.dataset), progress);
}

EvalReport evaluate(NetworkGraph& net, const std::vector<Sample>& data,
                    const EvalOptions& opt) {
  EvalReport r;
  r.method = net.arch_id();
  r.mp_tau = opt.mp_tau;
  const bool want_edge = net.uses_edge();
  const float* unused = nullptr;
  (void)unused;

  std::vector<double> times;
  times.reserve(data.size());
  double err_sum = 0;
  std::size_t err_count = 0;
  std::vector<std::size_t> pair_hits(kMpCurveMax, 0);
  std::vector<std::size_t> frame_hits(kMpCurveMax, 0);
  std::size_t mp_pair_hits = 0, mp_frame_hits = 0;

  for (const Sample& s : data) {
    if (want_edge && !s.has_edge)
      throw std::invalid_argument("evaluate: architecture '" + net.arch_id() +
                                  "' requires edge rasters the dataset lacks");
    double t0 = now_ms();
    Tensor pred = net.forward(s.depth, want_edge ? &s.edge : nullptr);
    times.push_back(now_ms() - t0);

    std::vector<float> v(pred.data(), pred.data() + pred.size());
    JointSet joints = denormalize_joints(v, s.meta);
    std::array<double, 5> errs{};
    for (int k = 0; k < 5; ++k) {
      double d2 = 0;
      for (int a = 0; a < 3; ++a) {
        double d = joints.positions[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)] -
                   s.target_mm[k * 3 + a];
        d2 += d * d;
      }
      errs[static_cast<std::size_t>(k)] = std::sqrt(d2);
    }
    r.fingertip_errors_mm.push_back(errs);

    double frame_worst = 0;
    for (double e : errs) {
      frame_worst = std::max(frame_worst, e);
      ++r.pairs;
      if (opt.discard_over_mm > 0 && e > opt.discard_over_mm) {
        ++r.discarded;
      } else {
        err_sum += e;
        ++err_count;
      }
      for (int tau = 1; tau <= kMpCurveMax; ++tau)
        if (e < tau) ++pair_hits[static_cast<std::size_t>(tau - 1)];
      if (e < opt.mp_tau) ++mp_pair_hits;
    }
    for (int tau = 1; tau <= kMpCurveMax; ++tau)
      if (frame_worst < tau) ++frame_hits[static_cast<std::size_t>(tau - 1)];
    if (frame_worst < opt.mp_tau) ++mp_frame_hits;
  }

  r.err_f = err_count ? err_sum / static_cast<double>(err_count) : 0;
  const double np = static_cast<double>(r.pairs);
  const double nf = static_cast<double>(data.size());
  for (int i = 0; i < kMpCurveMax; ++i) {
    r.mp_curve[static_cast<std::size_t>(i)] =
        np > 0 ? pair_hits[static_cast<std::size_t>(i)] / np : 0;
    r.mp_frame_curve[static_cast<std::size_t>(i)] =
        nf > 0 ? frame_hits[static_cast<std::size_t>(i)] / nf : 0;
  }
  r.mp = np > 0 ? mp_pair_hits / np : 0;
  r.mp_frame = nf > 0 ? mp_frame_hits / nf : 0;

  if (!times.empty()) {
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0;
    for (double t : sorted) sum += t;
    r.mean_ms = sum / static_cast<double>(sorted.size());
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(sorted.size())));
    r.p95_ms = sorted[std::min(sorted.size() - 1, idx == 0 ? 0 : idx - 1)];
  }
  return r;
}

BenchResult bench(NetworkGraph& net, const Sample& sample, int n) {
  if (n < 10) throw std::invalid_argument("bench: n must be >= 10");
  const bool want_edge = net.uses_edge();
  auto run_once = [&]() {
    if (want_edge) {
      Tensor edge = extract_edges(sample.depth);
      net.forward(sample.depth, &edge);
    } else {
      net.forward(sample.depth);
    }
  };
  for (int i = 0; i < 3; ++i) run_once();
  std::vector<double> times(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double t0 = now_ms();
    run_once();
    times[static_cast<std::size_t>(i)] = now_ms() - t0;
  }
  std::sort(times.begin(), times.end());
  BenchResult r;
  r.runs = n;
  double sum = 0;
  for (double t : times) sum += t;
  r.mean_ms = sum / static_cast<double>(n);
  r.min_ms = times.front();
  r.max_ms = times.back();
  std::size_t idx = static_cast<std::size_t>(std::ceil(0.95 * n));
  r.p95_ms = times[std::min(times.size() - 1, idx == 0 ? 0 : idx - 1)];
  return r;
}

// --- report files ------------------------------------------------------------

namespace {
constexpr const char* kReportHeader =
    "method,mp_tau_mm,mp,mp_frame,err_f_mm,discarded,pairs,mean_ms,p95_ms";
}

void write_report_csv(const std::string& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << kReportHeader << "\n";
  os << std::setprecision(17) << r.method << "," << r.mp_tau << "," << r.mp
     << "," << r.mp_frame << "," << r.err_f << "," << r.discarded << ","
     << r.pairs << "," << r.mean_ms << "," << r.p95_ms << "\n";
}

void write_curve_csv(const std::string& path, const EvalReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "tau_mm,mp,mp_frame\n" << std::setprecision(17);
  for (int tau = 1; tau <= kMpCurveMax; ++tau)
    os << tau << "," << r.mp_curve[static_cast<std::size_t>(tau - 1)] << ","
       << r.mp_frame_curve[static_cast<std::size_t>(tau - 1)] << "\n";
}

EvalReport read_report_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open report: " + path);
  std::string header, line;
  std::getline(is, header);
  if (header != kReportHeader)
    throw std::runtime_error("unexpected report header in " + path);
  if (!std::getline(is, line))
    throw std::runtime_error("report has no data row: " + path);
  std::istringstream ls(line);
  EvalReport r;
  std::string field;
  auto next = [&]() {
    if (!std::getline(ls, field, ','))
      throw std::runtime_error("malformed report row in " + path);
    return field;
  };
  r.method = next();
  r.mp_tau = std::stod(next());
  r.mp = std::stod(next());
  r.mp_frame = std::stod(next());
  r.err_f = std::stod(next());
  r.discarded = std::stoul(next());
  r.pairs = std::stoul(next());
  r.mean_ms = std::stod(next());
  r.p95_ms = std::stod(next());
  return r;
}

namespace {

std::vector<EvalReport> maybe_sorted(std::vector<EvalReport> reports,
                                     bool sort_by_err) {
  if (sort_by_err)
    std::stable_sort(reports.begin(), reports.end(),
                     [](const EvalReport& a, const EvalReport& b) {
                       return a.err_f < b.err_f;
                     });
  return reports;
}

}  // namespace

std::string compare_table_text(std::vector<EvalReport> reports,
                               bool sort_by_err) {
  reports = maybe_sorted(std::move(reports), sort_by_err);
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.method.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "Method"
     << std::right << std::setw(8) << "mP" << std::setw(12) << "err_f/mm"
     << std::setw(10) << "time/ms" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.method
       << std::right << std::fixed << std::setprecision(3) << std::setw(8)
       << r.mp << std::setprecision(2) << std::setw(12) << r.err_f
       << std::setw(10) << r.mean_ms << "\n";
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

std::string compare_table_csv(std::vector<EvalReport> reports,
                              bool sort_by_err) {
  reports = maybe_sorted(std::move(reports), sort_by_err);
  std::ostringstream os;
  os << "method,mp,err_f_mm,mean_ms\n" << std::setprecision(17);
  for (const auto& r : reports)
    os << r.method << "," << r.mp << "," << r.err_f << "," << r.mean_ms << "\n";
  return os.str();
}

}  // namespace ft
