// ftnet: synthesize data, extract edges, train, evaluate, gradient-check and
// benchmark the fingertip regression networks.

#include <CLI11.hpp>
#include <cstdio>
#include <iomanip>
#include <iostream>

#include "ft/checkpoint.hpp"
#include "ft/data.hpp"
#include "ft/edges.hpp"
#include "ft/gradcheck.hpp"
#include "ft/net.hpp"
#include "ft/train.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

int g_threads = 1;

void apply_threads() { openblas_set_num_threads(g_threads); }

std::string arch_help() {
  std::string s = "architecture: ";
  for (const auto& [k, v] : ft::arch_names()) s += v + " | ";
  s.resize(s.size() - 3);
  return s;
}

struct SynthArgs {
  int n = 64;
  std::uint64_t seed = 7;
  std::string out;
  ft::SynthConfig cfg;
};

int run_synth(const SynthArgs& a) {
  std::cerr << "synth: n=" << a.n << " seed=" << a.seed
            << " cube_size=" << a.cfg.cube_size
            << " frame_size=" << a.cfg.frame_size
            << " with_edges=" << (a.cfg.with_edges ? "true" : "false")
            << " edge_method=" << a.cfg.edge.method << " out=" << a.out << "\n";
  ft::synth_generate(a.seed, a.n, a.cfg, a.out);
  std::cout << "wrote " << a.n << " samples to " << a.out << "\n";
  return 0;
}

struct EdgesArgs {
  std::string in, out;
  ft::EdgeConfig cfg;
};

int run_edges(const EdgesArgs& a) {
  std::cerr << "edges: in=" << a.in << " out=" << a.out
            << " method=" << a.cfg.method << " k=" << a.cfg.k << "\n";
  auto samples = ft::read_dataset(a.in);
  for (auto& s : samples) {
    s.edge = ft::extract_edges(s.depth, a.cfg);
    s.has_edge = true;
  }
  ft::write_dataset(a.out, samples);
  std::cout << "wrote " << samples.size() << " samples with '" << a.cfg.method
            << "' edges to " << a.out << "\n";
  return 0;
}

int run_train(const ft::TrainConfig& cfg) {
  std::cerr << "train:\n" << cfg.describe();
  ft::train(cfg, &std::cerr);
  std::cout << "wrote checkpoint " << cfg.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, report, curve;
  double discard_over_mm = 0;
  double mp_tau = 10.0;
};

int run_eval(const EvalArgs& a) {
  std::cerr << "eval: checkpoint=" << a.checkpoint << " data=" << a.data
            << " discard_over_mm=" << a.discard_over_mm
            << " mp_tau=" << a.mp_tau << "\n";
  ft::NetworkGraph net = ft::load_checkpoint(a.checkpoint).to_network();
  auto samples = ft::read_dataset(a.data);
  ft::EvalOptions opt;
  opt.discard_over_mm = a.discard_over_mm;
  opt.mp_tau = a.mp_tau;
  ft::EvalReport r = ft::evaluate(net, samples, opt);
  std::cout << "method " << r.method << "\n"
            << std::fixed << std::setprecision(3) << "mP(" << r.mp_tau
            << "mm) " << r.mp << " (per-frame " << r.mp_frame << ")\n"
            << "err_f " << r.err_f << " mm over " << r.pairs << " pairs, "
            << r.discarded << " discarded\n"
            << "time " << r.mean_ms << " ms/image mean, " << r.p95_ms
            << " p95\n";
  if (!a.report.empty()) ft::write_report_csv(a.report, r);
  if (!a.curve.empty()) ft::write_curve_csv(a.curve, r);
  return 0;
}

struct GradcheckArgs {
  bool all = false;
  bool network = false;
  std::string layer;
  std::uint64_t seed = 1;
  double eps = 1e-4;
  double tol = 1e-6;
  double net_tol = 1e-4;
};

int run_gradcheck(const GradcheckArgs& a) {
  std::cerr << "gradcheck: seed=" << a.seed << " eps=" << a.eps
            << " tol=" << a.tol << " net_tol=" << a.net_tol << "\n";
  bool ok = true;
  auto report = [&](const std::string& name, double err, double tol) {
    bool pass = err < tol;
    ok = ok && pass;
    std::cout << std::left << std::setw(20) << name << std::scientific
              << std::setprecision(3) << err << (pass ? "  ok" : "  FAIL")
              << "\n";
  };
  if (a.all || !a.layer.empty()) {
    if (a.all)
      for (const auto& r : ft::grad_check_all(a.seed, a.eps))
        report(r.layer, r.max_rel_err, a.tol);
    else
      report(a.layer, ft::grad_check_layer(a.layer, a.seed, a.eps), a.tol);
  }
  if (a.network || a.all)
    report("network-e2e", ft::grad_check_network(a.seed, 20, a.eps), a.net_tol);
  return ok ? 0 : 2;
}

struct BenchArgs {
  std::string checkpoint, arch;
  int n = 100;
  std::uint64_t seed = 7;
};

int run_bench(const BenchArgs& a) {
  std::cerr << "bench: n=" << a.n << " seed=" << a.seed << " "
            << (a.checkpoint.empty() ? "arch=" + a.arch
                                     : "checkpoint=" + a.checkpoint)
            << "\n";
  ft::NetworkGraph net =
      a.checkpoint.empty()
          ? ft::NetworkGraph::build(ft::arch_from_string(a.arch),
                                    {.seed = a.seed})
          : ft::load_checkpoint(a.checkpoint).to_network();
  ft::Sample sample = ft::synth_samples(a.seed, 1)[0];
  ft::BenchResult r = ft::bench(net, sample, a.n);
  std::cout << std::fixed << std::setprecision(3) << net.arch_id() << " "
            << r.mean_ms << " ms/image mean, " << r.p95_ms << " p95, "
            << r.min_ms << " min, " << r.max_ms << " max over " << r.runs
            << " runs\n";
  return 0;
}

struct CompareArgs {
  std::vector<std::string> reports;
  std::string csv;
  bool sort = false;
};

int run_compare(const CompareArgs& a) {
  std::cerr << "compare: " << a.reports.size() << " report(s), sort="
            << (a.sort ? "true" : "false") << "\n";
  std::vector<ft::EvalReport> rs;
  for (const auto& p : a.reports) rs.push_back(ft::read_report_csv(p));
  std::cout << ft::compare_table_text(rs, a.sort);
  if (!a.csv.empty()) {
    std::ofstream os(a.csv);
    if (!os) throw std::runtime_error("cannot open for write: " + a.csv);
    os << ft::compare_table_csv(rs, a.sort);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fingertip regression toolkit"};
  app.require_subcommand(1);
  app.add_option("--threads", g_threads,
                 "BLAS threads (1 = deterministic reference)")
      ->default_val(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic FTDS dataset");
  synth->add_option("--n", sa.n, "sample count")->default_val(64);
  synth->add_option("--seed", sa.seed, "generator seed")->default_val(7);
  synth->add_option("--out", sa.out, "output FTDS path")->required();
  synth->add_option("--cube-size", sa.cfg.cube_size, "crop cube (mm)")
      ->default_val(300.f);
  synth->add_option("--frame-size", sa.cfg.frame_size, "rendered frame (px)")
      ->default_val(160);
  synth->add_option("--mm-per-px", sa.cfg.mm_per_px, "frame pixel pitch (mm)")
      ->default_val(2.5f);
  synth->add_flag("--no-edges", [&sa](std::int64_t) { sa.cfg.with_edges = false; },
                  "skip edge rasters");
  synth->add_option("--edge-method", sa.cfg.edge.method, "edge extractor")
      ->default_val("gradient");
  synth->add_option("--edge-k", sa.cfg.edge.k, "edge saturation constant")
      ->default_val(0.5f);

  EdgesArgs ea;
  auto* edges =
      app.add_subcommand("edges", "recompute edge rasters of a dataset");
  edges->add_option("--in", ea.in, "input FTDS path")->required();
  edges->add_option("--out", ea.out, "output FTDS path")->required();
  edges->add_option("--method", ea.cfg.method, "edge extractor")
      ->default_val("gradient");
  edges->add_option("--k", ea.cfg.k, "edge saturation constant")
      ->default_val(0.5f);

  ft::TrainConfig tc;
  auto* train = app.add_subcommand("train", "train a network");
  train->add_option("--arch", tc.arch, arch_help())->default_val("single-deep");
  train->add_option("--data", tc.dataset, "training FTDS path")->required();
  train->add_option("--iters", tc.max_iters, "iterations")->default_val(400000);
  train->add_option("--batch-size", tc.batch_size, "minibatch size")
      ->default_val(196);
  train->add_option("--lr", tc.lr, "learning rate")->default_val(0.01f);
  train->add_option("--momentum", tc.momentum, "SGD momentum")->default_val(0.9f);
  train->add_option("--seed", tc.seed, "init/shuffle seed")->default_val(1);
  train->add_option("--out", tc.out, "output FTCK path")->required();
  train->add_option("--log", tc.log_path, "loss log CSV path");
  train->add_option("--log-every", tc.log_every, "loss log cadence")
      ->default_val(100);
  train->add_option("--checkpoint-every", tc.checkpoint_every,
                    "intermediate checkpoint cadence (0 = off)")
      ->default_val(0);
  train->add_option("--lr-decay", tc.lr_decay, "step decay factor")
      ->default_val(1.0f);
  train->add_option("--lr-step", tc.lr_step, "iterations between decays (0 = off)")
      ->default_val(0);
  train->add_flag("--untied", [&tc](std::int64_t) { tc.tie_streams = false; },
                  "do not share trunk weights across streams");

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", va.checkpoint, "FTCK path")->required();
  eval->add_option("--data", va.data, "evaluation FTDS path")->required();
  eval->add_option("--report", va.report, "report CSV output path");
  eval->add_option("--curve", va.curve, "mP(tau) curve CSV output path");
  eval->add_option("--discard-over-mm", va.discard_over_mm,
                   "exclude pairs above this error from err_f (0 = off)")
      ->default_val(0.0);
  eval->add_option("--mp-tau", va.mp_tau, "scalar mP threshold (mm)")
      ->default_val(10.0);

  GradcheckArgs ga;
  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_flag("--all", ga.all, "check every layer and the reduced network");
  gradcheck->add_option("--layer", ga.layer, "single layer to check");
  gradcheck->add_flag("--network", ga.network, "check the reduced end-to-end graph");
  gradcheck->add_option("--seed", ga.seed, "probe seed")->default_val(1);
  gradcheck->add_option("--eps", ga.eps, "finite-difference step")
      ->default_val(1e-4);
  gradcheck->add_option("--tol", ga.tol, "per-layer tolerance")->default_val(1e-6);
  gradcheck->add_option("--net-tol", ga.net_tol, "end-to-end tolerance")
      ->default_val(1e-4);

  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "per-image forward timing");
  benchc->add_option("--checkpoint", ba.checkpoint, "FTCK path");
  benchc->add_option("--arch", ba.arch, arch_help())->default_val("single-deep");
  benchc->add_option("--n", ba.n, "timed runs")->default_val(100);
  benchc->add_option("--seed", ba.seed, "weights/sample seed")->default_val(7);

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "tabulate evaluation reports");
  compare->add_option("--report", ca.reports, "report CSV path (repeatable)")
      ->required();
  compare->add_option("--csv", ca.csv, "write combined CSV here");
  compare->add_flag("--sort", ca.sort, "sort rows by err_f ascending");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    apply_threads();
    if (*synth) return run_synth(sa);
    if (*edges) return run_edges(ea);
    if (*train) return run_train(tc);
    if (*eval) return run_eval(va);
    if (*gradcheck) {
      if (!ga.all && ga.layer.empty() && !ga.network)
        throw CLI::ValidationError("gradcheck", "pass --all, --layer or --network");
      return run_gradcheck(ga);
    }
    if (*benchc) return run_bench(ba);
    if (*compare) return run_compare(ca);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
