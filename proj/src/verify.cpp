#include "coolgp/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "coolgp/errors.hpp"
#include "coolgp/fusion.hpp"
#include "coolgp/netsim.hpp"
#include "coolgp/parallel.hpp"
#include "coolgp/rng.hpp"

namespace coolgp::verify {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)) + upper);
}

double rep_distance(const NaturalRepresentation& a, const NaturalRepresentation& b) {
  return std::sqrt((a.precision - b.precision).squaredNorm() + (a.shift - b.shift).squaredNorm());
}

NaturalRepresentation with_summary(const NaturalRepresentation& prior, const BlockSummary& e) {
  return {prior.precision + e.e1, prior.shift + e.e2};
}

// Upper triangle of the precision followed by the shift.
std::vector<double> flatten(const NaturalRepresentation& r) {
  std::vector<double> out;
  for (Eigen::Index j = 0; j < r.precision.cols(); ++j)
    for (Eigen::Index i = 0; i <= j; ++i) out.push_back(r.precision(i, j));
  for (Eigen::Index i = 0; i < r.shift.size(); ++i) out.push_back(r.shift(i));
  return out;
}

struct RunningMoments {
  std::vector<double> sum, sum_sq;
  std::size_t count = 0;

  void add(const std::vector<double>& x) {
    if (sum.empty()) sum.assign(x.size(), 0.0), sum_sq.assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum[i] += x[i];
      sum_sq[i] += x[i] * x[i];
    }
    ++count;
  }
  double mean(std::size_t i) const { return sum[i] / static_cast<double>(count); }
  double std_error(std::size_t i) const {
    const double n = static_cast<double>(count);
    const double var = std::max(0.0, (sum_sq[i] - sum[i] * sum[i] / n) / (n - 1.0));
    return std::sqrt(var / n);
  }
};

double z_score(double diff, double se) {
  if (se > 0.0) return std::abs(diff) / se;
  return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

std::vector<double> flatten(const ProjectionGradient& g) {
  std::vector<double> out(g.d_mu.data(), g.d_mu.data() + g.d_mu.size());
  out.insert(out.end(), g.d_sigma.data(), g.d_sigma.data() + g.d_sigma.size());
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Suites -------------------------------------------------------------------

SuiteReport lemma1_suite(const SuiteOptions& opt) {
  RepresentationScaling params;
  params.seed = opt.seed;
  params.threads = opt.threads;
  const ScalingResult r = representation_scaling(params);
  std::string detail = "median error by bank size:";
  for (std::size_t i = 0; i < r.x.size(); ++i) detail += " k=" + fmt(r.x[i]) + ":" + fmt(r.median_error[i]);
  SuiteReport rep{"lemma1-scaling", {}, 0.0};
  rep.checks.push_back(within("log-log slope of median representation error vs bank size", r.slope,
                              -0.65, -0.35, detail));
  return rep;
}

SuiteReport theorem1_suite(const SuiteOptions& opt) {
  FusionScaling params;
  params.seed = opt.seed;
  params.threads = opt.threads;
  const FusionScalingResult r = fusion_scaling(params);
  std::string detail = "median fused error by agent count:";
  for (std::size_t i = 0; i < r.scaling.x.size(); ++i)
    detail += " s=" + fmt(r.scaling.x[i]) + ":" + fmt(r.scaling.median_error[i]);
  SuiteReport rep{"theorem1-scaling", {}, 0.0};
  rep.checks.push_back(at_most("growth exponent of fused error vs agent count", r.scaling.slope, 1.3, detail));
  rep.checks.push_back(at_most("fused error / sum of per-agent errors", r.max_triangle_ratio, 1.0 + 1e-9));
  return rep;
}

SuiteReport unbiasedness_suite(const SuiteOptions& opt) {
  SuiteReport rep{"unbiasedness", {}, 0.0};

  GradientUnbiasedness gparams;
  gparams.seed = opt.seed;
  const auto g = gradient_unbiasedness(gparams);
  rep.checks.push_back(at_most("stochastic vs full-batch gradient, max |z| over coordinates", g.max_z, 3.0,
                               std::to_string(g.within_3se) + "/" + std::to_string(g.coordinates) +
                                   " coordinates within 3 standard errors"));

  RepresentationUnbiasedness rparams;
  rparams.seed = opt.seed;
  rparams.threads = opt.threads;
  const auto r = representation_unbiasedness(rparams);
  rep.checks.push_back(at_most("importance-sampled vs Monte Carlo representation, max |z|", r.max_z, 3.0,
                               std::to_string(r.within_3se) + "/" + std::to_string(r.coordinates) +
                                   " entries within 3 standard errors"));

  // E_p[q/p] = 1 for an arbitrary q(W).
  {
    const ProjectionPosterior qw = random_qw(2, 2, 0.3, 0.7, 1.1, substream_seed(opt.seed, "weight-mean"));
    const std::size_t draws = 100'000;
    SampleBank bank(static_cast<Eigen::Index>(draws), 2, 2, substream_seed(opt.seed, "weight-bank"), 1);
    const double mean = importance_weights(qw, bank).mean();
    rep.checks.push_back(at_most("|mean importance weight - 1| over 1e5 prior draws", std::abs(mean - 1.0), 0.05));
  }

  // Additivity and the empty-cache identity.
  {
    const auto vocab = StandardizedVocabulary::sample(6, 2, substream_seed(opt.seed, "additivity"));
    const auto blocks = toy_blocks(4, 7, 2, 0.1, substream_seed(opt.seed, "additivity-data"));
    const ProjectionPosterior qw = random_qw(2, 2, 0.3, 0.7, 1.1, substream_seed(opt.seed, "additivity-qw"));
    SampleBank bank(12, 2, 2, substream_seed(opt.seed, "additivity-bank"), vocab.size());
    const Vector w = importance_weights(qw, bank);
    const NaturalRepresentation prior = prior_natural(vocab);
    const NaturalRepresentation empty = representation_from_caches(bank, w, vocab, 0.1);
    rep.checks.push_back(at_most("empty caches vs prior, max abs difference",
                                 std::max((empty.precision - prior.precision).cwiseAbs().maxCoeff(),
                                          empty.shift.cwiseAbs().maxCoeff()),
                                 0.0));
    NaturalRepresentation summed = prior;
    for (const auto& b : blocks) {
      bank.absorb(b, vocab, 1.0);
      const BlockSummary e = block_summary(b, bank, w, vocab, 1.0, 0.1);
      summed.precision += e.e1;
      summed.shift += e.e2;
    }
    const NaturalRepresentation cached = representation_from_caches(bank, w, vocab, 0.1);
    const double scale = std::max(1.0, cached.precision.cwiseAbs().maxCoeff());
    rep.checks.push_back(at_most("streamed caches vs prior + sum of block summaries (relative)",
                                 std::max((cached.precision - summed.precision).cwiseAbs().maxCoeff(),
                                          (cached.shift - summed.shift).cwiseAbs().maxCoeff()) / scale,
                                 1e-12));
  }
  return rep;
}

SuiteReport gradcheck_suite(const SuiteOptions& opt) {
  SuiteReport rep{"gradcheck", {}, 0.0};
  GradientCheck params;
  params.seed = opt.seed;
  const auto r = gradient_check(params);
  rep.checks.push_back(at_most("max relative error, analytic vs central differences", r.max_relative_error,
                               1e-4, std::to_string(r.coordinates) + " coordinates, h = 1e-5"));

  // A zero learning rate must leave q(W) untouched.
  auto vocab = std::make_shared<const StandardizedVocabulary>(
      StandardizedVocabulary::sample(5, 2, substream_seed(opt.seed, "rate0-vocab")));
  AgentConfig cfg;
  cfg.learn.learning_rate = 0.0;
  cfg.bank_seed = substream_seed(opt.seed, "rate0-bank");
  cfg.grad_seed = substream_seed(opt.seed, "rate0-grad");
  cfg.initial_qw = random_qw(2, 2, 0.3, 0.7, 1.1, substream_seed(opt.seed, "rate0-qw"));
  Agent agent(0, vocab, cfg);
  const ProjectionPosterior before = agent.qw();
  for (const auto& b : toy_blocks(3, 10, 2, 0.1, substream_seed(opt.seed, "rate0-data"))) agent.ingest_block(b);
  const double change = std::max((agent.qw().mu - before.mu).cwiseAbs().maxCoeff(),
                                 (agent.qw().sigma - before.sigma).cwiseAbs().maxCoeff());
  rep.checks.push_back(at_most("q(W) change after steps with learning rate 0", change, 0.0));
  return rep;
}

SuiteReport consensus_suite(const SuiteOptions& opt) {
  SuiteReport rep{"consensus", {}, 0.0};
  Consensus params;
  params.seed = opt.seed;
  params.sizes = {2, 8, 32, 64};
  const auto r = consensus(params);
  rep.checks.push_back(at_most("assembled vs fuse_many, max relative deviation", r.max_error, 1e-10,
                               std::to_string(r.trees) + " random trees"));
  rep.checks.push_back(at_most("change caused by extra rounds", r.max_extra_round_change, 1e-10));
  rep.checks.push_back(at_least("every assembly saw all neighbours", r.all_complete ? 1.0 : 0.0, 1.0));

  const Topology path = Topology::line(5);
  const Topology star = Topology::star(7);
  rep.checks.push_back(within("diameter of a 5-node path", static_cast<double>(path.diameter()), 4, 4));
  rep.checks.push_back(within("diameter of a 6-leaf star", static_cast<double>(star.diameter()), 2, 2));

  const Topology graph = Topology::random_connected(20, 25, substream_seed(opt.seed, "mst-graph"));
  std::map<Topology::Edge, double> latency;
  Rng lat_rng = make_rng(opt.seed, "mst-latency");
  std::uniform_real_distribution<double> unif(0.1, 5.0);
  for (const auto& e : graph.edges()) latency[e] = unif(lat_rng);
  const Topology tree = spanning_tree(graph, latency);
  rep.checks.push_back(within("spanning tree of a 20-node graph: edge count",
                              static_cast<double>(tree.edges().size()), 19, 19));
  rep.checks.push_back(at_least("spanning tree is connected", tree.connected() ? 1.0 : 0.0, 1.0));

  // Extreme loss still yields valid representations.
  const auto vocab = StandardizedVocabulary::sample(5, 2, substream_seed(opt.seed, "loss-vocab"));
  const NaturalRepresentation prior = prior_natural(vocab);
  std::vector<NaturalRepresentation> reps;
  for (std::size_t i = 0; i < 8; ++i) reps.push_back(random_representation(prior, substream_seed(opt.seed, "loss-rep", i)));
  const SweepResult sweep = run_fusion_sweep(reps, prior, Topology::star(8), 0.99, substream_seed(opt.seed, "loss"));
  std::size_t valid = 0, complete = 0;
  for (const auto& a : sweep.assemblies) {
    valid += Eigen::LLT<Matrix>(a.rep.precision).info() == Eigen::Success ? 1 : 0;
    complete += a.complete ? 1 : 0;
  }
  rep.checks.push_back(at_least("positive-definite assemblies under 99% loss (of 8)", static_cast<double>(valid), 8.0));
  rep.checks.push_back(at_most("complete assemblies under 99% loss (of 8)", static_cast<double>(complete), 4.0));

  const NaturalRepresentation ab = fuse_pair(reps[0], reps[1], prior);
  const NaturalRepresentation ba = fuse_pair(reps[1], reps[0], prior);
  rep.checks.push_back(at_most("fuse_pair commutativity, max abs difference", rep_distance(ab, ba), 0.0));
  return rep;
}

}  // namespace

Check at_most(std::string name, double measured, double bound, std::string detail) {
  return {std::move(name), measured, "<=", bound, bound, measured <= bound, std::move(detail)};
}

Check at_least(std::string name, double measured, double bound, std::string detail) {
  return {std::move(name), measured, ">=", bound, bound, measured >= bound, std::move(detail)};
}

Check within(std::string name, double measured, double lower, double upper, std::string detail) {
  return {std::move(name), measured, "in", lower, upper, measured >= lower && measured <= upper,
          std::move(detail)};
}

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string SuiteReport::format() const {
  std::ostringstream out;
  out << "suite " << suite << ": " << (passed() ? "PASS" : "FAIL") << " (" << fmt(seconds) << " s)\n";
  for (const auto& c : checks) {
    out << "  [" << (c.passed ? "PASS" : "FAIL") << "] " << c.name << " = " << fmt(c.measured);
    if (c.relation == "in")
      out << " (required in [" << fmt(c.lower) << ", " << fmt(c.upper) << "])";
    else
      out << " (required " << c.relation << " " << fmt(c.lower) << ")";
    if (!c.detail.empty()) out << "; " << c.detail;
    out << "\n";
  }
  return out.str();
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"lemma1-scaling", "theorem1-scaling", "unbiasedness",
                                                  "gradcheck", "consensus"};
  return names;
}

SuiteReport run_suite(const std::string& name, const SuiteOptions& options) {
  static const std::map<std::string, std::function<SuiteReport(const SuiteOptions&)>> suites = {
      {"lemma1-scaling", lemma1_suite}, {"theorem1-scaling", theorem1_suite},
      {"unbiasedness", unbiasedness_suite}, {"gradcheck", gradcheck_suite},
      {"consensus", consensus_suite}};
  const auto it = suites.find(name);
  if (it == suites.end()) {
    std::string known;
    for (const auto& n : suite_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown verify suite '" + name + "' (expected one of: " + known + ")");
  }
  const auto start = std::chrono::steady_clock::now();
  SuiteReport report = it->second(options);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractViolation("slope needs two or more points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<Block> toy_blocks(std::size_t count, Eigen::Index block_size, Eigen::Index dim,
                              double noise_std, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<Block> out;
  for (std::size_t b = 0; b < count; ++b) {
    Block block{Matrix(block_size, dim), Vector(block_size)};
    for (Eigen::Index i = 0; i < block_size; ++i) {
      double phase = 0.0;
      for (Eigen::Index j = 0; j < dim; ++j) {
        block.inputs(i, j) = unif(rng);
        phase += 1.5 * block.inputs(i, j) / static_cast<double>(j + 1);
      }
      block.targets(i) = std::sin(phase) + 0.3 * std::cos(2.0 * block.inputs(i, 0)) + noise_std * noise(rng);
    }
    out.push_back(std::move(block));
  }
  return out;
}

ProjectionPosterior random_qw(Eigen::Index rows, Eigen::Index cols, double mean_scale, double sigma_low,
                              double sigma_high, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(sigma_low, sigma_high);
  ProjectionPosterior qw{mean_scale * standard_normal(rng, rows, cols), Matrix(rows, cols)};
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) qw.sigma(i, j) = unif(rng);
  return qw;
}

ScalingResult representation_scaling(const RepresentationScaling& p) {
  constexpr double kNoise = 0.3;
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, p.dim, substream_seed(p.seed, "lemma1-vocab"));
  const Block block = toy_blocks(1, p.block_size, p.dim, kNoise, substream_seed(p.seed, "lemma1-data")).front();
  const ProjectionPosterior qw = random_qw(p.dim, p.dim, 0.2, 0.8, 1.0, substream_seed(p.seed, "lemma1-qw"));
  const NaturalRepresentation prior = prior_natural(vocab);
  const NaturalRepresentation truth = with_summary(
      prior, exact_block_E(block, qw, vocab, 1.0, kNoise, p.oracle_samples, substream_seed(p.seed, "lemma1-oracle")));

  ScalingResult out;
  for (std::size_t k : p.bank_sizes) {
    std::vector<double> errors(p.trials);
    parallel_for(p.trials, p.threads, [&](std::size_t trial) {
      SampleBank bank(static_cast<Eigen::Index>(k), p.dim, p.dim, substream_seed(p.seed, "lemma1-bank", k * 100'000 + trial),
                      vocab.size());
      bank.absorb(block, vocab, 1.0);
      const NaturalRepresentation approx =
          representation_from_caches(bank, importance_weights(qw, bank), vocab, kNoise);
      errors[trial] = rep_distance(approx, truth);
    });
    out.x.push_back(static_cast<double>(k));
    out.median_error.push_back(median(errors));
  }
  out.slope = log_log_slope(out.x, out.median_error);
  return out;
}

FusionScalingResult fusion_scaling(const FusionScaling& p) {
  constexpr double kNoise = 0.3;
  const std::size_t s_max = *std::max_element(p.agent_counts.begin(), p.agent_counts.end());
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, p.dim, substream_seed(p.seed, "thm1-vocab"));
  const NaturalRepresentation prior = prior_natural(vocab);
  const auto blocks = toy_blocks(s_max, p.block_size, p.dim, kNoise, substream_seed(p.seed, "thm1-data"));
  std::vector<ProjectionPosterior> qws;
  for (std::size_t i = 0; i < s_max; ++i)
    qws.push_back(random_qw(p.dim, p.dim, 0.2, 0.8, 1.0, substream_seed(p.seed, "thm1-qw", i)));
  std::vector<NaturalRepresentation> exact(s_max);
  parallel_for(s_max, p.threads, [&](std::size_t i) {
    exact[i] = with_summary(prior, exact_block_E(blocks[i], qws[i], vocab, 1.0, kNoise, p.oracle_samples,
                                                 substream_seed(p.seed, "thm1-oracle", i)));
  });

  FusionScalingResult out;
  for (std::size_t s : p.agent_counts) {
    const NaturalRepresentation truth = fuse_many(std::span(exact).first(s), prior);
    std::vector<double> errors(p.trials);
    std::vector<double> ratios(p.trials);
    parallel_for(p.trials, p.threads, [&](std::size_t trial) {
      std::vector<NaturalRepresentation> approx;
      double individual = 0.0;
      for (std::size_t i = 0; i < s; ++i) {
        SampleBank bank(static_cast<Eigen::Index>(p.bank_size), p.dim, p.dim,
                        substream_seed(p.seed, "thm1-bank", (s * 1000 + trial) * 1000 + i), vocab.size());
        bank.absorb(blocks[i], vocab, 1.0);
        approx.push_back(representation_from_caches(bank, importance_weights(qws[i], bank), vocab, kNoise));
        individual += rep_distance(approx.back(), exact[i]);
      }
      errors[trial] = rep_distance(fuse_many(approx, prior), truth);
      ratios[trial] = individual > 0.0 ? errors[trial] / individual : 0.0;
    });
    out.scaling.x.push_back(static_cast<double>(s));
    out.scaling.median_error.push_back(median(errors));
    out.max_triangle_ratio = std::max(out.max_triangle_ratio, *std::max_element(ratios.begin(), ratios.end()));
  }
  out.scaling.slope = log_log_slope(out.scaling.x, out.scaling.median_error);
  return out;
}

UnbiasednessResult gradient_unbiasedness(const GradientUnbiasedness& p) {
  constexpr double kNoise = 0.2;
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, p.dim, substream_seed(p.seed, "appc-vocab"));
  const auto blocks = toy_blocks(p.blocks, p.block_size, p.dim, kNoise, substream_seed(p.seed, "appc-data"));
  const ProjectionPosterior qw = random_qw(p.dim, p.dim, 0.3, 0.6, 1.0, substream_seed(p.seed, "appc-qw"));
  SampleBank bank(8, p.dim, p.dim, substream_seed(p.seed, "appc-bank"), vocab.size());
  for (const auto& b : blocks) bank.absorb(b, vocab, 1.0);
  const NaturalRepresentation qu = representation_from_caches(bank, importance_weights(qw, bank), vocab, kNoise);
  const auto noise = reparam_noise(substream_seed(p.seed, "appc-noise"), 0, 1, p.dim, p.dim);
  const ElboInputs in{qw, qu, vocab, 1.0, kNoise, noise};
  const double n_blocks = static_cast<double>(p.blocks);

  const std::vector<double> full = flatten(elbo_gradient(in, blocks, n_blocks));
  std::vector<std::vector<double>> per_block;
  for (const auto& b : blocks) per_block.push_back(flatten(elbo_gradient(in, std::span(&b, 1), n_blocks)));

  Rng rng = make_rng(p.seed, "appc-draws");
  std::uniform_int_distribution<std::size_t> pick(0, p.blocks - 1);
  RunningMoments moments;
  for (std::size_t d = 0; d < p.draws; ++d) moments.add(per_block[pick(rng)]);

  UnbiasednessResult out;
  out.coordinates = full.size();
  for (std::size_t i = 0; i < full.size(); ++i) {
    const double z = z_score(moments.mean(i) - full[i], moments.std_error(i));
    out.max_z = std::max(out.max_z, z);
    out.within_3se += z <= 3.0 ? 1 : 0;
  }
  return out;
}

UnbiasednessResult representation_unbiasedness(const RepresentationUnbiasedness& p) {
  constexpr double kNoise = 0.3;
  constexpr std::size_t kOracleBatches = 10;
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, p.dim, substream_seed(p.seed, "ub-vocab"));
  const Block block = toy_blocks(1, p.block_size, p.dim, kNoise, substream_seed(p.seed, "ub-data")).front();
  const ProjectionPosterior qw = random_qw(p.dim, p.dim, 0.2, 0.8, 1.0, substream_seed(p.seed, "ub-qw"));
  const NaturalRepresentation prior = prior_natural(vocab);

  // Oracle mean and its own standard error from independent batches.
  std::vector<std::vector<double>> oracle(kOracleBatches);
  parallel_for(kOracleBatches, p.threads, [&](std::size_t b) {
    oracle[b] = flatten(with_summary(prior, exact_block_E(block, qw, vocab, 1.0, kNoise, p.oracle_samples / kOracleBatches,
                                                          substream_seed(p.seed, "ub-oracle", b))));
  });
  RunningMoments oracle_moments;
  for (const auto& o : oracle) oracle_moments.add(o);

  std::vector<std::vector<double>> approx(p.banks);
  parallel_for(p.banks, p.threads, [&](std::size_t b) {
    SampleBank bank(static_cast<Eigen::Index>(p.bank_size), p.dim, p.dim, substream_seed(p.seed, "ub-bank", b),
                    vocab.size());
    bank.absorb(block, vocab, 1.0);
    approx[b] = flatten(representation_from_caches(bank, importance_weights(qw, bank), vocab, kNoise));
  });
  RunningMoments bank_moments;
  for (const auto& a : approx) bank_moments.add(a);

  UnbiasednessResult out;
  out.coordinates = oracle.front().size();
  for (std::size_t i = 0; i < out.coordinates; ++i) {
    const double se = std::hypot(bank_moments.std_error(i), oracle_moments.std_error(i));
    const double z = z_score(bank_moments.mean(i) - oracle_moments.mean(i), se);
    out.max_z = std::max(out.max_z, z);
    out.within_3se += z <= 3.0 ? 1 : 0;
  }
  return out;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

GradientCheckResult gradient_check(const GradientCheck& p) {
  constexpr double kNoise = 0.2;
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, p.dim, substream_seed(p.seed, "gc-vocab"));
  const Block block = toy_blocks(1, p.block_size, p.dim, kNoise, substream_seed(p.seed, "gc-data")).front();
  const ProjectionPosterior qw = random_qw(p.dim, p.dim, 0.4, 0.5, 1.2, substream_seed(p.seed, "gc-qw"));
  SampleBank bank(8, p.dim, p.dim, substream_seed(p.seed, "gc-bank"), vocab.size());
  bank.absorb(block, vocab, 1.0);
  const NaturalRepresentation qu = representation_from_caches(bank, importance_weights(qw, bank), vocab, kNoise);
  const auto noise = reparam_noise(substream_seed(p.seed, "gc-noise"), 0, p.grad_samples, p.dim, p.dim);
  const std::span<const Block> blocks(&block, 1);

  const ProjectionGradient g = elbo_gradient(ElboInputs{qw, qu, vocab, 1.0, kNoise, noise}, blocks, 1.0);
  auto value = [&](const ProjectionPosterior& q) { return elbo(ElboInputs{q, qu, vocab, 1.0, kNoise, noise}, blocks, 1.0); };

  GradientCheckResult out;
  for (int which = 0; which < 2; ++which) {
    for (Eigen::Index i = 0; i < p.dim; ++i) {
      for (Eigen::Index j = 0; j < p.dim; ++j) {
        ProjectionPosterior plus = qw, minus = qw;
        Matrix& a = which == 0 ? plus.mu : plus.sigma;
        Matrix& b = which == 0 ? minus.mu : minus.sigma;
        a(i, j) += p.step;
        b(i, j) -= p.step;
        const double numeric = (value(plus) - value(minus)) / (2.0 * p.step);
        const double analytic = which == 0 ? g.d_mu(i, j) : g.d_sigma(i, j);
        out.max_relative_error = std::max(out.max_relative_error, relative_error(analytic, numeric));
        ++out.coordinates;
      }
    }
  }
  return out;
}

NaturalRepresentation random_representation(const NaturalRepresentation& prior, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index m = prior.size();
  const Matrix a = 0.5 * standard_normal(rng, m, m);
  NaturalRepresentation out = prior;
  out.precision += a * a.transpose();
  out.shift += standard_normal(rng, m, 1).col(0);
  return out;
}

ConsensusResult consensus(const Consensus& p) {
  const auto vocab = StandardizedVocabulary::sample(p.vocab_size, 2, substream_seed(p.seed, "consensus-vocab"));
  const NaturalRepresentation prior = prior_natural(vocab);
  ConsensusResult out;
  for (std::size_t n : p.sizes) {
    for (std::size_t t = 0; t < p.trees_per_size; ++t) {
      const std::uint64_t id = n * 1000 + t;
      const Topology tree = Topology::random_tree(n, substream_seed(p.seed, "consensus-tree", id));
      std::vector<NaturalRepresentation> reps;
      for (std::size_t i = 0; i < n; ++i)
        reps.push_back(random_representation(prior, substream_seed(p.seed, "consensus-rep", id * 1000 + i)));
      const NaturalRepresentation oracle = fuse_many(reps, prior);
      const double scale = std::max({1.0, oracle.precision.cwiseAbs().maxCoeff(), oracle.shift.cwiseAbs().maxCoeff()});

      const SweepResult base = run_fusion_sweep(reps, prior, tree, 0.0, 0);
      SweepOptions more;
      more.rounds = tree.diameter() + p.extra_rounds;
      const SweepResult extended = run_fusion_sweep(reps, prior, tree, 0.0, 0, more);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& a = base.assemblies[i].rep;
        out.max_error = std::max(out.max_error, std::max((a.precision - oracle.precision).cwiseAbs().maxCoeff(),
                                                         (a.shift - oracle.shift).cwiseAbs().maxCoeff()) / scale);
        const auto& e = extended.assemblies[i].rep;
        out.max_extra_round_change =
            std::max(out.max_extra_round_change, std::max((a.precision - e.precision).cwiseAbs().maxCoeff(),
                                                          (a.shift - e.shift).cwiseAbs().maxCoeff()) / scale);
        out.all_complete = out.all_complete && base.assemblies[i].complete;
      }
      ++out.trees;
    }
  }
  return out;
}

}  // namespace coolgp::verify
