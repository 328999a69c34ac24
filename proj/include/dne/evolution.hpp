#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dne/data.hpp"
#include "dne/error.hpp"
#include "dne/model.hpp"
#include "dne/rng.hpp"
#include "dne/thread_pool.hpp"

namespace dne {

enum class FitnessShaping { centered_fitness, centered_rank };

inline const char* to_string(FitnessShaping s) {
  return s == FitnessShaping::centered_rank ? "centered_rank"
                                            : "centered_fitness";
}

inline FitnessShaping fitness_shaping_from_string(const std::string& s) {
  if (s == "centered_fitness" || s == "fitness")
    return FitnessShaping::centered_fitness;
  if (s == "centered_rank" || s == "rank") return FitnessShaping::centered_rank;
  throw ConfigError("unknown fitness shaping `" + s +
                    "` (expected fitness|rank)");
}

struct EvolutionConfig {
  int population = 40;
  double sigma = 0.05;   // mutation scale
  double alpha = 0.2;    // step size
  std::uint64_t generations = 50000;
  std::uint64_t master_seed = 0;
  FitnessShaping fitness_shaping = FitnessShaping::centered_fitness;
  std::uint64_t eval_test_every = 50;  // 0 = never
  std::uint64_t patience = 200;        // consecutive perfect gens; 0 disables

  void validate() const {
    if (population < 2) throw ConfigError("population must be >= 2");
    if (!(sigma > 0)) throw ConfigError("sigma must be > 0");
    if (!(alpha > 0)) throw ConfigError("alpha must be > 0");
  }

  bool operator==(const EvolutionConfig&) const = default;
};

struct GenerationStats {
  std::uint64_t generation = 0;
  int best_child = 0;
  double mean_child = 0.0;
  int worst_child = 0;
  int parent_fitness = 0;
  std::optional<double> test_accuracy;
  std::int64_t wall_ms = 0;
};

namespace detail {

// Count of correctly classified pairs for one parameter vector.
inline int eval_params(const GenomeLayout& layout, const ModelConfig& cfg,
                       std::span<const float> params, const Dataset& ds,
                       ForwardScratch& scratch) {
  int correct = 0;
  float logits[2];
  for (const PairSample& s : ds.samples) {
    forward_into(layout, cfg, params, s.scan1, s.scan2, scratch,
                 std::span<float>(logits, 2));
    correct += argmax_class(std::span<const float>(logits, 2)) == s.label;
  }
  return correct;
}

}  // namespace detail

inline int evaluate_fitness(const Model& m, const Dataset& ds) {
  if (ds.samples.empty()) throw DataError("evaluate_fitness: empty dataset");
  ForwardScratch scratch;
  return detail::eval_params(m.layout(), m.config(), m.params(), ds, scratch);
}

inline int evaluate_fitness(const Genome& g, const ModelConfig& cfg,
                            const Dataset& ds) {
  return evaluate_fitness(from_genome(cfg, g), ds);
}

struct ChildEval {
  int fitness = 0;
  int test_correct = 0;
};

// Evaluates population children (child i = parent + sigma * noise(seed_i))
// against the training set, optionally also against a test set. Results are
// gathered into child-index order; output is independent of pool size.
inline std::vector<ChildEval> evaluate_population(
    const ModelConfig& cfg, const Genome& parent,
    std::span<const std::uint64_t> seeds, double sigma, const Dataset& train,
    const Dataset* test, ThreadPool* pool) {
  const detail::GenomeLayout layout = detail::build_layout(cfg);
  if (parent.values.size() != layout.total)
    throw ShapeError("parent genome length mismatch");
  if (train.samples.empty()) throw DataError("empty training set");

  const std::size_t len = parent.values.size();
  const float sig = static_cast<float>(sigma);
  const float* pv = parent.values.data();
  std::vector<ChildEval> results(seeds.size());

  auto eval_one = [&, pv, sig, len](std::size_t i) {
    static thread_local std::vector<float> noise;
    static thread_local std::vector<float> child;
    static thread_local ForwardScratch scratch;
    noise.resize(len);
    child.resize(len);
    GaussianStream gs(seeds[i]);
    gs.fill(noise);
    for (std::size_t j = 0; j < len; ++j) child[j] = pv[j] + sig * noise[j];
    ChildEval r;
    r.fitness = detail::eval_params(layout, cfg, child, train, scratch);
    if (test) r.test_correct = detail::eval_params(layout, cfg, child, *test,
                                                   scratch);
    results[i] = r;
  };

  if (!pool || pool->size() <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) eval_one(i);
  } else {
    std::vector<std::future<void>> futs;
    futs.reserve(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i)
      futs.push_back(pool->submit([&eval_one, i] { eval_one(i); }));
    for (auto& f : futs) f.get();
  }
  return results;
}

// Fitness -> recombination weights.
//   centered_fitness: (F - mean) / population-std; all-zero when std == 0.
//   centered_rank:    ranks (ties averaged) mapped linearly onto [-0.5, 0.5].
inline std::vector<float> shape_fitness(
    const std::vector<int>& fitnesses,
    FitnessShaping mode = FitnessShaping::centered_fitness) {
  const std::size_t n = fitnesses.size();
  if (n < 2) throw ConfigError("shape_fitness needs at least 2 entries");
  std::vector<float> w(n, 0.0f);

  if (mode == FitnessShaping::centered_fitness) {
    const double mean =
        std::accumulate(fitnesses.begin(), fitnesses.end(), 0.0) /
        static_cast<double>(n);
    double var = 0.0;
    for (const int f : fitnesses) var += (f - mean) * (f - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) return w;  // no signal, no update
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = static_cast<float>((fitnesses[i] - mean) * inv_std);
    return w;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return fitnesses[a] < fitnesses[b];
  });
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && fitnesses[order[j + 1]] == fitnesses[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0;
    const double v = rank / static_cast<double>(n - 1) - 0.5;
    for (std::size_t k = i; k <= j; ++k) w[order[k]] = static_cast<float>(v);
    i = j + 1;
  }
  return w;
}

namespace detail {

// acc += w * noise(seed), noise regenerated from the seed. Children are
// accumulated strictly in ascending index order with float32 arithmetic, so
// the result does not depend on the pool.
inline void accumulate_weighted_noise(std::vector<float>& acc,
                                      std::span<const std::uint64_t> seeds,
                                      std::span<const float> weights,
                                      ThreadPool* pool) {
  const std::size_t len = acc.size();
  const std::size_t n = seeds.size();
  auto axpy = [&](float wi, const float* eps) {
    float* a = acc.data();
    for (std::size_t j = 0; j < len; ++j) a[j] += wi * eps[j];
  };

  if (!pool || pool->size() <= 1) {
    std::vector<float> buf(len);
    for (std::size_t i = 0; i < n; ++i) {
      GaussianStream gs(seeds[i]);
      gs.fill(buf);
      axpy(weights[i], buf.data());
    }
    return;
  }

  // pipeline: workers regenerate noise ahead, consumption stays ordered
  const std::size_t ahead = pool->size() + 1;
  std::vector<std::future<std::vector<float>>> futs(n);
  std::size_t submitted = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (submitted < n && submitted < i + ahead) {
      const std::uint64_t seed = seeds[submitted];
      futs[submitted] =
          pool->submit([seed, len] { return sample_noise(seed, len); });
      ++submitted;
    }
    const std::vector<float> eps = futs[i].get();
    axpy(weights[i], eps.data());
  }
}

}  // namespace detail

// theta' = theta + (alpha / (n * sigma)) * sum_i weights[i] * noise(seed_i).
// All-zero weights return the parent bitwise unchanged.
inline Genome recombine(const Genome& parent,
                        std::span<const std::uint64_t> child_seeds,
                        std::span<const float> weights, double sigma,
                        double alpha, ThreadPool* pool = nullptr) {
  if (child_seeds.size() != weights.size())
    throw ShapeError("recombine: seeds/weights length mismatch");
  if (child_seeds.empty()) throw ConfigError("recombine: empty population");

  const bool all_zero =
      std::all_of(weights.begin(), weights.end(),
                  [](float w) { return w == 0.0f; });
  if (all_zero) return parent;

  const std::size_t len = parent.values.size();
  std::vector<float> acc(len, 0.0f);
  detail::accumulate_weighted_noise(acc, child_seeds, weights, pool);

  const float scale = static_cast<float>(
      alpha / (static_cast<double>(child_seeds.size()) * sigma));
  Genome out;
  out.values.resize(len);
  const float* pv = parent.values.data();
  for (std::size_t j = 0; j < len; ++j) out.values[j] = pv[j] + scale * acc[j];
  return out;
}

struct TrainState {
  const ModelConfig* model_config = nullptr;
  const EvolutionConfig* evo = nullptr;
  const Dataset* train_set = nullptr;
  const Dataset* test_set = nullptr;  // optional
  ThreadPool* pool = nullptr;         // optional
  Genome parent;
  std::uint64_t generation = 0;
};

// One mutation -> evaluation -> recombination cycle. Advances state.parent
// and state.generation; returns the generation's telemetry.
inline GenerationStats run_generation(TrainState& st) {
  const auto t0 = std::chrono::steady_clock::now();
  const EvolutionConfig& evo = *st.evo;
  evo.validate();
  const std::size_t n = static_cast<std::size_t>(evo.population);

  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i)
    seeds[i] = derive_child_seed(evo.master_seed, st.generation, i);

  const bool do_test = st.test_set && evo.eval_test_every != 0 &&
                       st.generation % evo.eval_test_every == 0;
  const std::vector<ChildEval> children = evaluate_population(
      *st.model_config, st.parent, seeds, evo.sigma, *st.train_set,
      do_test ? st.test_set : nullptr, st.pool);

  std::vector<int> fitnesses(n);
  for (std::size_t i = 0; i < n; ++i) fitnesses[i] = children[i].fitness;

  GenerationStats stats;
  stats.generation = st.generation;
  stats.best_child = *std::max_element(fitnesses.begin(), fitnesses.end());
  stats.worst_child = *std::min_element(fitnesses.begin(), fitnesses.end());
  stats.mean_child =
      std::accumulate(fitnesses.begin(), fitnesses.end(), 0.0) /
      static_cast<double>(n);

  const std::vector<float> weights =
      shape_fitness(fitnesses, evo.fitness_shaping);
  st.parent = recombine(st.parent, seeds, weights, evo.sigma, evo.alpha,
                        st.pool);

  stats.parent_fitness =
      evaluate_fitness(st.parent, *st.model_config, *st.train_set);

  if (do_test) {
    int best_test =
        evaluate_fitness(st.parent, *st.model_config, *st.test_set);
    for (const ChildEval& c : children)
      best_test = std::max(best_test, c.test_correct);
    stats.test_accuracy = static_cast<double>(best_test) /
                          static_cast<double>(st.test_set->samples.size());
  }

  st.generation += 1;
  stats.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return stats;
}

struct TrainSinks {
  std::function<void(const GenerationStats&)> on_stats;
  std::function<void(std::uint64_t generation, const Genome&)> on_checkpoint;
};

struct TrainOptions {
  int threads = 0;  // 0 = hardware concurrency
  std::uint64_t checkpoint_every = 500;
  TrainSinks sinks;
  Genome initial;                      // empty = fresh Glorot build
  std::uint64_t start_generation = 0;  // pairs with a non-empty initial
};

struct TrainResult {
  Genome genome;
  std::vector<GenerationStats> history;
  std::uint64_t generation = 0;  // generations completed
  bool early_stopped = false;
};

// The generational loop. Stops after evo.generations, or early once the
// parent classifies the whole training set for `patience` consecutive
// generations. Checkpoints flow through sinks on schedule and at exit.
inline TrainResult train(const ModelConfig& cfg, const EvolutionConfig& evo,
                         const Dataset& train_set, const Dataset* test_set,
                         TrainOptions opts = {}) {
  cfg.validate();
  evo.validate();
  if (train_set.samples.empty()) throw DataError("empty training set");
  for (const Dataset* ds : {&train_set, test_set}) {
    if (!ds) continue;
    for (const PairSample& s : ds->samples)
      if (s.label != kRegression && s.label != kProgression)
        throw DataError("dataset labels must be 0 or 1");
  }

  Genome genome = opts.initial.values.empty()
                      ? to_genome(build_model(cfg, evo.master_seed))
                      : std::move(opts.initial);
  if (genome.values.size() != genome_len(cfg))
    throw ShapeError("initial genome length does not match config");

  const unsigned hw = std::thread::hardware_concurrency();
  const unsigned threads =
      opts.threads > 0 ? static_cast<unsigned>(opts.threads)
                       : std::max(1u, hw);
  std::optional<ThreadPool> pool;
  if (threads > 1) pool.emplace(threads);

  TrainState st;
  st.model_config = &cfg;
  st.evo = &evo;
  st.train_set = &train_set;
  st.test_set = test_set;
  st.pool = pool ? &*pool : nullptr;
  st.parent = std::move(genome);
  st.generation = opts.start_generation;

  TrainResult result;
  std::uint64_t streak = 0;
  for (std::uint64_t g = opts.start_generation; g < evo.generations;) {
    GenerationStats stats = run_generation(st);
    g = st.generation;
    if (opts.sinks.on_stats) opts.sinks.on_stats(stats);
    const bool perfect =
        stats.parent_fitness ==
        static_cast<int>(train_set.samples.size());
    result.history.push_back(std::move(stats));
    if (perfect) {
      ++streak;
      if (evo.patience != 0 && streak >= evo.patience) {
        result.early_stopped = true;
        break;
      }
    } else {
      streak = 0;
    }
    if (opts.checkpoint_every != 0 && opts.sinks.on_checkpoint &&
        g % opts.checkpoint_every == 0 && g < evo.generations)
      opts.sinks.on_checkpoint(g, st.parent);
  }
  if (opts.sinks.on_checkpoint)
    opts.sinks.on_checkpoint(st.generation, st.parent);

  result.genome = std::move(st.parent);
  result.generation = st.generation;
  return result;
}

}  // namespace dne
