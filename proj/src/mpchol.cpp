#include "sphemu/mpchol.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <queue>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sphemu/half.hpp"
#include "sphemu/rng.hpp"

namespace sphemu {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

int kind_rank(TaskKind k) { return static_cast<int>(k); }
}  // namespace

std::string to_string(Precision p) {
  switch (p) {
    case Precision::kDouble: return "dp";
    case Precision::kSingle: return "sp";
    default: return "hp";
  }
}

std::string to_string(PrecisionVariant v) {
  switch (v) {
    case PrecisionVariant::kDp: return "dp";
    case PrecisionVariant::kDpSp: return "dpsp";
    case PrecisionVariant::kDpSpHp: return "dpsphp";
    default: return "dphp";
  }
}

PrecisionVariant variant_from_string(const std::string& s) {
  if (s == "dp") return PrecisionVariant::kDp;
  if (s == "dpsp") return PrecisionVariant::kDpSp;
  if (s == "dpsphp") return PrecisionVariant::kDpSpHp;
  if (s == "dphp") return PrecisionVariant::kDpHp;
  throw std::invalid_argument("unknown precision variant: " + s);
}

void MpCholConfig::validate() const {
  if (tile_size < 1) throw std::invalid_argument("tile size must be positive");
  if (band_width_dp < 1) throw std::invalid_argument("double-precision band must be at least 1");
  if (sp_fraction < 0.0 || sp_fraction > 1.0)
    throw std::invalid_argument("sp fraction must lie in [0, 1]");
  if (workers < 1) throw std::invalid_argument("worker count must be positive");
}

std::int64_t PrecisionMap::count(Precision p) const {
  return std::count(tiles.begin(), tiles.end(), p);
}

PrecisionMap assign_precisions(int n_tiles, const MpCholConfig& config) {
  config.validate();
  if (n_tiles < 1) throw std::invalid_argument("need at least one tile");
  PrecisionMap map;
  map.n_tiles = n_tiles;
  map.tiles.assign(static_cast<std::size_t>(n_tiles) * (n_tiles + 1) / 2, Precision::kDouble);
  if (config.variant == PrecisionVariant::kDp) return map;

  std::vector<std::tuple<int, int, int>> off_band;  // (distance, i, j)
  for (int i = 0; i < n_tiles; ++i)
    for (int j = 0; j <= i; ++j)
      if (i - j >= config.band_width_dp) off_band.emplace_back(i - j, i, j);
  std::sort(off_band.begin(), off_band.end());

  std::size_t n_sp = off_band.size();  // kDpSp keeps every off-band tile single
  if (config.variant == PrecisionVariant::kDpSpHp)
    n_sp = static_cast<std::size_t>(
        std::ceil(config.sp_fraction * static_cast<double>(off_band.size())));
  else if (config.variant == PrecisionVariant::kDpHp)
    n_sp = 0;
  for (std::size_t t = 0; t < off_band.size(); ++t) {
    auto [d, i, j] = off_band[t];
    map.tiles[static_cast<std::size_t>(i) * (i + 1) / 2 + j] =
        t < n_sp ? Precision::kSingle : Precision::kHalf;
  }
  return map;
}

TiledMatrix::TiledMatrix(int n, int tile_size) : n_(n), tile_size_(tile_size) {
  if (n < 1 || tile_size < 1) throw std::invalid_argument("matrix and tile sizes must be positive");
  n_tiles_ = (n + tile_size - 1) / tile_size;
  offset_.assign(static_cast<std::size_t>(n_tiles_) * (n_tiles_ + 1) / 2 + 1, 0);
  std::size_t off = 0;
  std::size_t idx = 0;
  for (int i = 0; i < n_tiles_; ++i)
    for (int j = 0; j <= i; ++j) {
      offset_[idx++] = off;
      off += static_cast<std::size_t>(tile_rows(i)) * tile_rows(j);
    }
  offset_[idx] = off;
  data_.assign(off, 0.0);
}

int TiledMatrix::tile_rows(int i) const {
  return std::min(tile_size_, n_ - i * tile_size_);
}

std::span<double> TiledMatrix::tile(int i, int j) {
  std::size_t idx = static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  return {data_.data() + offset_[idx], offset_[idx + 1] - offset_[idx]};
}

std::span<const double> TiledMatrix::tile(int i, int j) const {
  std::size_t idx = static_cast<std::size_t>(i) * (i + 1) / 2 + j;
  return {data_.data() + offset_[idx], offset_[idx + 1] - offset_[idx]};
}

TiledMatrix TiledMatrix::from_dense(std::span<const double> a, int n, int tile_size) {
  if (a.size() != static_cast<std::size_t>(n) * n)
    throw std::invalid_argument("dense buffer does not match its dimension");
  TiledMatrix t(n, tile_size);
  for (int i = 0; i < t.n_tiles_; ++i)
    for (int j = 0; j <= i; ++j) {
      auto dst = t.tile(i, j);
      int bi = t.tile_rows(i), bj = t.tile_rows(j);
      for (int r = 0; r < bi; ++r)
        for (int c = 0; c < bj; ++c)
          dst[static_cast<std::size_t>(r) * bj + c] =
              a[static_cast<std::size_t>(i * tile_size + r) * n + (j * tile_size + c)];
    }
  return t;
}

std::vector<double> TiledMatrix::to_dense_lower() const {
  std::vector<double> a(static_cast<std::size_t>(n_) * n_, 0.0);
  for (int i = 0; i < n_tiles_; ++i)
    for (int j = 0; j <= i; ++j) {
      auto src = tile(i, j);
      int bi = tile_rows(i), bj = tile_rows(j);
      for (int r = 0; r < bi; ++r)
        for (int c = 0; c < bj; ++c) {
          int row = i * tile_size_ + r, col = j * tile_size_ + c;
          if (col <= row) a[static_cast<std::size_t>(row) * n_ + col] =
              src[static_cast<std::size_t>(r) * bj + c];
        }
    }
  return a;
}

TaskGraph build_task_graph(int n_tiles) {
  if (n_tiles < 1) throw std::invalid_argument("need at least one tile");
  TaskGraph g;
  auto add = [&g](TaskKind kind, int i, int j, int k) {
    g.tasks.push_back({kind, i, j, k});
    return static_cast<std::int32_t>(g.tasks.size() - 1);
  };
  std::vector<std::int32_t> potrf(n_tiles);
  std::vector<std::vector<std::int32_t>> trsm(n_tiles, std::vector<std::int32_t>(n_tiles, -1));
  std::vector<std::vector<std::int32_t>> syrk(n_tiles, std::vector<std::int32_t>(n_tiles, -1));
  for (int k = 0; k < n_tiles; ++k) {
    potrf[k] = add(TaskKind::kPotrf, k, k, k);
    for (int i = k + 1; i < n_tiles; ++i) trsm[i][k] = add(TaskKind::kTrsm, i, k, k);
    for (int i = k + 1; i < n_tiles; ++i) syrk[i][k] = add(TaskKind::kSyrk, i, i, k);
  }
  std::vector<std::vector<std::vector<std::int32_t>>> gemm(
      n_tiles, std::vector<std::vector<std::int32_t>>(n_tiles));
  for (int i = 0; i < n_tiles; ++i)
    for (int j = 0; j < i; ++j) gemm[i][j].assign(j, -1);
  for (int k = 0; k < n_tiles; ++k)
    for (int j = k + 1; j < n_tiles; ++j)
      for (int i = j + 1; i < n_tiles; ++i) gemm[i][j][k] = add(TaskKind::kGemm, i, j, k);

  g.successors.assign(g.tasks.size(), {});
  g.indegree.assign(g.tasks.size(), 0);
  auto edge = [&g](std::int32_t from, std::int32_t to) {
    g.successors[from].push_back(to);
    ++g.indegree[to];
  };
  for (int k = 0; k < n_tiles; ++k) {
    for (int i = k + 1; i < n_tiles; ++i) {
      edge(potrf[k], trsm[i][k]);
      edge(trsm[i][k], syrk[i][k]);
      // The panel feeds every trailing update in its step.
      for (int j = k + 1; j < i; ++j) edge(trsm[i][k], gemm[i][j][k]);
      for (int j = i + 1; j < n_tiles; ++j) edge(trsm[i][k], gemm[j][i][k]);
    }
  }
  // Serial accumulation chains pin the update order per output tile.
  for (int i = 1; i < n_tiles; ++i) {
    for (int k = 0; k + 1 < i; ++k) edge(syrk[i][k], syrk[i][k + 1]);
    edge(syrk[i][i - 1], potrf[i]);
  }
  for (int i = 0; i < n_tiles; ++i)
    for (int j = 1; j < i; ++j) {
      for (int k = 0; k + 1 < j; ++k) edge(gemm[i][j][k], gemm[i][j][k + 1]);
      edge(gemm[i][j][j - 1], trsm[i][j]);
    }
  return g;
}

void quantize_tile(std::span<double> tile, Precision p, ConversionCounters* counters) {
  switch (p) {
    case Precision::kDouble:
      return;
    case Precision::kSingle:
      for (double& v : tile) v = static_cast<double>(static_cast<float>(v));
      if (counters) counters->demotions_sp += static_cast<std::int64_t>(tile.size());
      return;
    case Precision::kHalf: {
      long long sat = 0;
      for (double& v : tile) v = detail::quantize_half(v, &sat);
      if (counters) {
        counters->demotions_hp += static_cast<std::int64_t>(tile.size());
        counters->half_saturations += sat;
      }
      return;
    }
  }
}

namespace {

// Unblocked lower Cholesky of one diagonal tile; zeroes the strict upper part.
void potrf_tile(std::span<double> a, int b, int tile_index) {
  for (int c = 0; c < b; ++c) {
    double pivot = a[static_cast<std::size_t>(c) * b + c];
    for (int k = 0; k < c; ++k) {
      double v = a[static_cast<std::size_t>(c) * b + k];
      pivot -= v * v;
    }
    if (!(pivot > 0.0))
      throw NotPositiveDefiniteError(tile_index, "diagonal tile " + std::to_string(tile_index) +
                                                     " has a non-positive pivot at column " +
                                                     std::to_string(c));
    double l = std::sqrt(pivot);
    a[static_cast<std::size_t>(c) * b + c] = l;
    for (int r = c + 1; r < b; ++r) {
      double v = a[static_cast<std::size_t>(r) * b + c];
      for (int k = 0; k < c; ++k)
        v -= a[static_cast<std::size_t>(r) * b + k] * a[static_cast<std::size_t>(c) * b + k];
      a[static_cast<std::size_t>(r) * b + c] = v / l;
    }
  }
  for (int r = 0; r < b; ++r)
    for (int c = r + 1; c < b; ++c) a[static_cast<std::size_t>(r) * b + c] = 0.0;
}

struct Scheduler {
  const TaskGraph& graph;
  TiledMatrix& a;
  const PrecisionMap& pmap;
  int workers;

  std::mutex mu;
  std::condition_variable cv;
  // Min-heap on (k, kind, i, j): earlier elimination steps first, factor
  // tasks ahead of updates within a step.
  using Key = std::tuple<int, int, int, int, std::int32_t>;
  std::priority_queue<Key, std::vector<Key>, std::greater<Key>> ready;
  std::vector<std::int32_t> indegree;
  std::size_t done = 0;
  bool abort = false;
  std::exception_ptr error;
  ConversionCounters counters;

  Scheduler(const TaskGraph& g, TiledMatrix& m, const PrecisionMap& p, int w)
      : graph(g), a(m), pmap(p), workers(w), indegree(g.indegree) {
    for (std::size_t t = 0; t < graph.size(); ++t)
      if (indegree[t] == 0) push(static_cast<std::int32_t>(t));
  }

  void push(std::int32_t t) {
    const CholTask& task = graph.tasks[t];
    ready.emplace(task.k, kind_rank(task.kind), task.i, task.j, t);
  }

  void run_task(std::int32_t id, ConversionCounters& local) {
    const CholTask& t = graph.tasks[id];
    const int b_i = a.tile_rows(t.i);
    const int b_j = a.tile_rows(t.j);
    const int b_k = a.tile_rows(t.k);
    switch (t.kind) {
      case TaskKind::kPotrf:
        potrf_tile(a.tile(t.k, t.k), b_k, t.k);
        quantize_tile(a.tile(t.k, t.k), pmap.at(t.k, t.k), &local);
        break;
      case TaskKind::kTrsm: {
        MapMat x(a.tile(t.i, t.k).data(), b_i, b_k);
        ConstMapMat l(a.tile(t.k, t.k).data(), b_k, b_k);
        l.transpose().triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(x);
        quantize_tile(a.tile(t.i, t.k), pmap.at(t.i, t.k), &local);
        break;
      }
      case TaskKind::kSyrk: {
        MapMat c(a.tile(t.i, t.i).data(), b_i, b_i);
        ConstMapMat p(a.tile(t.i, t.k).data(), b_i, b_k);
        c.noalias() -= p * p.transpose();
        quantize_tile(a.tile(t.i, t.i), pmap.at(t.i, t.i), &local);
        break;
      }
      case TaskKind::kGemm: {
        MapMat c(a.tile(t.i, t.j).data(), b_i, b_j);
        ConstMapMat p(a.tile(t.i, t.k).data(), b_i, b_k);
        ConstMapMat q(a.tile(t.j, t.k).data(), b_j, b_k);
        c.noalias() -= p * q.transpose();
        quantize_tile(a.tile(t.i, t.j), pmap.at(t.i, t.j), &local);
        break;
      }
    }
  }

  void worker() {
    std::unique_lock<std::mutex> lock(mu);
    while (true) {
      cv.wait(lock, [this] { return abort || !ready.empty() || done == graph.size(); });
      if (abort || done == graph.size()) return;
      if (ready.empty()) continue;
      auto [k, kind, i, j, id] = ready.top();
      ready.pop();
      lock.unlock();
      ConversionCounters local;
      try {
        run_task(id, local);
      } catch (...) {
        lock.lock();
        if (!error) error = std::current_exception();
        abort = true;
        cv.notify_all();
        return;
      }
      lock.lock();
      counters.demotions_sp += local.demotions_sp;
      counters.demotions_hp += local.demotions_hp;
      counters.half_saturations += local.half_saturations;
      ++done;
      for (std::int32_t s : graph.successors[id])
        if (--indegree[s] == 0) push(s);
      cv.notify_all();
    }
  }
};

}  // namespace

FactorizationStats tiled_cholesky(TiledMatrix& a, const MpCholConfig& config) {
  config.validate();
  if (a.n() < 1) throw std::invalid_argument("matrix is empty");
  auto start = std::chrono::steady_clock::now();

  PrecisionMap pmap = assign_precisions(a.n_tiles(), config);
  TaskGraph graph = build_task_graph(a.n_tiles());
  Scheduler sched(graph, a, pmap, config.workers);

  // Inputs are stored in their assigned precision before any arithmetic.
  for (int i = 0; i < a.n_tiles(); ++i)
    for (int j = 0; j <= i; ++j)
      quantize_tile(a.tile(i, j), pmap.at(i, j), &sched.counters);

  if (config.workers == 1) {
    sched.worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(config.workers);
    for (int w = 0; w < config.workers; ++w) pool.emplace_back([&sched] { sched.worker(); });
    for (auto& th : pool) th.join();
  }
  if (sched.error) std::rethrow_exception(sched.error);
  if (sched.done != graph.size()) throw std::runtime_error("scheduler stalled before completion");

  FactorizationStats stats;
  stats.n = a.n();
  stats.tile_size = a.tile_size();
  stats.n_tiles = a.n_tiles();
  stats.workers = config.workers;
  stats.variant = config.variant;
  for (const CholTask& t : graph.tasks) switch (t.kind) {
      case TaskKind::kPotrf: ++stats.tasks_potrf; break;
      case TaskKind::kTrsm: ++stats.tasks_trsm; break;
      case TaskKind::kSyrk: ++stats.tasks_syrk; break;
      case TaskKind::kGemm: ++stats.tasks_gemm; break;
    }
  for (int i = 0; i < a.n_tiles(); ++i)
    for (int j = 0; j <= i; ++j) {
      std::int64_t elems = static_cast<std::int64_t>(a.tile_rows(i)) * a.tile_rows(j);
      switch (pmap.at(i, j)) {
        case Precision::kDouble:
          ++stats.tiles_dp;
          stats.bytes_dp += elems * 8;
          break;
        case Precision::kSingle:
          ++stats.tiles_sp;
          stats.bytes_sp += elems * 4;
          break;
        case Precision::kHalf:
          ++stats.tiles_hp;
          stats.bytes_hp += elems * 2;
          break;
      }
    }
  stats.conversions = sched.counters;
  stats.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

DenseCholResult tiled_cholesky_dense(std::span<const double> a, int n,
                                     const MpCholConfig& config) {
  TiledMatrix t = TiledMatrix::from_dense(a, n, config.tile_size);
  FactorizationStats stats = tiled_cholesky(t, config);
  return {t.to_dense_lower(), stats};
}

std::vector<double> make_spd_test_matrix(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("matrix size must be positive");
  detail::GaussianRng rng(seed);
  std::vector<double> d(n);
  for (double& v : d) v = std::exp(0.6 * rng.uniform() - 0.3);
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  constexpr double rho = 0.9;
  for (int i = 0; i < n; ++i) {
    a[static_cast<std::size_t>(i) * n + i] = d[i] * d[i] * 1.25;
    for (int j = 0; j < i; ++j) {
      double v = d[i] * d[j] * 0.25 * std::pow(rho, i - j);
      a[static_cast<std::size_t>(i) * n + j] = v;
      a[static_cast<std::size_t>(j) * n + i] = v;
    }
  }
  return a;
}

std::string FactorizationStats::to_json() const {
  nlohmann::json j;
  j["n"] = n;
  j["tile_size"] = tile_size;
  j["n_tiles"] = n_tiles;
  j["workers"] = workers;
  j["variant"] = to_string(variant);
  j["tasks"] = {{"potrf", tasks_potrf},
                {"trsm", tasks_trsm},
                {"syrk", tasks_syrk},
                {"gemm", tasks_gemm},
                {"total", total_tasks()}};
  j["tiles"] = {{"dp", tiles_dp}, {"sp", tiles_sp}, {"hp", tiles_hp}};
  j["bytes"] = {{"dp", bytes_dp}, {"sp", bytes_sp}, {"hp", bytes_hp},
                {"total", bytes_dp + bytes_sp + bytes_hp}};
  j["conversions"] = {{"to_sp", conversions.demotions_sp},
                      {"to_hp", conversions.demotions_hp},
                      {"half_saturations", conversions.half_saturations}};
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

}  // namespace sphemu
