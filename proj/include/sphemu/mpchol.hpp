#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphemu {

enum class Precision : std::uint8_t { kDouble = 0, kSingle = 1, kHalf = 2 };
enum class PrecisionVariant : std::uint8_t { kDp = 0, kDpSp = 1, kDpSpHp = 2, kDpHp = 3 };

std::string to_string(Precision p);
std::string to_string(PrecisionVariant v);
PrecisionVariant variant_from_string(const std::string& s);  // dp|dpsp|dpsphp|dphp

struct MpCholConfig {
  PrecisionVariant variant = PrecisionVariant::kDp;
  int tile_size = 128;
  // Tiles with |i - j| < band_width_dp stay in double precision.
  int band_width_dp = 1;
  // Fraction of off-band tiles kept in single precision under kDpSpHp.
  double sp_fraction = 0.05;
  int workers = 1;

  void validate() const;
};

// Storage precision per lower-triangular tile, packed by i*(i+1)/2 + j.
struct PrecisionMap {
  int n_tiles = 0;
  std::vector<Precision> tiles;

  Precision at(int i, int j) const { return tiles[static_cast<std::size_t>(i) * (i + 1) / 2 + j]; }
  std::int64_t count(Precision p) const;
};

// Band tiles are double; under kDpSpHp the ceil(sp_fraction * off_band)
// off-band tiles nearest the band (ties to the smaller row) are single and
// the rest half; under kDpHp all off-band tiles are half.
PrecisionMap assign_precisions(int n_tiles, const MpCholConfig& config);

// Lower-triangular tiled storage. Tiles are row-major, held as doubles; the
// factorization quantizes each tile to its assigned precision after every
// write so the stored values always fit the storage format.
class TiledMatrix {
 public:
  TiledMatrix() = default;
  TiledMatrix(int n, int tile_size);

  // Reads the lower triangle of a dense row-major symmetric matrix.
  static TiledMatrix from_dense(std::span<const double> a, int n, int tile_size);
  // Dense lower-triangular matrix, upper part zero.
  std::vector<double> to_dense_lower() const;

  int n() const { return n_; }
  int tile_size() const { return tile_size_; }
  int n_tiles() const { return n_tiles_; }
  int tile_rows(int i) const;  // trailing tile may be ragged

  std::span<double> tile(int i, int j);
  std::span<const double> tile(int i, int j) const;

 private:
  int n_ = 0;
  int tile_size_ = 0;
  int n_tiles_ = 0;
  std::vector<std::size_t> offset_;
  std::vector<double> data_;
};

enum class TaskKind : std::uint8_t { kPotrf = 0, kTrsm = 1, kSyrk = 2, kGemm = 3 };

struct CholTask {
  TaskKind kind;
  int i = 0;  // block row of the written tile
  int j = 0;  // block col of the written tile
  int k = 0;  // elimination step
};

// Dependency DAG over the right-looking tile algorithm. Update chains for a
// given output tile are serialized in k so the accumulation order does not
// depend on the schedule.
struct TaskGraph {
  std::vector<CholTask> tasks;
  std::vector<std::vector<std::int32_t>> successors;
  std::vector<std::int32_t> indegree;

  std::size_t size() const { return tasks.size(); }
};

TaskGraph build_task_graph(int n_tiles);

struct ConversionCounters {
  std::int64_t demotions_sp = 0;     // elements stored through float
  std::int64_t demotions_hp = 0;     // elements stored through binary16
  std::int64_t half_saturations = 0; // elements clamped to +-65504
};

// Rounds every element to the storage precision in place.
void quantize_tile(std::span<double> tile, Precision p, ConversionCounters* counters);

struct FactorizationStats {
  int n = 0;
  int tile_size = 0;
  int n_tiles = 0;
  int workers = 0;
  PrecisionVariant variant = PrecisionVariant::kDp;
  std::int64_t tasks_potrf = 0, tasks_trsm = 0, tasks_syrk = 0, tasks_gemm = 0;
  std::int64_t tiles_dp = 0, tiles_sp = 0, tiles_hp = 0;
  std::int64_t bytes_dp = 0, bytes_sp = 0, bytes_hp = 0;  // stored footprint
  ConversionCounters conversions;
  double wall_seconds = 0.0;

  std::int64_t total_tasks() const {
    return tasks_potrf + tasks_trsm + tasks_syrk + tasks_gemm;
  }
  std::string to_json() const;
};

class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(int tile_index, const std::string& what)
      : std::runtime_error(what), tile_index_(tile_index) {}
  int tile_index() const { return tile_index_; }

 private:
  int tile_index_ = 0;
};

// In-place lower Cholesky of the tiled matrix. Kernels compute in double and
// store through the tile's assigned precision. Throws
// NotPositiveDefiniteError when a diagonal pivot is not positive.
FactorizationStats tiled_cholesky(TiledMatrix& a, const MpCholConfig& config);

struct DenseCholResult {
  std::vector<double> factor;  // dense lower triangular
  FactorizationStats stats;
};

DenseCholResult tiled_cholesky_dense(std::span<const double> a, int n,
                                     const MpCholConfig& config);

// Well-conditioned covariance-like benchmark input: identity plus a quarter
// of the exponential correlation 0.9^|i-j|, under a random diagonal
// congruence drawn from the seed. Dense row-major, exactly symmetric.
std::vector<double> make_spd_test_matrix(int n, std::uint64_t seed);

}  // namespace sphemu
