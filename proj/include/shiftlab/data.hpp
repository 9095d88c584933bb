#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "shiftlab/common.hpp"
#include "shiftlab/normalization.hpp"

namespace shiftlab {

enum class Domain { Source, Target };

inline std::string to_string(Domain d) {
  return d == Domain::Source ? "source" : "target";
}

struct Sample {
  long id = 0;
  Vector x;
  int y = 0;
  Domain domain = Domain::Source;
};

struct SplitSet {
  std::vector<Sample> train, val, test;
};

/// A two-domain dataset after the 72/8/20 split.
struct Dataset {
  SplitSet source, target;
  int num_classes = 0;
  int dim = 0;
};

/// Synthetic label-preserving covariate shift: Gaussian class clusters on a
/// radius-3 circle in the first two coordinates; the target domain is the
/// same law rotated by `rotation` and translated.
struct ShiftSpec {
  int num_classes = 5;
  int dim = 2;
  int per_class = 55;  // samples per class per domain (before splitting)
  double rotation = 0.0;  // radians, applied to the first two coordinates
  Vector translation;     // size dim; empty means zero
  double sigma = 0.3;
  std::uint64_t seed = 7;
};

Dataset gen_shifted_gaussians(const ShiftSpec& spec);

/// Stratified per class, seeded shuffle; floor proportions with the leftover
/// assigned in order train, val, test. Requires >= 5 samples per class.
SplitSet split_72_8_20(const std::vector<Sample>& samples, std::uint64_t seed);

/// Schema: id,domain,label,x0..x{D-1}; all samples sorted by id.
void write_dataset_csv(const Dataset& data, const std::string& path);

/// Loads `root/{source|target}/{class_name}/*.{png,jpg}`. Class indices come
/// from sorted class-name order; ids from sorted path order. Both domains
/// must expose the same class set. Images are resized to
/// image_size x image_size and reduced to feature vectors.
struct FolderOptions {
  int image_size = 32;
  bool meanpool = false;  // false: flatten RGB/255; true: per-channel mean
  bool augment = false;   // random flip + scale jitter at ingestion
  std::uint64_t seed = 7;
  std::uint64_t split_seed = 7;
};

Dataset load_image_folder(const std::string& root, const FolderOptions& opts);

/// One training batch: row-major features, per-row labels (-1 = unlabeled)
/// and the source/target mask.
struct Batch {
  Matrix x;
  std::vector<int> labels;
  DomainMask mask;
};

struct BatchItem {
  long id = 0;
  const Vector* x = nullptr;
  int y = -1;  // -1 = unlabeled
};

/// Mixed two-domain batches: exactly floor(B*f) source rows then the
/// remainder target rows. Pools are shuffled independently per pass and the
/// shorter pool cycles with a reshuffle.
class MixedBatcher {
 public:
  MixedBatcher(std::vector<BatchItem> source, std::vector<BatchItem> target,
               int batch_size, double source_fraction, std::uint64_t seed);

  Batch next();
  /// ceil(max(n_src/b_src, n_tgt/b_tgt)): batches per epoch so the longer
  /// pool is covered at least once.
  int steps_per_epoch() const { return steps_per_epoch_; }
  int source_per_batch() const { return src_per_batch_; }

 private:
  struct Cursor {
    std::vector<int> order;
    std::size_t pos = 0;
  };
  int draw(Cursor& cur, std::size_t n);

  std::vector<BatchItem> source_, target_;
  int src_per_batch_, tgt_per_batch_, steps_per_epoch_;
  Cursor src_cur_, tgt_cur_;
  std::mt19937_64 rng_;
};

/// Single-domain batches for the baseline modes; per-epoch seeded shuffle,
/// a trailing batch of one sample is merged into the previous batch.
class SimpleBatcher {
 public:
  SimpleBatcher(std::vector<BatchItem> items, int batch_size, bool as_source,
                std::uint64_t seed);
  /// Batches of one full epoch.
  std::vector<Batch> epoch();
  int steps_per_epoch() const { return steps_per_epoch_; }

 private:
  std::vector<BatchItem> items_;
  int batch_size_;
  bool as_source_;
  int steps_per_epoch_;
  std::mt19937_64 rng_;
};

Matrix stack_features(const std::vector<const Vector*>& xs);
Matrix stack_features(const std::vector<Sample>& samples);

}  // namespace shiftlab
