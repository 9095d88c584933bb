#pragma once

#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "shiftlab/data.hpp"

namespace shiftlab {

/// Labeled-source / labeled-target / unlabeled-target sample sets with stable
/// ids. Unlabeled items keep their ground-truth label hidden; revealing one
/// goes through oracle_label(), which counts every access so tests can audit
/// that no training path reads target labels it should not see.
class Pool {
 public:
  struct Item {
    long id = 0;
    Vector x;
    int y = -1;  // -1 while unlabeled
  };

  Pool() = default;

  /// Source train labeled, target train unlabeled (labels hidden).
  static Pool uada(const Dataset& data);
  /// Only the labeled source train set.
  static Pool source_baseline(const Dataset& data);
  /// Target train fully labeled: the supervised upper bound.
  static Pool target_baseline(const Dataset& data);

  const std::vector<Item>& labeled_src() const { return labeled_src_; }
  const std::vector<Item>& labeled_tgt() const { return labeled_tgt_; }
  const std::vector<Item>& unlabeled_tgt() const { return unlabeled_tgt_; }

  /// Reveals the hidden ground-truth label of an unlabeled target sample and
  /// bumps the access counter. Errors if the id is unknown or already labeled.
  int oracle_label(long id);

  /// oracle_label + move the sample from unlabeled_tgt to labeled_tgt.
  void annotate(long id);

  long oracle_reads() const { return oracle_reads_; }

 private:
  std::vector<Item> labeled_src_, labeled_tgt_, unlabeled_tgt_;
  std::unordered_map<long, int> hidden_;
  std::unordered_set<long> unlabeled_ids_;
  long oracle_reads_ = 0;
};

}  // namespace shiftlab
