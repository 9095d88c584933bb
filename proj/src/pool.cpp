#include "shiftlab/pool.hpp"

#include <algorithm>

namespace shiftlab {

Pool Pool::uada(const Dataset& data) {
  Pool pool;
  for (const Sample& s : data.source.train) {
    pool.labeled_src_.push_back({s.id, s.x, s.y});
  }
  for (const Sample& s : data.target.train) {
    pool.unlabeled_tgt_.push_back({s.id, s.x, -1});
    pool.hidden_[s.id] = s.y;
    pool.unlabeled_ids_.insert(s.id);
  }
  return pool;
}

Pool Pool::source_baseline(const Dataset& data) {
  Pool pool;
  for (const Sample& s : data.source.train) {
    pool.labeled_src_.push_back({s.id, s.x, s.y});
  }
  return pool;
}

Pool Pool::target_baseline(const Dataset& data) {
  Pool pool;
  for (const Sample& s : data.target.train) {
    pool.labeled_tgt_.push_back({s.id, s.x, s.y});
  }
  return pool;
}

int Pool::oracle_label(long id) {
  if (!unlabeled_ids_.count(id)) {
    throw DataError("oracle_label: id " + std::to_string(id) +
                    " is not in the unlabeled target pool");
  }
  ++oracle_reads_;
  return hidden_.at(id);
}

void Pool::annotate(long id) {
  const int label = oracle_label(id);
  auto it = std::find_if(unlabeled_tgt_.begin(), unlabeled_tgt_.end(),
                         [id](const Item& item) { return item.id == id; });
  labeled_tgt_.push_back({id, std::move(it->x), label});
  unlabeled_tgt_.erase(it);
  unlabeled_ids_.erase(id);
}

}  // namespace shiftlab
