#include "shiftlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "shiftlab/io_util.hpp"

namespace shiftlab {

namespace {

void validate_spec(const ShiftSpec& spec) {
  if (spec.num_classes < 2) throw ConfigError("ShiftSpec: num_classes must be >= 2");
  if (spec.dim < 2) throw ConfigError("ShiftSpec: dim must be >= 2");
  if (spec.sigma <= 0.0) throw ConfigError("ShiftSpec: sigma must be positive");
  if (spec.per_class < 5) throw ConfigError("ShiftSpec: per_class must be >= 5");
  if (spec.translation.size() != 0 && spec.translation.size() != spec.dim) {
    throw ConfigError("ShiftSpec: translation length " +
                      std::to_string(spec.translation.size()) +
                      " does not match dim " + std::to_string(spec.dim));
  }
}

}  // namespace

Dataset gen_shifted_gaussians(const ShiftSpec& spec) {
  validate_spec(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.sigma);

  std::vector<Vector> means(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / spec.num_classes;
    means[c] = Vector::Zero(spec.dim);
    means[c](0) = 3.0 * std::cos(angle);
    means[c](1) = 3.0 * std::sin(angle);
  }
  Vector shift = spec.translation.size() == spec.dim
                     ? spec.translation
                     : Vector(Vector::Zero(spec.dim));
  const double ct = std::cos(spec.rotation);
  const double st = std::sin(spec.rotation);

  long next_id = 0;
  auto draw = [&](int c) {
    Vector x = means[c];
    for (int d = 0; d < spec.dim; ++d) x(d) += noise(rng);
    return x;
  };

  std::vector<Sample> source, target;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      source.push_back({next_id++, draw(c), c, Domain::Source});
    }
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      Vector x = draw(c);
      const double x0 = x(0), x1 = x(1);
      x(0) = ct * x0 - st * x1;
      x(1) = st * x0 + ct * x1;
      x += shift;
      target.push_back({next_id++, std::move(x), c, Domain::Target});
    }
  }

  Dataset data;
  data.num_classes = spec.num_classes;
  data.dim = spec.dim;
  data.source = split_72_8_20(source, mix_seed(spec.seed, 11));
  data.target = split_72_8_20(target, mix_seed(spec.seed, 22));
  return data;
}

SplitSet split_72_8_20(const std::vector<Sample>& samples, std::uint64_t seed) {
  std::unordered_map<int, std::vector<const Sample*>> by_class;
  int max_class = -1;
  for (const Sample& s : samples) {
    by_class[s.y].push_back(&s);
    max_class = std::max(max_class, s.y);
  }
  std::mt19937_64 rng(seed);
  SplitSet out;
  for (int c = 0; c <= max_class; ++c) {
    auto it = by_class.find(c);
    if (it == by_class.end()) continue;
    auto& members = it->second;
    const int n = static_cast<int>(members.size());
    if (n < 5) {
      throw DataError("split_72_8_20: class " + std::to_string(c) + " has " +
                      std::to_string(n) + " samples, need >= 5");
    }
    std::shuffle(members.begin(), members.end(), rng);
    // Exact integer proportions; leftovers go train, then val, then test.
    int counts[3] = {72 * n / 100, 8 * n / 100, 20 * n / 100};
    int leftover = n - (counts[0] + counts[1] + counts[2]);
    for (int i = 0; leftover > 0; i = (i + 1) % 3, --leftover) ++counts[i];
    int pos = 0;
    for (int i = 0; i < counts[0]; ++i) out.train.push_back(*members[pos++]);
    for (int i = 0; i < counts[1]; ++i) out.val.push_back(*members[pos++]);
    for (int i = 0; i < counts[2]; ++i) out.test.push_back(*members[pos++]);
  }
  return out;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::vector<const Sample*> all;
  for (const SplitSet* set : {&data.source, &data.target}) {
    for (const auto* part : {&set->train, &set->val, &set->test}) {
      for (const Sample& s : *part) all.push_back(&s);
    }
  }
  std::sort(all.begin(), all.end(),
            [](const Sample* a, const Sample* b) { return a->id < b->id; });

  std::string text = "id,domain,label";
  for (int d = 0; d < data.dim; ++d) text += ",x" + std::to_string(d);
  text += "\n";
  char buf[64];
  for (const Sample* s : all) {
    text += std::to_string(s->id) + "," + to_string(s->domain) + "," +
            std::to_string(s->y);
    for (int d = 0; d < data.dim; ++d) {
      std::snprintf(buf, sizeof(buf), ",%.17g", s->x(d));
      text += buf;
    }
    text += "\n";
  }
  atomic_write_file(path, text);
}

MixedBatcher::MixedBatcher(std::vector<BatchItem> source,
                           std::vector<BatchItem> target, int batch_size,
                           double source_fraction, std::uint64_t seed)
    : source_(std::move(source)), target_(std::move(target)), rng_(seed) {
  if (source_.empty() || target_.empty()) {
    throw ConfigError("mixed batches need nonempty source and target pools");
  }
  src_per_batch_ = static_cast<int>(batch_size * source_fraction);
  tgt_per_batch_ = batch_size - src_per_batch_;
  if (src_per_batch_ < 2 || tgt_per_batch_ < 2) {
    throw ConfigError("mixed batches need >= 2 rows per domain; batch_size=" +
                      std::to_string(batch_size) + " source_fraction=" +
                      std::to_string(source_fraction));
  }
  const double src_steps =
      static_cast<double>(source_.size()) / src_per_batch_;
  const double tgt_steps =
      static_cast<double>(target_.size()) / tgt_per_batch_;
  steps_per_epoch_ = static_cast<int>(std::ceil(std::max(src_steps, tgt_steps)));

  auto init_cursor = [this](Cursor& cur, std::size_t n) {
    cur.order.resize(n);
    std::iota(cur.order.begin(), cur.order.end(), 0);
    std::shuffle(cur.order.begin(), cur.order.end(), rng_);
    cur.pos = 0;
  };
  init_cursor(src_cur_, source_.size());
  init_cursor(tgt_cur_, target_.size());
}

int MixedBatcher::draw(Cursor& cur, std::size_t n) {
  if (cur.pos == cur.order.size()) {
    std::shuffle(cur.order.begin(), cur.order.end(), rng_);
    cur.pos = 0;
  }
  (void)n;
  return cur.order[cur.pos++];
}

Batch MixedBatcher::next() {
  Batch batch;
  const int rows = src_per_batch_ + tgt_per_batch_;
  batch.labels.reserve(rows);
  batch.mask.is_source.reserve(rows);
  std::vector<const Vector*> xs;
  xs.reserve(rows);
  for (int i = 0; i < src_per_batch_; ++i) {
    const BatchItem& item = source_[draw(src_cur_, source_.size())];
    xs.push_back(item.x);
    batch.labels.push_back(item.y);
    batch.mask.is_source.push_back(true);
  }
  for (int i = 0; i < tgt_per_batch_; ++i) {
    const BatchItem& item = target_[draw(tgt_cur_, target_.size())];
    xs.push_back(item.x);
    batch.labels.push_back(item.y);
    batch.mask.is_source.push_back(false);
  }
  batch.x = stack_features(xs);
  return batch;
}

SimpleBatcher::SimpleBatcher(std::vector<BatchItem> items, int batch_size,
                             bool as_source, std::uint64_t seed)
    : items_(std::move(items)),
      batch_size_(batch_size),
      as_source_(as_source),
      rng_(seed) {
  if (items_.size() < 2) {
    throw ConfigError("single-domain batches need >= 2 samples");
  }
  if (batch_size_ < 2) throw ConfigError("batch_size must be >= 2");
  steps_per_epoch_ = static_cast<int>(
      (items_.size() + batch_size_ - 1) / batch_size_);
  // A trailing singleton folds into the previous batch.
  if (steps_per_epoch_ > 1 && items_.size() % batch_size_ == 1) {
    --steps_per_epoch_;
  }
}

std::vector<Batch> SimpleBatcher::epoch() {
  std::vector<int> order(items_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  std::vector<Batch> batches;
  std::size_t pos = 0;
  for (int step = 0; step < steps_per_epoch_; ++step) {
    std::size_t take = std::min<std::size_t>(batch_size_, order.size() - pos);
    if (step == steps_per_epoch_ - 1) take = order.size() - pos;  // absorb tail
    Batch batch;
    std::vector<const Vector*> xs;
    for (std::size_t i = 0; i < take; ++i) {
      const BatchItem& item = items_[order[pos++]];
      xs.push_back(item.x);
      batch.labels.push_back(item.y);
      batch.mask.is_source.push_back(as_source_);
    }
    batch.x = stack_features(xs);
    batches.push_back(std::move(batch));
  }
  return batches;
}

Matrix stack_features(const std::vector<const Vector*>& xs) {
  if (xs.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(xs.size()), xs[0]->size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = xs[i]->transpose();
  }
  return m;
}

Matrix stack_features(const std::vector<Sample>& samples) {
  std::vector<const Vector*> xs;
  xs.reserve(samples.size());
  for (const Sample& s : samples) xs.push_back(&s.x);
  return stack_features(xs);
}

}  // namespace shiftlab
