#include <doctest.h>

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "shiftlab/data.hpp"
#include "shiftlab/io_util.hpp"
#include "shiftlab/pool.hpp"

using namespace shiftlab;

namespace {

std::vector<Sample> uniform_class(int n, int y) {
  std::vector<Sample> samples;
  for (int i = 0; i < n; ++i) {
    samples.push_back({i + y * 100000, Vector::Zero(2), y, Domain::Source});
  }
  return samples;
}

ShiftSpec small_spec() {
  ShiftSpec spec;
  spec.num_classes = 5;
  spec.dim = 2;
  spec.per_class = 40;
  spec.sigma = 0.3;
  spec.rotation = std::acos(-1.0) / 4.0;
  spec.seed = 99;
  return spec;
}

// Nearest-class-mean classifier fit on one split, applied to another.
double nearest_mean_accuracy(const std::vector<Sample>& fit,
                             const std::vector<Sample>& eval, int classes) {
  std::vector<Vector> mean(classes, Vector::Zero(fit[0].x.size()));
  std::vector<int> count(classes, 0);
  for (const Sample& s : fit) {
    mean[s.y] += s.x;
    ++count[s.y];
  }
  for (int c = 0; c < classes; ++c) mean[c] /= count[c];
  int hits = 0;
  for (const Sample& s : eval) {
    int best = 0;
    double best_d = (s.x - mean[0]).squaredNorm();
    for (int c = 1; c < classes; ++c) {
      const double d = (s.x - mean[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += best == s.y;
  }
  return static_cast<double>(hits) / eval.size();
}

}  // namespace

TEST_CASE("split_72_8_20 exact proportions") {
  SplitSet s100 = split_72_8_20(uniform_class(100, 0), 1);
  CHECK(s100.train.size() == 72);
  CHECK(s100.val.size() == 8);
  CHECK(s100.test.size() == 20);

  // 37 per class: floor gives 26/2/7, leftovers go train then val
  SplitSet s37 = split_72_8_20(uniform_class(37, 0), 1);
  CHECK(s37.train.size() == 27);
  CHECK(s37.val.size() == 3);
  CHECK(s37.test.size() == 7);
}

TEST_CASE("split_72_8_20 partitions exactly and stratifies") {
  std::vector<Sample> samples;
  long id = 0;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 20 + c * 7; ++i) {
      samples.push_back({id++, Vector::Zero(2), c, Domain::Source});
    }
  }
  SplitSet split = split_72_8_20(samples, 42);
  std::set<long> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const Sample& s : *part) CHECK(seen.insert(s.id).second);
  }
  CHECK(seen.size() == samples.size());

  // per-class train share within one sample of 72%
  for (int c = 0; c < 3; ++c) {
    const int total = 20 + c * 7;
    long got = std::count_if(split.train.begin(), split.train.end(),
                             [c](const Sample& s) { return s.y == c; });
    CHECK(std::abs(got - std::lround(0.72 * total)) <= 1);
  }
}

TEST_CASE("split_72_8_20 rejects tiny classes naming them") {
  std::vector<Sample> samples = uniform_class(10, 0);
  auto few = uniform_class(4, 1);
  samples.insert(samples.end(), few.begin(), few.end());
  CHECK_THROWS_WITH_AS(split_72_8_20(samples, 1), doctest::Contains("class 1"),
                       DataError);
}

TEST_CASE("gen_shifted_gaussians is deterministic and label-preserving") {
  ShiftSpec spec = small_spec();
  Dataset a = gen_shifted_gaussians(spec);
  Dataset b = gen_shifted_gaussians(spec);
  REQUIRE(a.source.train.size() == b.source.train.size());
  for (std::size_t i = 0; i < a.source.train.size(); ++i) {
    CHECK(a.source.train[i].id == b.source.train[i].id);
    CHECK(a.source.train[i].x == b.source.train[i].x);
  }

  // label marginals identical across domains
  std::vector<int> src_count(spec.num_classes, 0), tgt_count(spec.num_classes, 0);
  for (const auto* part : {&a.source.train, &a.source.val, &a.source.test}) {
    for (const Sample& s : *part) ++src_count[s.y];
  }
  for (const auto* part : {&a.target.train, &a.target.val, &a.target.test}) {
    for (const Sample& s : *part) ++tgt_count[s.y];
  }
  CHECK(src_count == tgt_count);
}

TEST_CASE("gen_shifted_gaussians theta=0 gives identically distributed domains") {
  ShiftSpec spec = small_spec();
  spec.rotation = 0.0;
  spec.per_class = 200;
  Dataset data = gen_shifted_gaussians(spec);
  // two seeded draws of the same law: class means agree to sampling noise
  for (int c = 0; c < spec.num_classes; ++c) {
    Vector ms = Vector::Zero(2), mt = Vector::Zero(2);
    int ns = 0, nt = 0;
    for (const Sample& s : data.source.train) {
      if (s.y == c) {
        ms += s.x;
        ++ns;
      }
    }
    for (const Sample& s : data.target.train) {
      if (s.y == c) {
        mt += s.x;
        ++nt;
      }
    }
    CHECK((ms / ns - mt / nt).norm() < 0.2);  // sigma=0.3, n~144
  }
}

TEST_CASE("gen_shifted_gaussians within-domain nearest-mean oracle") {
  Dataset data = gen_shifted_gaussians(small_spec());
  CHECK(nearest_mean_accuracy(data.source.train, data.source.test, 5) >= 0.95);
  CHECK(nearest_mean_accuracy(data.target.train, data.target.test, 5) >= 0.95);
}

TEST_CASE("gen_shifted_gaussians rejects invalid specs") {
  ShiftSpec bad = small_spec();
  bad.sigma = 0.0;
  CHECK_THROWS_AS(gen_shifted_gaussians(bad), ConfigError);
  ShiftSpec bad2 = small_spec();
  bad2.num_classes = 1;
  CHECK_THROWS_AS(gen_shifted_gaussians(bad2), ConfigError);
}

TEST_CASE("dataset csv export schema") {
  ShiftSpec spec = small_spec();
  spec.per_class = 5;
  spec.num_classes = 2;
  Dataset data = gen_shifted_gaussians(spec);
  const std::string path = "test_dataset_export.csv";
  write_dataset_csv(data, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "id,domain,label,x0,x1");
  int rows = 0;
  std::string line;
  long prev_id = -1;
  while (std::getline(in, line)) {
    ++rows;
    const long id = std::stol(line.substr(0, line.find(',')));
    CHECK(id > prev_id);  // sorted by id
    prev_id = id;
  }
  CHECK(rows == 20);  // 2 classes x 5 x 2 domains
  std::remove(path.c_str());
}

TEST_CASE("mixed batches hold the exact domain composition") {
  std::vector<Vector> store;
  for (int i = 0; i < 50; ++i) store.push_back(Vector::Constant(2, i));
  std::vector<BatchItem> src, tgt;
  for (int i = 0; i < 40; ++i) src.push_back({i, &store[i], 0});
  for (int i = 40; i < 50; ++i) tgt.push_back({i, &store[i], -1});

  MixedBatcher batcher(src, tgt, 32, 0.5, 7);
  CHECK(batcher.source_per_batch() == 16);
  Batch batch = batcher.next();
  CHECK(batch.x.rows() == 32);
  CHECK(batch.mask.source_rows().size() == 16);
  CHECK(batch.mask.target_rows().size() == 16);

  // source is the longer pool: one epoch covers every source sample
  MixedBatcher cover(src, tgt, 8, 0.5, 7);
  std::set<double> seen;
  for (int s = 0; s < cover.steps_per_epoch(); ++s) {
    Batch b = cover.next();
    for (int r : b.mask.source_rows()) seen.insert(b.x(r, 0));
  }
  CHECK(seen.size() == 40);
}

TEST_CASE("mixed batches reject starving a domain") {
  std::vector<Vector> store{Vector::Zero(2), Vector::Zero(2)};
  std::vector<BatchItem> src{{0, &store[0], 0}}, tgt{{1, &store[1], -1}};
  CHECK_THROWS_AS(MixedBatcher(src, tgt, 4, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(MixedBatcher(src, tgt, 3, 0.5, 1), ConfigError);
  CHECK_THROWS_AS(MixedBatcher(src, {}, 8, 0.5, 1), ConfigError);
}

TEST_CASE("simple batcher merges a trailing singleton") {
  std::vector<Vector> store;
  for (int i = 0; i < 9; ++i) store.push_back(Vector::Constant(1, i));
  std::vector<BatchItem> items;
  for (int i = 0; i < 9; ++i) items.push_back({i, &store[i], 0});
  SimpleBatcher batcher(items, 4, true, 3);
  auto batches = batcher.epoch();
  REQUIRE(batches.size() == 2);
  CHECK(batches[0].x.rows() == 4);
  CHECK(batches[1].x.rows() == 5);  // 4 + the trailing singleton
}

TEST_CASE("pool oracle counts and guards annotations") {
  Dataset data = gen_shifted_gaussians(small_spec());
  Pool pool = Pool::uada(data);
  const std::size_t unlabeled0 = pool.unlabeled_tgt().size();
  CHECK(pool.oracle_reads() == 0);
  CHECK(pool.labeled_tgt().empty());

  const long id = pool.unlabeled_tgt().front().id;
  int truth = -1;
  for (const Sample& s : data.target.train) {
    if (s.id == id) truth = s.y;
  }
  pool.annotate(id);
  CHECK(pool.oracle_reads() == 1);
  CHECK(pool.labeled_tgt().size() == 1);
  CHECK(pool.labeled_tgt().front().y == truth);  // oracle-label integrity
  CHECK(pool.unlabeled_tgt().size() == unlabeled0 - 1);

  CHECK_THROWS_AS(pool.oracle_label(id), DataError);  // no longer unlabeled
  CHECK_THROWS_AS(pool.oracle_label(-555), DataError);
  CHECK(pool.oracle_reads() == 1);  // failed queries do not count
}

TEST_CASE("image folder loader roundtrip") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "shiftlab_imgtest";
  fs::remove_all(root);
  for (const char* domain : {"source", "target"}) {
    for (const char* cls : {"daisy", "rose"}) {
      fs::create_directories(root / domain / cls);
      for (int i = 0; i < 6; ++i) {
        cv::Mat img(10, 10, CV_8UC3,
                    cv::Scalar(i * 20, cls[0] == 'd' ? 200 : 30, 90));
        cv::imwrite((root / domain / cls /
                     ("img" + std::to_string(i) + ".png")).string(),
                    img);
      }
    }
  }

  FolderOptions opts;
  opts.image_size = 4;
  Dataset data = load_image_folder(root.string(), opts);
  CHECK(data.num_classes == 2);
  CHECK(data.dim == 4 * 4 * 3);
  const std::size_t total = data.source.train.size() + data.source.val.size() +
                            data.source.test.size();
  CHECK(total == 12);

  // deterministic: same tree loads to identical ids and labels
  Dataset again = load_image_folder(root.string(), opts);
  CHECK(again.source.train.size() == data.source.train.size());
  for (std::size_t i = 0; i < data.source.train.size(); ++i) {
    CHECK(again.source.train[i].id == data.source.train[i].id);
    CHECK(again.source.train[i].y == data.source.train[i].y);
  }

  // meanpool reduces to 3 features
  FolderOptions pooled = opts;
  pooled.meanpool = true;
  CHECK(load_image_folder(root.string(), pooled).dim == 3);

  // augmentation keeps counts and labels
  FolderOptions aug = opts;
  aug.augment = true;
  Dataset augmented = load_image_folder(root.string(), aug);
  CHECK(augmented.source.train.size() == data.source.train.size());
  for (std::size_t i = 0; i < data.source.train.size(); ++i) {
    CHECK(augmented.source.train[i].y == data.source.train[i].y);
  }

  // category shift: drop one class from target
  fs::remove_all(root / "target" / "rose");
  CHECK_THROWS_WITH_AS(load_image_folder(root.string(), opts),
                       doctest::Contains("category shift"), DataError);

  fs::remove_all(root / "target");
  fs::create_directories(root / "target");
  CHECK_THROWS_AS(load_image_folder(root.string(), opts), DataError);

  const fs::path empty_root = fs::temp_directory_path() / "shiftlab_empty";
  fs::remove_all(empty_root);
  fs::create_directories(empty_root / "source");
  fs::create_directories(empty_root / "target");
  CHECK_THROWS_AS(load_image_folder(empty_root.string(), opts), DataError);

  fs::remove_all(root);
  fs::remove_all(empty_root);
}
