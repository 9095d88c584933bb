#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "shiftlab/data.hpp"

namespace shiftlab {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// class name -> sorted file list
std::map<std::string, std::vector<fs::path>> scan_domain(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError("load_image_folder: missing domain directory " +
                    dir.string());
  }
  std::map<std::string, std::vector<fs::path>> classes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    std::vector<fs::path> files;
    for (const auto& file : fs::directory_iterator(entry.path())) {
      if (file.is_regular_file() && is_image_file(file.path())) {
        files.push_back(file.path());
      }
    }
    std::sort(files.begin(), files.end());
    classes[entry.path().filename().string()] = std::move(files);
  }
  return classes;
}

Vector image_features(const cv::Mat& img, const FolderOptions& opts,
                      std::mt19937_64& aug_rng) {
  cv::Mat work = img;
  if (opts.augment) {
    std::uniform_real_distribution<double> scale_jitter(0.8, 1.25);
    std::bernoulli_distribution flip_coin(0.5);
    const double factor = scale_jitter(aug_rng);
    const bool flip = flip_coin(aug_rng);
    const int scaled = std::max(2, static_cast<int>(std::lround(
                                       opts.image_size * factor)));
    cv::resize(work, work, cv::Size(scaled, scaled), 0, 0, cv::INTER_AREA);
    if (flip) cv::flip(work, work, 1);
    if (scaled > opts.image_size) {
      const int off = (scaled - opts.image_size) / 2;
      work = work(cv::Rect(off, off, opts.image_size, opts.image_size)).clone();
    } else if (scaled < opts.image_size) {
      const int pad = opts.image_size - scaled;
      cv::copyMakeBorder(work, work, pad / 2, pad - pad / 2, pad / 2,
                         pad - pad / 2, cv::BORDER_REPLICATE);
    }
  }
  cv::resize(work, work, cv::Size(opts.image_size, opts.image_size), 0, 0,
             cv::INTER_AREA);
  if (opts.meanpool) {
    const cv::Scalar mean = cv::mean(work);
    Vector x(3);
    for (int c = 0; c < 3; ++c) x(c) = mean[c] / 255.0;
    return x;
  }
  Vector x(static_cast<Eigen::Index>(work.rows) * work.cols * 3);
  Eigen::Index pos = 0;
  for (int r = 0; r < work.rows; ++r) {
    for (int c = 0; c < work.cols; ++c) {
      const cv::Vec3b px = work.at<cv::Vec3b>(r, c);
      x(pos++) = px[0] / 255.0;
      x(pos++) = px[1] / 255.0;
      x(pos++) = px[2] / 255.0;
    }
  }
  return x;
}

}  // namespace

Dataset load_image_folder(const std::string& root, const FolderOptions& opts) {
  if (opts.image_size < 2) {
    throw ConfigError("load_image_folder: image_size must be >= 2");
  }
  const fs::path base(root);
  if (!fs::is_directory(base)) {
    throw DataError("load_image_folder: root " + root + " is not a directory");
  }
  auto src_classes = scan_domain(base / "source");
  auto tgt_classes = scan_domain(base / "target");

  // Same class set in both domains: no category shift.
  for (const auto& [name, files] : src_classes) {
    if (!tgt_classes.count(name)) {
      throw DataError("category shift: class " + name +
                      " present only in the source domain");
    }
  }
  for (const auto& [name, files] : tgt_classes) {
    if (!src_classes.count(name)) {
      throw DataError("category shift: class " + name +
                      " present only in the target domain");
    }
  }
  std::size_t total = 0;
  for (const auto& [name, files] : src_classes) total += files.size();
  for (const auto& [name, files] : tgt_classes) total += files.size();
  if (total == 0) {
    throw DataError("load_image_folder: empty dataset under " + root);
  }

  std::vector<std::string> class_names;
  for (const auto& [name, files] : src_classes) class_names.push_back(name);

  std::mt19937_64 aug_rng(mix_seed(opts.seed, 0xA06));
  long next_id = 0;
  Dataset data;
  data.num_classes = static_cast<int>(class_names.size());

  auto load_domain = [&](const std::map<std::string, std::vector<fs::path>>& classes,
                         Domain domain) {
    std::vector<Sample> samples;
    for (std::size_t c = 0; c < class_names.size(); ++c) {
      for (const fs::path& file : classes.at(class_names[c])) {
        cv::Mat img = cv::imread(file.string(), cv::IMREAD_COLOR);
        if (img.empty()) {
          throw IoError("load_image_folder: cannot decode " + file.string());
        }
        samples.push_back({next_id++, image_features(img, opts, aug_rng),
                           static_cast<int>(c), domain});
      }
    }
    return samples;
  };

  std::vector<Sample> source = load_domain(src_classes, Domain::Source);
  std::vector<Sample> target = load_domain(tgt_classes, Domain::Target);
  data.dim = static_cast<int>(source.empty() ? target[0].x.size()
                                             : source[0].x.size());
  data.source = split_72_8_20(source, mix_seed(opts.split_seed, 11));
  data.target = split_72_8_20(target, mix_seed(opts.split_seed, 22));
  return data;
}

}  // namespace shiftlab
