#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/pgm.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tensor.hpp"

namespace sparse_reptile {

enum class SourceKind { Blobs, Sinusoid, ImageDir };
enum class Split { MetaTrain, MetaTest };

inline const char* split_name(Split s) { return s == Split::MetaTrain ? "train" : "test"; }

/// Gaussian clusters around per-class centers drawn once in [-5, 5]^d.
struct BlobsParams {
  std::size_t classes = 20;
  std::size_t dim = 16;
  double noise_sigma = 1.0;
};

/// y = A sin(x + phase) with A, phase and x drawn uniformly per episode.
struct SinusoidParams {
  double amplitude_min = 0.1;
  double amplitude_max = 5.0;
  double phase_min = 0.0;
  double phase_max = std::numbers::pi;
  double x_min = -5.0;
  double x_max = 5.0;
};

/// One N-way K-shot task. Regression episodes hold K support and Q query points.
struct TaskEpisode {
  Tensor support_x;
  Targets support_y;
  Tensor query_x;
  Targets query_y;
  std::vector<std::size_t> class_ids;  // corpus class behind label i (classification)
  double amplitude = 0.0;              // sinusoid only
  double phase = 0.0;                  // sinusoid only

  [[nodiscard]] std::size_t support_size() const noexcept { return support_x.rows(); }
};

namespace detail {

struct BlobsData {
  BlobsParams params;
  Tensor centers;  // [C x d]
};

struct ImageClass {
  std::string name;
  std::vector<std::vector<double>> images;
};

struct ImageCorpus {
  std::filesystem::path root;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<ImageClass> classes;
};

}  // namespace detail

/// Immutable episode generator over one meta-split. Copies share the
/// underlying corpus.
class TaskSource {
 public:
  static TaskSource blobs(const BlobsParams& params, Rng& rng) {
    if (params.classes == 0 || params.dim == 0) {
      throw DomainError("blobs need at least one class and one input dimension");
    }
    if (!(params.noise_sigma > 0.0)) {
      throw DomainError("blobs noise_sigma must be positive");
    }
    auto data = std::make_shared<detail::BlobsData>();
    data->params = params;
    data->centers = Tensor({params.classes, params.dim});
    for (double& v : data->centers.data()) {
      v = rng.uniform(-5.0, 5.0);
    }
    TaskSource src(SourceKind::Blobs, Split::MetaTrain, params.dim);
    src.blobs_ = std::move(data);
    src.classes_ = iota(params.classes);
    return src;
  }

  static TaskSource sinusoid(const SinusoidParams& params = {}, Split split = Split::MetaTrain) {
    if (!(params.amplitude_min <= params.amplitude_max && params.phase_min <= params.phase_max &&
          params.x_min < params.x_max)) {
      throw DomainError("invalid sinusoid parameter ranges");
    }
    TaskSource src(SourceKind::Sinusoid, split, 1);
    src.sine_ = params;
    return src;
  }

  /// Loads one class per subdirectory of P5 images, classes ordered by name.
  static TaskSource image_dir(const std::filesystem::path& root, std::size_t min_images_per_class = 1) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) {
      throw IoError("image directory not found: " + root.string());
    }
    auto corpus = std::make_shared<detail::ImageCorpus>();
    corpus->root = root;
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory() && entry.path().filename().string().front() != '.') {
        class_dirs.push_back(entry.path());
      }
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) {
      throw IoError("image directory has no class subdirectories: " + root.string());
    }
    bool have_dims = false;
    for (const auto& dir : class_dirs) {
      detail::ImageClass cls;
      cls.name = dir.filename().string();
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename().string().front() != '.') {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const PgmImage img = read_pgm(f);
        if (!have_dims) {
          corpus->width = img.width;
          corpus->height = img.height;
          have_dims = true;
        } else if (img.width != corpus->width || img.height != corpus->height) {
          throw FormatError(FormatError::Kind::Malformed,
                            f.string() + ": image is " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + ", expected " +
                                std::to_string(corpus->width) + "x" + std::to_string(corpus->height));
        }
        cls.images.push_back(img.features());
      }
      if (cls.images.size() < std::max<std::size_t>(min_images_per_class, 1)) {
        throw DomainError("class '" + cls.name + "' has " + std::to_string(cls.images.size()) +
                          " images, need at least " +
                          std::to_string(std::max<std::size_t>(min_images_per_class, 1)));
      }
      corpus->classes.push_back(std::move(cls));
    }
    TaskSource src(SourceKind::ImageDir, Split::MetaTrain, corpus->width * corpus->height);
    src.classes_ = iota(corpus->classes.size());
    src.images_ = std::move(corpus);
    return src;
  }

  [[nodiscard]] SourceKind kind() const noexcept { return kind_; }
  [[nodiscard]] Split split() const noexcept { return split_; }
  [[nodiscard]] std::size_t input_dim() const noexcept { return dim_; }
  [[nodiscard]] bool is_classification() const noexcept { return kind_ != SourceKind::Sinusoid; }

  /// Corpus class indices available to this split.
  [[nodiscard]] const std::vector<std::size_t>& class_ids() const noexcept { return classes_; }
  [[nodiscard]] std::size_t class_count() const noexcept { return classes_.size(); }

  [[nodiscard]] std::size_t total_classes() const noexcept {
    if (blobs_) {
      return blobs_->params.classes;
    }
    if (images_) {
      return images_->classes.size();
    }
    return 0;
  }

  [[nodiscard]] std::string class_name(std::size_t id) const {
    if (images_) {
      return images_->classes.at(id).name;
    }
    return std::to_string(id);
  }

  [[nodiscard]] const Tensor& blob_centers() const {
    if (!blobs_) {
      throw DomainError("not a blobs source");
    }
    return blobs_->centers;
  }

  [[nodiscard]] const std::vector<double>& image_features(std::size_t class_id, std::size_t index) const {
    if (!images_) {
      throw DomainError("not an image-directory source");
    }
    return images_->classes.at(class_id).images.at(index);
  }

  /// Same corpus restricted to `ids` (which must be a subset of this source's classes).
  [[nodiscard]] TaskSource restricted(std::vector<std::size_t> ids, Split split) const {
    TaskSource s = *this;
    s.classes_ = std::move(ids);
    s.split_ = split;
    return s;
  }

  [[nodiscard]] TaskSource with_split(Split split) const {
    TaskSource s = *this;
    s.split_ = split;
    return s;
  }

  /// Draws one episode. Class choice, label assignment and samples all come
  /// from `rng`.
  [[nodiscard]] TaskEpisode sample(std::size_t ways, std::size_t shots, std::size_t queries, Rng& rng) const {
    if (shots == 0 || queries == 0) {
      throw DomainError("shots and queries must be at least 1");
    }
    if (kind_ == SourceKind::Sinusoid) {
      return sample_sinusoid(shots, queries, rng);
    }
    if (ways == 0) {
      throw DomainError("ways must be at least 1");
    }
    if (ways > classes_.size()) {
      throw DomainError("cannot draw " + std::to_string(ways) + "-way episodes from " +
                        std::to_string(classes_.size()) + " classes");
    }
    const auto picks = rng.choose(classes_.size(), ways);
    TaskEpisode ep;
    ep.support_x = Tensor({ways * shots, dim_});
    ep.query_x = Tensor({ways * queries, dim_});
    Labels support_y(ways * shots);
    Labels query_y(ways * queries);
    for (std::size_t c = 0; c < ways; ++c) {
      ep.class_ids.push_back(classes_[picks[c]]);
    }
    if (kind_ == SourceKind::Blobs) {
      const double sigma = blobs_->params.noise_sigma;
      auto draw = [&](Tensor& x, std::size_t row, std::size_t cls) {
        const auto center = blobs_->centers.row(cls);
        auto out = x.row(row);
        for (std::size_t j = 0; j < dim_; ++j) {
          out[j] = center[j] + sigma * rng.normal();
        }
      };
      for (std::size_t c = 0; c < ways; ++c) {
        for (std::size_t k = 0; k < shots; ++k) {
          draw(ep.support_x, c * shots + k, ep.class_ids[c]);
          support_y[c * shots + k] = c;
        }
      }
      for (std::size_t c = 0; c < ways; ++c) {
        for (std::size_t q = 0; q < queries; ++q) {
          draw(ep.query_x, c * queries + q, ep.class_ids[c]);
          query_y[c * queries + q] = c;
        }
      }
    } else {
      for (std::size_t c = 0; c < ways; ++c) {
        const auto& cls = images_->classes[ep.class_ids[c]];
        if (cls.images.size() < shots + queries) {
          throw DomainError("class '" + cls.name + "' has " + std::to_string(cls.images.size()) +
                            " images, episode needs " + std::to_string(shots + queries));
        }
        const auto chosen = rng.choose(cls.images.size(), shots + queries);
        for (std::size_t k = 0; k < shots; ++k) {
          const auto& img = cls.images[chosen[k]];
          std::copy(img.begin(), img.end(), ep.support_x.row(c * shots + k).begin());
          support_y[c * shots + k] = c;
        }
        for (std::size_t q = 0; q < queries; ++q) {
          const auto& img = cls.images[chosen[shots + q]];
          std::copy(img.begin(), img.end(), ep.query_x.row(c * queries + q).begin());
          query_y[c * queries + q] = c;
        }
      }
    }
    ep.support_y = std::move(support_y);
    ep.query_y = std::move(query_y);
    return ep;
  }

 private:
  TaskSource(SourceKind kind, Split split, std::size_t dim) : kind_(kind), split_(split), dim_(dim) {}

  static std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = i;
    }
    return v;
  }

  TaskEpisode sample_sinusoid(std::size_t shots, std::size_t queries, Rng& rng) const {
    TaskEpisode ep;
    ep.amplitude = rng.uniform(sine_.amplitude_min, sine_.amplitude_max);
    ep.phase = rng.uniform(sine_.phase_min, sine_.phase_max);
    auto fill = [&](std::size_t n, Tensor& x, Targets& y) {
      x = Tensor({n, 1});
      Tensor t({n, 1});
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.uniform(sine_.x_min, sine_.x_max);
        t[i] = ep.amplitude * std::sin(x[i] + ep.phase);
      }
      y = std::move(t);
    };
    fill(shots, ep.support_x, ep.support_y);
    fill(queries, ep.query_x, ep.query_y);
    return ep;
  }

  SourceKind kind_;
  Split split_;
  std::size_t dim_;
  std::vector<std::size_t> classes_;
  std::shared_ptr<const detail::BlobsData> blobs_;
  std::shared_ptr<const detail::ImageCorpus> images_;
  SinusoidParams sine_{};
};

inline TaskEpisode sample_episode(const TaskSource& source, std::size_t ways, std::size_t shots,
                                  std::size_t queries, Rng& rng) {
  return source.sample(ways, shots, queries, rng);
}

struct SourcePair {
  TaskSource train;
  TaskSource test;
};

/// Number of meta-train classes: floor(fraction * C), clamped to [1, C - 1].
inline std::size_t train_class_count(std::size_t classes, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DomainError("meta split fraction must lie in (0, 1)");
  }
  if (classes < 2) {
    throw DomainError("a meta split needs at least two classes");
  }
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(classes)));
  return std::clamp<std::size_t>(n, 1, classes - 1);
}

/// Disjoint meta-train/meta-test partition of a classification source's classes.
inline SourcePair split_classes(const TaskSource& source, double fraction, Rng& rng) {
  if (!source.is_classification()) {
    throw DomainError("only classification sources have class splits");
  }
  const std::size_t n_train = train_class_count(source.class_count(), fraction);
  std::vector<std::size_t> ids = source.class_ids();
  rng.shuffle(ids);
  std::vector<std::size_t> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {source.restricted(std::move(train), Split::MetaTrain),
          source.restricted(std::move(test), Split::MetaTest)};
}

inline SourcePair make_blobs_source(const BlobsParams& params, double meta_split_fraction, Rng& rng) {
  const TaskSource all = TaskSource::blobs(params, rng);
  return split_classes(all, meta_split_fraction, rng);
}

inline TaskSource make_imagedir_source(const std::filesystem::path& path, std::size_t min_images_per_class = 1) {
  return TaskSource::image_dir(path, min_images_per_class);
}

/// Meta-train and meta-test sinusoid sources share one task distribution.
inline SourcePair make_sinusoid_source(const SinusoidParams& params = {}) {
  return {TaskSource::sinusoid(params, Split::MetaTrain), TaskSource::sinusoid(params, Split::MetaTest)};
}

}  // namespace sparse_reptile
