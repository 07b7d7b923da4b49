#include "uno/data.hpp"

#include "uno/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

namespace uno {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
  if (b.size() < at + 4) throw Error(ErrorCode::TruncatedFile, path.string() + ": header cut short");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);

  if (be32(img, 0, images_path) != kImageMagic)
    throw Error(ErrorCode::BadMagic, images_path.string() + ": not an IDX image file");
  if (be32(lab, 0, labels_path) != kLabelMagic)
    throw Error(ErrorCode::BadMagic, labels_path.string() + ": not an IDX label file");

  const std::size_t n = be32(img, 4, images_path);
  const std::size_t rows = be32(img, 8, images_path);
  const std::size_t cols = be32(img, 12, images_path);
  const std::size_t n_labels = be32(lab, 4, labels_path);
  if (n != n_labels)
    throw Error(ErrorCode::CountMismatch,
                std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");

  const std::size_t dim = rows * cols;
  if (img.size() < 16 + n * dim) throw Error(ErrorCode::TruncatedFile, images_path.string());
  if (lab.size() < 8 + n) throw Error(ErrorCode::TruncatedFile, labels_path.string());

  LabeledDataset out;
  out.images.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j)
      out.images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = img[16 + i * dim + j] / 255.0;
    out.labels[i] = lab[8 + i];
  }
  return out;
}

void write_idx(const LabeledDataset& data, int rows, int cols, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  if (data.images.cols() != static_cast<Eigen::Index>(rows) * cols || data.images.rows() != static_cast<Eigen::Index>(data.size()))
    throw Error(ErrorCode::CountMismatch, "image matrix shape does not match labels/dims");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(ErrorCode::Io, "cannot write IDX output");
  put_be32(img, kImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < data.images.rows(); ++i)
    for (Eigen::Index j = 0; j < data.images.cols(); ++j)
      img.put(static_cast<char>(std::lround(std::clamp(data.images(i, j), 0.0, 1.0) * 255.0)));
  put_be32(lab, kLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) lab.put(static_cast<char>(l));
}

Partition partition_by_label(const LabeledDataset& data, const std::set<int>& forget_labels) {
  Partition p;
  p.forget_labels = forget_labels;
  for (std::size_t i = 0; i < data.size(); ++i)
    (forget_labels.count(data.labels[i]) ? p.forget : p.retain).push_back(i);
  if (forget_labels.empty() || p.forget.empty())
    throw Error(ErrorCode::EmptyForgetSet, "no sample carries a forget label");
  if (p.retain.empty()) throw Error(ErrorCode::EmptyRetainSet, "every sample carries a forget label");
  return p;
}

Mat select_rows(const Mat& m, std::span<const std::size_t> indices) {
  Mat out(static_cast<Eigen::Index>(indices.size()), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(indices[i]));
  return out;
}

LabeledDataset select(const LabeledDataset& data, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.images = select_rows(data.images, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(data.labels[i]);
  return out;
}

LabeledDataset seeded_subset(const LabeledDataset& data, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(n, idx.size()));
  return select(data, idx);
}

BatchStream::BatchStream(const Mat& rows, std::uint64_t seed) : rows_(&rows), rng_(seed) {
  if (rows.rows() == 0) throw Error(ErrorCode::InvalidConfig, "batch stream over an empty set");
  perm_.resize(static_cast<std::size_t>(rows.rows()));
  reshuffle();
}

void BatchStream::reshuffle() {
  std::iota(perm_.begin(), perm_.end(), 0);
  std::shuffle(perm_.begin(), perm_.end(), rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchStream::next_indices(std::size_t batch) {
  if (batch == 0 || batch > perm_.size())
    throw Error(ErrorCode::InvalidConfig, "batch size must be in [1, dataset size]");
  if (cursor_ >= perm_.size()) {
    reshuffle();
    ++epoch_;
  }
  const std::size_t end = std::min(cursor_ + batch, perm_.size());
  std::vector<std::size_t> out(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               perm_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

Mat BatchStream::next_batch(std::size_t batch) { return select_rows(*rows_, next_indices(batch)); }

}  // namespace uno
